/* Copyright 2026 The pdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdsim/core_types.hpp"
#include "pdsim/error.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/text_io.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

inline constexpr std::string_view kTraceFormatTag = "#pdsim-trace v1";

struct TraceRecord {
  std::uint64_t request_id = 0;
  Micros arrival_us = 0;
  std::size_t input_len = 0;
  std::size_t output_len = 0;
  std::optional<std::uint64_t> chat_id;
  std::optional<std::uint64_t> prefix_group;
  std::size_t prefix_len = 0;

  bool operator==(const TraceRecord&) const = default;
};

inline void validate_record(const TraceRecord& r) {
  if (r.input_len == 0) fail(ErrorCode::kInvalidArgument, "input_len must be >= 1");
  if (r.prefix_group && r.prefix_len > r.input_len) {
    fail(ErrorCode::kInvalidArgument, "prefix_len exceeds input_len");
  }
  if (!r.prefix_group && r.prefix_len != 0) {
    fail(ErrorCode::kInvalidArgument, "prefix_len set without prefix_group");
  }
  if (r.arrival_us < 0) fail(ErrorCode::kInvalidArgument, "arrival must be >= 0");
}

struct LengthLaw {
  enum class Kind { kConstant, kUniformInt, kTruncLogNormal };
  Kind kind = Kind::kConstant;
  std::size_t min = 1;
  std::size_t max = 1;
  // Truncated log-normal: sigma in log space; mu is fitted to target_mean.
  double sigma = 0.5;
  double target_mean = 0.0;

  static LengthLaw constant(std::size_t v) { return {Kind::kConstant, v, v, 0.0, 0.0}; }
  static LengthLaw uniform(std::size_t lo, std::size_t hi) {
    return {Kind::kUniformInt, lo, hi, 0.0, 0.0};
  }
  static LengthLaw trunc_lognormal(std::size_t lo, std::size_t hi, double mean, double sigma) {
    return {Kind::kTruncLogNormal, lo, hi, sigma, mean};
  }
};

namespace detail {

// Log-space grid of a normal density truncated to [log lo, log hi].
class TruncLogNormalTable {
 public:
  static constexpr std::size_t kGrid = 2001;

  TruncLogNormalTable(double lo, double hi, double sigma, double mu) { build(lo, hi, sigma, mu); }

  // Fits mu so the truncated mean of exp(Y) equals target.
  static double fit_mu(double lo, double hi, double sigma, double target) {
    if (!(target > lo && target < hi)) {
      fail(ErrorCode::kInvalidArgument, "log-normal target mean must lie strictly inside bounds");
    }
    double a = std::log(lo) - 60.0 * sigma;
    double b = std::log(hi) + 60.0 * sigma;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (a + b);
      if (TruncLogNormalTable(lo, hi, sigma, mid).mean() < target) {
        a = mid;
      } else {
        b = mid;
      }
    }
    return 0.5 * (a + b);
  }

  double mean() const noexcept { return mean_; }

  double quantile(double u) const {
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return std::exp(ys_.front());
    if (it == cdf_.end()) return std::exp(ys_.back());
    const std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
    const double c0 = cdf_[i - 1], c1 = cdf_[i];
    const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    return std::exp(ys_[i - 1] + t * (ys_[i] - ys_[i - 1]));
  }

 private:
  void build(double lo, double hi, double sigma, double mu) {
    const double a = std::log(lo), b = std::log(hi);
    ys_.resize(kGrid);
    std::vector<double> logw(kGrid);
    double peak = -INFINITY;
    for (std::size_t i = 0; i < kGrid; ++i) {
      ys_[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(kGrid - 1);
      const double z = (ys_[i] - mu) / sigma;
      logw[i] = -0.5 * z * z;
      peak = std::max(peak, logw[i]);
    }
    std::vector<double> w(kGrid);
    for (std::size_t i = 0; i < kGrid; ++i) w[i] = std::exp(logw[i] - peak);
    cdf_.assign(kGrid, 0.0);
    double mass = 0.0, first = 0.0;
    for (std::size_t i = 1; i < kGrid; ++i) {
      const double dy = ys_[i] - ys_[i - 1];
      const double seg = 0.5 * (w[i] + w[i - 1]) * dy;
      mass += seg;
      first += 0.5 * (w[i] * std::exp(ys_[i]) + w[i - 1] * std::exp(ys_[i - 1])) * dy;
      cdf_[i] = mass;
    }
    for (auto& c : cdf_) c /= mass;
    mean_ = first / mass;
  }

  std::vector<double> ys_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
};

class LengthSampler {
 public:
  explicit LengthSampler(const LengthLaw& law) : law_(law) {
    if (law.min > law.max) fail(ErrorCode::kInvalidArgument, "length law min > max");
    if (law.kind == LengthLaw::Kind::kTruncLogNormal) {
      if (!(law.sigma > 0.0)) fail(ErrorCode::kInvalidArgument, "log-normal sigma must be > 0");
      const double lo = static_cast<double>(law.min), hi = static_cast<double>(law.max);
      const double mu = TruncLogNormalTable::fit_mu(lo, hi, law.sigma, law.target_mean);
      table_.emplace(lo, hi, law.sigma, mu);
    }
  }

  std::size_t draw(CounterRng& rng) const {
    switch (law_.kind) {
      case LengthLaw::Kind::kConstant: return law_.min;
      case LengthLaw::Kind::kUniformInt: return law_.min + rng.below(law_.max - law_.min + 1);
      case LengthLaw::Kind::kTruncLogNormal: {
        const double x = std::round(table_->quantile(rng.uniform()));
        return std::clamp(static_cast<std::size_t>(x), law_.min, law_.max);
      }
    }
    return law_.min;
  }

 private:
  LengthLaw law_;
  std::optional<TruncLogNormalTable> table_;
};

}  // namespace detail

struct WorkloadProfile {
  std::string name;
  LengthLaw input;
  LengthLaw output;
  double arrival_rate_per_sec = 10.0;
  // Shared leading-token groups (system prompts, RAG context).
  std::size_t prefix_groups = 0;
  std::size_t prefix_len = 0;
  double share_prob = 0.0;
  // Chat sessions: 0 turns disables chat ids.
  std::size_t chat_turns_min = 0;
  std::size_t chat_turns_max = 0;
  std::size_t concurrent_chats = 8;

  void validate() const {
    if (!(arrival_rate_per_sec > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "arrival rate must be > 0");
    }
    if (share_prob < 0.0 || share_prob > 1.0) {
      fail(ErrorCode::kInvalidArgument, "share_prob must be in [0, 1]");
    }
    if (share_prob > 0.0 && (prefix_groups == 0 || prefix_len == 0)) {
      fail(ErrorCode::kInvalidArgument, "prefix sharing needs groups and a prefix length");
    }
    if (prefix_len > input.min && share_prob > 0.0) {
      fail(ErrorCode::kInvalidArgument, "prefix length exceeds the smallest input length");
    }
    if (chat_turns_min > chat_turns_max) {
      fail(ErrorCode::kInvalidArgument, "chat turns min > max");
    }
    if (chat_turns_max > 0 && (chat_turns_min == 0 || concurrent_chats == 0)) {
      fail(ErrorCode::kInvalidArgument, "chat law needs turns >= 1 and concurrent chats >= 1");
    }
    if (input.min == 0) fail(ErrorCode::kInvalidArgument, "input length must be >= 1");
  }
};

// Short-answer workload: inputs on [300, 1000] averaging 340 tokens, 6-7
// output tokens, heavy system-prompt sharing.
inline WorkloadProfile qa_profile() {
  WorkloadProfile p;
  p.name = "qa";
  p.input = LengthLaw::trunc_lognormal(300, 1000, 340.0, 0.5);
  p.output = LengthLaw::uniform(6, 7);
  p.arrival_rate_per_sec = 30.0;
  p.prefix_groups = 96;
  p.prefix_len = 256;
  p.share_prob = 0.9;
  return p;
}

// Long-context workload: 2500 input tokens, 114 output tokens.
inline WorkloadProfile merchant_profile() {
  WorkloadProfile p;
  p.name = "merchant";
  p.input = LengthLaw::constant(2500);
  p.output = LengthLaw::constant(114);
  p.arrival_rate_per_sec = 4.0;
  p.prefix_groups = 8;
  p.prefix_len = 832;
  p.share_prob = 0.8;
  p.chat_turns_min = 1;
  p.chat_turns_max = 4;
  return p;
}

inline std::vector<std::string> known_profiles() { return {"merchant", "qa"}; }

inline WorkloadProfile profile_by_name(std::string_view name) {
  if (name == "qa") return qa_profile();
  if (name == "merchant") return merchant_profile();
  fail(ErrorCode::kUnknownProfile,
       "unknown profile '" + std::string(name) + "' (known: merchant, qa)");
}

inline std::vector<TraceRecord> synth_trace(const WorkloadProfile& profile, std::size_t n,
                                            std::uint64_t seed) {
  if (n == 0) fail(ErrorCode::kInvalidArgument, "n_requests must be >= 1");
  profile.validate();
  const detail::LengthSampler in_law(profile.input), out_law(profile.output);
  CounterRng arrivals(seed, 1), inputs(seed, 2), outputs(seed, 3), prefixes(seed, 4),
      chats(seed, 5);

  struct OpenChat {
    std::uint64_t id;
    std::size_t turns_left;
  };
  std::vector<OpenChat> open;
  std::uint64_t next_chat = 1;
  auto new_chat = [&]() {
    const std::size_t span = profile.chat_turns_max - profile.chat_turns_min + 1;
    return OpenChat{next_chat++, profile.chat_turns_min + chats.below(span)};
  };

  std::vector<TraceRecord> out;
  out.reserve(n);
  double t_sec = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TraceRecord r;
    r.request_id = i + 1;
    t_sec += -std::log(1.0 - arrivals.uniform()) / profile.arrival_rate_per_sec;
    r.arrival_us = round_us(t_sec * 1e6);
    r.input_len = in_law.draw(inputs);
    r.output_len = out_law.draw(outputs);
    if (profile.share_prob > 0.0 && prefixes.uniform() < profile.share_prob) {
      r.prefix_group = prefixes.below(profile.prefix_groups) + 1;
      r.prefix_len = profile.prefix_len;
    }
    if (profile.chat_turns_max > 0) {
      while (open.size() < profile.concurrent_chats) open.push_back(new_chat());
      const std::size_t slot = chats.below(open.size());
      r.chat_id = open[slot].id;
      if (--open[slot].turns_left == 0) open[slot] = new_chat();
    }
    out.push_back(r);
  }
  return out;
}

// Token at `pos` of a request: group prefix tokens depend only on (group,
// pos), chat tokens on (chat, pos), the rest on (request, pos).
inline std::vector<TokenId> synth_tokens(const TraceRecord& r, std::size_t vocab,
                                         std::uint64_t seed) {
  if (vocab == 0) fail(ErrorCode::kInvalidArgument, "vocab must be >= 1");
  std::vector<TokenId> tokens(r.input_len);
  const std::uint64_t base = mix64(seed ^ 0x70C3E5A1ULL);
  for (std::size_t p = 0; p < r.input_len; ++p) {
    std::uint64_t domain, id;
    if (r.prefix_group && p < r.prefix_len) {
      domain = 1;
      id = *r.prefix_group;
    } else if (r.chat_id) {
      domain = 2;
      id = *r.chat_id;
    } else {
      domain = 3;
      id = r.request_id;
    }
    const std::uint64_t h = mix64(base ^ mix64(domain * 0x9E3779B97F4A7C15ULL + id) ^ mix64(p));
    tokens[p] = static_cast<TokenId>(h % vocab);
  }
  return tokens;
}

inline std::string write_trace(const std::vector<TraceRecord>& records) {
  std::ostringstream os;
  os << kTraceFormatTag << '\n';
  auto opt = [&](const std::optional<std::uint64_t>& v) {
    if (v) {
      os << *v;
    } else {
      os << '-';
    }
  };
  for (const auto& r : records) {
    os << r.request_id << '\t' << r.arrival_us << '\t' << r.input_len << '\t' << r.output_len
       << '\t';
    opt(r.chat_id);
    os << '\t';
    opt(r.prefix_group);
    os << '\t';
    if (r.prefix_group) {
      os << r.prefix_len;
    } else {
      os << '-';
    }
    os << '\n';
  }
  return os.str();
}

inline std::vector<TraceRecord> parse_trace(std::string_view text) {
  const auto eol = text.find('\n');
  std::string_view first = text.substr(0, eol);
  if (!first.empty() && first.back() == '\r') first.remove_suffix(1);
  if (first != kTraceFormatTag) {
    parse_error(1, "missing format tag '" + std::string(kTraceFormatTag) + "'");
  }
  std::vector<TraceRecord> out;
  std::set<std::uint64_t> ids;
  for_each_record(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() != 7) parse_error(line, "expected 7 tab-separated fields, got " + std::to_string(f.size()));
    TraceRecord r;
    r.request_id = parse_uint(f[0], line, "request_id");
    r.arrival_us = static_cast<Micros>(parse_uint(f[1], line, "arrival_us"));
    r.input_len = parse_uint(f[2], line, "input_len");
    if (r.input_len == 0) parse_error(line, "input_len: must be >= 1");
    r.output_len = parse_uint(f[3], line, "output_len");
    if (f[4] != "-") r.chat_id = parse_uint(f[4], line, "chat_id");
    if (f[5] != "-") r.prefix_group = parse_uint(f[5], line, "prefix_group");
    if (f[6] != "-") {
      r.prefix_len = parse_uint(f[6], line, "prefix_len");
      if (!r.prefix_group) parse_error(line, "prefix_len: set without prefix_group");
    } else if (r.prefix_group) {
      parse_error(line, "prefix_len: required when prefix_group is set");
    }
    if (r.prefix_len > r.input_len) parse_error(line, "prefix_len: exceeds input_len");
    if (!ids.insert(r.request_id).second) {
      parse_error(line, "request_id: duplicate " + std::to_string(r.request_id));
    }
    out.push_back(r);
  });
  std::stable_sort(out.begin(), out.end(), [](const TraceRecord& a, const TraceRecord& b) {
    return a.arrival_us < b.arrival_us;
  });
  return out;
}

inline std::vector<TraceRecord> ingest_trace(const std::string& path) {
  return parse_trace(read_file(path));
}

}  // namespace pdsim
