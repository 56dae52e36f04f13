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
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pdsim/error.hpp"
#include "pdsim/text_io.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

// Nearest rank: the ceil(p/100 * n)-th smallest sample.
inline double percentile(std::span<const double> samples, double p) {
  if (samples.empty()) fail(ErrorCode::kInvalidArgument, "percentile of empty samples");
  if (!(p > 0.0 && p <= 100.0)) fail(ErrorCode::kInvalidArgument, "percentile p must be in (0, 100]");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double rank = std::ceil(p * static_cast<double>(s.size()) / 100.0);
  const std::size_t idx = std::clamp<std::size_t>(static_cast<std::size_t>(rank), 1, s.size());
  return s[idx - 1];
}

struct RequestTimeline {
  std::uint64_t request_id = 0;
  std::size_t input_len = 0;
  std::size_t output_len = 0;
  Micros arrival = 0;
  std::optional<Micros> scheduled;
  std::optional<Micros> prefill_start;
  std::optional<Micros> first_token;
  std::optional<Micros> completion;
  std::vector<Micros> token_times;
  std::size_t reused_tokens_local = 0;
  std::size_t reused_tokens_remote = 0;
  std::size_t computed_tokens = 0;
  std::size_t blocks_total = 0;
  std::size_t blocks_reused = 0;
  std::optional<std::uint32_t> prefill_worker;
  std::optional<std::uint32_t> decode_worker;
  std::size_t requeues = 0;
  std::size_t decode_iterations = 0;

  bool operator==(const RequestTimeline&) const = default;

  bool complete() const noexcept {
    return scheduled && prefill_start && first_token && completion &&
           token_times.size() == output_len;
  }
  std::size_t reused_tokens() const noexcept { return reused_tokens_local + reused_tokens_remote; }
  Micros ttft() const { return *first_token - arrival; }
  Micros end_to_end() const { return *completion - arrival; }
  Micros decode_span() const { return *completion - *first_token; }

  void validate() const {
    const std::string who = "request " + std::to_string(request_id);
    if (!complete()) fail(ErrorCode::kIncompleteTimeline, "incomplete timeline: " + who);
    Micros prev = arrival;
    auto step = [&](Micros t, const char* what) {
      if (t < prev) fail(ErrorCode::kIncompleteTimeline, who + ": non-monotone " + what);
      prev = t;
    };
    step(*scheduled, "scheduled");
    step(*prefill_start, "prefill_start");
    step(*first_token, "first_token");
    for (Micros t : token_times) step(t, "token time");
    step(*completion, "completion");
    if (!token_times.empty() && token_times.front() != *first_token) {
      fail(ErrorCode::kIncompleteTimeline, who + ": first token time mismatch");
    }
    if (reused_tokens() + computed_tokens != input_len) {
      fail(ErrorCode::kIncompleteTimeline, who + ": reused + computed != input tokens");
    }
  }
};

struct MetricsAggregates {
  std::size_t requests = 0;
  double ttft_mean_ms = 0;
  double ttft_p50_ms = 0;
  double ttft_p95_ms = 0;
  double e2e_mean_ms = 0;
  double e2e_p95_ms = 0;
  double decode_mean_ms = 0;
  double decode_p95_ms = 0;
  double tokens_per_sec = 0;
  double cache_hit_rate_pct = 0;
  double mean_reuse_tokens = 0;
  double mean_reuse_local_tokens = 0;
  double mean_reuse_remote_tokens = 0;
  double mean_input_len = 0;
  std::uint64_t generated_tokens = 0;
  std::uint64_t requeues = 0;
  Micros wall_span_us = 0;
  std::map<std::string, double> worker_utilization;

  bool operator==(const MetricsAggregates&) const = default;
};

struct MetricsReport {
  MetricsAggregates aggregates;
  std::vector<RequestTimeline> timelines;

  bool operator==(const MetricsReport&) const = default;
};

inline MetricsReport report(std::vector<RequestTimeline> timelines,
                            const std::map<std::string, Micros>& worker_busy_us = {}) {
  MetricsReport rep;
  std::sort(timelines.begin(), timelines.end(),
            [](const auto& a, const auto& b) { return a.request_id < b.request_id; });
  for (const auto& t : timelines) t.validate();
  auto& a = rep.aggregates;
  a.requests = timelines.size();
  for (const auto& [name, busy] : worker_busy_us) a.worker_utilization[name] = 0.0;
  if (timelines.empty()) {
    rep.timelines = std::move(timelines);
    return rep;
  }

  std::vector<double> ttft, e2e, dec;
  double reuse = 0, reuse_local = 0, reuse_remote = 0, input = 0;
  std::uint64_t blocks = 0, reused_blocks = 0;
  Micros first = timelines.front().arrival, last = *timelines.front().completion;
  for (const auto& t : timelines) {
    ttft.push_back(static_cast<double>(t.ttft()) / 1000.0);
    e2e.push_back(static_cast<double>(t.end_to_end()) / 1000.0);
    dec.push_back(static_cast<double>(t.decode_span()) / 1000.0);
    reuse += static_cast<double>(t.reused_tokens());
    reuse_local += static_cast<double>(t.reused_tokens_local);
    reuse_remote += static_cast<double>(t.reused_tokens_remote);
    input += static_cast<double>(t.input_len);
    blocks += t.blocks_total;
    reused_blocks += t.blocks_reused;
    a.generated_tokens += t.output_len;
    a.requeues += t.requeues;
    first = std::min(first, t.arrival);
    last = std::max(last, *t.completion);
  }
  const double n = static_cast<double>(timelines.size());
  auto mean = [&](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / n;
  };
  a.ttft_mean_ms = mean(ttft);
  a.ttft_p50_ms = percentile(ttft, 50);
  a.ttft_p95_ms = percentile(ttft, 95);
  a.e2e_mean_ms = mean(e2e);
  a.e2e_p95_ms = percentile(e2e, 95);
  a.decode_mean_ms = mean(dec);
  a.decode_p95_ms = percentile(dec, 95);
  a.mean_reuse_tokens = reuse / n;
  a.mean_reuse_local_tokens = reuse_local / n;
  a.mean_reuse_remote_tokens = reuse_remote / n;
  a.mean_input_len = input / n;
  a.cache_hit_rate_pct =
      blocks ? 100.0 * static_cast<double>(reused_blocks) / static_cast<double>(blocks) : 0.0;
  a.wall_span_us = last - first;
  if (a.wall_span_us > 0) {
    a.tokens_per_sec =
        static_cast<double>(a.generated_tokens) * 1e6 / static_cast<double>(a.wall_span_us);
    for (const auto& [name, busy] : worker_busy_us) {
      a.worker_utilization[name] =
          static_cast<double>(busy) / static_cast<double>(a.wall_span_us);
    }
  }
  rep.timelines = std::move(timelines);
  return rep;
}

namespace detail {

using nlohmann::ordered_json;

template <typename T>
ordered_json opt_json(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

template <typename T>
std::optional<T> json_opt(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

}  // namespace detail

inline std::string serialize_report(const MetricsReport& rep) {
  using detail::ordered_json;
  std::string out;
  out += ordered_json{{"format", "pdsim-report"}, {"version", 1}}.dump() + "\n";
  const auto& a = rep.aggregates;
  ordered_json agg;
  agg["requests"] = a.requests;
  agg["ttft_mean_ms"] = a.ttft_mean_ms;
  agg["ttft_p50_ms"] = a.ttft_p50_ms;
  agg["ttft_p95_ms"] = a.ttft_p95_ms;
  agg["e2e_mean_ms"] = a.e2e_mean_ms;
  agg["e2e_p95_ms"] = a.e2e_p95_ms;
  agg["decode_mean_ms"] = a.decode_mean_ms;
  agg["decode_p95_ms"] = a.decode_p95_ms;
  agg["tokens_per_sec"] = a.tokens_per_sec;
  agg["cache_hit_rate_pct"] = a.cache_hit_rate_pct;
  agg["mean_reuse_tokens"] = a.mean_reuse_tokens;
  agg["mean_reuse_local_tokens"] = a.mean_reuse_local_tokens;
  agg["mean_reuse_remote_tokens"] = a.mean_reuse_remote_tokens;
  agg["mean_input_len"] = a.mean_input_len;
  agg["generated_tokens"] = a.generated_tokens;
  agg["requeues"] = a.requeues;
  agg["wall_span_us"] = a.wall_span_us;
  agg["worker_utilization"] = ordered_json::object();
  for (const auto& [k, v] : a.worker_utilization) agg["worker_utilization"][k] = v;
  out += ordered_json{{"aggregates", agg}}.dump() + "\n";
  for (const auto& t : rep.timelines) {
    ordered_json r;
    r["request_id"] = t.request_id;
    r["input_len"] = t.input_len;
    r["output_len"] = t.output_len;
    r["arrival"] = t.arrival;
    r["scheduled"] = detail::opt_json(t.scheduled);
    r["prefill_start"] = detail::opt_json(t.prefill_start);
    r["first_token"] = detail::opt_json(t.first_token);
    r["completion"] = detail::opt_json(t.completion);
    r["token_times"] = t.token_times;
    r["reused_local"] = t.reused_tokens_local;
    r["reused_remote"] = t.reused_tokens_remote;
    r["computed"] = t.computed_tokens;
    r["blocks_total"] = t.blocks_total;
    r["blocks_reused"] = t.blocks_reused;
    r["prefill_worker"] = detail::opt_json(t.prefill_worker);
    r["decode_worker"] = detail::opt_json(t.decode_worker);
    r["requeues"] = t.requeues;
    r["decode_iterations"] = t.decode_iterations;
    out += ordered_json{{"request", r}}.dump() + "\n";
  }
  return out;
}

inline MetricsReport parse_report(std::string_view text) {
  using detail::ordered_json;
  MetricsReport rep;
  std::size_t line_no = 0, pos = 0;
  bool saw_tag = false, saw_agg = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      parse_error(line_no, std::string("invalid json: ") + e.what());
    }
    try {
      if (!saw_tag) {
        if (j.value("format", "") != "pdsim-report" || j.value("version", 0) != 1) {
          parse_error(line_no, "missing pdsim-report v1 format tag");
        }
        saw_tag = true;
      } else if (j.contains("aggregates")) {
        const auto& g = j["aggregates"];
        auto& a = rep.aggregates;
        a.requests = g.at("requests").get<std::size_t>();
        a.ttft_mean_ms = g.at("ttft_mean_ms").get<double>();
        a.ttft_p50_ms = g.at("ttft_p50_ms").get<double>();
        a.ttft_p95_ms = g.at("ttft_p95_ms").get<double>();
        a.e2e_mean_ms = g.at("e2e_mean_ms").get<double>();
        a.e2e_p95_ms = g.at("e2e_p95_ms").get<double>();
        a.decode_mean_ms = g.at("decode_mean_ms").get<double>();
        a.decode_p95_ms = g.at("decode_p95_ms").get<double>();
        a.tokens_per_sec = g.at("tokens_per_sec").get<double>();
        a.cache_hit_rate_pct = g.at("cache_hit_rate_pct").get<double>();
        a.mean_reuse_tokens = g.at("mean_reuse_tokens").get<double>();
        a.mean_reuse_local_tokens = g.at("mean_reuse_local_tokens").get<double>();
        a.mean_reuse_remote_tokens = g.at("mean_reuse_remote_tokens").get<double>();
        a.mean_input_len = g.at("mean_input_len").get<double>();
        a.generated_tokens = g.at("generated_tokens").get<std::uint64_t>();
        a.requeues = g.at("requeues").get<std::uint64_t>();
        a.wall_span_us = g.at("wall_span_us").get<Micros>();
        for (const auto& [k, v] : g.at("worker_utilization").items()) {
          a.worker_utilization[k] = v.get<double>();
        }
        saw_agg = true;
      } else if (j.contains("request")) {
        const auto& r = j["request"];
        RequestTimeline t;
        t.request_id = r.at("request_id").get<std::uint64_t>();
        t.input_len = r.at("input_len").get<std::size_t>();
        t.output_len = r.at("output_len").get<std::size_t>();
        t.arrival = r.at("arrival").get<Micros>();
        t.scheduled = detail::json_opt<Micros>(r.at("scheduled"));
        t.prefill_start = detail::json_opt<Micros>(r.at("prefill_start"));
        t.first_token = detail::json_opt<Micros>(r.at("first_token"));
        t.completion = detail::json_opt<Micros>(r.at("completion"));
        t.token_times = r.at("token_times").get<std::vector<Micros>>();
        t.reused_tokens_local = r.at("reused_local").get<std::size_t>();
        t.reused_tokens_remote = r.at("reused_remote").get<std::size_t>();
        t.computed_tokens = r.at("computed").get<std::size_t>();
        t.blocks_total = r.at("blocks_total").get<std::size_t>();
        t.blocks_reused = r.at("blocks_reused").get<std::size_t>();
        t.prefill_worker = detail::json_opt<std::uint32_t>(r.at("prefill_worker"));
        t.decode_worker = detail::json_opt<std::uint32_t>(r.at("decode_worker"));
        t.requeues = r.at("requeues").get<std::size_t>();
        t.decode_iterations = r.at("decode_iterations").get<std::size_t>();
        rep.timelines.push_back(std::move(t));
      } else {
        parse_error(line_no, "unknown record");
      }
    } catch (const nlohmann::json::exception& e) {
      parse_error(line_no, e.what());
    }
  }
  if (!saw_tag) parse_error(1, "missing pdsim-report v1 format tag");
  if (!saw_agg) fail(ErrorCode::kParse, "report has no aggregates line");
  return rep;
}

inline std::string report_table(const MetricsReport& rep) {
  const auto& a = rep.aggregates;
  std::ostringstream os;
  os << "#pdsim-summary v1\n";
  auto row = [&](const std::string& k, double v, const char* unit) {
    os << std::left << std::setw(30) << k << std::right << std::setw(14) << std::fixed
       << std::setprecision(3) << v << ' ' << unit << '\n';
  };
  row("requests", static_cast<double>(a.requests), "");
  row("ttft_mean", a.ttft_mean_ms, "ms");
  row("ttft_p50", a.ttft_p50_ms, "ms");
  row("ttft_p95", a.ttft_p95_ms, "ms");
  row("inference_mean (end-to-end)", a.e2e_mean_ms, "ms");
  row("inference_p95 (end-to-end)", a.e2e_p95_ms, "ms");
  row("decode_span_mean", a.decode_mean_ms, "ms");
  row("decode_span_p95", a.decode_p95_ms, "ms");
  row("throughput", a.tokens_per_sec, "tok/s");
  row("cache_hit_rate", a.cache_hit_rate_pct, "%");
  row("cache_reuse_length", a.mean_reuse_tokens, "tok");
  row("  local", a.mean_reuse_local_tokens, "tok");
  row("  remote", a.mean_reuse_remote_tokens, "tok");
  row("mean_input_len", a.mean_input_len, "tok");
  row("requeues", static_cast<double>(a.requeues), "");
  for (const auto& [k, v] : a.worker_utilization) row("util " + k, 100.0 * v, "%");
  return os.str();
}

}  // namespace pdsim
