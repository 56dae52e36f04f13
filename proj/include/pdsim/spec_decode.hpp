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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdsim/core_types.hpp"
#include "pdsim/error.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/text_io.hpp"

namespace pdsim {

using Distribution = std::vector<double>;

// Target (or draft) model: a deterministic next-token law given a prefix.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual Distribution next_distribution(std::span<const TokenId> prefix) const = 0;

  // Distributions after prefix, prefix+c0, ..., prefix+c0..c_{k-1}: k+1 in
  // total, as one parallel forward pass would produce them.
  virtual std::vector<Distribution> score(std::span<const TokenId> prefix,
                                          std::span<const TokenId> candidates) const {
    std::vector<TokenId> ctx(prefix.begin(), prefix.end());
    std::vector<Distribution> out;
    out.reserve(candidates.size() + 1);
    for (std::size_t i = 0; i <= candidates.size(); ++i) {
      out.push_back(next_distribution(ctx));
      if (i < candidates.size()) ctx.push_back(candidates[i]);
    }
    return out;
  }
};

namespace detail {

// Deterministic pseudo-random law keyed by a context hash. Larger sharpness
// concentrates mass on fewer tokens.
inline Distribution hashed_distribution(std::uint64_t key, std::size_t vocab, double sharpness) {
  CounterRng rng(key, 0x5EED);
  Distribution d(vocab);
  double sum = 0.0;
  for (auto& p : d) {
    const double u = rng.uniform();
    p = std::pow(u, sharpness) + 1e-12;
    sum += p;
  }
  for (auto& p : d) p /= sum;
  return d;
}

inline std::uint64_t context_key(std::uint64_t seed, std::span<const TokenId> ctx) {
  std::uint64_t h = mix64(seed ^ static_cast<std::uint64_t>(ctx.size()));
  for (TokenId t : ctx) h = mix64(h ^ t);
  return h;
}

inline void normalize_in_place(Distribution& d) {
  double sum = 0.0;
  for (double p : d) sum += p;
  if (sum <= 0.0) fail(ErrorCode::kScoring, "distribution has no mass");
  for (auto& p : d) p /= sum;
}

}  // namespace detail

// N-gram table: explicit entries keyed by context (longest-suffix backoff),
// then either a hashed pseudo-random law (random models) or a default law.
class TableModel : public ScoreModel {
 public:
  TableModel(std::size_t vocab, std::size_t order) : vocab_(vocab), order_(order) {
    if (vocab == 0) fail(ErrorCode::kInvalidArgument, "vocab must be >= 1");
  }

  // Fully random model over every context of length `order`.
  static TableModel random(std::size_t vocab, std::size_t order, std::uint64_t seed,
                           double sharpness = 4.0) {
    TableModel m(vocab, order);
    m.hashed_seed_ = seed;
    m.sharpness_ = sharpness;
    return m;
  }

  void set_entry(std::vector<TokenId> context, Distribution dist) {
    check(dist);
    if (context.size() > order_) {
      fail(ErrorCode::kInvalidArgument, "context longer than model order");
    }
    table_[std::move(context)] = std::move(dist);
  }

  void set_default(Distribution dist) {
    check(dist);
    default_ = std::move(dist);
  }

  std::size_t vocab_size() const override { return vocab_; }
  std::size_t order() const noexcept { return order_; }

  Distribution next_distribution(std::span<const TokenId> prefix) const override {
    return lookup(prefix);
  }

  std::vector<Distribution> score(std::span<const TokenId> prefix,
                                  std::span<const TokenId> candidates) const override {
    // Joint pass over one extended buffer.
    std::vector<TokenId> ext;
    ext.reserve(prefix.size() + candidates.size());
    ext.insert(ext.end(), prefix.begin(), prefix.end());
    ext.insert(ext.end(), candidates.begin(), candidates.end());
    const std::span<const TokenId> all(ext);
    std::vector<Distribution> out;
    out.reserve(candidates.size() + 1);
    for (std::size_t i = 0; i <= candidates.size(); ++i) {
      out.push_back(lookup(all.first(prefix.size() + i)));
    }
    return out;
  }

  // Table-model text format; see README for the grammar.
  static TableModel parse(std::string_view text) {
    std::optional<std::size_t> vocab, order;
    std::optional<std::uint64_t> seed;
    double sharpness = 4.0;
    std::optional<Distribution> dflt;
    std::vector<std::pair<std::vector<TokenId>, std::pair<std::string, std::size_t>>> rows;

    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string kw;
      ls >> kw;
      std::string rest;
      std::getline(ls, rest);
      if (kw == "vocab") {
        vocab = parse_uint(trim(rest), line_no, "vocab");
      } else if (kw == "order") {
        order = parse_uint(trim(rest), line_no, "order");
      } else if (kw == "seed") {
        seed = parse_uint(trim(rest), line_no, "seed");
      } else if (kw == "sharpness") {
        sharpness = parse_double(trim(rest), line_no, "sharpness");
      } else if (kw == "default") {
        dflt.emplace();
        rows.push_back({{}, {"default:" + rest, line_no}});
      } else if (kw == "ctx") {
        const auto arrow = rest.find("->");
        if (arrow == std::string::npos) parse_error(line_no, "ctx line needs '->'");
        std::vector<TokenId> ctx;
        std::istringstream cs(rest.substr(0, arrow));
        std::string tok;
        while (cs >> tok) ctx.push_back(static_cast<TokenId>(parse_uint(tok, line_no, "ctx")));
        rows.push_back({std::move(ctx), {rest.substr(arrow + 2), line_no}});
      } else {
        parse_error(line_no, "unknown keyword '" + kw + "'");
      }
    }
    if (!vocab) fail(ErrorCode::kParse, "table model: missing 'vocab'");
    if (!order) fail(ErrorCode::kParse, "table model: missing 'order'");
    TableModel m(*vocab, *order);
    if (seed) {
      m.hashed_seed_ = *seed;
      m.sharpness_ = sharpness;
    }
    for (auto& [ctx, body] : rows) {
      const bool is_default = body.first.rfind("default:", 0) == 0;
      const std::string spec = is_default ? body.first.substr(8) : body.first;
      Distribution d = parse_dist(spec, *vocab, body.second);
      try {
        if (is_default) {
          m.set_default(std::move(d));
        } else {
          for (TokenId t : ctx) {
            if (t >= *vocab) parse_error(body.second, "context token outside vocabulary");
          }
          m.set_entry(ctx, std::move(d));
        }
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kParse) throw;
        parse_error(body.second, e.what());
      }
    }
    return m;
  }

  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "#pdsim-table-model v1\n";
    os << "vocab " << vocab_ << "\norder " << order_ << "\n";
    if (hashed_seed_) os << "seed " << *hashed_seed_ << "\nsharpness " << sharpness_ << "\n";
    auto dist_text = [&](const Distribution& d) {
      std::ostringstream ds;
      ds.precision(17);
      bool first = true;
      for (std::size_t t = 0; t < d.size(); ++t) {
        if (d[t] == 0.0) continue;
        ds << (first ? "" : " ") << t << ':' << d[t];
        first = false;
      }
      return ds.str();
    };
    if (default_) os << "default " << dist_text(*default_) << "\n";
    for (const auto& [ctx, d] : table_) {
      os << "ctx";
      for (TokenId t : ctx) os << ' ' << t;
      os << " -> " << dist_text(d) << "\n";
    }
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  static Distribution parse_dist(const std::string& spec, std::size_t vocab, std::size_t line_no) {
    Distribution d(vocab, 0.0);
    std::istringstream ss(spec);
    std::string item;
    bool any = false;
    while (ss >> item) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) parse_error(line_no, "expected token:prob, got '" + item + "'");
      const auto t = parse_uint(std::string_view(item).substr(0, colon), line_no, "token");
      const double p = parse_double(std::string_view(item).substr(colon + 1), line_no, "prob");
      if (t >= vocab) parse_error(line_no, "token " + std::to_string(t) + " outside vocabulary");
      if (p < 0.0) parse_error(line_no, "negative probability");
      d[t] += p;
      any = true;
    }
    if (!any) parse_error(line_no, "empty distribution");
    double sum = 0.0;
    for (double p : d) sum += p;
    if (std::abs(sum - 1.0) > 1e-6) {
      parse_error(line_no, "probabilities sum to " + std::to_string(sum) + ", expected 1");
    }
    detail::normalize_in_place(d);
    return d;
  }

  void check(Distribution& d) const {
    if (d.size() != vocab_) fail(ErrorCode::kInvalidArgument, "distribution size != vocab");
    for (double p : d) {
      if (!(p >= 0.0)) fail(ErrorCode::kInvalidArgument, "negative probability");
    }
    detail::normalize_in_place(d);
  }

  Distribution lookup(std::span<const TokenId> prefix) const {
    const std::size_t max_len = std::min(order_, prefix.size());
    if (!table_.empty()) {
      for (std::size_t len = max_len + 1; len-- > 0;) {
        std::vector<TokenId> ctx(prefix.end() - static_cast<std::ptrdiff_t>(len), prefix.end());
        auto it = table_.find(ctx);
        if (it != table_.end()) return it->second;
      }
    }
    if (hashed_seed_) {
      return detail::hashed_distribution(
          detail::context_key(*hashed_seed_, prefix.last(max_len)), vocab_, sharpness_);
    }
    if (default_) return *default_;
    return Distribution(vocab_, 1.0 / static_cast<double>(vocab_));
  }

  std::size_t vocab_;
  std::size_t order_;
  std::map<std::vector<TokenId>, Distribution> table_;
  std::optional<Distribution> default_;
  std::optional<std::uint64_t> hashed_seed_;
  double sharpness_ = 4.0;
};

// Target law that continues the most recent earlier occurrence of the last
// `order` tokens with probability copy_prob. Used by the simulator.
class PromptCopyModel : public ScoreModel {
 public:
  PromptCopyModel(std::size_t vocab, double copy_prob, std::uint64_t seed, std::size_t order = 2)
      : vocab_(vocab), copy_prob_(copy_prob), seed_(seed), order_(order) {
    if (vocab == 0) fail(ErrorCode::kInvalidArgument, "vocab must be >= 1");
    if (copy_prob < 0.0 || copy_prob > 1.0) {
      fail(ErrorCode::kInvalidArgument, "copy_prob must be in [0, 1]");
    }
  }

  std::size_t vocab_size() const override { return vocab_; }

  Distribution next_distribution(std::span<const TokenId> prefix) const override {
    const std::size_t n = std::min(order_, prefix.size());
    Distribution d =
        detail::hashed_distribution(detail::context_key(seed_, prefix.last(n)), vocab_, 4.0);
    if (n == 0 || prefix.size() <= n) return d;
    const auto tail = prefix.last(n);
    for (std::size_t p = prefix.size() - n; p-- > 0;) {
      if (std::equal(tail.begin(), tail.end(), prefix.begin() + static_cast<std::ptrdiff_t>(p))) {
        const TokenId next = prefix[p + n] % static_cast<TokenId>(vocab_);
        for (auto& x : d) x *= 1.0 - copy_prob_;
        d[next] += copy_prob_;
        break;
      }
    }
    return d;
  }

 private:
  std::size_t vocab_;
  double copy_prob_;
  std::uint64_t seed_;
  std::size_t order_;
};

// Lowest index wins ties.
inline TokenId argmax(const Distribution& d) {
  return static_cast<TokenId>(std::max_element(d.begin(), d.end()) - d.begin());
}

inline TokenId sample_from(const Distribution& d, CounterRng& rng) {
  double total = 0.0;
  for (double p : d) total += p;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    acc += d[i];
    last_nonzero = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_nonzero);
}

// ---------------------------------------------------------------------------
// Pipeline state and messages

struct ProposeState {
  std::size_t cursor = 0;
  std::size_t ngram_n = 2;
  std::size_t k = 8;
  bool first_iteration = true;
  bool skip_initial = true;
};

struct Draft {
  std::vector<TokenId> candidates;
  std::vector<double> proposal_prob;
  // Full proposal law per position; empty for degenerate (lookup) proposals.
  std::vector<Distribution> proposal_dists;
  // Prompt position of candidates[0] for lookup proposals.
  std::optional<std::size_t> source_pos;

  bool empty() const noexcept { return candidates.empty(); }
};

struct VerifyOutcome {
  std::vector<TokenId> accepted;
  TokenId bonus = 0;
  std::size_t accepted_len = 0;
};

enum class VerifyMode { kGreedy, kStochastic };

// Prompt lookup over the rightmost occurrence of the recent n-gram. An
// established cursor is tried first, then occurrences continuing at or after
// the cursor, then the whole prompt.
inline Draft propose_ngram(std::span<const TokenId> prompt, std::span<const TokenId> recent,
                           ProposeState& state) {
  if (prompt.empty()) fail(ErrorCode::kInvalidArgument, "prompt must be non-empty");
  if (state.k == 0) fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  Draft draft;
  auto take_from = [&](std::size_t src) {
    const std::size_t len = std::min(state.k, prompt.size() - src);
    draft.candidates.assign(prompt.begin() + static_cast<std::ptrdiff_t>(src),
                            prompt.begin() + static_cast<std::ptrdiff_t>(src + len));
    draft.proposal_prob.assign(len, 1.0);
    draft.source_pos = src;
    state.cursor = src + len;
  };

  if (state.first_iteration && state.skip_initial) {
    take_from(0);
    return draft;
  }
  const std::size_t n = state.ngram_n;
  if (n == 0 || recent.size() < n || prompt.size() <= n) return draft;
  const auto tail = recent.last(n);
  auto matches_at = [&](std::size_t p) {
    return std::equal(tail.begin(), tail.end(), prompt.begin() + static_cast<std::ptrdiff_t>(p));
  };

  if (state.cursor > 0) {
    for (std::size_t c : {state.cursor, state.cursor + 1}) {
      if (c >= n && c < prompt.size() && matches_at(c - n)) {
        take_from(c);
        return draft;
      }
    }
  }
  // Continuation position p + n must leave at least one token to propose.
  std::optional<std::size_t> global;
  for (std::size_t p = prompt.size() - n; p-- > 0;) {
    if (!matches_at(p)) continue;
    if (p + n >= state.cursor) {
      take_from(p + n);
      return draft;
    }
    if (!global) global = p + n;
    break;
  }
  if (global) take_from(*global);
  return draft;
}

class ProposeExecutor {
 public:
  virtual ~ProposeExecutor() = default;
  virtual Draft propose(std::span<const TokenId> prompt, std::span<const TokenId> stream,
                        ProposeState& state, CounterRng& rng) = 0;
};

class PromptLookupProposer : public ProposeExecutor {
 public:
  Draft propose(std::span<const TokenId> prompt, std::span<const TokenId> stream,
                ProposeState& state, CounterRng&) override {
    return propose_ngram(prompt, stream, state);
  }
};

// Draft model M_q proposing k tokens autoregressively.
class NaiveDraftProposer : public ProposeExecutor {
 public:
  NaiveDraftProposer(const ScoreModel& draft_model, VerifyMode mode)
      : model_(draft_model), mode_(mode) {}

  Draft propose(std::span<const TokenId>, std::span<const TokenId> stream, ProposeState& state,
                CounterRng& rng) override {
    Draft draft;
    std::vector<TokenId> ctx(stream.begin(), stream.end());
    for (std::size_t i = 0; i < state.k; ++i) {
      Distribution q = model_.next_distribution(ctx);
      const TokenId x = mode_ == VerifyMode::kGreedy ? argmax(q) : sample_from(q, rng);
      draft.candidates.push_back(x);
      draft.proposal_prob.push_back(q[x]);
      draft.proposal_dists.push_back(std::move(q));
      ctx.push_back(x);
    }
    return draft;
  }

 private:
  const ScoreModel& model_;
  VerifyMode mode_;
};

class ScoreExecutor {
 public:
  explicit ScoreExecutor(const ScoreModel& target) : model_(target) {}

  std::vector<Distribution> score(std::span<const TokenId> prefix,
                                  std::span<const TokenId> candidates) const {
    auto dists = model_.score(prefix, candidates);
    if (dists.size() != candidates.size() + 1) {
      fail(ErrorCode::kScoring, "score model returned " + std::to_string(dists.size()) +
                                    " distributions for " + std::to_string(candidates.size()) +
                                    " candidates");
    }
    for (const auto& d : dists) {
      if (d.size() != model_.vocab_size()) fail(ErrorCode::kScoring, "distribution size != vocab");
    }
    return dists;
  }

  const ScoreModel& model() const noexcept { return model_; }

 private:
  const ScoreModel& model_;
};

inline std::vector<Distribution> score(std::span<const TokenId> prefix,
                                       std::span<const TokenId> candidates, const ScoreModel& m) {
  return ScoreExecutor(m).score(prefix, candidates);
}

// min(1, p(x) / q(x)); a degenerate proposal has q(x) = 1.
inline double accept_probability(const Distribution& p, const Distribution* q, TokenId x) {
  const double qx = q == nullptr ? 1.0 : (*q)[x];
  if (qx <= 0.0) return 1.0;
  return std::min(1.0, p[x] / qx);
}

// normalize(max(0, p - q)), falling back to p when nothing is left.
inline Distribution residual_distribution(const Distribution& p, const Distribution* q, TokenId x) {
  Distribution r(p.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    const double qt = q == nullptr ? (t == x ? 1.0 : 0.0) : (*q)[t];
    r[t] = std::max(0.0, p[t] - qt);
    sum += r[t];
  }
  if (sum <= 0.0) return p;
  for (auto& v : r) v /= sum;
  return r;
}

inline VerifyOutcome verify(const Draft& draft, const std::vector<Distribution>& dists,
                            VerifyMode mode, CounterRng& rng) {
  const std::size_t k = draft.candidates.size();
  if (dists.size() != k + 1) {
    fail(ErrorCode::kInvalidArgument, "verify needs draft length + 1 distributions");
  }
  VerifyOutcome out;
  for (std::size_t i = 0; i < k; ++i) {
    const TokenId x = draft.candidates[i];
    if (mode == VerifyMode::kGreedy) {
      const TokenId best = argmax(dists[i]);
      if (x != best) {
        out.bonus = best;
        out.accepted_len = out.accepted.size();
        return out;
      }
    } else {
      const Distribution* q = draft.proposal_dists.empty() ? nullptr : &draft.proposal_dists[i];
      if (!(rng.uniform() < accept_probability(dists[i], q, x))) {
        out.bonus = sample_from(residual_distribution(dists[i], q, x), rng);
        out.accepted_len = out.accepted.size();
        return out;
      }
    }
    out.accepted.push_back(x);
  }
  out.bonus = mode == VerifyMode::kGreedy ? argmax(dists[k]) : sample_from(dists[k], rng);
  out.accepted_len = out.accepted.size();
  return out;
}

class SpeculativeSampler {
 public:
  explicit SpeculativeSampler(VerifyMode mode) : mode_(mode) {}
  VerifyOutcome verify(const Draft& draft, const std::vector<Distribution>& dists,
                       CounterRng& rng) const {
    return pdsim::verify(draft, dists, mode_, rng);
  }
  VerifyMode mode() const noexcept { return mode_; }

 private:
  VerifyMode mode_;
};

// Appends accepted + bonus and moves the lookup cursor.
inline void update(std::vector<TokenId>& stream, const Draft& draft, const VerifyOutcome& outcome,
                   ProposeState& state) {
  stream.insert(stream.end(), outcome.accepted.begin(), outcome.accepted.end());
  stream.push_back(outcome.bonus);
  if (draft.source_pos && outcome.accepted_len > 0) {
    state.cursor = *draft.source_pos + outcome.accepted_len;
  } else if (draft.source_pos || !draft.empty()) {
    state.cursor = 0;
  }
  state.first_iteration = false;
}

class SpeculativeUpdater {
 public:
  void update(std::vector<TokenId>& stream, const Draft& draft, const VerifyOutcome& outcome,
              ProposeState& state) const {
    pdsim::update(stream, draft, outcome, state);
  }
};

struct SpecDecodeConfig {
  std::size_t k = 8;
  std::size_t ngram_n = 2;
  bool skip_initial = true;
  VerifyMode mode = VerifyMode::kGreedy;
};

struct SpecDecodeStats {
  std::size_t iterations = 0;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  std::size_t emitted = 0;
  std::vector<std::size_t> accepted_per_iteration;

  double mean_accepted() const noexcept {
    return iterations ? static_cast<double>(accepted) / static_cast<double>(iterations) : 0.0;
  }
  double mean_emitted() const noexcept {
    return iterations ? static_cast<double>(emitted) / static_cast<double>(iterations) : 0.0;
  }
};

struct SpecDecodeResult {
  std::vector<TokenId> tokens;
  SpecDecodeStats stats;
};

// Propose -> score -> verify -> update until max_new_tokens are emitted.
inline SpecDecodeResult speculative_generate(std::span<const TokenId> prompt,
                                             std::size_t max_new_tokens, const ScoreModel& target,
                                             ProposeExecutor& proposer,
                                             const SpecDecodeConfig& cfg, CounterRng& rng) {
  ProposeState state;
  state.k = cfg.k;
  state.ngram_n = cfg.ngram_n;
  state.skip_initial = cfg.skip_initial;
  const ScoreExecutor scorer(target);
  const SpeculativeSampler sampler(cfg.mode);
  const SpeculativeUpdater updater;

  std::vector<TokenId> stream(prompt.begin(), prompt.end());
  SpecDecodeResult result;
  while (stream.size() - prompt.size() < max_new_tokens) {
    const std::size_t remaining = max_new_tokens - (stream.size() - prompt.size());
    Draft draft = proposer.propose(prompt, stream, state, rng);
    if (draft.candidates.size() > remaining - 1) {
      const std::size_t keep = remaining - 1;
      draft.candidates.resize(keep);
      draft.proposal_prob.resize(keep);
      if (!draft.proposal_dists.empty()) draft.proposal_dists.resize(keep);
    }
    const auto dists = scorer.score(stream, draft.candidates);
    const VerifyOutcome outcome = sampler.verify(draft, dists, rng);
    updater.update(stream, draft, outcome, state);

    ++result.stats.iterations;
    result.stats.proposed += draft.candidates.size();
    result.stats.accepted += outcome.accepted_len;
    result.stats.emitted += outcome.accepted_len + 1;
    result.stats.accepted_per_iteration.push_back(outcome.accepted_len);
  }
  result.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(prompt.size()), stream.end());
  return result;
}

inline std::vector<TokenId> plain_greedy_decode(std::span<const TokenId> prompt,
                                                std::size_t max_new_tokens,
                                                const ScoreModel& target) {
  std::vector<TokenId> stream(prompt.begin(), prompt.end());
  for (std::size_t i = 0; i < max_new_tokens; ++i) {
    stream.push_back(argmax(target.next_distribution(stream)));
  }
  return {stream.begin() + static_cast<std::ptrdiff_t>(prompt.size()), stream.end()};
}

}  // namespace pdsim
