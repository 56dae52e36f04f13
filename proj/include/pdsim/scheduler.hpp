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
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pdsim/cache_managers.hpp"
#include "pdsim/core_types.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/error.hpp"
#include "pdsim/rng.hpp"

namespace pdsim {

using RequestId = std::uint64_t;
using ChatId = std::uint64_t;

struct RequestMeta {
  RequestId request_id = 0;
  std::optional<ChatId> chat_id;
  std::vector<BlockHashKey> block_hashes;
  std::size_t seq_len = 0;
  Micros arrival_time = 0;
  std::size_t output_budget = 0;
};

struct RunningEntry {
  RequestId request_id = 0;
  Micros t_start = 0;
  Micros predicted_prefill = 0;
};

struct WorkerStatus {
  WorkerId worker_id = 0;
  std::vector<RunningEntry> running;
  std::size_t waiting_count = 0;
  std::uint64_t gpu_mem_free = 0;
  double kv_occupancy = 0.0;
  std::uint64_t cache_version = 0;
};

struct ScoreWeights {
  double alpha = 1.0;
  double beta = 0.5;
  double gamma = 0.5;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) {
      fail(ErrorCode::kInvalidArgument, "score weights must be non-negative");
    }
    if (alpha == 0 && beta == 0 && gamma == 0) {
      fail(ErrorCode::kInvalidArgument, "score weights must not all be zero");
    }
  }
};

struct Assignment {
  RequestId request_id = 0;
  WorkerId worker_id = 0;
  Micros expected_start = 0;
  std::size_t reused_blocks_local = 0;
  std::size_t reused_blocks_remote = 0;
  double score = 0.0;
  Micros predicted_latency = 0;
};

struct SchedulerOptions {
  MatchSemantics semantics = MatchSemantics::kGlobalPrefix;
  std::size_t block_size = kDefaultBlockSize;
  double occupancy_high_watermark = 0.95;
  std::size_t window_cap = 64;
  std::size_t group_size = 8;
};

// Window w = max(dp_size, min(|queue|, window_cap)) taken in arrival order,
// then sorted by seq_len and chunked so each group pads little.
inline std::vector<std::vector<RequestMeta>> form_batch(std::span<const RequestMeta> queue,
                                                        std::size_t dp_size,
                                                        std::size_t window_cap = 64,
                                                        std::size_t group_size = 8) {
  if (dp_size == 0) fail(ErrorCode::kInvalidArgument, "dp_size must be >= 1");
  if (group_size == 0) fail(ErrorCode::kInvalidArgument, "group_size must be >= 1");
  if (queue.empty()) return {};
  std::vector<RequestMeta> ordered(queue.begin(), queue.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return std::tie(a.arrival_time, a.request_id) < std::tie(b.arrival_time, b.request_id);
  });
  const std::size_t w = std::max(dp_size, std::min(ordered.size(), window_cap));
  ordered.resize(std::min(w, ordered.size()));
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    return std::tie(a.seq_len, a.request_id) < std::tie(b.seq_len, b.request_id);
  });
  std::vector<std::vector<RequestMeta>> groups;
  for (std::size_t i = 0; i < ordered.size(); i += group_size) {
    const std::size_t end = std::min(ordered.size(), i + group_size);
    groups.emplace_back(ordered.begin() + static_cast<std::ptrdiff_t>(i),
                        ordered.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return groups;
}

inline Micros predict_prefill(const RequestMeta& r, double batch_tokens, const CostModel& model) {
  if (r.seq_len == 0) fail(ErrorCode::kInvalidArgument, "seq_len must be > 0");
  return model.prefill_time(r.seq_len, batch_tokens);
}

// Latest predicted completion over the worker's running requests.
inline Micros predict_available(const WorkerStatus& d, Micros now) {
  if (d.running.empty()) return now;
  Micros t = std::numeric_limits<Micros>::min();
  for (const auto& r : d.running) t = std::max(t, r.t_start + r.predicted_prefill);
  return t;
}

inline double reuse_score(double local_len, double remote_len, double total_seq_len,
                          double predicted_latency, double max_latency, const ScoreWeights& w) {
  if (total_seq_len <= 0) fail(ErrorCode::kInvalidArgument, "total_seq_len must be > 0");
  if (max_latency <= 0) fail(ErrorCode::kInvalidArgument, "max_latency must be > 0");
  return w.alpha * local_len / total_seq_len - w.gamma * predicted_latency / max_latency +
         w.beta * remote_len / total_seq_len;
}

namespace detail {

inline std::size_t matched_tokens(const RequestMeta& r, const UnifiedCacheMap& map,
                                  WorkerId w, std::size_t blocks, std::size_t block_size) {
  if (blocks == 0) return 0;
  std::size_t tokens = blocks * block_size;
  auto it = map.holders(r.block_hashes[blocks - 1]);
  if (it != nullptr) {
    auto m = it->find(w);
    if (m != it->end() && m->second.watermark > 0 && m->second.watermark < block_size) {
      tokens -= block_size - m->second.watermark;
    }
  }
  return std::min(tokens, r.seq_len);
}

inline std::vector<const WorkerStatus*> admissible(std::span<const WorkerStatus> workers,
                                                   double watermark) {
  std::vector<const WorkerStatus*> out;
  for (const auto& w : workers) {
    if (w.kv_occupancy < watermark) out.push_back(&w);
  }
  return out;
}

}  // namespace detail

// Chooses the prefill worker maximising the cache reuse score. The local and
// remote lookups both read the map state as it was before this decision.
inline Assignment schedule_prefill(const RequestMeta& r, std::span<const WorkerStatus> workers,
                                   const UnifiedCacheMap& map, const RemoteCacheIndex& remote,
                                   const ScoreWeights& weights, Micros clock,
                                   const CostModel& model, const SchedulerOptions& opts = {},
                                   double batch_tokens = 0.0) {
  if (workers.empty()) fail(ErrorCode::kInvalidArgument, "no workers registered");
  if (r.seq_len == 0) fail(ErrorCode::kInvalidArgument, "seq_len must be > 0");
  const auto candidates = detail::admissible(workers, opts.occupancy_high_watermark);
  if (candidates.empty()) {
    fail(ErrorCode::kBackpressure,
         "backpressure: every worker above kv occupancy watermark for request " +
             std::to_string(r.request_id));
  }

  MatchResult local;
  std::size_t remote_blocks = 0;
  if (!r.block_hashes.empty()) {
    local = match_prefix(r.block_hashes, map, opts.semantics);
    remote_blocks = remote_lookup(r.block_hashes, remote);
  }
  const std::size_t remote_tokens =
      std::min(remote_blocks * opts.block_size, r.seq_len);

  struct Scored {
    const WorkerStatus* w;
    std::size_t local_blocks;
    std::size_t local_tokens;
    Micros avail;
    Micros latency;
  };
  std::vector<Scored> scored;
  Micros max_latency = 0;
  for (const WorkerStatus* w : candidates) {
    const std::size_t blocks = local.length_for(w->worker_id);
    const std::size_t tokens =
        detail::matched_tokens(r, map, w->worker_id, blocks, opts.block_size);
    const Micros avail = predict_available(*w, clock);
    const Micros wait = std::max(avail, clock) - clock;
    const Micros latency = wait + model.prefill_time(r.seq_len - tokens, batch_tokens);
    scored.push_back({w, blocks, tokens, avail, latency});
    max_latency = std::max(max_latency, latency);
  }
  const double denom = max_latency > 0 ? static_cast<double>(max_latency) : 1.0;

  const Scored* best = nullptr;
  double best_score = 0.0;
  for (const auto& s : scored) {
    const double score =
        reuse_score(static_cast<double>(s.local_tokens), static_cast<double>(remote_tokens),
                    static_cast<double>(r.seq_len), static_cast<double>(s.latency), denom, weights);
    const bool better =
        best == nullptr || score > best_score ||
        (score == best_score &&
         (s.avail < best->avail ||
          (s.avail == best->avail && s.w->worker_id < best->w->worker_id)));
    if (better) {
      best = &s;
      best_score = score;
    }
  }
  return Assignment{r.request_id,
                    best->w->worker_id,
                    std::max(best->avail, clock),
                    best->local_blocks,
                    remote_blocks,
                    best_score,
                    best->latency};
}

// Baseline without traffic scheduling: uniform over admissible workers.
inline Assignment schedule_random(const RequestMeta& r, std::span<const WorkerStatus> workers,
                                  Micros clock, CounterRng& rng,
                                  const SchedulerOptions& opts = {}) {
  if (workers.empty()) fail(ErrorCode::kInvalidArgument, "no workers registered");
  const auto candidates = detail::admissible(workers, opts.occupancy_high_watermark);
  if (candidates.empty()) {
    fail(ErrorCode::kBackpressure,
         "backpressure: every worker above kv occupancy watermark for request " +
             std::to_string(r.request_id));
  }
  const WorkerStatus* w = candidates[rng.below(candidates.size())];
  return Assignment{r.request_id, w->worker_id, std::max(predict_available(*w, clock), clock),
                    0, 0, 0.0, 0};
}

using AffinityTable = std::map<ChatId, WorkerId>;

// Sticky routing by chat id while the recorded worker stays below the
// watermark; otherwise the least loaded decode worker becomes the new owner.
inline Assignment route_decode(const RequestMeta& r, AffinityTable& affinity,
                               std::span<const WorkerStatus> workers, Micros clock,
                               double occupancy_high_watermark = 0.95) {
  if (workers.empty()) fail(ErrorCode::kInvalidArgument, "no decode workers registered");
  if (r.chat_id) {
    auto it = affinity.find(*r.chat_id);
    if (it != affinity.end()) {
      for (const auto& w : workers) {
        if (w.worker_id == it->second && w.kv_occupancy < occupancy_high_watermark) {
          return Assignment{r.request_id, w.worker_id, clock, 0, 0, 0.0, 0};
        }
      }
    }
  }
  const WorkerStatus* least = &workers[0];
  for (const auto& w : workers) {
    const auto load = [](const WorkerStatus& s) {
      return std::make_tuple(s.kv_occupancy, s.running.size() + s.waiting_count, s.worker_id);
    };
    if (load(w) < load(*least)) least = &w;
  }
  if (r.chat_id) affinity[*r.chat_id] = least->worker_id;
  return Assignment{r.request_id, least->worker_id, clock, 0, 0, 0.0, 0};
}

}  // namespace pdsim
