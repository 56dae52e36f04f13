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
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "pdsim/cache_managers.hpp"
#include "pdsim/config.hpp"
#include "pdsim/core_types.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/error.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/spec_decode.hpp"
#include "pdsim/tiered_cache.hpp"
#include "pdsim/workload.hpp"

namespace pdsim {

// Rank order breaks ties between events at the same timestamp.
enum class EventKind : std::uint8_t {
  kStatusSync = 0,
  kKeySync = 1,
  kScheduleTick = 2,
  kPrefillDone = 3,
  kKvTransferDone = 4,
  kDecodeStep = 5,
  kArrival = 6,
  kComplete = 7,
};

inline const char* event_name(EventKind k) noexcept {
  switch (k) {
    case EventKind::kStatusSync: return "StatusSync";
    case EventKind::kKeySync: return "KeySync";
    case EventKind::kScheduleTick: return "ScheduleTick";
    case EventKind::kPrefillDone: return "PrefillDone";
    case EventKind::kKvTransferDone: return "KvTransferDone";
    case EventKind::kDecodeStep: return "DecodeStep";
    case EventKind::kArrival: return "Arrival";
    case EventKind::kComplete: return "Complete";
  }
  return "?";
}

struct SimEvent {
  Micros time = 0;
  EventKind kind = EventKind::kArrival;
  std::uint64_t seq = 0;
  std::uint64_t target = 0;  // request or node index

  friend bool operator>(const SimEvent& a, const SimEvent& b) noexcept {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

// ---------------------------------------------------------------------------
// Prefill

struct PrefillOutcome {
  std::size_t matched_blocks = 0;
  std::size_t local_blocks = 0;
  std::size_t remote_blocks = 0;
  Micros fetch_latency = 0;
  std::vector<BlockHashKey> held;  // gpu references taken for this request
};

struct PrefillItem {
  std::span<const BlockHashKey> hashes;
  std::size_t input_len = 0;
};

struct PrefillBatchResult {
  // nullopt: the request thrashed and holds nothing.
  std::vector<std::optional<PrefillOutcome>> outcomes;
  std::size_t uncached_tokens = 0;
  Micros fetch_latency = 0;
  Micros duration = 0;
  bool impossible = false;  // a request cannot fit even in an idle cache
};

namespace detail {

inline bool is_thrash(const Error& e) {
  return e.code() == ErrorCode::kGpuCacheThrash || e.code() == ErrorCode::kTierThrash;
}

inline std::string remote_path(BlockHashKey h) { return "3fs://kv/" + to_hex(h); }

}  // namespace detail

// Walks the request's block keys: matched prefix blocks are fetched to GPU
// along the tier chain, the rest are allocated fresh. Returns nullopt after
// rolling back its references when the GPU tier cannot make room.
inline std::optional<PrefillOutcome> stage_prefill_blocks(TieredCache& cache,
                                                          std::span<const BlockHashKey> hashes,
                                                          RemoteCacheIndex* remote,
                                                          std::uint64_t block_bytes, Micros now) {
  PrefillOutcome out;
  const std::size_t bs = cache.block_size();
  try {
    std::size_t i = 0;
    for (; i < hashes.size(); ++i) {
      const BlockHashKey h = hashes[i];
      auto tier = cache.lookup(h);
      if (!tier && remote != nullptr && remote->contains(h)) {
        cache.insert(h, CacheTier::kDistStore, block_bytes, bs, now);
        tier = CacheTier::kDistStore;
      }
      if (!tier) break;
      FetchPlan plan = cache.fetch_to_gpu(h, now);
      out.fetch_latency += plan.latency;
      if (!plan.reached_gpu) {
        plan = cache.fetch_to_gpu(h, now);
        out.fetch_latency += plan.latency;
      }
      out.held.push_back(h);
      ++out.matched_blocks;
      if (*tier <= CacheTier::kLocalCpu) {
        ++out.local_blocks;
      } else {
        ++out.remote_blocks;
      }
    }
    for (; i < hashes.size(); ++i) {
      const BlockHashKey h = hashes[i];
      // A suffix block can survive its evicted predecessor; it is recomputed
      // but its slot is reused.
      if (!cache.lookup(h)) cache.insert(h, CacheTier::kGpu, block_bytes, bs, now);
      FetchPlan plan = cache.fetch_to_gpu(h, now);
      if (!plan.reached_gpu) cache.fetch_to_gpu(h, now);
      out.held.push_back(h);
      if (remote != nullptr && !remote->contains(h)) remote->persist(h, detail::remote_path(h));
    }
  } catch (const Error& e) {
    if (!detail::is_thrash(e)) throw;
    if (!out.held.empty()) cache.release_and_update(out.held, now);
    return std::nullopt;
  }
  return out;
}

// Batch duration = fetch latencies + one overhead + contended compute over
// the uncached tokens only.
inline PrefillBatchResult execute_prefill(TieredCache& cache, std::span<const PrefillItem> batch,
                                          RemoteCacheIndex* remote, const CostModel& cost,
                                          Micros now) {
  PrefillBatchResult res;
  const std::uint64_t bb = cost.block_bytes(cache.block_size());
  for (const auto& item : batch) {
    auto o = stage_prefill_blocks(cache, item.hashes, remote, bb, now);
    if (!o) {
      if (cache.referenced_bytes(CacheTier::kGpu) == 0) res.impossible = true;
      res.outcomes.push_back(std::nullopt);
      continue;
    }
    res.fetch_latency += o->fetch_latency;
    res.uncached_tokens += item.input_len - std::min(item.input_len, o->matched_blocks * cache.block_size());
    res.outcomes.push_back(std::move(o));
  }
  const bool any = std::any_of(res.outcomes.begin(), res.outcomes.end(),
                               [](const auto& o) { return o.has_value(); });
  if (any) {
    res.duration = res.fetch_latency +
                   cost.prefill_time(res.uncached_tokens, static_cast<double>(res.uncached_tokens));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Decode

// Per-request decode progress; speculative streams run the full
// propose/score/verify/update loop against a prompt-copy target.
class DecodeStream {
 public:
  DecodeStream(std::size_t budget, const SpecSimConfig& spec, std::vector<TokenId> prompt,
               std::size_t vocab, std::uint64_t seed, std::uint64_t request_id)
      : remaining_(budget), spec_(spec), rng_(seed, 0x1000 + request_id) {
    if (spec_.enabled) {
      prompt_ = std::move(prompt);
      stream_ = prompt_;
      target_ = std::make_unique<PromptCopyModel>(vocab, spec_.copy_prob, seed ^ 0xC0FFEEULL);
      state_.k = spec_.k;
      state_.ngram_n = spec_.ngram_n;
      state_.skip_initial = spec_.skip_initial;
    }
  }

  std::size_t remaining() const noexcept { return remaining_; }
  bool speculative() const noexcept { return spec_.enabled; }

  // Tokens emitted by one iteration.
  std::size_t step() {
    if (remaining_ == 0) return 0;
    std::size_t n = 1;
    if (spec_.enabled) {
      Draft draft = proposer_.propose(prompt_, stream_, state_, rng_);
      const std::size_t keep = std::min(draft.candidates.size(), remaining_ - 1);
      draft.candidates.resize(keep);
      draft.proposal_prob.resize(keep);
      const auto dists = ScoreExecutor(*target_).score(stream_, draft.candidates);
      const VerifyOutcome out = SpeculativeSampler(spec_.mode).verify(draft, dists, rng_);
      SpeculativeUpdater().update(stream_, draft, out, state_);
      n = out.accepted_len + 1;
    }
    remaining_ -= n;
    return n;
  }

 private:
  std::size_t remaining_;
  SpecSimConfig spec_;
  CounterRng rng_;
  std::vector<TokenId> prompt_;
  std::vector<TokenId> stream_;
  std::unique_ptr<PromptCopyModel> target_;
  PromptLookupProposer proposer_;
  ProposeState state_;
};

inline Micros decode_iteration_time(const CostModel& cost, const SpecSimConfig& spec,
                                    std::size_t concurrent) {
  return cost.decode_step_time(concurrent) + (spec.enabled ? spec.draft_cost_us : 0);
}

struct DecodeTrace {
  std::vector<Micros> token_times;
  std::size_t iterations = 0;
  Micros end = 0;
};

// A single request decoding alone for `budget` tokens from `start`.
inline DecodeTrace execute_decode(std::span<const TokenId> prompt, std::size_t budget, Micros start,
                                  const CostModel& cost, const SpecSimConfig& spec = {},
                                  std::size_t vocab = 1024, std::uint64_t seed = 1,
                                  std::uint64_t request_id = 0) {
  DecodeStream s(budget, spec, {prompt.begin(), prompt.end()}, vocab, seed, request_id);
  DecodeTrace t;
  t.end = start;
  while (s.remaining() > 0) {
    t.end += decode_iteration_time(cost, spec, 1);
    const std::size_t n = s.step();
    t.token_times.insert(t.token_times.end(), n, t.end);
    ++t.iterations;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Simulator

struct SimResult {
  MetricsReport report;
  std::uint64_t events_processed = 0;
  // Unified-map deltas published at each KeySync, for inspection.
  std::vector<WorkerCacheDelta> published_deltas;
};

class Simulator {
 public:
  Simulator(std::vector<TraceRecord> trace, SimConfig config)
      : cfg_(std::move(config)), trace_(std::move(trace)), rng_(cfg_.seed, 11) {
    cfg_.sched.block_size = cfg_.block_size;
    cfg_.validate();
    for (const auto& r : trace_) validate_record(r);
    std::stable_sort(trace_.begin(), trace_.end(), [](const auto& a, const auto& b) {
      return a.arrival_us < b.arrival_us;
    });
  }

  SimResult run() {
    init();
    while (!events_.empty()) {
      const SimEvent ev = events_.top();
      events_.pop();
      if (ev.time < now_) fail(ErrorCode::kInvalidArgument, "event out of time order");
      now_ = ev.time;
      ++result_.events_processed;
      dispatch(ev);
    }
    std::vector<RequestTimeline> tls;
    tls.reserve(reqs_.size());
    for (auto& r : reqs_) tls.push_back(std::move(r.tl));
    std::map<std::string, Micros> busy;
    for (std::size_t i = 0; i < pnodes_.size(); ++i) busy[node_name(true, i)] = pnodes_[i].busy_us;
    if (cfg_.topology == Topology::kDisaggregated) {
      for (std::size_t i = 0; i < dnodes_.size(); ++i) busy[node_name(false, i)] = dnodes_[i].busy_us;
    } else {
      for (std::size_t i = 0; i < dnodes_.size(); ++i) busy[node_name(true, i)] += dnodes_[i].busy_us;
    }
    result_.report = report(std::move(tls), busy);
    return std::move(result_);
  }

 private:
  struct Req {
    TraceRecord rec;
    std::vector<TokenId> tokens;
    std::vector<BlockHashKey> hashes;
    RequestTimeline tl;
    std::vector<BlockHashKey> held;
    std::uint32_t pnode = 0;
    std::uint32_t dnode = 0;
    std::unique_ptr<DecodeStream> decode;
  };

  struct PrefillNode {
    std::unique_ptr<TieredCache> cache;
    std::deque<std::size_t> queue;
    std::vector<std::size_t> batch;
    bool busy = false;
    Micros batch_start = 0;
    Micros batch_end = 0;
    std::map<BlockHashKey, CacheMetadata> published;
    std::uint64_t version = 0;
    Micros busy_us = 0;
  };

  struct DecodeNode {
    std::vector<std::size_t> active;
    std::vector<std::size_t> members;
    bool stepping = false;
    std::map<ChatId, std::vector<BlockHashKey>> chat_blocks;
    std::uint64_t kv_tokens = 0;
    Micros busy_us = 0;
  };

  bool fusion() const noexcept { return cfg_.topology == Topology::kFusion; }

  static std::string node_name(bool prefill, std::size_t i) {
    return std::string(prefill ? "prefill" : "decode") + std::to_string(i);
  }

  void push(Micros t, EventKind k, std::uint64_t target = 0) {
    events_.push(SimEvent{t, k, seq_++, target});
  }

  Micros next_boundary(Micros t, Micros interval) const { return (t / interval + 1) * interval; }

  void init() {
    const std::size_t n_p = cfg_.prefill_workers;
    const std::size_t n_d = fusion() ? n_p : cfg_.decode_workers;
    pnodes_.resize(n_p);
    for (auto& p : pnodes_) p.cache = std::make_unique<TieredCache>(cfg_.tiers, cfg_.block_size);
    dnodes_.resize(n_d);
    pview_.resize(n_p);
    dview_.resize(n_d);
    for (std::size_t i = 0; i < n_p; ++i) pview_[i].worker_id = static_cast<WorkerId>(i);
    for (std::size_t i = 0; i < n_d; ++i) dview_[i].worker_id = static_cast<WorkerId>(i);

    reqs_.resize(trace_.size());
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      Req& r = reqs_[i];
      r.rec = trace_[i];
      r.tokens = synth_tokens(r.rec, cfg_.vocab_size, cfg_.seed);
      r.hashes = generate_hash_keys(r.tokens, cfg_.block_size);
      r.tl.request_id = r.rec.request_id;
      r.tl.input_len = r.rec.input_len;
      r.tl.output_len = r.rec.output_len;
      r.tl.arrival = r.rec.arrival_us;
      r.tl.blocks_total = r.hashes.size();
      push(r.rec.arrival_us, EventKind::kArrival, i);
    }
    if (!reqs_.empty()) {
      push(0, EventKind::kStatusSync);
      push(0, EventKind::kKeySync);
    }
  }

  void dispatch(const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::kStatusSync: on_status_sync(); break;
      case EventKind::kKeySync: on_key_sync(); break;
      case EventKind::kScheduleTick: on_schedule_tick(); break;
      case EventKind::kPrefillDone: on_prefill_done(ev.target); break;
      case EventKind::kKvTransferDone: on_kv_transfer_done(ev.target); break;
      case EventKind::kDecodeStep: on_decode_step(ev.target); break;
      case EventKind::kArrival: on_arrival(ev.target); break;
      case EventKind::kComplete: on_complete(ev.target); break;
    }
  }

  bool work_left() const noexcept { return completed_ < reqs_.size(); }

  void ensure_tick() {
    if (tick_pending_) return;
    tick_pending_ = true;
    push(next_boundary(now_, cfg_.schedule_interval_us), EventKind::kScheduleTick);
  }

  // --- Master -------------------------------------------------------------

  void on_arrival(std::size_t i) {
    master_queue_.push_back(i);
    ensure_tick();
  }

  RequestMeta meta_of(std::size_t i) const {
    const Req& r = reqs_[i];
    RequestMeta m;
    m.request_id = r.rec.request_id;
    m.chat_id = r.rec.chat_id;
    m.block_hashes = r.hashes;
    m.seq_len = r.rec.input_len;
    m.arrival_time = r.rec.arrival_us;
    m.output_budget = r.rec.output_len;
    return m;
  }

  void on_schedule_tick() {
    tick_pending_ = false;
    if (master_queue_.empty()) return;
    std::vector<RequestMeta> metas;
    std::map<RequestId, std::size_t> index_of;
    for (std::size_t i : master_queue_) {
      metas.push_back(meta_of(i));
      index_of[reqs_[i].rec.request_id] = i;
    }
    const auto groups = form_batch(metas, cfg_.dp_size, cfg_.sched.window_cap, cfg_.sched.group_size);
    std::vector<bool> touched(pnodes_.size(), false);
    for (const auto& group : groups) {
      for (const auto& m : group) {
        Assignment a;
        try {
          if (cfg_.policy == SchedulingPolicy::kCacheAware) {
            a = schedule_prefill(m, pview_, map_, remote_, cfg_.weights, now_, cfg_.cost, cfg_.sched);
          } else {
            a = schedule_random(m, pview_, now_, rng_, cfg_.sched);
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kBackpressure) throw;
          continue;
        }
        const std::size_t i = index_of.at(m.request_id);
        master_queue_.erase(std::find(master_queue_.begin(), master_queue_.end(), i));
        Req& r = reqs_[i];
        r.pnode = a.worker_id;
        r.tl.scheduled = now_;
        const Micros predicted = cfg_.policy == SchedulingPolicy::kCacheAware
                                     ? a.predicted_latency - (a.expected_start - now_)
                                     : predict_prefill(m, 0.0, cfg_.cost);
        auto& view = pview_[a.worker_id];
        view.running.push_back({m.request_id, a.expected_start, std::max<Micros>(predicted, 0)});
        ++view.waiting_count;
        pnodes_[a.worker_id].queue.push_back(i);
        touched[a.worker_id] = true;
      }
    }
    for (std::size_t n = 0; n < pnodes_.size(); ++n) {
      if (touched[n]) try_start(n);
    }
    if (!master_queue_.empty()) ensure_tick();
  }

  void on_status_sync() {
    for (std::size_t n = 0; n < pnodes_.size(); ++n) {
      const PrefillNode& p = pnodes_[n];
      WorkerStatus s;
      s.worker_id = static_cast<WorkerId>(n);
      if (p.busy) {
        for (std::size_t i : p.batch) {
          s.running.push_back({reqs_[i].rec.request_id, p.batch_start, p.batch_end - p.batch_start});
        }
      }
      Micros t = p.busy ? p.batch_end : now_;
      for (std::size_t i : p.queue) {
        const Micros d = predict_prefill(meta_of(i), 0.0, cfg_.cost);
        s.running.push_back({reqs_[i].rec.request_id, t, d});
        t += d;
      }
      s.waiting_count = p.queue.size();
      s.gpu_mem_free = p.cache->free_bytes(CacheTier::kGpu);
      s.kv_occupancy = static_cast<double>(p.cache->referenced_bytes(CacheTier::kGpu)) /
                       static_cast<double>(p.cache->config().capacity(CacheTier::kGpu));
      s.cache_version = p.version;
      pview_[n] = std::move(s);
    }
    for (std::size_t n = 0; n < dnodes_.size(); ++n) {
      const DecodeNode& d = dnodes_[n];
      WorkerStatus s;
      s.worker_id = static_cast<WorkerId>(n);
      for (std::size_t i : d.active) s.running.push_back({reqs_[i].rec.request_id, now_, 0});
      s.kv_occupancy = decode_occupancy(n);
      dview_[n] = std::move(s);
    }
    if (work_left()) push(now_ + cfg_.status_sync_us, EventKind::kStatusSync);
  }

  double decode_occupancy(std::size_t n) const {
    double bytes = static_cast<double>(dnodes_[n].kv_tokens) *
                   static_cast<double>(cfg_.cost.kv_bytes_per_token);
    if (fusion()) {
      const auto& c = *pnodes_[n].cache;
      bytes = std::max(bytes, static_cast<double>(c.referenced_bytes(CacheTier::kGpu)));
    }
    return bytes / static_cast<double>(cfg_.decode_kv_capacity_bytes);
  }

  void publish(std::size_t n) {
    PrefillNode& p = pnodes_[n];
    std::map<BlockHashKey, CacheMetadata> current;
    for (CacheTier t : {CacheTier::kLocalCpu, CacheTier::kGpu}) {
      for (const auto& e : p.cache->entries(t)) current[e.hash] = {e.block_id, t, e.watermark};
    }
    WorkerCacheDelta delta;
    delta.worker = static_cast<WorkerId>(n);
    for (const auto& [h, m] : current) {
      auto it = p.published.find(h);
      if (it == p.published.end() || !(it->second == m)) delta.added.push_back({h, m});
    }
    for (const auto& [h, m] : p.published) {
      if (!current.contains(h)) delta.removed.push_back(h);
    }
    if (delta.added.empty() && delta.removed.empty()) return;
    delta.from_version = p.version;
    delta.to_version = p.version + 1;
    map_.apply_delta(delta);
    p.version = delta.to_version;
    p.published = std::move(current);
    result_.published_deltas.push_back(std::move(delta));
  }

  void on_key_sync() {
    for (std::size_t n = 0; n < pnodes_.size(); ++n) publish(n);
    if (work_left()) push(now_ + cfg_.key_sync_us, EventKind::kKeySync);
  }

  // --- Nodes --------------------------------------------------------------

  bool node_busy(std::size_t n) const {
    if (pnodes_[n].busy) return true;
    return fusion() && dnodes_[n].stepping;
  }

  void try_start(std::size_t n) {
    if (node_busy(n)) return;
    if (!pnodes_[n].queue.empty()) {
      start_prefill(n);
      if (pnodes_[n].busy) return;
    }
    if (fusion()) try_start_decode(n);
  }

  void start_prefill(std::size_t n) {
    PrefillNode& p = pnodes_[n];
    std::vector<std::size_t> batch;
    while (!p.queue.empty() && batch.size() < cfg_.max_prefill_batch) {
      batch.push_back(p.queue.front());
      p.queue.pop_front();
    }
    std::vector<PrefillItem> items;
    for (std::size_t i : batch) items.push_back({reqs_[i].hashes, reqs_[i].rec.input_len});
    RemoteCacheIndex* remote = cfg_.remote_persist ? &remote_ : nullptr;
    const auto res = execute_prefill(*p.cache, items, remote, cfg_.cost, now_);

    p.batch.clear();
    bool requeued = false;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      Req& r = reqs_[batch[k]];
      const auto& o = res.outcomes[k];
      if (!o) {
        if (res.impossible && p.batch.empty()) {
          fail(ErrorCode::kGpuCacheThrash,
               "gpu cache thrash: request " + std::to_string(r.rec.request_id) + " needs " +
                   std::to_string(r.hashes.size()) + " blocks, more than gpu capacity");
        }
        ++r.tl.requeues;
        master_queue_.push_back(batch[k]);
        requeued = true;
        continue;
      }
      r.held = o->held;
      r.tl.prefill_start = now_;
      r.tl.prefill_worker = static_cast<std::uint32_t>(n);
      r.tl.blocks_reused = o->matched_blocks;
      r.tl.reused_tokens_local = o->local_blocks * cfg_.block_size;
      r.tl.reused_tokens_remote = o->remote_blocks * cfg_.block_size;
      r.tl.computed_tokens = r.rec.input_len - r.tl.reused_tokens();
      p.batch.push_back(batch[k]);
    }
    if (requeued) ensure_tick();
    if (cfg_.publish_immediately) publish(n);
    if (p.batch.empty()) return;
    p.busy = true;
    p.batch_start = now_;
    p.batch_end = now_ + res.duration;
    p.busy_us += res.duration;
    push(p.batch_end, EventKind::kPrefillDone, n);
  }

  void on_prefill_done(std::size_t n) {
    PrefillNode& p = pnodes_[n];
    p.busy = false;
    const auto batch = std::move(p.batch);
    p.batch.clear();
    for (std::size_t i : batch) {
      Req& r = reqs_[i];
      r.tl.first_token = now_;
      if (r.rec.output_len >= 1) r.tl.token_times.push_back(now_);
      const std::size_t rest = r.rec.output_len > 0 ? r.rec.output_len - 1 : 0;
      if (rest == 0) {
        if (!fusion()) release_prefill(r, n);
        r.tl.completion = now_;
        push(now_, EventKind::kComplete, i);
        continue;
      }
      r.decode = std::make_unique<DecodeStream>(rest, cfg_.speculative, r.tokens, cfg_.vocab_size,
                                                cfg_.seed, r.rec.request_id);
      if (fusion()) {
        r.dnode = static_cast<std::uint32_t>(n);
        r.tl.decode_worker = r.dnode;
        join_decode(i);
        continue;
      }
      const Assignment a = route_decode(meta_of(i), affinity_, dview_, now_,
                                        cfg_.sched.occupancy_high_watermark);
      r.dnode = a.worker_id;
      r.tl.decode_worker = r.dnode;
      ++dview_[a.worker_id].waiting_count;
      dview_[a.worker_id].kv_occupancy +=
          static_cast<double>((r.rec.input_len + r.rec.output_len) * cfg_.cost.kv_bytes_per_token) /
          static_cast<double>(cfg_.decode_kv_capacity_bytes);
      const std::size_t held_tokens = chat_held_tokens(r, a.worker_id);
      const std::uint64_t bytes = (r.rec.input_len - held_tokens) * cfg_.cost.kv_bytes_per_token;
      release_prefill(r, n);
      push(now_ + cfg_.tiers.rdma_transfer.cost(bytes), EventKind::kKvTransferDone, i);
    }
    try_start(n);
  }

  std::size_t chat_held_tokens(const Req& r, std::size_t d) const {
    if (!r.rec.chat_id) return 0;
    const auto& held = dnodes_[d].chat_blocks;
    auto it = held.find(*r.rec.chat_id);
    if (it == held.end()) return 0;
    std::size_t k = 0;
    while (k < it->second.size() && k < r.hashes.size() && it->second[k] == r.hashes[k]) ++k;
    return std::min(k * cfg_.block_size, r.rec.input_len);
  }

  void release_prefill(Req& r, std::size_t n) {
    if (!r.held.empty()) pnodes_[n].cache->release_and_update(r.held, now_);
    r.held.clear();
  }

  void on_kv_transfer_done(std::size_t i) { join_decode(i); }

  void join_decode(std::size_t i) {
    Req& r = reqs_[i];
    DecodeNode& d = dnodes_[r.dnode];
    d.active.push_back(i);
    d.kv_tokens += r.rec.input_len + r.rec.output_len;
    if (fusion()) {
      try_start(r.dnode);
    } else {
      try_start_decode(r.dnode);
    }
  }

  void try_start_decode(std::size_t n) {
    DecodeNode& d = dnodes_[n];
    if (d.stepping || d.active.empty()) return;
    if (fusion() && pnodes_[n].busy) return;
    d.members = d.active;
    const Micros dur = decode_iteration_time(cfg_.cost, cfg_.speculative, d.members.size());
    d.stepping = true;
    d.busy_us += dur;
    push(now_ + dur, EventKind::kDecodeStep, n);
  }

  void on_decode_step(std::size_t n) {
    DecodeNode& d = dnodes_[n];
    d.stepping = false;
    for (std::size_t i : d.members) {
      Req& r = reqs_[i];
      const std::size_t emitted = r.decode->step();
      r.tl.token_times.insert(r.tl.token_times.end(), emitted, now_);
      ++r.tl.decode_iterations;
      if (r.decode->remaining() == 0) {
        r.tl.completion = now_;
        d.active.erase(std::find(d.active.begin(), d.active.end(), i));
        d.kv_tokens -= r.rec.input_len + r.rec.output_len;
        push(now_, EventKind::kComplete, i);
      }
    }
    d.members.clear();
    if (fusion()) {
      try_start(n);
    } else {
      try_start_decode(n);
    }
  }

  void on_complete(std::size_t i) {
    Req& r = reqs_[i];
    if (fusion()) release_prefill(r, r.pnode);
    if (!fusion() && r.rec.chat_id && r.tl.decode_worker) {
      dnodes_[r.dnode].chat_blocks[*r.rec.chat_id] = r.hashes;
    }
    r.decode.reset();
    ++completed_;
    if (fusion()) try_start(r.pnode);
  }

  SimConfig cfg_;
  std::vector<TraceRecord> trace_;
  CounterRng rng_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  Micros now_ = 0;
  bool tick_pending_ = false;
  std::size_t completed_ = 0;

  std::vector<Req> reqs_;
  std::vector<std::size_t> master_queue_;
  std::vector<PrefillNode> pnodes_;
  std::vector<DecodeNode> dnodes_;
  std::vector<WorkerStatus> pview_;
  std::vector<WorkerStatus> dview_;
  UnifiedCacheMap map_;
  RemoteCacheIndex remote_;
  AffinityTable affinity_;
  SimResult result_;
};

inline SimResult simulate(std::vector<TraceRecord> trace, const SimConfig& config) {
  return Simulator(std::move(trace), config).run();
}

// Seed overrides the config seed.
inline MetricsReport run(std::vector<TraceRecord> trace, SimConfig config, std::uint64_t seed) {
  config.seed = seed;
  return Simulator(std::move(trace), std::move(config)).run().report;
}

}  // namespace pdsim
