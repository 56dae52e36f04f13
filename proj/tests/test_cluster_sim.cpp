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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "pdsim/cluster_sim.hpp"

namespace pdsim {
namespace {

constexpr std::uint64_t kBlockBytes = 57344ULL * 64;

TraceRecord shared_record(std::uint64_t id, Micros arrival, std::size_t input, std::size_t output,
                          std::uint64_t group) {
  TraceRecord r;
  r.request_id = id;
  r.arrival_us = arrival;
  r.input_len = input;
  r.output_len = output;
  r.prefix_group = group;
  r.prefix_len = input;
  return r;
}

const RequestTimeline& by_id(const MetricsReport& rep, std::uint64_t id) {
  for (const auto& t : rep.timelines) {
    if (t.request_id == id) return t;
  }
  throw std::runtime_error("missing request");
}

TEST(Simulator, ColdThenWarmTtft) {
  SimConfig c;
  const CostModel& cost = c.cost;
  const auto rep = run({shared_record(1, 1000, 650, 1, 1), shared_record(2, 100500, 650, 1, 1)}, c, 3);
  // Arrival 1000, scheduled at the 2000 tick, 650 tokens computed cold.
  const auto& a = by_id(rep, 1);
  EXPECT_EQ(*a.scheduled, 2000);
  EXPECT_EQ(a.ttft(), 1000 + cost.prefill_time(650));
  EXPECT_EQ(a.computed_tokens, 650u);
  // The second copy, after the 100 ms KeySync, hits ten gpu-resident blocks
  // and computes only the 10-token tail.
  const auto& b = by_id(rep, 2);
  EXPECT_EQ(b.reused_tokens_local, 640u);
  EXPECT_EQ(b.computed_tokens, 10u);
  EXPECT_EQ(b.ttft(), 1500 + cost.prefill_time(10));
  EXPECT_EQ(*b.prefill_worker, *a.prefill_worker);
}

TEST(Simulator, EmptyTrace) {
  const auto res = simulate({}, SimConfig{});
  EXPECT_EQ(res.events_processed, 0u);
  EXPECT_EQ(res.report.aggregates.requests, 0u);
  EXPECT_TRUE(res.report.timelines.empty());
}

TEST(Simulator, DeterministicBytes) {
  const auto trace = synth_trace(qa_profile(), 300, 5);
  SimConfig c;
  const auto a = serialize_report(run(trace, c, 9));
  const auto b = serialize_report(run(trace, c, 9));
  EXPECT_EQ(a, b);
  c.policy = SchedulingPolicy::kRandom;
  EXPECT_EQ(serialize_report(run(trace, c, 9)), serialize_report(run(trace, c, 9)));
  EXPECT_NE(serialize_report(run(trace, c, 9)), serialize_report(run(trace, c, 10)));
}

TEST(Simulator, ConservationAndCausality) {
  for (bool spec : {false, true}) {
    for (auto topo : {Topology::kDisaggregated, Topology::kFusion}) {
      SimConfig c;
      c.topology = topo;
      c.speculative.enabled = spec;
      const auto trace = synth_trace(merchant_profile(), 40, 2);
      const auto rep = run(trace, c, 4);
      ASSERT_EQ(rep.timelines.size(), 40u);
      for (const auto& t : rep.timelines) {
        ASSERT_EQ(t.token_times.size(), t.output_len);
        ASSERT_TRUE(std::is_sorted(t.token_times.begin(), t.token_times.end()));
        ASSERT_GE(t.ttft(), 0);
        ASSERT_LE(t.arrival, *t.scheduled);
        ASSERT_LE(*t.scheduled, *t.prefill_start);
        ASSERT_EQ(t.reused_tokens() + t.computed_tokens, t.input_len);
        ASSERT_TRUE(t.prefill_worker.has_value());
        if (t.output_len >= 2) {
          ASSERT_TRUE(t.decode_worker.has_value());
        }
        if (topo == Topology::kFusion && t.decode_worker) {
          ASSERT_EQ(*t.decode_worker, *t.prefill_worker);
        }
      }
    }
  }
}

TEST(Simulator, ZeroOutputCompletesAtFirstToken) {
  TraceRecord r;
  r.request_id = 1;
  r.input_len = 100;
  r.output_len = 0;
  const auto rep = run({r}, SimConfig{}, 1);
  const auto& t = rep.timelines[0];
  EXPECT_EQ(*t.completion, *t.first_token);
  EXPECT_TRUE(t.token_times.empty());
  EXPECT_EQ(t.decode_iterations, 0u);
}

TEST(Simulator, FusionDecodeSpan) {
  SimConfig c;
  c.topology = Topology::kFusion;
  c.prefill_workers = 1;
  const auto rep = run({shared_record(1, 0, 2500, 115, 1)}, c, 1);
  const auto& t = rep.timelines[0];
  EXPECT_EQ(t.decode_span(), 114 * 10000);
  EXPECT_EQ(t.decode_iterations, 114u);
}

TEST(Simulator, DisaggregatedAddsKvTransfer) {
  SimConfig c;
  const auto rep = run({shared_record(1, 0, 2500, 115, 1)}, c, 1);
  const auto& t = rep.timelines[0];
  EXPECT_EQ(t.decode_span(), c.tiers.rdma_transfer.cost(2500 * c.cost.kv_bytes_per_token) + 114 * 10000);
}

TEST(Simulator, EvictedBlocksLeaveNextDelta) {
  SimConfig c;
  c.prefill_workers = 1;
  c.decode_workers = 1;
  c.tiers.capacity_bytes[0] = 4 * kBlockBytes;
  const auto a = shared_record(1, 0, 256, 1, 1);
  const auto b = shared_record(2, 200000, 256, 1, 2);
  const auto res = simulate({a, b}, c);
  const auto ha = generate_hash_keys(synth_tokens(a, c.vocab_size, c.seed));
  const auto hb = generate_hash_keys(synth_tokens(b, c.vocab_size, c.seed));
  ASSERT_EQ(ha.size(), 4u);

  std::optional<std::size_t> added_at, removed_at;
  for (std::size_t i = 0; i < res.published_deltas.size(); ++i) {
    const auto& d = res.published_deltas[i];
    std::set<BlockHashKey> add, rem(d.removed.begin(), d.removed.end());
    for (const auto& [h, m] : d.added) add.insert(h);
    if (!added_at && std::all_of(ha.begin(), ha.end(), [&](auto h) { return add.contains(h); })) {
      added_at = i;
    }
    if (std::all_of(ha.begin(), ha.end(), [&](auto h) { return rem.contains(h); })) {
      removed_at = i;
      EXPECT_TRUE(std::all_of(hb.begin(), hb.end(), [&](auto h) { return add.contains(h); }));
    }
  }
  ASSERT_TRUE(added_at && removed_at);
  EXPECT_LT(*added_at, *removed_at);
  EXPECT_EQ(by_id(res.report, 2).reused_tokens(), 0u);
}

TEST(Simulator, PublishImmediatelyMakesBlocksVisibleSooner) {
  SimConfig c;
  // The copy arrives while the original is still computing, before the first
  // KeySync has published anything.
  const std::vector<TraceRecord> trace{shared_record(1, 0, 640, 1, 1),
                                       shared_record(2, 30000, 640, 1, 1)};
  const auto lazy = run(trace, c, 1);
  c.publish_immediately = true;
  const auto eager = run(trace, c, 1);
  EXPECT_EQ(by_id(lazy, 2).reused_tokens(), 0u);
  EXPECT_EQ(by_id(eager, 2).reused_tokens(), 640u);
  EXPECT_LT(by_id(eager, 2).ttft(), by_id(lazy, 2).ttft());
}

TEST(Simulator, GpuTooSmallIsThrash) {
  SimConfig c;
  c.tiers.capacity_bytes[0] = 2 * kBlockBytes;
  try {
    run(synth_trace(qa_profile(), 3, 1), c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGpuCacheThrash);
  }
}

TEST(Simulator, InvalidConfigListsFieldPaths) {
  SimConfig c;
  c.prefill_workers = 0;
  c.cost.prefill_tokens_per_sec = 0;
  try {
    run(synth_trace(qa_profile(), 3, 1), c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("topology.prefill_workers"), std::string::npos);
    EXPECT_NE(msg.find("cost.prefill_tokens_per_sec"), std::string::npos);
  }
}

TEST(Simulator, CacheAwareBeatsRandomOnReuse) {
  SimConfig c;
  c.tiers.capacity_bytes[0] = 100 * kBlockBytes;
  c.tiers.capacity_bytes[1] = 100 * kBlockBytes;
  double aware_total = 0, random_total = 0;
  int aware_wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto trace = synth_trace(qa_profile(), 300, seed);
    c.policy = SchedulingPolicy::kCacheAware;
    const double aware = run(trace, c, seed).aggregates.mean_reuse_tokens;
    c.policy = SchedulingPolicy::kRandom;
    const double rnd = run(trace, c, seed).aggregates.mean_reuse_tokens;
    aware_total += aware;
    random_total += rnd;
    aware_wins += aware > rnd;
  }
  EXPECT_GT(aware_total / 20, random_total / 20);
  EXPECT_GE(aware_wins, 15);
}

TEST(ExecutePrefill, HalfCachedHalvesCompute) {
  CostModel cost;
  TierConfig tiers;
  std::vector<TokenId> tokens(640);
  std::iota(tokens.begin(), tokens.end(), 7);
  const auto hashes = generate_hash_keys(tokens);
  const std::vector<PrefillItem> batch{{hashes, 640}};

  TieredCache cold(tiers, 64);
  const auto rc = execute_prefill(cold, batch, nullptr, cost, 0);
  EXPECT_EQ(rc.duration, cost.prefill_time(640));
  EXPECT_EQ(rc.fetch_latency, 0);

  TieredCache warm(tiers, 64);
  for (std::size_t i = 0; i < 5; ++i) warm.insert(hashes[i], CacheTier::kLocalCpu, kBlockBytes, 64, 0);
  const auto rw = execute_prefill(warm, batch, nullptr, cost, 0);
  EXPECT_EQ(rw.fetch_latency, 5 * tiers.load_to_gpu.cost(kBlockBytes));
  EXPECT_EQ(rw.uncached_tokens, 320u);
  const Micros oh = cost.prefill_overhead_us;
  EXPECT_EQ(2 * (rw.duration - rw.fetch_latency - oh), rc.duration - oh);
  ASSERT_TRUE(rw.outcomes[0].has_value());
  EXPECT_EQ(rw.outcomes[0]->local_blocks, 5u);
  EXPECT_EQ(warm.entry_count(CacheTier::kGpu), 10u);
}

TEST(ExecutePrefill, FullyCachedComputesOnlyTail) {
  CostModel cost;
  std::vector<TokenId> tokens(650);
  std::iota(tokens.begin(), tokens.end(), 3);
  const auto hashes = generate_hash_keys(tokens);
  TieredCache cache(TierConfig{}, 64);
  for (auto h : hashes) cache.insert(h, CacheTier::kGpu, kBlockBytes, 64, 0);
  const std::vector<PrefillItem> batch{{hashes, 650}};
  const auto r = execute_prefill(cache, batch, nullptr, cost, 0);
  EXPECT_EQ(r.uncached_tokens, 10u);
  EXPECT_EQ(r.duration, cost.prefill_time(10));
}

TEST(ExecutePrefill, RemoteHitsStageThroughTiers) {
  CostModel cost;
  TierConfig tiers;
  std::vector<TokenId> tokens(128);
  std::iota(tokens.begin(), tokens.end(), 1);
  const auto hashes = generate_hash_keys(tokens);
  RemoteCacheIndex remote;
  remote.persist(hashes[0], "x");
  TieredCache cache(tiers, 64);
  const std::vector<PrefillItem> batch{{hashes, 128}};
  const auto r = execute_prefill(cache, batch, &remote, cost, 0);
  ASSERT_TRUE(r.outcomes[0].has_value());
  EXPECT_EQ(r.outcomes[0]->remote_blocks, 1u);
  EXPECT_EQ(r.fetch_latency, tiers.load_from_3fs.cost(kBlockBytes) +
                                 tiers.rdma_transfer.cost(kBlockBytes) +
                                 tiers.load_to_gpu.cost(kBlockBytes));
  EXPECT_TRUE(remote.contains(hashes[1]));  // freshly computed block persisted
}

TEST(ExecuteDecode, PlainSpan) {
  CostModel cost;
  const std::vector<TokenId> prompt{1, 2, 3};
  const auto t = execute_decode(prompt, 114, 0, cost);
  EXPECT_EQ(t.end, 1140000);
  EXPECT_EQ(t.token_times.size(), 114u);
  EXPECT_EQ(t.iterations, 114u);
  const auto z = execute_decode(prompt, 0, 55, cost);
  EXPECT_EQ(z.end, 55);
  EXPECT_EQ(z.iterations, 0u);
}

TEST(ExecuteDecode, SpeculativeHalvesIterationsOnCopyHeavyPrompt) {
  CostModel cost;
  std::vector<TokenId> seq(100);
  CounterRng rng(3);
  for (auto& x : seq) x = static_cast<TokenId>(rng.below(1024));
  std::vector<TokenId> prompt = seq;
  prompt.insert(prompt.end(), seq.begin(), seq.end());
  SpecSimConfig spec;
  spec.enabled = true;
  const auto base = execute_decode(prompt, 114, 0, cost);
  const auto fast = execute_decode(prompt, 114, 0, cost, spec, 1024, 1, 1);
  EXPECT_EQ(fast.token_times.size(), 114u);
  EXPECT_LE(2 * fast.iterations, base.iterations);
  EXPECT_LT(fast.end, base.end);
}

TEST(SimEvent, TieBreakOrder) {
  const SimEvent sync{10, EventKind::kStatusSync, 5, 0};
  const SimEvent key{10, EventKind::kKeySync, 1, 0};
  const SimEvent tick{10, EventKind::kScheduleTick, 0, 0};
  const SimEvent done{10, EventKind::kComplete, 0, 0};
  const SimEvent early{9, EventKind::kComplete, 9, 0};
  EXPECT_TRUE(key > sync);
  EXPECT_TRUE(tick > key);
  EXPECT_TRUE(done > tick);
  EXPECT_TRUE(sync > early);
  const SimEvent later_seq{10, EventKind::kStatusSync, 6, 0};
  EXPECT_TRUE(later_seq > sync);
}

}  // namespace
}  // namespace pdsim
