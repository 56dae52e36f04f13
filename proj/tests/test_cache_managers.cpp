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

#include <map>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "pdsim/cache_managers.hpp"

namespace pdsim {
namespace {

BlockHashKey key(std::uint64_t v) { return BlockHashKey{v}; }

WorkerCacheDelta add_delta(WorkerId w, std::uint64_t from, std::vector<std::uint64_t> keys,
                           std::vector<std::uint64_t> removed = {}) {
  WorkerCacheDelta d;
  d.worker = w;
  d.from_version = from;
  d.to_version = from + 1;
  for (auto k : keys) d.added.push_back({key(k), {k, CacheTier::kGpu, 64}});
  for (auto k : removed) d.removed.push_back(key(k));
  return d;
}

TEST(UnifiedMap, DeltaAddsEntries) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {}));
  m.apply_delta(add_delta(1, 1, {10, 11, 12}));
  EXPECT_EQ(m.entry_count(), 3u);
  EXPECT_EQ(m.version(1), 2u);
  EXPECT_TRUE(m.holds(key(11), 1));
}

TEST(UnifiedMap, VersionGapNeedsResync) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {10}));
  try {
    m.apply_delta(add_delta(1, 3, {11}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kResyncRequired);
    EXPECT_NE(std::string(e.what()).find("resync required"), std::string::npos);
  }
  EXPECT_FALSE(m.holds(key(11), 1));
}

TEST(UnifiedMap, RejectsMalformedDelta) {
  UnifiedCacheMap m;
  auto d = add_delta(1, 0, {10}, {10});
  EXPECT_THROW(m.apply_delta(d), Error);
  WorkerCacheDelta back{1, 0, 0, {}, {}};
  EXPECT_THROW(m.apply_delta(back), Error);
}

TEST(UnifiedMap, RemoveSharedKeyKeepsOtherWorker) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {10}));
  m.apply_delta(add_delta(2, 0, {10}));
  m.apply_delta(add_delta(1, 1, {}, {10}));
  EXPECT_FALSE(m.holds(key(10), 1));
  EXPECT_TRUE(m.holds(key(10), 2));
  const auto* h = m.holders(key(10));
  ASSERT_NE(h, nullptr);
  EXPECT_EQ(h->size(), 1u);
}

TEST(UnifiedMap, SnapshotRoundTrip) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {10, 11}));
  m.apply_delta(add_delta(4, 0, {11}));
  const auto text = m.to_snapshot();
  const auto back = UnifiedCacheMap::from_snapshot(text);
  EXPECT_TRUE(back.same_holdings(m));
  EXPECT_EQ(back.to_snapshot(), text);
}

TEST(UnifiedMap, SnapshotParseErrorsCarryLine) {
  try {
    UnifiedCacheMap::from_snapshot("00000000000000a1\tw1\n# note\nzz\tw2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_EQ(std::string(e.what()).rfind("line 3:", 0), 0u) << e.what();
  }
}

MatchResult expect_map(std::map<WorkerId, std::size_t> m, std::size_t g) {
  return MatchResult{std::move(m), g};
}

TEST(PrefixMatch, MixedHolders) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {1, 2}));
  m.apply_delta(add_delta(2, 0, {1}));
  const std::vector<BlockHashKey> h{key(1), key(2), key(3)};
  EXPECT_EQ(prefix_match(h, m), expect_map({{1, 2}, {2, 1}}, 2));
  // Cross-check against the per-worker literal loop.
  oracle::PerWorkerSets sets{{1, {1, 2}}, {2, {1}}};
  EXPECT_EQ(prefix_match(h, m), oracle::global_prefix_brute(h, sets));
}

TEST(PrefixMatch, ImmediateMiss) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {5}));
  const std::vector<BlockHashKey> h{key(1)};
  EXPECT_EQ(prefix_match(h, m), expect_map({}, 0));
}

TEST(PrefixMatch, GlobalLengthCreditsLaterHolder) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {1}));
  m.apply_delta(add_delta(2, 0, {2}));
  const std::vector<BlockHashKey> h{key(1), key(2)};
  EXPECT_EQ(prefix_match(h, m), expect_map({{1, 1}, {2, 2}}, 2));
  EXPECT_EQ(strict_prefix_match(h, m), expect_map({{1, 1}, {2, 0}}, 2));
}

TEST(StrictMatch, FullHolderAndSymmetry) {
  UnifiedCacheMap m;
  m.apply_delta(add_delta(1, 0, {1, 2, 3}));
  m.apply_delta(add_delta(2, 0, {1, 2, 3}));
  const std::vector<BlockHashKey> h{key(1), key(2), key(3)};
  const auto r = strict_prefix_match(h, m);
  EXPECT_EQ(r.length_for(1), 3u);
  EXPECT_EQ(r.length_for(2), 3u);
  EXPECT_EQ(r.global_prefix_len, 3u);
}

TEST(PrefixMatch, EmptyQueryRejected) {
  UnifiedCacheMap m;
  EXPECT_THROW(prefix_match({}, m), Error);
  EXPECT_THROW(strict_prefix_match({}, m), Error);
}

TEST(PrefixMatch, OracleEquivalenceRandom) {
  CounterRng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<BlockHashKey> h;
    const auto sets = oracle::random_worker_sets(rng, h);
    if (h.empty()) continue;
    const auto map = oracle::to_unified(sets);
    ASSERT_EQ(prefix_match(h, map), oracle::global_prefix_brute(h, sets)) << trial;
    ASSERT_EQ(strict_prefix_match(h, map), oracle::strict_brute(h, sets)) << trial;
    const auto r = prefix_match(h, map);
    for (const auto& [w, len] : r.per_worker) ASSERT_LE(len, r.global_prefix_len);
    ASSERT_LE(r.global_prefix_len, h.size());
  }
}

TEST(PrefixMatch, ProbeCountBounded) {
  CounterRng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<BlockHashKey> h;
    const auto sets = oracle::random_worker_sets(rng, h);
    if (h.empty()) continue;
    const auto map = oracle::to_unified(sets);
    map.reset_probe_count();
    const auto r = prefix_match(h, map);
    ASSERT_EQ(map.probe_count(), std::min(r.global_prefix_len + 1, h.size()));
  }
}

TEST(UnifiedMap, DeltaConvergence) {
  CounterRng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    UnifiedCacheMap incremental;
    std::map<WorkerId, std::set<std::uint64_t>> truth;
    std::map<WorkerId, std::uint64_t> ver;
    for (int step = 0; step < 60; ++step) {
      const WorkerId w = static_cast<WorkerId>(rng.below(4));
      auto& have = truth[w];
      std::set<std::uint64_t> add, rem;
      for (int i = 0; i < 5; ++i) {
        const std::uint64_t k = 1 + rng.below(40);
        if (have.contains(k)) {
          if (!add.contains(k)) rem.insert(k);
        } else if (!rem.contains(k)) {
          add.insert(k);
        }
      }
      auto d = add_delta(w, ver[w], {add.begin(), add.end()}, {rem.begin(), rem.end()});
      incremental.apply_delta(d);
      ver[w] = d.to_version;
      for (auto k : rem) have.erase(k);
      for (auto k : add) have.insert(k);
    }
    UnifiedCacheMap rebuilt;
    for (const auto& [w, keys] : truth) {
      std::vector<CachedBlockInfo> blocks;
      for (auto k : keys) blocks.push_back({key(k), {k, CacheTier::kGpu, 64}});
      rebuilt.reset_worker(w, ver[w], blocks);
    }
    ASSERT_TRUE(incremental.same_holdings(rebuilt));
    ASSERT_EQ(incremental.to_snapshot(), rebuilt.to_snapshot());
  }
}

TEST(RemoteIndex, LookupPrefix) {
  RemoteCacheIndex idx;
  idx.persist(key(1), "/kv/1");
  idx.persist(key(2), "/kv/2");
  const std::vector<BlockHashKey> h{key(1), key(2), key(3)};
  EXPECT_EQ(remote_lookup(h, idx), 2u);
  const std::vector<BlockHashKey> none{key(7), key(1)};
  EXPECT_EQ(remote_lookup(none, idx), 0u);
  idx.persist(key(3), "/kv/3");
  EXPECT_EQ(remote_lookup(h, idx), 3u);
}

TEST(RemoteIndex, SnapshotRoundTrip) {
  RemoteCacheIndex idx;
  idx.persist(key(0xff), "3fs://a");
  idx.persist(key(0x01), "3fs://b");
  const auto text = idx.snapshot();
  // Sorted by hash for stable diffs.
  EXPECT_EQ(text, "0000000000000001\t3fs://b\n00000000000000ff\t3fs://a\n");
  const auto back = RemoteCacheIndex::restore(text);
  EXPECT_EQ(back, idx);
  const std::vector<BlockHashKey> h{key(1)};
  EXPECT_EQ(remote_lookup(h, back), remote_lookup(h, idx));
}

TEST(RemoteIndex, EmptySnapshot) {
  RemoteCacheIndex idx;
  EXPECT_EQ(idx.snapshot(), "");
  EXPECT_EQ(RemoteCacheIndex::restore("").size(), 0u);
}

TEST(RemoteIndex, PathConflict) {
  RemoteCacheIndex idx;
  idx.persist(key(1), "/a");
  EXPECT_NO_THROW(idx.persist(key(1), "/a"));
  try {
    idx.persist(key(1), "/b");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPathConflict);
  }
  EXPECT_THROW(idx.persist(key(2), ""), Error);
}

TEST(HashList, ParsesAndReportsLine) {
  const auto h = parse_hash_list("# q\n00000000000000a1\n00000000000000a2\n");
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[1], key(0xa2));
  try {
    parse_hash_list("00000000000000a1\nnope\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u);
  }
}

}  // namespace
}  // namespace pdsim
