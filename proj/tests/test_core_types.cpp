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

#include <set>
#include <vector>

#include "oracles.hpp"
#include "pdsim/core_types.hpp"

namespace pdsim {
namespace {

std::vector<TokenId> iota_tokens(std::size_t n, TokenId start = 0) {
  std::vector<TokenId> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = start + static_cast<TokenId>(i);
  return t;
}

TEST(HashKeys, OneKeyPerCompleteBlock) {
  EXPECT_EQ(generate_hash_keys(iota_tokens(130), 64).size(), 2u);
  EXPECT_EQ(generate_hash_keys(iota_tokens(63), 64).size(), 0u);
  EXPECT_EQ(generate_hash_keys(iota_tokens(64), 64).size(), 1u);
  EXPECT_EQ(generate_hash_keys(iota_tokens(5), 1).size(), 5u);
}

TEST(HashKeys, TrailingPartialBlockIgnored) {
  auto a = iota_tokens(130);
  auto b = a;
  b[129] = 9999;
  EXPECT_EQ(generate_hash_keys(a), generate_hash_keys(b));
}

TEST(HashKeys, SameFirstBlockSameKey) {
  auto a = iota_tokens(128);
  auto b = iota_tokens(64);
  auto tail = iota_tokens(64, 500);
  b.insert(b.end(), tail.begin(), tail.end());
  EXPECT_EQ(generate_hash_keys(a)[0], generate_hash_keys(b)[0]);
  EXPECT_NE(generate_hash_keys(a)[1], generate_hash_keys(b)[1]);
}

TEST(HashKeys, PositionMattersThroughTheChain) {
  const auto block = iota_tokens(64, 100);
  const auto other = iota_tokens(64, 900);
  std::vector<TokenId> first = block;
  std::vector<TokenId> second = other;
  second.insert(second.end(), block.begin(), block.end());
  const auto ka = generate_hash_keys(first);
  const auto kb = generate_hash_keys(second);
  // Reference chains built block by block.
  const BlockHashKey ref_a = hash_block(kChainRoot, block);
  const BlockHashKey ref_b = hash_block(hash_block(kChainRoot, other), block);
  EXPECT_EQ(ka[0], ref_a);
  EXPECT_EQ(kb[1], ref_b);
  EXPECT_NE(ka[0], kb[1]);
}

TEST(HashKeys, EmptyRequestRejected) {
  try {
    generate_hash_keys(std::vector<TokenId>{}, 64);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyRequest);
    EXPECT_STREQ(e.what(), "empty request");
  }
  EXPECT_THROW(generate_hash_keys(iota_tokens(4), 0), Error);
}

TEST(HashKeys, PinnedValues) {
  // Pinned constants guard against accidental changes to the hash, which
  // would silently change every published report.
  const auto keys = generate_hash_keys(iota_tokens(128), 64);
  EXPECT_EQ(to_hex(keys[0]), "ad7a0441f88db66d");
  EXPECT_EQ(to_hex(keys[1]), "6c5829c67a7f7c82");
}

TEST(HashKeys, PrefixSoundnessRandom) {
  CounterRng rng(2024);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t bs = 1 + rng.below(16);
    const std::size_t la = 1 + rng.below(512), lb = 1 + rng.below(512);
    std::vector<TokenId> a(la), b(lb);
    for (auto& t : a) t = static_cast<TokenId>(rng.below(3));
    const std::size_t shared = rng.below(std::min(la, lb) + 1);
    for (std::size_t i = 0; i < lb; ++i) b[i] = i < shared ? a[i] : static_cast<TokenId>(rng.below(3));
    const auto ka = generate_hash_keys(a, bs), kb = generate_hash_keys(b, bs);
    const std::size_t expect = oracle::common_blocks(a, b, bs);
    std::size_t agree = 0;
    while (agree < ka.size() && agree < kb.size() && ka[agree] == kb[agree]) ++agree;
    ASSERT_EQ(agree, std::min({expect, ka.size(), kb.size()})) << "trial " << trial;
  }
}

TEST(HashKeys, HexRoundTrip) {
  const BlockHashKey k{0x0123456789abcdefULL};
  EXPECT_EQ(to_hex(k), "0123456789abcdef");
  EXPECT_EQ(parse_hex_key("0123456789ABCDEF"), k);
  EXPECT_FALSE(parse_hex_key("xyz"));
  EXPECT_FALSE(parse_hex_key(""));
  EXPECT_FALSE(parse_hex_key("00000000000000001"));
}

TEST(SampledHash, GridPositions) {
  using V = std::vector<std::size_t>;
  EXPECT_EQ(sampled_hash_positions(220), (V{208, 212, 216, 220}));
  EXPECT_EQ(sampled_hash_positions(207), (V{207}));
  EXPECT_EQ(sampled_hash_positions(208), (V{208}));
  EXPECT_EQ(sampled_hash_positions(1), (V{1}));
}

TEST(SampledHash, OffGridTerminalAppended) {
  using V = std::vector<std::size_t>;
  EXPECT_EQ(sampled_hash_positions(210), (V{208, 210}));
  // Enumerate the prefixes a matcher could hit at exact length: the grid up
  // to n plus n itself.
  for (std::size_t n = 1; n <= 300; ++n) {
    std::set<std::size_t> want;
    if (n < 208) {
      want.insert(n);
    } else {
      for (std::size_t p = 1; p <= n; ++p) {
        if (p >= 208 && (p - 208) % 4 == 0) want.insert(p);
      }
      want.insert(n);
    }
    const auto got = sampled_hash_positions(n);
    ASSERT_EQ(std::set<std::size_t>(got.begin(), got.end()), want) << n;
  }
}

TEST(SampledHash, Properties) {
  CounterRng rng(5);
  for (int i = 0; i < 2000; ++i) {
    SampledHashConfig cfg{1 + rng.below(300), 1 + rng.below(9)};
    const std::size_t n = 1 + rng.below(1000);
    const auto pos = sampled_hash_positions(n, cfg);
    ASSERT_FALSE(pos.empty());
    for (std::size_t j = 1; j < pos.size(); ++j) ASSERT_LT(pos[j - 1], pos[j]);
    ASSERT_LE(pos.back(), n);
    if (n >= cfg.start_threshold) {
      ASSERT_EQ(pos.back(), n);
    }
  }
}

TEST(SampledHash, Errors) {
  try {
    sampled_hash_positions(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyBlock);
    EXPECT_STREQ(e.what(), "empty block");
  }
  EXPECT_THROW(sampled_hash_positions(10, {0, 4}), Error);
  EXPECT_THROW(sampled_hash_positions(10, {208, 0}), Error);
}

TEST(SampledHash, PrefixHashesDistinguishLengths) {
  const auto tokens = iota_tokens(220);
  const auto hs = sampled_prefix_hashes(tokens);
  ASSERT_EQ(hs.size(), 4u);
  std::set<std::uint64_t> distinct;
  for (const auto& h : hs) distinct.insert(h.key.value);
  EXPECT_EQ(distinct.size(), 4u);
  // A shorter sequence sharing the first 212 tokens shares those entries.
  const std::vector<TokenId> shorter(tokens.begin(), tokens.begin() + 212);
  const auto hs2 = sampled_prefix_hashes(shorter);
  ASSERT_EQ(hs2.size(), 2u);
  EXPECT_EQ(hs2[1].key, hs[1].key);
}

TEST(Tokens, VocabularyCheck) {
  EXPECT_NO_THROW(validate_tokens(iota_tokens(8), 8));
  EXPECT_THROW(validate_tokens(iota_tokens(9), 8), Error);
}

}  // namespace
}  // namespace pdsim
