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
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pdsim/error.hpp"
#include "pdsim/rng.hpp"

namespace pdsim {

using TokenId = std::uint32_t;

// Simulation time in integer microseconds.
using Micros = std::int64_t;

inline constexpr std::size_t kDefaultBlockSize = 64;

// Seed of the hash chain; the key of block 0 is hash_block(kHashChainSeed, ...).
inline constexpr std::uint64_t kHashChainSeed = 0x6A09E667F3BCC908ULL;

struct BlockHashKey {
  std::uint64_t value = 0;

  friend constexpr bool operator==(BlockHashKey, BlockHashKey) = default;
  friend constexpr auto operator<=>(BlockHashKey, BlockHashKey) = default;
};

inline constexpr BlockHashKey kChainRoot{kHashChainSeed};

// 16 lowercase hex digits, zero padded.
inline std::string to_hex(BlockHashKey key) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(key.value));
  return std::string(buf, 16);
}

inline std::optional<BlockHashKey> parse_hex_key(std::string_view text) {
  if (text.empty() || text.size() > 16) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : text) {
    int d;
    if (c >= '0' && c <= '9') {
      d = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      d = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      d = c - 'A' + 10;
    } else {
      return std::nullopt;
    }
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return BlockHashKey{v};
}

struct TokenBlock {
  std::vector<TokenId> tokens;
  std::size_t block_size = kDefaultBlockSize;

  bool full() const noexcept { return tokens.size() == block_size; }
};

struct SampledHashConfig {
  std::size_t start_threshold = 208;
  std::size_t step = 4;
};

// Chained block hash: depends on the previous key and on every token of the
// block, in order.
inline BlockHashKey hash_block(BlockHashKey prev,
                               std::span<const TokenId> tokens) noexcept {
  std::uint64_t h = mix64(prev.value ^ 0xA0761D6478BD642FULL);
  for (TokenId t : tokens) {
    h = mix64(h ^ (static_cast<std::uint64_t>(t) + 0xE7037ED1A0B428DBULL));
  }
  return BlockHashKey{mix64(h ^ static_cast<std::uint64_t>(tokens.size()))};
}

// One key per complete block; a trailing partial block gets no key.
inline std::vector<BlockHashKey> generate_hash_keys(
    std::span<const TokenId> tokens, std::size_t block_size = kDefaultBlockSize) {
  if (tokens.empty()) fail(ErrorCode::kEmptyRequest, "empty request");
  if (block_size == 0) fail(ErrorCode::kInvalidArgument, "block_size must be >= 1");
  const std::size_t n_blocks = tokens.size() / block_size;
  std::vector<BlockHashKey> keys;
  keys.reserve(n_blocks);
  BlockHashKey prev = kChainRoot;
  for (std::size_t i = 0; i < n_blocks; ++i) {
    prev = hash_block(prev, tokens.subspan(i * block_size, block_size));
    keys.push_back(prev);
  }
  return keys;
}

inline std::vector<TokenBlock> split_blocks(std::span<const TokenId> tokens,
                                            std::size_t block_size = kDefaultBlockSize) {
  if (block_size == 0) fail(ErrorCode::kInvalidArgument, "block_size must be >= 1");
  std::vector<TokenBlock> blocks;
  for (std::size_t off = 0; off < tokens.size(); off += block_size) {
    const std::size_t len = std::min(block_size, tokens.size() - off);
    auto part = tokens.subspan(off, len);
    blocks.push_back(TokenBlock{{part.begin(), part.end()}, block_size});
  }
  return blocks;
}

// Positions at which a cached block of n tokens publishes prefix hashes:
// below the threshold only n itself, otherwise the grid start, start+step, ...
// up to n, with n appended when it falls off the grid.
inline std::vector<std::size_t> sampled_hash_positions(std::size_t n,
                                                       const SampledHashConfig& cfg = {}) {
  if (n == 0) fail(ErrorCode::kEmptyBlock, "empty block");
  if (cfg.step == 0 || cfg.start_threshold == 0) {
    fail(ErrorCode::kInvalidArgument, "sampled hash start_threshold and step must be >= 1");
  }
  if (n < cfg.start_threshold) return {n};
  std::vector<std::size_t> out;
  out.reserve((n - cfg.start_threshold) / cfg.step + 2);
  for (std::size_t p = cfg.start_threshold; p <= n; p += cfg.step) out.push_back(p);
  if (out.back() != n) out.push_back(n);
  return out;
}

struct SampledPrefixHash {
  std::size_t length = 0;
  BlockHashKey key;
};

// Prefix hashes of `tokens` at each sampled position, chained from `prev`.
inline std::vector<SampledPrefixHash> sampled_prefix_hashes(
    std::span<const TokenId> tokens, BlockHashKey prev = kChainRoot,
    const SampledHashConfig& cfg = {}) {
  std::vector<SampledPrefixHash> out;
  for (std::size_t pos : sampled_hash_positions(tokens.size(), cfg)) {
    out.push_back({pos, hash_block(prev, tokens.first(pos))});
  }
  return out;
}

inline void validate_tokens(std::span<const TokenId> tokens, std::size_t vocab_size) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab_size) {
      fail(ErrorCode::kInvalidArgument,
           "token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
               " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

}  // namespace pdsim

template <>
struct std::hash<pdsim::BlockHashKey> {
  std::size_t operator()(pdsim::BlockHashKey k) const noexcept {
    return static_cast<std::size_t>(k.value);
  }
};
