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

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "pdsim/core_types.hpp"
#include "pdsim/error.hpp"

namespace pdsim {

// Ordered by access cost: kGpu is the cheapest.
enum class CacheTier : std::uint8_t { kGpu = 0, kLocalCpu = 1, kRemoteCpu = 2, kDistStore = 3 };

inline constexpr std::array<CacheTier, 4> kAllTiers = {
    CacheTier::kGpu, CacheTier::kLocalCpu, CacheTier::kRemoteCpu, CacheTier::kDistStore};

inline constexpr std::size_t tier_index(CacheTier t) noexcept {
  return static_cast<std::size_t>(t);
}

inline const char* tier_name(CacheTier t) noexcept {
  switch (t) {
    case CacheTier::kGpu: return "gpu";
    case CacheTier::kLocalCpu: return "local_cpu";
    case CacheTier::kRemoteCpu: return "remote_cpu";
    case CacheTier::kDistStore: return "dist_store";
  }
  return "?";
}

// Rounds half-up to whole microseconds.
inline Micros round_us(double us) noexcept {
  return static_cast<Micros>(std::floor(us + 0.5));
}

// Affine transfer cost: fixed + bytes / bandwidth. bandwidth == 0 means the
// size term is ignored.
struct TransferCost {
  Micros fixed_us = 0;
  double bytes_per_sec = 0.0;

  Micros cost(std::uint64_t bytes) const noexcept {
    if (bytes_per_sec <= 0.0) return fixed_us;
    return fixed_us + round_us(static_cast<double>(bytes) * 1e6 / bytes_per_sec);
  }
};

struct TierConfig {
  std::array<std::uint64_t, 4> capacity_bytes = {
      std::uint64_t{1} << 30, std::uint64_t{4} << 30, std::uint64_t{16} << 30,
      std::uint64_t{1} << 50};
  TransferCost load_to_gpu{50, 25e9};
  TransferCost rdma_transfer{200, 12.5e9};
  TransferCost load_from_3fs{2000, 2e9};
  // Gpu evictions are copied down into LocalCpu instead of dropped.
  bool write_down_on_evict = false;
  // A DistStore hit only stages into RemoteCpu; the caller fetches again.
  bool fetch_stops_at_remote = false;

  std::uint64_t capacity(CacheTier t) const noexcept { return capacity_bytes[tier_index(t)]; }
};

using BlockId = std::uint64_t;

struct CacheBlockEntry {
  BlockHashKey hash;
  BlockId block_id = 0;
  CacheTier tier = CacheTier::kGpu;
  std::uint32_t ref_count = 0;
  std::size_t watermark = 0;
  Micros last_access = 0;
  std::uint64_t size_bytes = 0;
};

enum class FetchAction : std::uint8_t {
  kUpdateReferenceCount,
  kLoadToGpu,
  kRdmaTransfer,
  kLoadFrom3fs,
};

inline const char* action_name(FetchAction a) noexcept {
  switch (a) {
    case FetchAction::kUpdateReferenceCount: return "UpdateReferenceCount";
    case FetchAction::kLoadToGpu: return "LoadToGPU";
    case FetchAction::kRdmaTransfer: return "RDMATransfer";
    case FetchAction::kLoadFrom3fs: return "LoadFrom3FS";
  }
  return "?";
}

struct FetchStep {
  FetchAction action;
  CacheTier from;
  CacheTier to;
  Micros latency = 0;
};

struct FetchPlan {
  std::vector<FetchStep> actions;
  Micros latency = 0;
  std::optional<CacheTier> hit_tier;
  bool reached_gpu = false;

  bool hit() const noexcept { return hit_tier.has_value(); }
};

// One worker's view of the four-tier KV block store. Single writer.
class TieredCache {
 public:
  explicit TieredCache(TierConfig config = {}, std::size_t block_size = kDefaultBlockSize)
      : config_(config), block_size_(block_size) {
    for (CacheTier t : kAllTiers) {
      if (config_.capacity(t) == 0) {
        fail(ErrorCode::kInvalidArgument,
             std::string("tier capacity must be > 0: ") + tier_name(t));
      }
    }
  }

  const TierConfig& config() const noexcept { return config_; }
  std::size_t block_size() const noexcept { return block_size_; }

  std::optional<CacheTier> lookup(BlockHashKey hash) const {
    for (CacheTier t : kAllTiers) {
      if (tiers_[tier_index(t)].entries.contains(hash)) return t;
    }
    return std::nullopt;
  }

  const CacheBlockEntry* find(BlockHashKey hash, CacheTier tier) const {
    const auto& m = tiers_[tier_index(tier)].entries;
    auto it = m.find(hash);
    return it == m.end() ? nullptr : &it->second;
  }

  FetchPlan fetch_to_gpu(BlockHashKey hash, Micros clock) {
    FetchPlan plan;
    plan.hit_tier = lookup(hash);
    if (!plan.hit_tier) return plan;

    const CacheTier hit = *plan.hit_tier;
    if (hit == CacheTier::kGpu) {
      acquire(mutable_entry(hash, CacheTier::kGpu), clock);
      plan.actions.push_back(
          {FetchAction::kUpdateReferenceCount, CacheTier::kGpu, CacheTier::kGpu, 0});
      plan.reached_gpu = true;
      return plan;
    }

    const CacheBlockEntry src = *find(hash, hit);
    auto stage = [&](FetchAction action, CacheTier from, CacheTier to, const TransferCost& c) {
      const Micros lat = c.cost(src.size_bytes);
      insert(hash, to, src.size_bytes, src.watermark, clock);
      plan.actions.push_back({action, from, to, lat});
      plan.latency += lat;
    };

    if (hit == CacheTier::kDistStore) {
      stage(FetchAction::kLoadFrom3fs, CacheTier::kDistStore, CacheTier::kRemoteCpu,
            config_.load_from_3fs);
      if (config_.fetch_stops_at_remote) return plan;
    }
    if (hit >= CacheTier::kRemoteCpu) {
      stage(FetchAction::kRdmaTransfer, CacheTier::kRemoteCpu, CacheTier::kLocalCpu,
            config_.rdma_transfer);
    }
    stage(FetchAction::kLoadToGpu, CacheTier::kLocalCpu, CacheTier::kGpu, config_.load_to_gpu);
    acquire(mutable_entry(hash, CacheTier::kGpu), clock);
    plan.reached_gpu = true;
    return plan;
  }

  // Evicts unreferenced entries of `tier` as needed to make room.
  BlockId insert(BlockHashKey hash, CacheTier tier, std::uint64_t size_bytes,
                 std::size_t watermark, Micros clock) {
    if (size_bytes == 0) fail(ErrorCode::kInvalidArgument, "block size_bytes must be > 0");
    if (watermark > block_size_) {
      fail(ErrorCode::kInvalidArgument, "watermark exceeds block size");
    }
    auto& store = tiers_[tier_index(tier)];
    if (store.entries.contains(hash)) {
      fail(ErrorCode::kDuplicateInsert,
           "duplicate insert: " + to_hex(hash) + " at " + tier_name(tier));
    }
    const std::uint64_t cap = config_.capacity(tier);
    if (size_bytes > cap) {
      fail(tier == CacheTier::kGpu ? ErrorCode::kGpuCacheThrash : ErrorCode::kTierThrash,
           std::string(tier == CacheTier::kGpu ? "gpu cache thrash" : "tier thrash") +
               ": block larger than " + tier_name(tier) + " capacity");
    }
    if (store.used + size_bytes > cap) {
      try {
        evict(tier, store.used + size_bytes - cap);
      } catch (const Error& e) {
        if (tier == CacheTier::kGpu && e.code() == ErrorCode::kTierThrash) {
          fail(ErrorCode::kGpuCacheThrash, std::string("gpu cache thrash: ") + e.what());
        }
        throw;
      }
    }
    CacheBlockEntry entry{hash, next_block_id_++, tier, 0, watermark, clock, size_bytes};
    store.lru.emplace(entry.last_access, entry.block_id);
    store.by_id.emplace(entry.block_id, hash);
    store.used += size_bytes;
    store.entries.emplace(hash, entry);
    bump(tier);
    return entry.block_id;
  }

  // Evicts in ascending (last_access, block_id) order, never touching
  // referenced entries. No entry is removed when the request cannot be met.
  std::vector<BlockHashKey> evict(CacheTier tier, std::uint64_t bytes_needed) {
    if (bytes_needed == 0) fail(ErrorCode::kInvalidArgument, "bytes_needed must be > 0");
    auto& store = tiers_[tier_index(tier)];
    std::vector<BlockHashKey> victims;
    std::uint64_t freed = 0;
    for (const auto& [ts, id] : store.lru) {
      const auto& e = store.entries.at(store.by_id.at(id));
      if (e.ref_count > 0) continue;
      victims.push_back(e.hash);
      freed += e.size_bytes;
      if (freed >= bytes_needed) break;
    }
    if (freed < bytes_needed) {
      fail(ErrorCode::kTierThrash, std::string("tier thrash: ") + tier_name(tier) + " still needs " +
                                       std::to_string(bytes_needed - freed) + " bytes");
    }
    for (BlockHashKey h : victims) {
      CacheBlockEntry gone = remove(tier, h);
      if (tier == CacheTier::kGpu && config_.write_down_on_evict) write_down(gone);
    }
    return victims;
  }

  void release_and_update(std::span<const BlockHashKey> hashes, Micros clock) {
    for (BlockHashKey h : hashes) {
      auto* e = mutable_entry_or_null(h, CacheTier::kGpu);
      if (e == nullptr) {
        fail(ErrorCode::kUnknownBlock, "release of block not resident in gpu: " + to_hex(h));
      }
      if (e->ref_count == 0) fail(ErrorCode::kDoubleRelease, "double release: " + to_hex(h));
      --e->ref_count;
      touch(*e, clock);
    }
  }

  // Raises the fill level of an exclusively held partial block.
  void extend_watermark(BlockHashKey hash, std::size_t watermark) {
    auto* e = mutable_entry_or_null(hash, CacheTier::kGpu);
    if (e == nullptr) fail(ErrorCode::kUnknownBlock, "unknown gpu block: " + to_hex(hash));
    if (watermark < e->watermark || watermark > block_size_) {
      fail(ErrorCode::kInvalidArgument, "watermark must grow within block size");
    }
    e->watermark = watermark;
  }

  std::uint64_t used_bytes(CacheTier t) const noexcept { return tiers_[tier_index(t)].used; }
  std::uint64_t free_bytes(CacheTier t) const noexcept {
    return config_.capacity(t) - used_bytes(t);
  }
  std::size_t entry_count(CacheTier t) const noexcept {
    return tiers_[tier_index(t)].entries.size();
  }

  std::uint64_t referenced_bytes(CacheTier t) const {
    std::uint64_t total = 0;
    for (const auto& [h, e] : tiers_[tier_index(t)].entries) {
      if (e.ref_count > 0) total += e.size_bytes;
    }
    return total;
  }

  // Entries in eviction order (oldest first).
  std::vector<CacheBlockEntry> entries(CacheTier t) const {
    const auto& store = tiers_[tier_index(t)];
    std::vector<CacheBlockEntry> out;
    out.reserve(store.entries.size());
    for (const auto& [ts, id] : store.lru) out.push_back(store.entries.at(store.by_id.at(id)));
    return out;
  }

  // Bumped on every residency change of the tier.
  std::uint64_t residency_version(CacheTier t) const noexcept {
    return tiers_[tier_index(t)].version;
  }

 private:
  struct TierStore {
    std::unordered_map<BlockHashKey, CacheBlockEntry> entries;
    std::set<std::tuple<Micros, BlockId>> lru;
    std::unordered_map<BlockId, BlockHashKey> by_id;
    std::uint64_t used = 0;
    std::uint64_t version = 0;
  };

  CacheBlockEntry& mutable_entry(BlockHashKey h, CacheTier t) {
    auto* e = mutable_entry_or_null(h, t);
    if (e == nullptr) fail(ErrorCode::kUnknownBlock, "unknown block " + to_hex(h));
    return *e;
  }

  CacheBlockEntry* mutable_entry_or_null(BlockHashKey h, CacheTier t) {
    auto& m = tiers_[tier_index(t)].entries;
    auto it = m.find(h);
    return it == m.end() ? nullptr : &it->second;
  }

  void acquire(CacheBlockEntry& e, Micros clock) {
    if (e.watermark < block_size_ && e.ref_count > 0) {
      fail(ErrorCode::kExclusiveBlock, "partial block is exclusive: " + to_hex(e.hash));
    }
    ++e.ref_count;
    touch(e, clock);
  }

  void touch(CacheBlockEntry& e, Micros clock) {
    auto& store = tiers_[tier_index(e.tier)];
    store.lru.erase({e.last_access, e.block_id});
    e.last_access = clock;
    store.lru.emplace(e.last_access, e.block_id);
  }

  CacheBlockEntry remove(CacheTier tier, BlockHashKey h) {
    auto& store = tiers_[tier_index(tier)];
    auto it = store.entries.find(h);
    CacheBlockEntry e = it->second;
    store.lru.erase({e.last_access, e.block_id});
    store.by_id.erase(e.block_id);
    store.used -= e.size_bytes;
    store.entries.erase(it);
    bump(tier);
    return e;
  }

  void write_down(const CacheBlockEntry& e) {
    auto& local = tiers_[tier_index(CacheTier::kLocalCpu)];
    if (local.entries.contains(e.hash)) return;
    try {
      insert(e.hash, CacheTier::kLocalCpu, e.size_bytes, e.watermark, e.last_access);
    } catch (const Error&) {
      // LocalCpu full of nothing evictable: the block is simply dropped.
    }
  }

  void bump(CacheTier t) noexcept { ++tiers_[tier_index(t)].version; }

  TierConfig config_;
  std::size_t block_size_;
  std::array<TierStore, 4> tiers_;
  BlockId next_block_id_ = 1;
};

}  // namespace pdsim
