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
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pdsim/core_types.hpp"
#include "pdsim/error.hpp"
#include "pdsim/text_io.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

using WorkerId = std::uint32_t;

struct CacheMetadata {
  BlockId block_id = 0;
  CacheTier tier = CacheTier::kGpu;
  std::size_t watermark = 0;

  friend bool operator==(const CacheMetadata&, const CacheMetadata&) = default;
};

struct CachedBlockInfo {
  BlockHashKey hash;
  CacheMetadata meta;
};

struct WorkerCacheDelta {
  WorkerId worker = 0;
  std::uint64_t from_version = 0;
  std::uint64_t to_version = 0;
  std::vector<CachedBlockInfo> added;
  std::vector<BlockHashKey> removed;
};

enum class MatchSemantics { kGlobalPrefix, kStrict };

inline const char* semantics_name(MatchSemantics s) noexcept {
  return s == MatchSemantics::kGlobalPrefix ? "global" : "strict";
}

struct MatchResult {
  std::map<WorkerId, std::size_t> per_worker;  // lengths in blocks
  std::size_t global_prefix_len = 0;

  std::size_t length_for(WorkerId w) const {
    auto it = per_worker.find(w);
    return it == per_worker.end() ? 0 : it->second;
  }

  friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

// Master-side merge of every worker's published block keys.
class UnifiedCacheMap {
 public:
  using Holders = std::map<WorkerId, CacheMetadata>;

  void apply_delta(const WorkerCacheDelta& delta) {
    const std::uint64_t known = version(delta.worker);
    if (delta.from_version != known) {
      fail(ErrorCode::kResyncRequired,
           "resync required: worker " + std::to_string(delta.worker) + " at version " +
               std::to_string(known) + ", delta from " + std::to_string(delta.from_version));
    }
    if (delta.to_version <= delta.from_version) {
      fail(ErrorCode::kInvalidArgument, "delta to_version must exceed from_version");
    }
    std::set<BlockHashKey> removed(delta.removed.begin(), delta.removed.end());
    for (const auto& a : delta.added) {
      if (removed.contains(a.hash)) {
        fail(ErrorCode::kInvalidArgument, "delta adds and removes " + to_hex(a.hash));
      }
    }
    for (BlockHashKey h : delta.removed) erase(h, delta.worker);
    for (const auto& a : delta.added) map_[a.hash][delta.worker] = a.meta;
    versions_[delta.worker] = delta.to_version;
  }

  // Full resynchronisation of one worker.
  void reset_worker(WorkerId worker, std::uint64_t version,
                    std::span<const CachedBlockInfo> blocks) {
    for (auto it = map_.begin(); it != map_.end();) {
      it->second.erase(worker);
      it = it->second.empty() ? map_.erase(it) : std::next(it);
    }
    for (const auto& b : blocks) map_[b.hash][worker] = b.meta;
    versions_[worker] = version;
  }

  const Holders* holders(BlockHashKey h) const {
    ++probes_;
    auto it = map_.find(h);
    return it == map_.end() ? nullptr : &it->second;
  }

  bool holds(BlockHashKey h, WorkerId w) const {
    auto it = map_.find(h);
    return it != map_.end() && it->second.contains(w);
  }

  std::uint64_t version(WorkerId w) const {
    auto it = versions_.find(w);
    return it == versions_.end() ? 0 : it->second;
  }

  std::size_t key_count() const noexcept { return map_.size(); }

  std::size_t entry_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [h, hs] : map_) n += hs.size();
    return n;
  }

  std::uint64_t probe_count() const noexcept { return probes_; }
  void reset_probe_count() const noexcept { probes_ = 0; }

  // Records sorted by (hash, worker).
  std::vector<std::pair<BlockHashKey, std::pair<WorkerId, CacheMetadata>>> records() const {
    std::vector<std::pair<BlockHashKey, std::pair<WorkerId, CacheMetadata>>> out;
    for (const auto& [h, hs] : map_) {
      for (const auto& [w, m] : hs) out.push_back({h, {w, m}});
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) {
                return std::tie(a.first, a.second.first) < std::tie(b.first, b.second.first);
              });
    return out;
  }

  // Holdings only; versions are not part of equality.
  bool same_holdings(const UnifiedCacheMap& other) const { return map_ == other.map_; }

  // `hex <TAB> worker [<TAB> block_id <TAB> tier <TAB> watermark]` per line.
  std::string to_snapshot() const {
    std::ostringstream os;
    for (const auto& [h, wm] : records()) {
      os << to_hex(h) << '\t' << wm.first << '\t' << wm.second.block_id << '\t'
         << tier_name(wm.second.tier) << '\t' << wm.second.watermark << '\n';
    }
    return os.str();
  }

  static UnifiedCacheMap from_snapshot(std::string_view text) {
    UnifiedCacheMap m;
    for_each_record(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
      if (f.size() != 2 && f.size() != 5) {
        parse_error(line_no, "expected 2 or 5 tab-separated fields");
      }
      auto key = parse_hex_key(f[0]);
      if (!key) parse_error(line_no, "bad hash '" + std::string(f[0]) + "'");
      std::string_view wtext = f[1];
      if (!wtext.empty() && (wtext[0] == 'w' || wtext[0] == 'W')) wtext.remove_prefix(1);
      const auto worker = static_cast<WorkerId>(parse_uint(wtext, line_no, "worker"));
      CacheMetadata meta;
      if (f.size() == 5) {
        meta.block_id = parse_uint(f[2], line_no, "block_id");
        meta.tier = parse_tier(f[3], line_no);
        meta.watermark = parse_uint(f[4], line_no, "watermark");
      }
      m.map_[*key][worker] = meta;
    });
    return m;
  }

 private:
  void erase(BlockHashKey h, WorkerId w) {
    auto it = map_.find(h);
    if (it == map_.end()) return;
    it->second.erase(w);
    if (it->second.empty()) map_.erase(it);
  }

  static CacheTier parse_tier(std::string_view s, std::size_t line_no) {
    for (CacheTier t : kAllTiers) {
      if (s == tier_name(t)) return t;
    }
    parse_error(line_no, "unknown tier '" + std::string(s) + "'");
  }

  std::unordered_map<BlockHashKey, Holders> map_;
  std::map<WorkerId, std::uint64_t> versions_;
  mutable std::uint64_t probes_ = 0;
};

// Single pass over H: l counts consecutive hits in the merged map and every
// worker holding h_i is credited max(M[w], l). Stops at the first absent key.
inline MatchResult prefix_match(std::span<const BlockHashKey> hashes,
                                const UnifiedCacheMap& map) {
  if (hashes.empty()) fail(ErrorCode::kEmptyRequest, "empty request");
  MatchResult result;
  std::size_t l = 0;
  for (BlockHashKey h : hashes) {
    const auto* workers = map.holders(h);
    if (workers == nullptr) break;
    ++l;
    for (const auto& [w, meta] : *workers) {
      auto& m = result.per_worker[w];
      m = std::max(m, l);
    }
  }
  result.global_prefix_len = l;
  return result;
}

// Each worker gets only its own contiguous prefix of H. Workers that hold a
// probed block but not the first one report 0.
inline MatchResult strict_prefix_match(std::span<const BlockHashKey> hashes,
                                       const UnifiedCacheMap& map) {
  if (hashes.empty()) fail(ErrorCode::kEmptyRequest, "empty request");
  MatchResult result;
  std::set<WorkerId> alive;
  std::size_t l = 0;
  for (BlockHashKey h : hashes) {
    const auto* workers = map.holders(h);
    if (workers == nullptr) break;
    std::set<WorkerId> next;
    for (const auto& [w, meta] : *workers) {
      result.per_worker.try_emplace(w, 0);
      if (l == 0 || alive.contains(w)) next.insert(w);
    }
    ++l;
    for (WorkerId w : next) result.per_worker[w] = l;
    alive = std::move(next);
  }
  result.global_prefix_len = l;
  return result;
}

inline MatchResult match_prefix(std::span<const BlockHashKey> hashes,
                                const UnifiedCacheMap& map, MatchSemantics semantics) {
  return semantics == MatchSemantics::kGlobalPrefix ? prefix_match(hashes, map)
                                            : strict_prefix_match(hashes, map);
}

// Persistent cache key -> file path map of the remote manager.
class RemoteCacheIndex {
 public:
  void persist(BlockHashKey hash, const std::string& path) {
    if (path.empty()) fail(ErrorCode::kInvalidArgument, "remote path must be non-empty");
    if (path.find_first_of("\t\n\r") != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "remote path may not contain tabs or newlines");
    }
    auto [it, inserted] = paths_.try_emplace(hash, path);
    if (!inserted && it->second != path) {
      fail(ErrorCode::kPathConflict, "path conflict for " + to_hex(hash) + ": '" + it->second +
                                         "' vs '" + path + "'");
    }
  }

  bool contains(BlockHashKey hash) const { return paths_.contains(hash); }

  const std::string* path(BlockHashKey hash) const {
    auto it = paths_.find(hash);
    return it == paths_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return paths_.size(); }

  // Sorted `hex <TAB> path` lines.
  std::string snapshot() const {
    std::string out;
    for (const auto& [h, p] : paths_) {
      out += to_hex(h);
      out += '\t';
      out += p;
      out += '\n';
    }
    return out;
  }

  static RemoteCacheIndex restore(std::string_view text) {
    RemoteCacheIndex idx;
    for_each_record(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
      if (f.size() != 2) parse_error(line_no, "expected 'hash<TAB>path'");
      auto key = parse_hex_key(f[0]);
      if (!key) parse_error(line_no, "bad hash '" + std::string(f[0]) + "'");
      try {
        idx.persist(*key, std::string(f[1]));
      } catch (const Error& e) {
        parse_error(line_no, e.what());
      }
    });
    return idx;
  }

  friend bool operator==(const RemoteCacheIndex&, const RemoteCacheIndex&) = default;

 private:
  std::map<BlockHashKey, std::string> paths_;
};

inline std::size_t remote_lookup(std::span<const BlockHashKey> hashes,
                                 const RemoteCacheIndex& idx) {
  if (hashes.empty()) fail(ErrorCode::kEmptyRequest, "empty request");
  std::size_t n = 0;
  while (n < hashes.size() && idx.contains(hashes[n])) ++n;
  return n;
}

// One hex key per line.
inline std::vector<BlockHashKey> parse_hash_list(std::string_view text) {
  std::vector<BlockHashKey> out;
  for_each_record(text, [&](std::size_t line_no, const std::vector<std::string_view>& f) {
    if (f.size() != 1) parse_error(line_no, "expected one hash per line");
    auto key = parse_hex_key(f[0]);
    if (!key) parse_error(line_no, "bad hash '" + std::string(f[0]) + "'");
    out.push_back(*key);
  });
  return out;
}

}  // namespace pdsim
