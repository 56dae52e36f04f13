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
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "pdsim/error.hpp"
#include "pdsim/text_io.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

struct ManifestFile {
  std::string name;
  std::uint64_t size_bytes = 0;
  std::vector<std::string> tensors;

  bool operator==(const ManifestFile&) const = default;
};

struct FileManifest {
  std::vector<ManifestFile> files;

  std::uint64_t total_bytes() const noexcept {
    std::uint64_t t = 0;
    for (const auto& f : files) t += f.size_bytes;
    return t;
  }

  void validate() const {
    std::set<std::string> names, tensors;
    for (const auto& f : files) {
      if (f.size_bytes == 0) fail(ErrorCode::kInvalidArgument, "file '" + f.name + "' has size 0");
      if (!names.insert(f.name).second) {
        fail(ErrorCode::kInvalidArgument, "duplicate file name '" + f.name + "'");
      }
      for (const auto& t : f.tensors) {
        if (!tensors.insert(t).second) {
          fail(ErrorCode::kInvalidArgument, "tensor '" + t + "' appears in more than one file");
        }
      }
    }
  }

  // name <TAB> size_bytes [<TAB> tensor,tensor,...]
  static FileManifest parse(std::string_view text) {
    FileManifest m;
    for_each_record(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
      if (f.size() < 2 || f.size() > 3) parse_error(line, "expected 2 or 3 tab-separated fields");
      ManifestFile file;
      file.name = std::string(f[0]);
      if (file.name.empty()) parse_error(line, "empty file name");
      file.size_bytes = parse_uint(f[1], line, "size_bytes");
      if (file.size_bytes == 0) parse_error(line, "size_bytes must be > 0");
      if (f.size() == 3 && !f[2].empty()) {
        std::string_view rest = f[2];
        while (!rest.empty()) {
          const auto comma = rest.find(',');
          file.tensors.emplace_back(rest.substr(0, comma));
          if (comma == std::string_view::npos) break;
          rest.remove_prefix(comma + 1);
        }
      }
      m.files.push_back(std::move(file));
    });
    m.validate();
    return m;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "#pdsim-manifest v1\n";
    for (const auto& f : files) {
      os << f.name << '\t' << f.size_bytes << '\t';
      for (std::size_t i = 0; i < f.tensors.size(); ++i) os << (i ? "," : "") << f.tensors[i];
      os << '\n';
    }
    return os.str();
  }
};

struct IoParams {
  double read_bandwidth = 2e9;
  double broadcast_bandwidth = 20e9;
  double broadcast_multiplier = 1.0;
  Micros pinned_alloc_overhead_us = 600000;
  std::uint64_t alloc_granule_bytes = 2000000000ULL;
  bool shm_reuse = true;
  bool overlap = true;
  double baseline_penalty = 1.5;

  void validate() const {
    if (!(read_bandwidth > 0.0)) fail(ErrorCode::kInvalidArgument, "read_bandwidth must be > 0");
    if (!(broadcast_bandwidth > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "broadcast_bandwidth must be > 0");
    }
    if (!(broadcast_multiplier > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "broadcast_multiplier must be > 0");
    }
    if (pinned_alloc_overhead_us < 0) {
      fail(ErrorCode::kInvalidArgument, "pinned_alloc_overhead must be >= 0");
    }
    if (alloc_granule_bytes == 0) fail(ErrorCode::kInvalidArgument, "alloc granule must be > 0");
    if (!(baseline_penalty > 0.0)) fail(ErrorCode::kInvalidArgument, "baseline_penalty must be > 0");
  }

  Micros read_time(std::uint64_t bytes, double penalty = 1.0) const {
    return round_us(static_cast<double>(bytes) * penalty * 1e6 / read_bandwidth);
  }
  Micros broadcast_time(std::uint64_t bytes) const {
    return round_us(static_cast<double>(bytes) * broadcast_multiplier * 1e6 / broadcast_bandwidth);
  }
  Micros alloc_time(std::uint64_t bytes) const {
    const std::uint64_t granules = (bytes + alloc_granule_bytes - 1) / alloc_granule_bytes;
    return static_cast<Micros>(granules) * pinned_alloc_overhead_us;
  }
};

enum class LoadAction { kRead, kBroadcast, kAllocPinned };

inline const char* load_action_name(LoadAction a) {
  switch (a) {
    case LoadAction::kRead: return "read";
    case LoadAction::kBroadcast: return "broadcast";
    case LoadAction::kAllocPinned: return "alloc_pinned";
  }
  return "?";
}

struct TimelineEntry {
  std::uint32_t rank = 0;
  LoadAction action = LoadAction::kRead;
  std::string file;  // empty for a per-rank allocation
  Micros start = 0;
  Micros end = 0;

  bool operator==(const TimelineEntry&) const = default;
};

// Per-rank file indices, in manifest order.
using FileAssignment = std::vector<std::vector<std::size_t>>;

struct LoadSchedule {
  FileAssignment assignment;
  std::vector<TimelineEntry> timeline;
  Micros makespan = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "#pdsim-loadplan v1\n";
    for (const auto& e : timeline) {
      os << e.rank << '\t' << load_action_name(e.action) << '\t' << (e.file.empty() ? "-" : e.file)
         << '\t' << e.start << '\t' << e.end << '\n';
    }
    os << "makespan_us\t" << makespan << '\n';
    return os.str();
  }
};

// Longest-processing-time greedy; ties among files by name, among ranks by
// index.
inline FileAssignment assign_files(const FileManifest& manifest, std::size_t world_size) {
  if (world_size == 0) fail(ErrorCode::kInvalidArgument, "world_size must be >= 1");
  if (manifest.files.empty()) fail(ErrorCode::kInvalidArgument, "empty manifest");
  std::vector<std::size_t> order(manifest.files.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& fa = manifest.files[a];
    const auto& fb = manifest.files[b];
    if (fa.size_bytes != fb.size_bytes) return fa.size_bytes > fb.size_bytes;
    return fa.name < fb.name;
  });
  FileAssignment out(world_size);
  std::vector<std::uint64_t> load(world_size, 0);
  for (std::size_t idx : order) {
    const auto r = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    out[r].push_back(idx);
    load[r] += manifest.files[idx].size_bytes;
  }
  for (auto& files : out) std::sort(files.begin(), files.end());
  return out;
}

// File-order shared-read plan. Each rank owns one I/O resource; there is one
// broadcast resource serving finished reads first-come first-served (ties by
// manifest order).
inline LoadSchedule plan_timeline(const FileAssignment& assignment, const FileManifest& manifest,
                                  const IoParams& p, std::size_t world_size) {
  p.validate();
  if (assignment.size() != world_size) {
    fail(ErrorCode::kInvalidArgument, "assignment size != world_size");
  }
  std::vector<int> seen(manifest.files.size(), 0);
  for (const auto& files : assignment) {
    for (std::size_t f : files) {
      if (f >= manifest.files.size()) fail(ErrorCode::kInvalidArgument, "file index out of range");
      ++seen[f];
    }
  }
  for (std::size_t f = 0; f < seen.size(); ++f) {
    if (seen[f] != 1) {
      fail(ErrorCode::kInvalidArgument,
           "file '" + manifest.files[f].name + "' must be assigned to exactly one rank");
    }
  }

  LoadSchedule s;
  s.assignment = assignment;

  struct Rank {
    std::size_t next = 0;  // position in its file list
    Micros io_free = 0;
    bool waiting_bcast = false;
  };
  std::vector<Rank> ranks(world_size);

  // Per-rank up-front allocation when the staging buffer is reused.
  for (std::size_t r = 0; r < world_size; ++r) {
    if (!p.shm_reuse || assignment[r].empty()) continue;
    std::uint64_t largest = 0;
    for (std::size_t f : assignment[r]) largest = std::max(largest, manifest.files[f].size_bytes);
    const Micros d = p.alloc_time(largest);
    if (d > 0) s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kAllocPinned, "", 0, d});
    ranks[r].io_free = d;
  }

  auto issue_read = [&](std::size_t r) {
    Rank& rk = ranks[r];
    const std::size_t f = assignment[r][rk.next];
    const auto& file = manifest.files[f];
    Micros t = rk.io_free;
    if (!p.shm_reuse) {
      const Micros d = p.alloc_time(file.size_bytes);
      if (d > 0) s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kAllocPinned, file.name, t, t + d});
      t += d;
    }
    const Micros end = t + p.read_time(file.size_bytes);
    s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kRead, file.name, t, end});
    rk.io_free = end;
    ++rk.next;
    return std::pair<Micros, std::size_t>{end, f};
  };

  // Ready broadcasts: (ready time, manifest index, rank).
  std::set<std::tuple<Micros, std::size_t, std::size_t>> ready;
  for (std::size_t r = 0; r < world_size; ++r) {
    if (assignment[r].empty()) continue;
    auto [end, f] = issue_read(r);
    ready.insert({end, f, r});
    if (p.overlap) {
      while (ranks[r].next < assignment[r].size()) {
        auto [e2, f2] = issue_read(r);
        ready.insert({e2, f2, r});
      }
    } else {
      ranks[r].waiting_bcast = true;
    }
  }

  Micros net_free = 0;
  while (!ready.empty()) {
    auto [ready_at, f, r] = *ready.begin();
    ready.erase(ready.begin());
    const Micros start = std::max(ready_at, net_free);
    const Micros end = start + p.broadcast_time(manifest.files[f].size_bytes);
    s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kBroadcast, manifest.files[f].name, start, end});
    net_free = end;
    if (!p.overlap && ranks[r].next < assignment[r].size()) {
      ranks[r].io_free = std::max(ranks[r].io_free, end);
      auto [e2, f2] = issue_read(r);
      ready.insert({e2, f2, r});
    }
  }

  for (const auto& e : s.timeline) s.makespan = std::max(s.makespan, e.end);
  std::stable_sort(s.timeline.begin(), s.timeline.end(), [](const auto& a, const auto& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.rank < b.rank;
  });
  return s;
}

// Structure-driven baseline: every rank reads every file in manifest order
// with the non-sequential access penalty and a pinned allocation per file.
inline LoadSchedule plan_baseline(const FileManifest& manifest, const IoParams& p,
                                  std::size_t world_size) {
  p.validate();
  if (world_size == 0) fail(ErrorCode::kInvalidArgument, "world_size must be >= 1");
  if (manifest.files.empty()) fail(ErrorCode::kInvalidArgument, "empty manifest");
  LoadSchedule s;
  s.assignment.assign(world_size, {});
  for (std::size_t r = 0; r < world_size; ++r) {
    Micros t = 0;
    for (std::size_t f = 0; f < manifest.files.size(); ++f) {
      const auto& file = manifest.files[f];
      s.assignment[r].push_back(f);
      const Micros a = p.alloc_time(file.size_bytes);
      if (a > 0) s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kAllocPinned, file.name, t, t + a});
      t += a;
      const Micros d = p.read_time(file.size_bytes, p.baseline_penalty);
      s.timeline.push_back({static_cast<std::uint32_t>(r), LoadAction::kRead, file.name, t, t + d});
      t += d;
    }
    s.makespan = std::max(s.makespan, t);
  }
  return s;
}

struct StrategyReport {
  Micros fileorder_makespan = 0;
  Micros baseline_makespan = 0;
  double speedup = 0.0;
};

inline StrategyReport compare_strategies(const FileManifest& manifest, const IoParams& p,
                                         std::size_t world_size) {
  const auto fo = plan_timeline(assign_files(manifest, world_size), manifest, p, world_size);
  const auto bl = plan_baseline(manifest, p, world_size);
  StrategyReport r;
  r.fileorder_makespan = fo.makespan;
  r.baseline_makespan = bl.makespan;
  r.speedup = fo.makespan > 0 ? static_cast<double>(bl.makespan) / static_cast<double>(fo.makespan)
                              : 0.0;
  return r;
}

}  // namespace pdsim
