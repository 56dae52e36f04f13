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

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pdsim/cache_managers.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/error.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/spec_decode.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

enum class Topology { kDisaggregated, kFusion };
enum class SchedulingPolicy { kCacheAware, kRandom };

struct SpecSimConfig {
  bool enabled = false;
  std::size_t k = 8;
  std::size_t ngram_n = 2;
  bool skip_initial = true;
  VerifyMode mode = VerifyMode::kGreedy;
  // Probability mass the synthetic target puts on continuing a prompt copy.
  double copy_prob = 0.9;
  Micros draft_cost_us = 200;
};

struct SimConfig {
  Topology topology = Topology::kDisaggregated;
  std::size_t prefill_workers = 2;
  std::size_t decode_workers = 2;
  std::size_t dp_size = 1;

  std::size_t block_size = kDefaultBlockSize;
  TierConfig tiers;
  bool remote_persist = false;

  CostModel cost;
  std::uint64_t decode_kv_capacity_bytes = std::uint64_t{8} << 30;

  SchedulingPolicy policy = SchedulingPolicy::kCacheAware;
  ScoreWeights weights;
  SchedulerOptions sched;
  Micros schedule_interval_us = 2000;
  std::size_t max_prefill_batch = 8;

  Micros status_sync_us = 20000;
  Micros key_sync_us = 50000;
  bool publish_immediately = false;

  SpecSimConfig speculative;
  std::size_t vocab_size = 1024;
  std::uint64_t seed = 1;

  // Every violated constraint, each prefixed with its field path.
  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    auto need = [&](bool ok, const char* path, const char* what) {
      if (!ok) p.push_back(std::string(path) + ": " + what);
    };
    need(prefill_workers >= 1, "topology.prefill_workers", "must be >= 1");
    need(topology == Topology::kFusion || decode_workers >= 1, "topology.decode_workers",
         "must be >= 1");
    need(dp_size >= 1, "topology.dp_size", "must be >= 1");
    need(block_size >= 1, "cache.block_size", "must be >= 1");
    const char* caps[] = {"cache.capacity_bytes.gpu", "cache.capacity_bytes.local_cpu",
                          "cache.capacity_bytes.remote_cpu", "cache.capacity_bytes.dist_store"};
    for (std::size_t i = 0; i < 4; ++i) need(tiers.capacity_bytes[i] > 0, caps[i], "must be > 0");
    need(tiers.load_to_gpu.bytes_per_sec > 0, "cache.load_to_gpu.bytes_per_sec", "must be > 0");
    need(tiers.rdma_transfer.bytes_per_sec > 0, "cache.rdma_transfer.bytes_per_sec", "must be > 0");
    need(tiers.load_from_3fs.bytes_per_sec > 0, "cache.load_from_3fs.bytes_per_sec", "must be > 0");
    need(tiers.load_to_gpu.fixed_us >= 0, "cache.load_to_gpu.fixed_us", "must be >= 0");
    need(tiers.rdma_transfer.fixed_us >= 0, "cache.rdma_transfer.fixed_us", "must be >= 0");
    need(tiers.load_from_3fs.fixed_us >= 0, "cache.load_from_3fs.fixed_us", "must be >= 0");
    need(cost.prefill_tokens_per_sec > 0, "cost.prefill_tokens_per_sec", "must be > 0");
    need(cost.prefill_overhead_us >= 0, "cost.prefill_overhead_us", "must be >= 0");
    need(cost.prefill_capacity_tokens >= 0, "cost.prefill_capacity_tokens", "must be >= 0");
    need(cost.decode_us_per_token > 0, "cost.decode_us_per_token", "must be > 0");
    need(cost.decode_contention >= 0, "cost.decode_contention", "must be >= 0");
    need(cost.kv_bytes_per_token > 0, "cost.kv_bytes_per_token", "must be > 0");
    need(decode_kv_capacity_bytes > 0, "cost.decode_kv_capacity_bytes", "must be > 0");
    need(weights.alpha >= 0, "scheduler.alpha", "must be >= 0");
    need(weights.beta >= 0, "scheduler.beta", "must be >= 0");
    need(weights.gamma >= 0, "scheduler.gamma", "must be >= 0");
    need(weights.alpha + weights.beta + weights.gamma > 0, "scheduler.alpha",
         "alpha, beta and gamma must not all be 0");
    need(sched.occupancy_high_watermark > 0 && sched.occupancy_high_watermark <= 1,
         "scheduler.occupancy_high_watermark", "must be in (0, 1]");
    need(sched.window_cap >= 1, "scheduler.window_cap", "must be >= 1");
    need(sched.group_size >= 1, "scheduler.group_size", "must be >= 1");
    need(schedule_interval_us >= 1, "scheduler.interval_us", "must be >= 1");
    need(max_prefill_batch >= 1, "scheduler.max_prefill_batch", "must be >= 1");
    need(status_sync_us >= 1, "sync.status_sync_us", "must be >= 1");
    need(key_sync_us >= 1, "sync.key_sync_us", "must be >= 1");
    need(speculative.k >= 1, "speculative.k", "must be >= 1");
    need(speculative.ngram_n >= 1, "speculative.ngram_n", "must be >= 1");
    need(speculative.copy_prob >= 0 && speculative.copy_prob <= 1, "speculative.copy_prob",
         "must be in [0, 1]");
    need(speculative.draft_cost_us >= 0, "speculative.draft_cost_us", "must be >= 0");
    need(vocab_size >= 2, "workload.vocab_size", "must be >= 2");
    return p;
  }

  void validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& s : p) msg += "\n  " + s;
    fail(ErrorCode::kConfig, msg);
  }
};

namespace detail {

using nlohmann::json;

// Reads an object, recording type errors and unknown keys with full paths.
class ConfigReader {
 public:
  ConfigReader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(name() + ": expected object");
  }

  ~ConfigReader() {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.contains(k)) errors_.push_back(join(k) + ": unknown key");
    }
  }

  ConfigReader(const ConfigReader&) = delete;
  ConfigReader& operator=(const ConfigReader&) = delete;

  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = child(key)) {
      if (v->is_number_unsigned() || (v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        out = v->get<std::uint64_t>();
      } else {
        errors_.push_back(join(key) + ": expected non-negative integer");
      }
    }
  }
  void size(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    u64(key, v);
    out = static_cast<std::size_t>(v);
  }
  void i64(const std::string& key, std::int64_t& out) {
    if (const json* v = child(key)) {
      if (v->is_number_integer()) {
        out = v->get<std::int64_t>();
      } else {
        errors_.push_back(join(key) + ": expected integer");
      }
    }
  }
  void real(const std::string& key, double& out) {
    if (const json* v = child(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else {
        errors_.push_back(join(key) + ": expected number");
      }
    }
  }
  void flag(const std::string& key, bool& out) {
    if (const json* v = child(key)) {
      if (v->is_boolean()) {
        out = v->get<bool>();
      } else {
        errors_.push_back(join(key) + ": expected boolean");
      }
    }
  }
  template <typename E>
  void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> opts) {
    if (const json* v = child(key)) {
      if (v->is_string()) {
        const auto s = v->get<std::string>();
        for (const auto& [n, e] : opts) {
          if (s == n) {
            out = e;
            return;
          }
        }
      }
      std::string allowed;
      for (const auto& [n, e] : opts) allowed += std::string(allowed.empty() ? "" : ", ") + n;
      errors_.push_back(join(key) + ": expected one of " + allowed);
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  std::string name() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

inline void read_transfer(ConfigReader& parent, const std::string& key, TransferCost& t) {
  if (const json* v = parent.child(key)) {
    ConfigReader r(*v, parent.join(key), parent.errors());
    r.i64("fixed_us", t.fixed_us);
    r.real("bytes_per_sec", t.bytes_per_sec);
  }
}

}  // namespace detail

inline SimConfig parse_config(std::string_view text) {
  using detail::ConfigReader;
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("invalid config: malformed json: ") + e.what());
  }
  SimConfig c;
  std::vector<std::string> errors;
  {
    ConfigReader root(doc, "", errors);
    root.u64("seed", c.seed);
    if (const json* t = root.child("topology")) {
      ConfigReader r(*t, "topology", errors);
      r.choice("mode", c.topology,
               {{"disaggregated", Topology::kDisaggregated}, {"fusion", Topology::kFusion}});
      r.size("prefill_workers", c.prefill_workers);
      r.size("decode_workers", c.decode_workers);
      r.size("dp_size", c.dp_size);
    }
    if (const json* t = root.child("cache")) {
      ConfigReader r(*t, "cache", errors);
      r.size("block_size", c.block_size);
      if (const json* cap = r.child("capacity_bytes")) {
        ConfigReader cr(*cap, "cache.capacity_bytes", errors);
        for (CacheTier tier : kAllTiers) cr.u64(tier_name(tier), c.tiers.capacity_bytes[tier_index(tier)]);
      }
      detail::read_transfer(r, "load_to_gpu", c.tiers.load_to_gpu);
      detail::read_transfer(r, "rdma_transfer", c.tiers.rdma_transfer);
      detail::read_transfer(r, "load_from_3fs", c.tiers.load_from_3fs);
      r.flag("write_down_on_evict", c.tiers.write_down_on_evict);
      r.flag("fetch_stops_at_remote", c.tiers.fetch_stops_at_remote);
      r.flag("remote_persist", c.remote_persist);
    }
    if (const json* t = root.child("cost")) {
      ConfigReader r(*t, "cost", errors);
      r.real("prefill_tokens_per_sec", c.cost.prefill_tokens_per_sec);
      r.i64("prefill_overhead_us", c.cost.prefill_overhead_us);
      r.real("prefill_capacity_tokens", c.cost.prefill_capacity_tokens);
      r.i64("decode_us_per_token", c.cost.decode_us_per_token);
      r.real("decode_contention", c.cost.decode_contention);
      r.u64("kv_bytes_per_token", c.cost.kv_bytes_per_token);
      r.u64("decode_kv_capacity_bytes", c.decode_kv_capacity_bytes);
    }
    if (const json* t = root.child("scheduler")) {
      ConfigReader r(*t, "scheduler", errors);
      r.choice("policy", c.policy,
               {{"cache_aware", SchedulingPolicy::kCacheAware}, {"random", SchedulingPolicy::kRandom}});
      r.real("alpha", c.weights.alpha);
      r.real("beta", c.weights.beta);
      r.real("gamma", c.weights.gamma);
      r.choice("semantics", c.sched.semantics,
               {{"global", MatchSemantics::kGlobalPrefix}, {"strict", MatchSemantics::kStrict}});
      r.real("occupancy_high_watermark", c.sched.occupancy_high_watermark);
      r.size("window_cap", c.sched.window_cap);
      r.size("group_size", c.sched.group_size);
      r.i64("interval_us", c.schedule_interval_us);
      r.size("max_prefill_batch", c.max_prefill_batch);
    }
    if (const json* t = root.child("sync")) {
      ConfigReader r(*t, "sync", errors);
      r.i64("status_sync_us", c.status_sync_us);
      r.i64("key_sync_us", c.key_sync_us);
      r.flag("publish_immediately", c.publish_immediately);
    }
    if (const json* t = root.child("speculative")) {
      ConfigReader r(*t, "speculative", errors);
      r.flag("enabled", c.speculative.enabled);
      r.size("k", c.speculative.k);
      r.size("ngram_n", c.speculative.ngram_n);
      r.flag("skip_initial", c.speculative.skip_initial);
      r.choice("mode", c.speculative.mode,
               {{"greedy", VerifyMode::kGreedy}, {"stochastic", VerifyMode::kStochastic}});
      r.real("copy_prob", c.speculative.copy_prob);
      r.i64("draft_cost_us", c.speculative.draft_cost_us);
    }
    if (const json* t = root.child("workload")) {
      ConfigReader r(*t, "workload", errors);
      r.size("vocab_size", c.vocab_size);
    }
  }
  c.sched.block_size = c.block_size;
  if (errors.empty()) {
    for (auto& p : c.problems()) errors.push_back(std::move(p));
  }
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorCode::kConfig, msg);
  }
  return c;
}

inline std::string config_to_json(const SimConfig& c) {
  using nlohmann::ordered_json;
  auto transfer = [](const TransferCost& t) {
    return ordered_json{{"fixed_us", t.fixed_us}, {"bytes_per_sec", t.bytes_per_sec}};
  };
  ordered_json caps;
  for (CacheTier t : kAllTiers) caps[tier_name(t)] = c.tiers.capacity_bytes[tier_index(t)];
  ordered_json j;
  j["seed"] = c.seed;
  j["topology"] = {{"mode", c.topology == Topology::kFusion ? "fusion" : "disaggregated"},
                   {"prefill_workers", c.prefill_workers},
                   {"decode_workers", c.decode_workers},
                   {"dp_size", c.dp_size}};
  j["cache"] = {{"block_size", c.block_size},
                {"capacity_bytes", caps},
                {"load_to_gpu", transfer(c.tiers.load_to_gpu)},
                {"rdma_transfer", transfer(c.tiers.rdma_transfer)},
                {"load_from_3fs", transfer(c.tiers.load_from_3fs)},
                {"write_down_on_evict", c.tiers.write_down_on_evict},
                {"fetch_stops_at_remote", c.tiers.fetch_stops_at_remote},
                {"remote_persist", c.remote_persist}};
  j["cost"] = {{"prefill_tokens_per_sec", c.cost.prefill_tokens_per_sec},
               {"prefill_overhead_us", c.cost.prefill_overhead_us},
               {"prefill_capacity_tokens", c.cost.prefill_capacity_tokens},
               {"decode_us_per_token", c.cost.decode_us_per_token},
               {"decode_contention", c.cost.decode_contention},
               {"kv_bytes_per_token", c.cost.kv_bytes_per_token},
               {"decode_kv_capacity_bytes", c.decode_kv_capacity_bytes}};
  j["scheduler"] = {{"policy", c.policy == SchedulingPolicy::kRandom ? "random" : "cache_aware"},
                    {"alpha", c.weights.alpha},
                    {"beta", c.weights.beta},
                    {"gamma", c.weights.gamma},
                    {"semantics", semantics_name(c.sched.semantics)},
                    {"occupancy_high_watermark", c.sched.occupancy_high_watermark},
                    {"window_cap", c.sched.window_cap},
                    {"group_size", c.sched.group_size},
                    {"interval_us", c.schedule_interval_us},
                    {"max_prefill_batch", c.max_prefill_batch}};
  j["sync"] = {{"status_sync_us", c.status_sync_us},
               {"key_sync_us", c.key_sync_us},
               {"publish_immediately", c.publish_immediately}};
  j["speculative"] = {{"enabled", c.speculative.enabled},
                      {"k", c.speculative.k},
                      {"ngram_n", c.speculative.ngram_n},
                      {"skip_initial", c.speculative.skip_initial},
                      {"mode", c.speculative.mode == VerifyMode::kGreedy ? "greedy" : "stochastic"},
                      {"copy_prob", c.speculative.copy_prob},
                      {"draft_cost_us", c.speculative.draft_cost_us}};
  j["workload"] = {{"vocab_size", c.vocab_size}};
  return j.dump(2) + "\n";
}

}  // namespace pdsim
