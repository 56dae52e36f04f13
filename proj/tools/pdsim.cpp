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

// pdsim command line: simulate, match, specdec, loadplan, trace.
//
// Exit codes: 0 ok, 1 usage, 2 config, 3 gpu cache thrash, 4 I/O or input
// parse failure.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pdsim/pdsim.hpp"

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kConfigError = 2, kThrash = 3, kIoError = 4 };

int exit_code_for(const pdsim::Error& e) {
  switch (e.code()) {
    case pdsim::ErrorCode::kConfig: return kConfigError;
    case pdsim::ErrorCode::kGpuCacheThrash:
    case pdsim::ErrorCode::kTierThrash: return kThrash;
    case pdsim::ErrorCode::kIo:
    case pdsim::ErrorCode::kParse: return kIoError;
    default: return kUsage;
  }
}

// "3..7" or "5".
std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto v = std::stoull(text);
      return {v, v};
    }
    const auto a = std::stoull(text.substr(0, dots));
    const auto b = std::stoull(text.substr(dots + 2));
    if (b < a) throw std::invalid_argument("empty range");
    return {a, b};
  } catch (const std::exception&) {
    pdsim::fail(pdsim::ErrorCode::kInvalidArgument, "--seeds expects 'a..b', got '" + text + "'");
  }
}

// out.jsonl -> out.seed7.jsonl
std::string seeded_path(const std::string& out, std::uint64_t seed) {
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  const std::string tag = ".seed" + std::to_string(seed);
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return out + tag;
  return out.substr(0, dot) + tag + out.substr(dot);
}

std::vector<pdsim::TokenId> parse_token_file(const std::string& text) {
  std::vector<pdsim::TokenId> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      out.push_back(static_cast<pdsim::TokenId>(pdsim::parse_uint(tok, line_no, "token")));
    }
  }
  return out;
}

std::string join_tokens(const std::vector<pdsim::TokenId>& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(t[i]);
  }
  return s;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config_path;
  std::string trace_path;
  std::string profile;
  std::size_t requests = 1000;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string policy;
  std::string topology;
  std::string semantics;
  std::optional<std::size_t> prefill_workers;
  std::optional<std::size_t> decode_workers;
  bool speculative = false;
  bool publish_immediately = false;
  bool dump_config = false;
  bool summary = false;
};

pdsim::SimConfig build_config(const SimulateArgs& a) {
  pdsim::SimConfig c;
  if (!a.config_path.empty()) {
    c = pdsim::parse_config(pdsim::read_file(a.config_path));
  }
  // Flags win over the file.
  if (a.seed) c.seed = *a.seed;
  if (a.policy == "cache_aware") c.policy = pdsim::SchedulingPolicy::kCacheAware;
  if (a.policy == "random") c.policy = pdsim::SchedulingPolicy::kRandom;
  if (a.topology == "disaggregated") c.topology = pdsim::Topology::kDisaggregated;
  if (a.topology == "fusion") c.topology = pdsim::Topology::kFusion;
  if (a.semantics == "global") c.sched.semantics = pdsim::MatchSemantics::kGlobalPrefix;
  if (a.semantics == "strict") c.sched.semantics = pdsim::MatchSemantics::kStrict;
  if (a.prefill_workers) c.prefill_workers = *a.prefill_workers;
  if (a.decode_workers) c.decode_workers = *a.decode_workers;
  if (a.speculative) c.speculative.enabled = true;
  if (a.publish_immediately) c.publish_immediately = true;
  c.validate();
  return c;
}

std::vector<pdsim::TraceRecord> load_trace(const SimulateArgs& a, std::uint64_t seed) {
  if (!a.trace_path.empty()) return pdsim::ingest_trace(a.trace_path);
  return pdsim::synth_trace(pdsim::profile_by_name(a.profile), a.requests, seed);
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::string path;
  std::string summary;
  int code = kOk;
  std::string error;
};

void run_one(const SimulateArgs& a, const pdsim::SimConfig& base, SeedRun& run) {
  try {
    pdsim::SimConfig c = base;
    c.seed = run.seed;
    const auto trace = load_trace(a, run.seed);
    const auto rep = pdsim::simulate(trace, c).report;
    pdsim::write_file(run.path, pdsim::serialize_report(rep));
    run.summary = pdsim::report_table(rep);
  } catch (const pdsim::Error& e) {
    run.code = exit_code_for(e);
    run.error = e.what();
  }
}

int cmd_simulate(const SimulateArgs& a) {
  const pdsim::SimConfig cfg = build_config(a);
  if (a.dump_config) {
    std::cout << pdsim::config_to_json(cfg);
    if (a.out.empty()) return kOk;
  }
  if (a.out.empty()) {
    std::cerr << "simulate: --out is required\n";
    return kUsage;
  }
  if (a.trace_path.empty() == a.profile.empty()) {
    std::cerr << "simulate: give exactly one of --trace or --profile\n";
    return kUsage;
  }

  std::vector<SeedRun> runs;
  if (a.seeds.empty()) {
    runs.push_back({cfg.seed, a.out, {}, kOk, {}});
  } else {
    const auto [lo, hi] = parse_seed_range(a.seeds);
    for (std::uint64_t s = lo; s <= hi; ++s) runs.push_back({s, seeded_path(a.out, s), {}, kOk, {}});
  }

  // Seeds are independent simulations; no shared mutable state.
  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min<std::size_t>(runs.size(), std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < runs.size(); i = next++) run_one(a, cfg, runs[i]);
    });
  }
  for (auto& th : pool) th.join();

  int code = kOk;
  for (const auto& r : runs) {
    if (r.code != kOk) {
      std::cerr << "simulate (seed " << r.seed << "): " << r.error << "\n";
      code = std::max(code, r.code);
      continue;
    }
    if (a.summary) {
      if (runs.size() > 1) std::cout << "# seed " << r.seed << "\n";
      std::cout << r.summary;
    }
    std::cerr << "wrote " << r.path << "\n";
  }
  return code;
}

// --- match --------------------------------------------------------------------

int cmd_match(const std::string& hashes_path, const std::string& snapshot_path,
              const std::string& semantics, const std::string& remote_path,
              const std::vector<std::uint32_t>& extra_workers) {
  const auto hashes = pdsim::parse_hash_list(pdsim::read_file(hashes_path));
  if (hashes.empty()) {
    std::cerr << "match: hash list is empty\n";
    return kIoError;
  }
  const auto map = pdsim::UnifiedCacheMap::from_snapshot(pdsim::read_file(snapshot_path));
  const auto sem = semantics == "strict" ? pdsim::MatchSemantics::kStrict : pdsim::MatchSemantics::kGlobalPrefix;
  const auto result = pdsim::match_prefix(hashes, map, sem);

  std::set<std::uint32_t> workers(extra_workers.begin(), extra_workers.end());
  for (const auto& [h, wm] : map.records()) workers.insert(wm.first);
  for (const auto& [w, len] : result.per_worker) workers.insert(w);
  std::string line;
  for (std::uint32_t w : workers) {
    if (!line.empty()) line += ' ';
    line += "w" + std::to_string(w) + ":" + std::to_string(result.length_for(w));
  }
  std::cout << line << "\n";
  std::cout << "global:" << result.global_prefix_len << "\n";
  if (!remote_path.empty()) {
    const auto idx = pdsim::RemoteCacheIndex::restore(pdsim::read_file(remote_path));
    std::cout << "remote:" << pdsim::remote_lookup(hashes, idx) << "\n";
  }
  return kOk;
}

// --- specdec ------------------------------------------------------------------

struct SpecdecArgs {
  std::string prompt_path;
  std::string model_path;
  std::string draft_model_path;
  std::string mode = "greedy";
  std::size_t k = 8;
  std::size_t ngram = 2;
  std::uint64_t seed = 1;
  std::size_t max_new = 64;
  bool no_skip_initial = false;
};

int cmd_specdec(const SpecdecArgs& a) {
  const auto prompt = parse_token_file(pdsim::read_file(a.prompt_path));
  if (prompt.empty()) {
    std::cerr << "specdec: prompt is empty\n";
    return kIoError;
  }
  const auto target = pdsim::TableModel::parse(pdsim::read_file(a.model_path));
  pdsim::validate_tokens(prompt, target.vocab_size());

  pdsim::SpecDecodeConfig cfg;
  cfg.k = a.k;
  cfg.ngram_n = a.ngram;
  cfg.skip_initial = !a.no_skip_initial;
  cfg.mode = a.mode == "stochastic" ? pdsim::VerifyMode::kStochastic : pdsim::VerifyMode::kGreedy;

  std::optional<pdsim::TableModel> draft_model;
  std::unique_ptr<pdsim::ProposeExecutor> proposer;
  if (!a.draft_model_path.empty()) {
    draft_model.emplace(pdsim::TableModel::parse(pdsim::read_file(a.draft_model_path)));
    proposer = std::make_unique<pdsim::NaiveDraftProposer>(*draft_model, cfg.mode);
  } else {
    proposer = std::make_unique<pdsim::PromptLookupProposer>();
  }

  pdsim::CounterRng rng(a.seed);
  const auto res = pdsim::speculative_generate(prompt, a.max_new, target, *proposer, cfg, rng);
  std::cout << "tokens: " << join_tokens(res.tokens) << "\n";
  std::cout << "iterations: " << res.stats.iterations << "\n";
  std::cout << "proposed: " << res.stats.proposed << "\n";
  std::cout << "accepted: " << res.stats.accepted << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", res.stats.mean_accepted());
  std::cout << "mean_accepted_per_iteration: " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.4f", res.stats.mean_emitted());
  std::cout << "mean_emitted_per_iteration: " << buf << "\n";
  std::string per;
  for (std::size_t i = 0; i < res.stats.accepted_per_iteration.size(); ++i) {
    if (i) per += ' ';
    per += std::to_string(res.stats.accepted_per_iteration[i]);
  }
  std::cout << "accepted_per_iteration: " << per << "\n";
  if (cfg.mode == pdsim::VerifyMode::kGreedy) {
    const bool same = pdsim::plain_greedy_decode(prompt, a.max_new, target) == res.tokens;
    std::cout << "matches_plain_greedy: " << (same ? "yes" : "no") << "\n";
  }
  return kOk;
}

// --- loadplan -----------------------------------------------------------------

struct LoadplanArgs {
  std::string manifest_path;
  std::size_t world_size = 1;
  std::string overlap = "on";
  std::string shm_reuse = "on";
  std::optional<double> read_bw;
  std::optional<double> bcast_bw;
  std::optional<double> penalty;
  bool baseline = false;
  bool compare = false;
  std::string out;
};

int cmd_loadplan(const LoadplanArgs& a) {
  const auto manifest = pdsim::FileManifest::parse(pdsim::read_file(a.manifest_path));
  pdsim::IoParams p;
  p.overlap = a.overlap == "on";
  p.shm_reuse = a.shm_reuse == "on";
  if (a.read_bw) p.read_bandwidth = *a.read_bw;
  if (a.bcast_bw) p.broadcast_bandwidth = *a.bcast_bw;
  if (a.penalty) p.baseline_penalty = *a.penalty;

  const auto schedule =
      a.baseline ? pdsim::plan_baseline(manifest, p, a.world_size)
                 : pdsim::plan_timeline(pdsim::assign_files(manifest, a.world_size), manifest, p,
                                        a.world_size);
  const std::string text = schedule.to_text();
  if (a.out.empty()) {
    std::cout << text;
  } else {
    pdsim::write_file(a.out, text);
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "makespan: %.6f s", static_cast<double>(schedule.makespan) / 1e6);
  std::cout << buf << "\n";
  if (a.compare) {
    const auto r = pdsim::compare_strategies(manifest, p, a.world_size);
    std::snprintf(buf, sizeof(buf), "fileorder: %.6f s  baseline: %.6f s  speedup: %.4f",
                  static_cast<double>(r.fileorder_makespan) / 1e6,
                  static_cast<double>(r.baseline_makespan) / 1e6, r.speedup);
    std::cout << buf << "\n";
  }
  return kOk;
}

// --- trace --------------------------------------------------------------------

int cmd_trace(const std::string& profile, std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto recs = pdsim::synth_trace(pdsim::profile_by_name(profile), n, seed);
  const std::string text = pdsim::write_trace(recs);
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    pdsim::write_file(out, text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdsim: disaggregated inference cluster simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pdsim 0.1.0");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run the cluster simulation and write a report");
  s->add_option("-c,--config", sim.config_path, "JSON config file (defaults apply when omitted)");
  s->add_option("-t,--trace", sim.trace_path, "Trace file");
  s->add_option("-p,--profile", sim.profile, "Synthesize a trace from a profile (qa, merchant)");
  s->add_option("-n,--requests", sim.requests, "Requests to synthesize with --profile")
      ->check(CLI::PositiveNumber);
  s->add_option("-o,--out", sim.out, "Report output path (JSON lines)");
  s->add_option("--seed", sim.seed, "Seed; overrides the config file");
  s->add_option("--seeds", sim.seeds, "Seed range a..b, run in parallel, one report per seed");
  s->add_option("--policy", sim.policy, "cache_aware or random")
      ->check(CLI::IsMember({"cache_aware", "random"}));
  s->add_option("--topology", sim.topology, "disaggregated or fusion")
      ->check(CLI::IsMember({"disaggregated", "fusion"}));
  s->add_option("--semantics", sim.semantics, "global or strict")
      ->check(CLI::IsMember({"global", "strict"}));
  s->add_option("--prefill-workers", sim.prefill_workers, "Prefill worker count");
  s->add_option("--decode-workers", sim.decode_workers, "Decode worker count");
  s->add_flag("--speculative", sim.speculative, "Enable prompt-lookup speculative decoding");
  s->add_flag("--publish-immediately", sim.publish_immediately,
              "Publish new cache keys after each prefill batch instead of at KeySync");
  s->add_flag("--dump-config", sim.dump_config, "Print the effective config as JSON");
  s->add_flag("--summary", sim.summary, "Print the aligned-text summary to stdout");

  std::string hashes, snapshot, semantics = "global", remote;
  std::vector<std::uint32_t> workers;
  auto* m = app.add_subcommand("match", "Prefix-match a hash list against a cache snapshot");
  m->add_option("--hashes", hashes, "One hex block hash per line")->required();
  m->add_option("--snapshot", snapshot, "Unified cache map snapshot")->required();
  m->add_option("--semantics", semantics, "global or strict")
      ->check(CLI::IsMember({"global", "strict"}));
  m->add_option("--remote", remote, "Remote cache index snapshot");
  m->add_option("--workers", workers, "Workers to report even when absent")->delimiter(',');

  SpecdecArgs sd;
  auto* d = app.add_subcommand("specdec", "Speculative decoding with prompt lookup");
  d->add_option("--prompt", sd.prompt_path, "Whitespace-separated token ids")->required();
  d->add_option("--model", sd.model_path, "Target table model")->required();
  d->add_option("--draft-model", sd.draft_model_path, "Use a draft table model instead of prompt lookup");
  d->add_option("--mode", sd.mode, "greedy or stochastic")
      ->check(CLI::IsMember({"greedy", "stochastic"}));
  d->add_option("--k", sd.k, "Proposal length")->check(CLI::PositiveNumber);
  d->add_option("--ngram", sd.ngram, "Lookup n-gram length")->check(CLI::PositiveNumber);
  d->add_option("--seed", sd.seed, "RNG seed");
  d->add_option("--max-new", sd.max_new, "Tokens to generate");
  d->add_flag("--no-skip-initial", sd.no_skip_initial, "Search on the first iteration too");

  LoadplanArgs lp;
  auto* l = app.add_subcommand("loadplan", "Plan file-order model loading");
  l->add_option("--manifest", lp.manifest_path, "Manifest file")->required();
  l->add_option("--world-size", lp.world_size, "Number of ranks")->check(CLI::Range(std::size_t{1}, std::size_t{1} << 20));
  l->add_option("--overlap", lp.overlap, "on or off")->check(CLI::IsMember({"on", "off"}));
  l->add_option("--shm-reuse", lp.shm_reuse, "on or off")->check(CLI::IsMember({"on", "off"}));
  l->add_option("--read-bw", lp.read_bw, "Read bandwidth, bytes/s")->check(CLI::PositiveNumber);
  l->add_option("--bcast-bw", lp.bcast_bw, "Broadcast bandwidth, bytes/s")->check(CLI::PositiveNumber);
  l->add_option("--penalty", lp.penalty, "Baseline non-sequential read penalty");
  l->add_flag("--baseline", lp.baseline, "Plan the structure-driven baseline instead");
  l->add_flag("--compare", lp.compare, "Also print file-order vs baseline makespans");
  l->add_option("-o,--out", lp.out, "Write the schedule here instead of stdout");

  std::string profile = "qa", trace_out;
  std::size_t n = 1000;
  std::uint64_t trace_seed = 1;
  auto* t = app.add_subcommand("trace", "Synthesize a workload trace");
  t->add_option("--profile", profile, "qa or merchant");
  t->add_option("-n,--requests", n, "Number of requests")->check(CLI::PositiveNumber);
  t->add_option("--seed", trace_seed, "Seed");
  t->add_option("-o,--out", trace_out, "Output path, '-' for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*m) return cmd_match(hashes, snapshot, semantics, remote, workers);
    if (*d) return cmd_specdec(sd);
    if (*l) return cmd_loadplan(lp);
    if (*t) return cmd_trace(profile, n, trace_seed, trace_out);
  } catch (const pdsim::Error& e) {
    std::cerr << "pdsim: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "pdsim: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
