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

// Smallest end-to-end use of the library: synthesize a qa trace, run it
// under both routing policies and print the headline numbers.

#include <cstdio>

#include "pdsim/pdsim.hpp"

int main() {
  const auto trace = pdsim::synth_trace(pdsim::qa_profile(), 300, 42);

  pdsim::SimConfig cfg;
  cfg.seed = 42;
  for (auto policy : {pdsim::SchedulingPolicy::kRandom, pdsim::SchedulingPolicy::kCacheAware}) {
    cfg.policy = policy;
    const auto rep = pdsim::simulate(trace, cfg).report;
    const auto& a = rep.aggregates;
    std::printf("%-12s reuse %6.1f tok  hit %5.1f%%  ttft p95 %7.2f ms  e2e p95 %7.2f ms\n",
                policy == pdsim::SchedulingPolicy::kRandom ? "random" : "cache_aware",
                a.mean_reuse_tokens, a.cache_hit_rate_pct, a.ttft_p95_ms, a.e2e_p95_ms);
  }

  // Prefix matching against a hand-built unified map.
  std::vector<pdsim::TokenId> tokens(200);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<pdsim::TokenId>(i % 97);
  const auto keys = pdsim::generate_hash_keys(tokens);
  pdsim::UnifiedCacheMap map;
  pdsim::WorkerCacheDelta delta{1, 0, 1, {{keys[0], {}}, {keys[1], {}}}, {}};
  map.apply_delta(delta);
  const auto m = pdsim::prefix_match(keys, map);
  std::printf("worker 1 matches %zu of %zu blocks\n", m.length_for(1), keys.size());
  return 0;
}
