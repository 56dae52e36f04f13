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

#include "pdsim/core_types.hpp"
#include "pdsim/tiered_cache.hpp"

namespace pdsim {

// Scalar stand-in for model size, parallelism and hardware.
struct CostModel {
  double prefill_tokens_per_sec = 10000.0;
  Micros prefill_overhead_us = 2000;
  // Contention scale of a prefill batch; 0 disables the batch term.
  double prefill_capacity_tokens = 0.0;
  Micros decode_us_per_token = 10000;
  // Relative slowdown per additional concurrent decode token.
  double decode_contention = 0.0;
  std::uint64_t kv_bytes_per_token = 57344;

  std::uint64_t block_bytes(std::size_t block_size) const noexcept {
    return kv_bytes_per_token * block_size;
  }

  double prefill_contention(double batch_tokens) const noexcept {
    return prefill_capacity_tokens > 0.0 ? 1.0 + batch_tokens / prefill_capacity_tokens : 1.0;
  }

  // Compute time for `tokens` uncached prompt tokens, overhead included.
  Micros prefill_time(std::size_t tokens, double batch_tokens = 0.0) const noexcept {
    const double compute_us = static_cast<double>(tokens) * 1e6 / prefill_tokens_per_sec;
    return round_us(static_cast<double>(prefill_overhead_us) +
                    compute_us * prefill_contention(batch_tokens));
  }

  // One decode iteration with `concurrent_tokens` tokens scored batch-wide.
  Micros decode_step_time(std::size_t concurrent_tokens) const noexcept {
    const double extra = concurrent_tokens > 1 ? static_cast<double>(concurrent_tokens - 1) : 0.0;
    return round_us(static_cast<double>(decode_us_per_token) * (1.0 + decode_contention * extra));
  }
};

}  // namespace pdsim
