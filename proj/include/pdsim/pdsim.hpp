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

#include "pdsim/cache_managers.hpp"
#include "pdsim/cluster_sim.hpp"
#include "pdsim/config.hpp"
#include "pdsim/core_types.hpp"
#include "pdsim/cost_model.hpp"
#include "pdsim/error.hpp"
#include "pdsim/load_planner.hpp"
#include "pdsim/metrics.hpp"
#include "pdsim/rng.hpp"
#include "pdsim/scheduler.hpp"
#include "pdsim/spec_decode.hpp"
#include "pdsim/text_io.hpp"
#include "pdsim/tiered_cache.hpp"
#include "pdsim/workload.hpp"
