// Copyright 2026 The ChaosLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "chaoslab/error.hpp"
#include "chaoslab/experiment.hpp"
#include "chaoslab/faults.hpp"
#include "chaoslab/hash.hpp"
#include "chaoslab/metrics.hpp"
#include "chaoslab/rng.hpp"
#include "chaoslab/scheduler.hpp"
#include "chaoslab/sim.hpp"
#include "chaoslab/topology.hpp"
