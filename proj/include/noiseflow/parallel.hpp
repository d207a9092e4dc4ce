// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NOISEFLOW_PARALLEL_HPP_
#define NOISEFLOW_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace nflow {

/// Worker count from NF_THREADS, else the number of available cores.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) over a static partition of worker threads.
/// Callers write results into per-index slots, so the outcome does not depend
/// on the worker count. The exception thrown for the lowest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nflow

#endif  // NOISEFLOW_PARALLEL_HPP_
