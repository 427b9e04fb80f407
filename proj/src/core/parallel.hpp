// Copyright 2026 The ebmflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>

namespace ebmflow {

// Worker cap: EBMFLOW_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs body(begin, end) over contiguous chunks of [0, n) on up to
// worker_count() threads. Chunk boundaries depend only on n and the worker
// count; callers write results by index and reduce in fixed order afterwards.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace ebmflow
