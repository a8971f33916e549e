// Copyright 2026 xdistill authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>

namespace xd {

// Worker cap: XD_THREADS if set (minimum 1), else hardware concurrency.
int worker_thread_cap();

// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges
// across at most worker_thread_cap() threads. Callers must only write to
// per-index slots; results are then independent of the thread schedule.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace xd
