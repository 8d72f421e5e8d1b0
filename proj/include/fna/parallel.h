// Copyright 2026 The fna Authors. All Rights Reserved.
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
#include <exception>

#include <omp.h>

namespace fna {

// Number of worker threads used inside operators. 1 means serial.
void set_num_threads(int n);
int num_threads();

// Runs f(i) for i in [0, n). Each index is handled by exactly one thread and
// no reduction crosses indices, so results do not depend on the thread count.
template <class F>
void parallel_for(std::int64_t n, std::int64_t work_per_item, F&& f) {
  const bool go_parallel = n > 1 && n * work_per_item >= (1 << 15);
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::int64_t i = 0; i < n; ++i) f(i);
}

// Coarse-grained loop over independent work items (clips, samples). The first
// exception thrown by any item is rethrown on the calling thread.
template <class F>
void parallel_items(std::int64_t n, F&& f) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (n > 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
#pragma omp critical(fna_parallel_items)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace fna
