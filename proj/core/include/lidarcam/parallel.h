/*
 * Copyright 2026 The lidarcam Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LIDARCAM_PARALLEL_H_
#define LIDARCAM_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lidarcam {

// Runs fn(begin, end) over fixed-size blocks of [0, count). Block boundaries
// depend only on `count` and `block_size`, never on `threads`, so any
// per-block reduction merged in block order gives identical results for
// every worker count.
inline void ParallelForBlocks(
    std::size_t count, std::size_t block_size, int threads,
    const std::function<void(std::size_t block, std::size_t begin,
                             std::size_t end)>& fn) {
  if (count == 0) return;
  block_size = std::max<std::size_t>(block_size, 1);
  const std::size_t blocks = (count + block_size - 1) / block_size;
  const std::size_t workers = std::clamp<std::size_t>(
      threads < 1 ? 1 : static_cast<std::size_t>(threads), 1, blocks);

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    fn(b, begin, std::min(count, begin + block_size));
  };
  if (workers == 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = w; b < blocks; b += workers) run_block(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::size_t BlockCount(std::size_t count, std::size_t block_size) {
  return count == 0 ? 0 : (count + block_size - 1) / block_size;
}

inline int DefaultThreadCount() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace lidarcam

#endif  // LIDARCAM_PARALLEL_H_
