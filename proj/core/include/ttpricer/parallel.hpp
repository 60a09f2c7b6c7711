#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ttpricer {

/// Worker budget: TTPRICER_THREADS if set, otherwise the hardware count.
inline int worker_count() {
  if (const char* env = std::getenv("TTPRICER_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs fn(block, begin, end) over a fixed partition of [0, n) into
/// worker_count() contiguous blocks. The partition depends only on the
/// worker count, so per-block reductions combined in block order are
/// reproducible at a given parallelism level.
template <typename Fn>
void parallel_blocks(std::int64_t n, Fn&& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), std::max<std::int64_t>(n, 1));
  if (workers <= 1 || n < 2) {
    fn(0, std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int b = 0; b < workers; ++b) {
    const std::int64_t begin = n * b / workers;
    const std::int64_t end = n * (b + 1) / workers;
    pool.emplace_back([&fn, b, begin, end]() { fn(b, begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ttpricer
