#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace oodkit::parallel {

inline int& thread_count_ref() {
  static int count = 1;
  return count;
}

// Degree of parallelism used by the per-sample loops. Affects speed only:
// work is split into fixed-size blocks with disjoint output slots, and all
// reductions happen sequentially over stored per-element values, so results
// are identical for every thread count.
inline void set_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }

inline int threads() { return thread_count_ref(); }

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(begin, end) over [0, n) in blocks. Blocks are a fixed size so the
// partitioning does not depend on the thread count.
template <typename Fn>
void for_blocks(std::size_t n, Fn&& fn) {
  constexpr std::size_t kBlock = 1024;
  const int workers = threads();
  if (n == 0) return;
  if (workers <= 1 || n <= kBlock) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t num_blocks = (n + kBlock - 1) / kBlock;
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= num_blocks) break;
      const std::size_t begin = b * kBlock;
      const std::size_t end = begin + kBlock < n ? begin + kBlock : n;
      fn(begin, end);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t spawn =
      static_cast<std::size_t>(workers) < num_blocks ? static_cast<std::size_t>(workers) : num_blocks;
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
}

// Runs fn(i) for i in [0, n), one task per index. Meant for coarse-grained
// work such as one cluster pair per task.
template <typename Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  const int workers = threads();
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t spawn =
      static_cast<std::size_t>(workers) < n ? static_cast<std::size_t>(workers) : n;
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
}

}  // namespace oodkit::parallel
