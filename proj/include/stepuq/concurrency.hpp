#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace stepuq {

/// Runs fn(i) for i in [0, n) on at most `max_workers` threads. fn must not
/// throw; callers capture per-task failures into their own result slots.
template <typename Fn>
void run_bounded(std::size_t n, int max_workers, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp<long long>(max_workers, 1, 256));
  if (n == 0) return;
  if (workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(std::min(workers, n));
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

}  // namespace stepuq
