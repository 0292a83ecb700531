#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace lingrad::detail {

// Runs fn(k) for k in [0, n) on up to `workers` threads with contiguous
// chunks. Results must be written to per-index slots by the caller so that
// reductions stay in a fixed order.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  const std::size_t count = std::min<std::size_t>(workers, n);
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w * n / count; k < (w + 1) * n / count; ++k) fn(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lingrad::detail
