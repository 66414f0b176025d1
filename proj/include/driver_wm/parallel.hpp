#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace dwm {

/// Runs fn(i) for i in [0, n) on `lanes` threads. Each index is visited
/// exactly once; callers write results into per-index slots and reduce them
/// in index order afterwards, so the outcome does not depend on scheduling.
/// The first exception thrown by any fn is rethrown.
inline void parallel_for(std::size_t n, std::size_t lanes, const std::function<void(std::size_t)>& fn) {
  lanes = std::max<std::size_t>(1, std::min(lanes, n));
  if (lanes == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(lanes);
  for (std::size_t w = 0; w < lanes; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dwm
