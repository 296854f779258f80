#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace qaft::detail {

// Runs body(m) for m in [0, count), striding the indices over up to `threads` workers.
// The first exception thrown by a worker is rethrown after all workers join.
template <class Body>
void parallel_for(int count, int threads, Body body) {
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int m = 0; m < count; ++m) body(m);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int m = w; m < count; m += workers) body(m);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace qaft::detail
