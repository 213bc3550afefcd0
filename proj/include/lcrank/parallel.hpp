#pragma once

#include "lcrank/types.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace lcrank {

/// Runs body(i) for i in [0, count) over `threads` workers (0 or 1 = inline).
/// Each worker owns a contiguous block, so bodies writing to slot i never race.
template <typename Body>
void parallel_for(Index count, int threads, Body&& body) {
  if (threads <= 1 || count < 2) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  const Index workers = std::min<Index>(threads, count);
  const Index chunk = (count + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const Index begin = w * chunk;
      const Index end = std::min(count, begin + chunk);
      try {
        for (Index i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lcrank
