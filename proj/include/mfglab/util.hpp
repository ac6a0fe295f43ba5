#pragma once

// Chunked parallel loop for independent sweep rows. Results must be written
// to pre-sized slots so the assembly order (and hence every emitted byte) is
// independent of the thread count.

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace mfg {

inline void parallel_for_rows(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += jobs) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace mfg
