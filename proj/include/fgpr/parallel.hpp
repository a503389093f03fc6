#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fgpr::detail {

inline int hardware_threads() {
  const unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1 : static_cast<int>(h);
}

// Runs fn(b) for every block index in [0, nblocks). Blocks are claimed
// atomically, so fn must write only block-local state; reductions over block
// results stay deterministic when combined in block order afterwards.
inline void parallel_for_blocks(int nblocks, const std::function<void(int)>& fn, int threads = 0) {
  if (threads <= 0) threads = hardware_threads();
  threads = std::min(threads, nblocks);
  if (threads <= 1) {
    for (int b = 0; b < nblocks; ++b) fn(b);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int b = next.fetch_add(1);
      if (b >= nblocks) return;
      try {
        fn(b);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fgpr::detail
