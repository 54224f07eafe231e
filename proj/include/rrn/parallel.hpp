#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rrn {

// Fixed chunk size for all parallel reductions. Chunk boundaries never depend
// on the thread count, and partial results are merged in chunk order, so every
// reduction is bit-identical whether it runs on 1 or N threads.
inline constexpr std::size_t kChunk = 8192;

inline std::size_t chunk_count(std::size_t n) {
  return n == 0 ? 0 : (n - 1) / kChunk + 1;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// fn(chunk_index, begin, end) over [0, n) split into kChunk-sized chunks.
template <typename Fn>
void for_each_chunk(std::size_t n, int threads, Fn&& fn) {
  const std::size_t nchunks = chunk_count(n);
  if (nchunks == 0) return;
  const int nt = std::min<std::size_t>(resolve_threads(threads), nchunks);
  if (nt <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        fn(c, c * kChunk, std::min(n, (c + 1) * kChunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(nchunks);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt - 1);
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Ordered sum of per-chunk partials.
inline double reduce_ordered(const std::vector<double>& partials) {
  double s = 0.0;
  for (double p : partials) s += p;
  return s;
}

}  // namespace rrn
