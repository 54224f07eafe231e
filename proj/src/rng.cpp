#include "rrn/rng.hpp"

#include <algorithm>

namespace rrn {

std::vector<std::uint32_t> sample_without_replacement(Rng& rng,
                                                      std::uint32_t n,
                                                      std::uint32_t k) {
  std::vector<std::uint32_t> pool(n);
  for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
  k = std::min(k, n);
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint32_t j = i + static_cast<std::uint32_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace rrn
