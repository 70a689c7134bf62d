#include "splat/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace splat {

void parallel_chunks(std::size_t n, int chunks,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
  if (n == 0 || chunks <= 0) return;
  const int effective = static_cast<int>(std::min<std::size_t>(chunks, n));

  auto bounds = [&](int c) {
    // Even split; the first (n % effective) chunks get one extra element.
    const std::size_t base = n / effective, extra = n % effective;
    const std::size_t begin = c * base + std::min<std::size_t>(c, extra);
    return std::pair<std::size_t, std::size_t>(begin, begin + base + (c < static_cast<int>(extra) ? 1 : 0));
  };

  unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(),
                                        static_cast<unsigned>(effective));
  if (workers <= 1) {
    for (int c = 0; c < effective; ++c) {
      auto [b, e] = bounds(c);
      fn(c, b, e);
    }
    return;
  }

  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (int c = next.fetch_add(1); c < effective; c = next.fetch_add(1)) {
        auto [b, e] = bounds(c);
        fn(c, b, e);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace splat
