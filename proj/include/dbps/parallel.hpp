#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace dbps {

/// One step of the splitmix64 generator; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed for replicate r at grid point g, a pure function of (master, r, g).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t grid_point);

/// CPU time consumed by the calling thread, in seconds.
double thread_cpu_seconds();

/// Runs task(i) for i in [0, n) on up to `workers` threads. Tasks write their
/// results into caller-owned slots indexed by i, so the outcome does not depend
/// on scheduling. The exception of the lowest failing index is rethrown.
template <typename Task>
void parallel_for(std::size_t n, std::size_t workers, Task&& task) {
  if (n == 0) return;
  if (workers < 1) workers = 1;
  if (workers > n) workers = n;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace dbps
