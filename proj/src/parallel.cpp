#include "dbps/parallel.hpp"

#include <time.h>

namespace dbps {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, std::uint64_t grid_point) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s = h ^ replicate;
  h = splitmix64(s);
  s = h ^ grid_point;
  return splitmix64(s);
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace dbps
