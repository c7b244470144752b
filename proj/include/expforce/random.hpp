#pragma once

#include <cstdint>
#include <random>

namespace expforce {

/// Seeded generator whose derived draws are bit-identical across standard
/// libraries. std::mt19937_64 output is fully specified, but the standard
/// distributions are not, so uniform/normal/bounded draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();                    // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  std::uint64_t below(std::uint64_t n);  // [0, n), unbiased
  double normal();                       // standard normal, Box-Muller

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Combines a run seed with a stream label into a new independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace expforce
