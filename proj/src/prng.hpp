#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "tensor.hpp"

namespace mdlrs {

// Seedable generator with a platform-independent output sequence.
//
// The engine is std::mt19937_64, whose output is fixed by the standard.
// The standard distributions are not (their algorithms are left to the
// library), so uniform, integer and Gaussian draws are derived here:
// 53-bit uniform doubles, Lemire rejection for bounded integers, and the
// Box-Muller transform for normals.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  double normal();

  // Independent generator for a named purpose, derived from the seed only.
  Prng child(std::uint64_t tag) const;

  template <class T>
  BasicTensor<T> normal_tensor(Shape shape, double mean, double stddev);

  template <class Index>
  void shuffle(std::span<Index> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace mdlrs
