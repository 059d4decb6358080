#include "prng.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace mdlrs {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Prng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Prng::below(std::uint64_t bound) {
  require(bound > 0, ErrorKind::Argument, "Prng::below needs a positive bound");
  // Lemire's multiply-shift with rejection; unbiased.
  unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(engine_()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Prng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Prng Prng::child(std::uint64_t tag) const {
  return Prng(mix_seed(seed_, tag));
}

template <class T>
BasicTensor<T> Prng::normal_tensor(Shape shape, double mean, double stddev) {
  require(stddev >= 0.0, ErrorKind::Argument,
          "normal stddev must be non-negative, got " + std::to_string(stddev));
  BasicTensor<T> out(std::move(shape));
  for (auto& v : out.data()) v = static_cast<T>(mean + stddev * normal());
  return out;
}

template BasicTensor<float> Prng::normal_tensor<float>(Shape, double, double);
template BasicTensor<double> Prng::normal_tensor<double>(Shape, double, double);

}  // namespace mdlrs
