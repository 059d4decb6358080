#pragma once

// Shared helpers for the unit and acceptance tests: finite-difference
// gradient checks, naive reference kernels, temporary directories.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <unistd.h>

#include "errors.hpp"
#include "funet.hpp"
#include "prng.hpp"
#include "tensor.hpp"

namespace testing_support {

using mdlrs::Prng;
using mdlrs::Tensor64;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
// Denominator floor: below it the comparison is absolute (1e-7), which is
// still well above double-precision difference noise at h = 1e-5.
inline constexpr double kGradFloor = 1e-3;
// Largest share of checked coordinates that may be set aside as kinks.
inline constexpr double kMaxKinkShare = 0.02;

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheck {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // coordinates whose difference window straddles a kink
  std::string worst;

  void merge(const GradCheck& o) {
    if (o.max_error > max_error) {
      max_error = o.max_error;
      worst = o.worst;
    }
    checked += o.checked;
    kinks += o.kinks;
  }
  bool ok() const {
    return checked > 0 && max_error <= kGradTolerance &&
           static_cast<double>(kinks) <= kMaxKinkShare * static_cast<double>(checked);
  }
};

// ReLU and max pooling are piecewise smooth. When a +-h step crosses a
// breakpoint the central difference averages two different slopes. Such a
// coordinate is set aside as a kink only if the analytic value is one of
// the one-sided slopes (or between them): a wrong gradient still fails.
inline bool straddles_kink(double down, double mid, double up, double h, double analytic) {
  const double right = (up - mid) / h, left = (mid - down) / h;
  const double scale = std::max({std::abs(right), std::abs(left), kGradFloor});
  const double slack = kGradTolerance * scale;
  return std::abs(right - left) > slack && analytic >= std::min(left, right) - slack &&
         analytic <= std::max(left, right) + slack;
}

// Central differences on selected entries of `param` against `analytic`.
// max_coords == 0 checks every entry, otherwise a random sample.
inline GradCheck check_tensor(const std::function<double()>& loss, Tensor64& param,
                              const Tensor64& analytic, Prng& prng, std::size_t max_coords,
                              const std::string& name) {
  GradCheck r;
  if (param.empty()) return r;
  if (analytic.shape() != param.shape()) {
    r.max_error = INFINITY;
    r.checked = 1;
    r.worst = name + ": gradient shape " + mdlrs::shape_string(analytic.shape()) +
              " vs parameter " + mdlrs::shape_string(param.shape());
    return r;
  }
  const std::size_t n = param.size();
  const std::size_t count = max_coords == 0 ? n : std::min(n, max_coords);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = max_coords == 0 ? k : static_cast<std::size_t>(prng.below(n));
    const double saved = param[i];
    param[i] = saved + kFdStep;
    const double up = loss();
    param[i] = saved - kFdStep;
    const double down = loss();
    param[i] = saved;
    const double numeric = (up - down) / (2.0 * kFdStep);
    double e = relative_error(analytic[i], numeric);
    ++r.checked;
    if (e > kGradTolerance) {
      // A kink can sit inside the window. Smaller steps (down to 1e-7, still
      // far above rounding noise for O(1) losses) step off it and are just
      // as valid a comparison; a wrong analytic value stays wrong at any step.
      const double mid = loss();
      bool kink = straddles_kink(down, mid, up, kFdStep, analytic[i]);
      for (double h = kFdStep / 10; h >= kFdStep / 100 && e > kGradTolerance; h /= 10) {
        param[i] = saved + h;
        const double up_fine = loss();
        param[i] = saved - h;
        const double down_fine = loss();
        param[i] = saved;
        e = std::min(e, relative_error(analytic[i], (up_fine - down_fine) / (2.0 * h)));
        kink = kink || straddles_kink(down_fine, mid, up_fine, h, analytic[i]);
      }
      if (e > kGradTolerance && kink) {
        ++r.kinks;
        continue;
      }
    }
    if (e > r.max_error || std::isnan(e)) {
      r.max_error = std::isnan(e) ? INFINITY : e;
      r.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) +
                " numeric " + std::to_string(numeric);
    }
  }
  return r;
}

// Kind of the mdlrs::Error thrown by f, empty when nothing is thrown.
template <class F>
std::optional<mdlrs::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const mdlrs::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline Tensor64 random_tensor(mdlrs::Shape shape, Prng& prng, double scale = 1.0) {
  Tensor64 t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * prng.normal();
  return t;
}

// Labels 1..C, every class at least once when b >= C.
inline std::vector<int> random_labels(std::size_t b, std::size_t c, Prng& prng) {
  std::vector<int> y(b);
  for (std::size_t i = 0; i < b; ++i)
    y[i] = static_cast<int>(i < c ? i : prng.below(c)) + 1;
  return y;
}

// Reference cross-correlation with zero 'same' padding, straight loops.
template <class T>
mdlrs::BasicTensor<T> naive_conv(const mdlrs::BasicTensor<T>& x, const mdlrs::BasicTensor<T>& k,
                                 const mdlrs::BasicTensor<T>& bias) {
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  mdlrs::BasicTensor<T> y({b, h, w, cout});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v) {
              const long r = static_cast<long>(i + u) - ph, c = static_cast<long>(j + v) - pw;
              if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w))
                continue;
              for (std::size_t ci = 0; ci < cin; ++ci)
                acc += static_cast<double>(
                           x[((n * h + static_cast<std::size_t>(r)) * w + static_cast<std::size_t>(c)) * cin + ci]) *
                       static_cast<double>(k[((u * kw + v) * cin + ci) * cout + o]);
            }
          y[((n * h + i) * w + j) * cout + o] = static_cast<T>(acc);
        }
  return y;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mdlrs_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
