#include "losses.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace mdlrs {

namespace {

template <class T>
void check_onehot(const BasicTensor<T>& probs, const BasicTensor<T>& onehot) {
  require(probs.shape() == onehot.shape() && probs.rank() == 2, ErrorKind::Dimension,
          "probabilities " + shape_string(probs.shape()) + " and labels " +
              shape_string(onehot.shape()) + " must be matching [b,C] tensors");
  const std::size_t c = onehot.channels();
  for (std::size_t r = 0; r < onehot.rows(); ++r) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const T v = onehot[r * c + j];
      require(v == T{0} || v == T{1}, ErrorKind::Argument, "label rows must be one-hot");
      ones += v == T{1};
    }
    require(ones == 1, ErrorKind::Argument,
            "label row " + std::to_string(r) + " does not hold exactly one 1");
  }
}

}  // namespace

template <class T>
double cross_entropy_loss(const BasicTensor<T>& probs, const BasicTensor<T>& onehot) {
  check_onehot(probs, onehot);
  const std::size_t rows = probs.rows(), c = probs.channels();
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j)
      if (onehot[r * c + j] == T{1})
        sum -= std::log(std::max(static_cast<double>(probs[r * c + j]), kProbabilityFloor));
  return sum / static_cast<double>(rows);
}

template <class T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs,
                                          const BasicTensor<T>& onehot) {
  check_onehot(probs, onehot);
  BasicTensor<T> d(probs.shape());
  const T inv_rows = T{1} / static_cast<T>(probs.rows());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (probs[i] - onehot[i]) * inv_rows;
  return d;
}

template <class T>
double reconstruction_loss(const BasicTensor<T>& x1, const BasicTensor<T>& x2,
                           const BasicTensor<T>& recon1, const BasicTensor<T>& recon2) {
  auto term = [](const BasicTensor<T>& x, const BasicTensor<T>& r) {
    require(x.shape() == r.shape(), ErrorKind::Dimension,
            "reconstruction " + shape_string(r.shape()) + " does not match input " +
                shape_string(x.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(x[i]) - static_cast<double>(r[i]);
      s += d * d;
    }
    return s;
  };
  require(x1.batch() == x2.batch() && x1.batch() > 0, ErrorKind::Dimension,
          "reconstruction batches must be non-empty and equal");
  return (term(x1, recon1) + term(x2, recon2)) / static_cast<double>(x1.batch());
}

template <class T>
BasicTensor<T> reconstruction_grad(const BasicTensor<T>& x, const BasicTensor<T>& recon,
                                   double weight) {
  require(x.shape() == recon.shape(), ErrorKind::Dimension, "reconstruction shape mismatch");
  BasicTensor<T> d(x.shape());
  const T scale = static_cast<T>(2.0 * weight / static_cast<double>(x.batch()));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = scale * (recon[i] - x[i]);
  return d;
}

template <class T>
double l2_penalty(const std::vector<const BasicTensor<T>*>& weights, double coeff) {
  require(coeff >= 0.0, ErrorKind::Argument, "l2 coefficient must be non-negative");
  if (coeff == 0.0) return 0.0;
  double s = 0.0;
  for (const auto* w : weights)
    for (const T v : w->data()) s += static_cast<double>(v) * static_cast<double>(v);
  return coeff * s;
}

template <class T>
void add_l2_gradient(BasicTensor<T>& grad, const BasicTensor<T>& weight, double coeff) {
  if (coeff == 0.0) return;
  require(grad.shape() == weight.shape(), ErrorKind::Dimension, "l2 gradient shape mismatch");
  const T scale = static_cast<T>(2.0 * coeff);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += scale * weight[i];
}

#define MDLRS_INSTANTIATE_LOSSES(T)                                                              \
  template double cross_entropy_loss(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>&,                     \
                                                     const BasicTensor<T>&);                     \
  template double reconstruction_loss(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> reconstruction_grad(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                              double);                                           \
  template double l2_penalty(const std::vector<const BasicTensor<T>*>&, double);                 \
  template void add_l2_gradient(BasicTensor<T>&, const BasicTensor<T>&, double);

MDLRS_INSTANTIATE_LOSSES(float)
MDLRS_INSTANTIATE_LOSSES(double)

#undef MDLRS_INSTANTIATE_LOSSES

}  // namespace mdlrs
