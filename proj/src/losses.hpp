#pragma once

#include <vector>

#include "tensor.hpp"

namespace mdlrs {

inline constexpr double kProbabilityFloor = 1e-12;

// -(1/rows) * sum of log p(true class), probabilities clamped at 1e-12.
// Every label row must be one-hot.
template <class T>
double cross_entropy_loss(const BasicTensor<T>& probs, const BasicTensor<T>& onehot);

// Gradient of cross_entropy_loss(softmax(z)) with respect to z: (p - y)/rows.
template <class T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs,
                                          const BasicTensor<T>& onehot);

// Sum over modalities of ||x_s - recon_s||_F^2, divided by the batch size.
template <class T>
double reconstruction_loss(const BasicTensor<T>& x1, const BasicTensor<T>& x2,
                           const BasicTensor<T>& recon1, const BasicTensor<T>& recon2);

// d/d(recon) of ||x - recon||_F^2 / batch, scaled by weight.
template <class T>
BasicTensor<T> reconstruction_grad(const BasicTensor<T>& x, const BasicTensor<T>& recon,
                                   double weight);

// coeff * sum of squared entries over the given weight tensors.
template <class T>
double l2_penalty(const std::vector<const BasicTensor<T>*>& weights, double coeff);

// grad += 2 * coeff * weight
template <class T>
void add_l2_gradient(BasicTensor<T>& grad, const BasicTensor<T>& weight, double coeff);

}  // namespace mdlrs
