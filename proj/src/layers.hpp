#pragma once

// Building blocks of the extraction and fusion networks. A block is
// linear map (FC or convolution) -> optional batch norm -> activation ->
// optional 2x2 pooling, with an exact reverse pass.

#include <cstddef>
#include <vector>

#include "prng.hpp"
#include "tensor.hpp"

namespace mdlrs {

enum class BlockKind { FC, Conv3x3, Conv1x1 };
enum class Activation { None, ReLU, Sigmoid, Softmax };
enum class Pooling { None, Max2, Avg2 };
enum class Mode { Train, Infer };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct BlockSpec {
  BlockKind kind = BlockKind::FC;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  bool has_bn = true;
  Activation activation = Activation::ReLU;
  Pooling pool = Pooling::None;

  bool is_conv() const noexcept { return kind != BlockKind::FC; }
  std::size_t kernel_extent() const noexcept { return kind == BlockKind::Conv3x3 ? 3 : 1; }

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

// Trainable state of one block. Fields a block kind does not use stay empty.
template <class T>
struct LayerParams {
  BasicTensor<T> W;
  BasicTensor<T> b;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  template <class U>
  LayerParams<U> cast() const {
    return {W.template cast<U>(),     b.template cast<U>(),
            gamma.template cast<U>(), beta.template cast<U>(),
            running_mean.template cast<U>(), running_var.template cast<U>()};
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <class T>
struct GradientBundle {
  BasicTensor<T> d_input;
  // W, b, gamma, beta only; running statistics carry no gradient.
  LayerParams<T> d_params;
};

template <class T>
struct BatchNormCache {
  BasicTensor<T> normalized;  // z-score before the affine step
  std::vector<T> inv_std;
};

template <class T>
struct BlockCache {
  Mode mode = Mode::Infer;
  BasicTensor<T> input;
  BatchNormCache<T> bn;
  BasicTensor<T> pre_activation;
  BasicTensor<T> activated;
  Shape pool_input_shape;
  std::vector<std::size_t> argmax;
};

// He-normal weights (std sqrt(2 / fan_in)), zero bias, unit scale, zero
// shift, running mean 0 and running variance 1.
template <class T>
LayerParams<T> init_block_params(const BlockSpec& spec, Prng& prng);

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BlockSpec& spec,
                              const LayerParams<T>& params);

// Per-channel normalization over every axis but the last. Train mode uses
// batch statistics and folds them into the running estimates.
template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& z, LayerParams<T>& params, Mode mode,
                                 BatchNormCache<T>* cache = nullptr);

template <class T>
BasicTensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& d_out, BasicTensor<T>& d_gamma,
                                  BasicTensor<T>& d_beta);

template <class T>
BasicTensor<T> activation_forward(const BasicTensor<T>& z, Activation kind);

// Gradient with respect to the activation input, given its output and the
// upstream gradient. ReLU'(0) is taken as 0.
template <class T>
BasicTensor<T> activation_backward(const BasicTensor<T>& pre, const BasicTensor<T>& out,
                                   Activation kind, const BasicTensor<T>& d_out);

template <class T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, const BlockSpec& spec,
                             LayerParams<T>& params, Mode mode, BlockCache<T>* cache = nullptr);

template <class T>
GradientBundle<T> block_backward(const BlockSpec& spec, const LayerParams<T>& params,
                                 const BlockCache<T>& cache, const BasicTensor<T>& d_output);

// Same as block_backward but d_pre is already the gradient with respect to
// the activation input. Used by the fused softmax/cross-entropy path.
template <class T>
GradientBundle<T> block_backward_from_preactivation(const BlockSpec& spec,
                                                    const LayerParams<T>& params,
                                                    const BlockCache<T>& cache,
                                                    const BasicTensor<T>& d_pre);

// Output shape of a block for a given input shape, without running it.
Shape block_output_shape(const BlockSpec& spec, const Shape& input);

}  // namespace mdlrs
