#pragma once

// Finite-difference checks of single blocks and of whole fused models, in
// float64. Each call draws one random small configuration.

#include <string>
#include <vector>

#include "funet.hpp"
#include "losses.hpp"
#include "support.hpp"
#include "training.hpp"

namespace testing_support {

enum class BlockCase { FC, Conv3x3, Conv1x1, BatchNorm, ReLU, Sigmoid, SoftmaxCE, MaxPool, AvgPool };

inline const char* to_string(BlockCase c) {
  switch (c) {
    case BlockCase::FC: return "fc";
    case BlockCase::Conv3x3: return "conv3x3";
    case BlockCase::Conv1x1: return "conv1x1";
    case BlockCase::BatchNorm: return "batchnorm";
    case BlockCase::ReLU: return "relu";
    case BlockCase::Sigmoid: return "sigmoid";
    case BlockCase::SoftmaxCE: return "softmax+ce";
    case BlockCase::MaxPool: return "maxpool";
    case BlockCase::AvgPool: return "avgpool";
  }
  return "?";
}

inline constexpr BlockCase kAllBlockCases[] = {
    BlockCase::FC,      BlockCase::Conv3x3,   BlockCase::Conv1x1,
    BlockCase::BatchNorm, BlockCase::ReLU,    BlockCase::Sigmoid,
    BlockCase::SoftmaxCE, BlockCase::MaxPool, BlockCase::AvgPool};

// Makes biases, scales and shifts non-trivial so their gradients matter.
inline void jitter_params(mdlrs::LayerParams<double>& p, Prng& rng) {
  for (std::size_t i = 0; i < p.b.size(); ++i) p.b[i] = 0.3 * rng.normal();
  for (std::size_t i = 0; i < p.gamma.size(); ++i) p.gamma[i] = 1.0 + 0.3 * rng.normal();
  for (std::size_t i = 0; i < p.beta.size(); ++i) p.beta[i] = 0.3 * rng.normal();
}

inline GradCheck check_block_case(BlockCase which, Prng& rng) {
  using namespace mdlrs;
  BlockSpec spec;
  spec.has_bn = false;
  spec.activation = Activation::None;
  spec.in_width = 1 + rng.below(5);
  spec.out_width = 1 + rng.below(5);
  bool spatial = false;
  switch (which) {
    case BlockCase::FC: spec.kind = BlockKind::FC; break;
    case BlockCase::Conv3x3: spec.kind = BlockKind::Conv3x3; spatial = true; break;
    case BlockCase::Conv1x1: spec.kind = BlockKind::Conv1x1; spatial = true; break;
    case BlockCase::BatchNorm:
      spatial = rng.below(2) == 1;
      spec.kind = spatial ? BlockKind::Conv1x1 : BlockKind::FC;
      spec.has_bn = true;
      break;
    case BlockCase::ReLU: spec.activation = Activation::ReLU; break;
    case BlockCase::Sigmoid: spec.activation = Activation::Sigmoid; break;
    case BlockCase::SoftmaxCE:
      spec.activation = Activation::Softmax;
      spec.out_width = 2 + rng.below(4);
      break;
    case BlockCase::MaxPool:
    case BlockCase::AvgPool:
      spec.kind = BlockKind::Conv1x1;
      spec.pool = which == BlockCase::MaxPool ? Pooling::Max2 : Pooling::Avg2;
      spatial = true;
      break;
  }
  const std::size_t batch = 2 + rng.below(4);
  Shape in_shape = {batch, spec.in_width};
  if (spatial) in_shape = {batch, 1 + rng.below(6), 1 + rng.below(6), spec.in_width};

  LayerParams<double> params = init_block_params<double>(spec, rng);
  jitter_params(params, rng);
  Tensor64 x = random_tensor(in_shape, rng);
  const Shape out_shape = block_output_shape(spec, in_shape);
  const Tensor64 proj = random_tensor(out_shape, rng);
  const auto labels = random_labels(batch, spec.out_width, rng);
  const Tensor64 onehot = onehot_matrix<double>(labels, spec.out_width);
  const bool ce = which == BlockCase::SoftmaxCE;

  auto loss = [&]() {
    const Tensor64 y = block_forward(x, spec, params, Mode::Train);
    if (ce) return cross_entropy_loss(y, onehot);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
    return s;
  };

  BlockCache<double> cache;
  const Tensor64 y = block_forward(x, spec, params, Mode::Train, &cache);
  const GradientBundle<double> g =
      ce ? block_backward_from_preactivation(spec, params, cache,
                                             softmax_cross_entropy_grad(y, onehot))
         : block_backward(spec, params, cache, proj);

  const std::string tag = std::string(to_string(which)) + " ";
  GradCheck r;
  r.merge(check_tensor(loss, x, g.d_input, rng, 0, tag + "input"));
  r.merge(check_tensor(loss, params.W, g.d_params.W, rng, 0, tag + "W"));
  r.merge(check_tensor(loss, params.b, g.d_params.b, rng, 0, tag + "b"));
  if (spec.has_bn) {
    r.merge(check_tensor(loss, params.gamma, g.d_params.gamma, rng, 0, tag + "gamma"));
    r.merge(check_tensor(loss, params.beta, g.d_params.beta, rng, 0, tag + "beta"));
  }
  return r;
}

struct ModelCase {
  mdlrs::Flavor flavor;
  mdlrs::Architecture arch;
};

// Full-model check of the training loss (classification, weighted
// reconstruction and l2) against every trainable tensor, sampling up to
// coords_per_tensor entries of each.
inline GradCheck check_model_case(ModelCase mc, Prng& rng, std::size_t coords_per_tensor) {
  using namespace mdlrs;
  ModelSpec spec{mc.flavor, mc.arch, 1 + rng.below(3), 1 + rng.below(3), 2 + rng.below(3)};
  const std::size_t batch = 3 + rng.below(3);
  Model<double> model(spec, rng.next_u64());
  model.for_each_block([&](Block<double>& b, BlockSlot) { jitter_params(b.params, rng); });

  ModelInput<double> input;
  auto sample = [&](std::size_t d) {
    Shape s = mc.flavor == Flavor::CNN ? Shape{batch, kPatchSize, kPatchSize, d} : Shape{batch, d};
    Tensor64 t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
  };
  input.x1 = sample(spec.d1);
  input.x2 = sample(spec.d2);
  const Tensor64 onehot =
      onehot_matrix<double>(random_labels(batch, spec.num_classes, rng), spec.num_classes);
  const LossWeights weights{1e-3, mc.arch == Architecture::EnDe ? 0.5 : 0.0};

  model.loss_and_gradients(input, onehot, weights);
  std::vector<Tensor64*> params;
  std::vector<Tensor64> grads;
  std::vector<std::string> names;
  std::size_t index = 0;
  model.for_each_block([&](Block<double>& b, BlockSlot slot) {
    const std::string base = "s" + std::to_string(slot.stream) + (slot.decoder ? "dec" : "") +
                             "#" + std::to_string(index++) + ".";
    params.push_back(&b.params.W);
    grads.push_back(b.grads.W);
    names.push_back(base + "W");
    params.push_back(&b.params.b);
    grads.push_back(b.grads.b);
    names.push_back(base + "b");
    if (b.spec.has_bn) {
      params.push_back(&b.params.gamma);
      grads.push_back(b.grads.gamma);
      names.push_back(base + "gamma");
      params.push_back(&b.params.beta);
      grads.push_back(b.grads.beta);
      names.push_back(base + "beta");
    }
  });

  auto loss = [&]() { return model.loss(input, onehot, weights, Mode::Train).total(); };
  const std::string tag = std::string(to_string(mc.flavor)) + "/" + to_string(mc.arch) + " ";
  GradCheck r;
  for (std::size_t i = 0; i < params.size(); ++i)
    r.merge(check_tensor(loss, *params[i], grads[i], rng, coords_per_tensor, tag + names[i]));
  return r;
}

}  // namespace testing_support
