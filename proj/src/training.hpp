#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "funet.hpp"

namespace mdlrs {

struct TrainConfig {
  double base_lr = 0.001;
  double power = 0.5;
  int lr_update_interval_epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 64;
  double l2_coeff = 1e-4;
  double recon_weight = 0.1;
  int max_epochs = 300;
  int patience = 20;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
};

void validate(const TrainConfig& config);

// Staircase polynomial decay:
//   base_lr * (1 - k * interval / max_epochs)^power,  k = floor(epoch / interval)
double lr_at(int epoch, const TrainConfig& config);

template <class T>
struct OptimizerState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  std::int64_t t = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a flat list of parameters. State tensors are
// created on the first call.
template <class T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               OptimizerState<T>& state, double lr, const AdamHyper& hyper = {});

// Adam over every trainable tensor of a model (W, b, gamma, beta).
template <class T>
void adam_step(Model<T>& model, OptimizerState<T>& state, double lr, const AdamHyper& hyper = {});

// Samples with inputs already laid out for a model, labels in 1..C.
template <class T>
struct LabeledSet {
  ModelInput<T> input;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  LabeledSet subset(std::span<const std::size_t> indices) const;
};

// [n,C] one-hot matrix for labels in 1..C.
template <class T>
BasicTensor<T> onehot_matrix(std::span<const int> labels, std::size_t num_classes);

// Stratified random split: per class, round(val_fraction * n) samples go to
// validation. Returns sorted (train, validation) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    std::span<const int> labels, std::size_t num_classes, double val_fraction, Prng& prng);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_oa = 0.0;
};

template <class T>
struct TrainResult {
  Model<T> model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double best_val_oa = 0.0;
};

// Mini-batch training with early stopping on the validation loss.
// Validation loss is classification (+ weighted reconstruction) without the
// l2 term, evaluated in inference mode.
template <class T>
TrainResult<T> train(Model<T> model, const LabeledSet<T>& train_set, const LabeledSet<T>& val_set,
                     const TrainConfig& config);

// Splits train_set 8:2 (config.val_fraction) with the config seed, then trains.
template <class T>
TrainResult<T> train(Model<T> model, const LabeledSet<T>& train_set, const TrainConfig& config);

}  // namespace mdlrs
