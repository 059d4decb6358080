#include "training.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace mdlrs {

namespace {

constexpr std::uint64_t kSplitTag = 101;
constexpr std::uint64_t kShuffleTag = 102;

}  // namespace

void validate(const TrainConfig& c) {
  require(c.base_lr > 0.0, ErrorKind::Config, "base_lr must be positive");
  require(c.power >= 0.0, ErrorKind::Config, "power must be non-negative");
  require(c.lr_update_interval_epochs >= 1, ErrorKind::Config,
          "lr_update_interval_epochs must be at least 1");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, ErrorKind::Config, "beta1 must lie in [0,1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, ErrorKind::Config, "beta2 must lie in [0,1)");
  require(c.adam_eps > 0.0, ErrorKind::Config, "adam_eps must be positive");
  require(c.batch_size >= 2, ErrorKind::Config, "batch_size must be at least 2");
  require(c.l2_coeff >= 0.0, ErrorKind::Config, "l2_coeff must be non-negative");
  require(c.recon_weight >= 0.0, ErrorKind::Config, "recon_weight must be non-negative");
  require(c.max_epochs >= 1, ErrorKind::Config, "max_epochs must be at least 1");
  require(c.patience >= 0, ErrorKind::Config, "patience must be non-negative");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, ErrorKind::Config,
          "val_fraction must lie strictly between 0 and 1");
}

double lr_at(int epoch, const TrainConfig& config) {
  require(epoch >= 0 && epoch <= config.max_epochs, ErrorKind::Argument,
          "epoch " + std::to_string(epoch) + " outside [0, " +
              std::to_string(config.max_epochs) + "]");
  const int interval = config.lr_update_interval_epochs;
  const int k = epoch / interval;
  const double fraction =
      static_cast<double>(k * interval) / static_cast<double>(config.max_epochs);
  return config.base_lr * std::pow(std::max(0.0, 1.0 - fraction), config.power);
}

template <class T>
void adam_step(std::span<BasicTensor<T>* const> params, std::span<const BasicTensor<T>* const> grads,
               OptimizerState<T>& state, double lr, const AdamHyper& hyper) {
  require(params.size() == grads.size(), ErrorKind::Dimension,
          "adam needs one gradient per parameter");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  require(state.m.size() == params.size(), ErrorKind::State,
          "optimizer state does not match the parameter list");
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    BasicTensor<T>& p = *params[i];
    const BasicTensor<T>& g = *grads[i];
    BasicTensor<T>& m = state.m[i];
    BasicTensor<T>& v = state.v[i];
    require(p.shape() == g.shape() && m.shape() == p.shape(), ErrorKind::Dimension,
            "adam shape mismatch for parameter " + std::to_string(i));
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      p[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

template <class T>
void adam_step(Model<T>& model, OptimizerState<T>& state, double lr, const AdamHyper& hyper) {
  std::vector<BasicTensor<T>*> params;
  std::vector<const BasicTensor<T>*> grads;
  model.for_each_block([&](Block<T>& b, BlockSlot) {
    params.push_back(&b.params.W);
    grads.push_back(&b.grads.W);
    params.push_back(&b.params.b);
    grads.push_back(&b.grads.b);
    if (b.spec.has_bn) {
      params.push_back(&b.params.gamma);
      grads.push_back(&b.grads.gamma);
      params.push_back(&b.params.beta);
      grads.push_back(&b.grads.beta);
    }
  });
  adam_step<T>(params, grads, state, lr, hyper);
}

template <class T>
LabeledSet<T> LabeledSet<T>::subset(std::span<const std::size_t> indices) const {
  LabeledSet<T> s;
  s.num_classes = num_classes;
  if (!input.x1.empty()) s.input.x1 = gather_batch(input.x1, indices);
  if (!input.x2.empty()) s.input.x2 = gather_batch(input.x2, indices);
  s.labels.reserve(indices.size());
  for (std::size_t i : indices) s.labels.push_back(labels.at(i));
  return s;
}

template <class T>
BasicTensor<T> onehot_matrix(std::span<const int> labels, std::size_t num_classes) {
  BasicTensor<T> y({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    require(l >= 1 && static_cast<std::size_t>(l) <= num_classes, ErrorKind::Argument,
            "label " + std::to_string(l) + " outside 1.." + std::to_string(num_classes));
    y[i * num_classes + static_cast<std::size_t>(l - 1)] = T{1};
  }
  return y;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    std::span<const int> labels, std::size_t num_classes, double val_fraction, Prng& prng) {
  require(val_fraction > 0.0 && val_fraction < 1.0, ErrorKind::Config,
          "val_fraction must lie strictly between 0 and 1");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    require(l >= 1 && static_cast<std::size_t>(l) <= num_classes, ErrorKind::Argument,
            "label " + std::to_string(l) + " outside 1.." + std::to_string(num_classes));
    by_class[static_cast<std::size_t>(l - 1)].push_back(i);
  }
  std::vector<std::size_t> train, val;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    require(idx.size() >= 5, ErrorKind::Config,
            "class " + std::to_string(c + 1) + " has " + std::to_string(idx.size()) +
                " labeled samples; the split needs at least 5");
    prng.shuffle(std::span<std::size_t>(idx));
    const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idx.size())));
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

namespace {

// Batch boundaries; a trailing batch of one sample is merged into the
// previous batch since batch norm cannot train on it.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < n; start += size)
    ranges.emplace_back(start, std::min(start + size, n));
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
    ranges.pop_back();
    ranges.back().second = n;
  }
  return ranges;
}

template <class T>
std::pair<double, double> evaluate_validation(Model<T>& model, const LabeledSet<T>& val,
                                              const LossWeights& weights) {
  const bool recon = model.reconstruction_active(weights);
  auto f = model.forward(val.input, Mode::Infer, recon);
  const BasicTensor<T> y = onehot_matrix<T>(val.labels, val.num_classes);
  BasicTensor<T> tiled = y;
  if (f.num_rows > 1) {
    std::vector<BasicTensor<T>> parts(f.num_rows, y);
    tiled = concat_batch<T>(parts);
  }
  double loss = cross_entropy_loss(f.row_probs, tiled);
  if (recon)
    loss += weights.recon_weight *
            reconstruction_loss(reconstruction_target(val.input.x1),
                                reconstruction_target(val.input.x2), f.recon->first,
                                f.recon->second);
  const std::size_t c = val.num_classes;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const T* row = f.probs.ptr() + i * c;
    const auto pred = static_cast<int>(std::max_element(row, row + c) - row) + 1;
    correct += pred == val.labels[i];
  }
  return {loss, static_cast<double>(correct) / static_cast<double>(val.size())};
}

}  // namespace

template <class T>
TrainResult<T> train(Model<T> model, const LabeledSet<T>& train_set, const LabeledSet<T>& val_set,
                     const TrainConfig& config) {
  validate(config);
  require(train_set.size() >= 2, ErrorKind::Training, "need at least two training samples");
  require(val_set.size() >= 1, ErrorKind::Training, "need at least one validation sample");

  const LossWeights weights{config.l2_coeff, config.recon_weight};
  const AdamHyper hyper{config.beta1, config.beta2, config.adam_eps};
  OptimizerState<T> opt;
  Prng shuffler = Prng(config.seed).child(kShuffleTag);

  TrainResult<T> result;
  std::vector<std::size_t> order(train_set.size());
  int waited = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (auto [begin, end] : batch_ranges(order.size(), config.batch_size)) {
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const LabeledSet<T> batch = train_set.subset(idx);
      const LossBreakdown lb = model.loss_and_gradients(
          batch.input, onehot_matrix<T>(batch.labels, batch.num_classes), weights);
      const double total = lb.total();
      if (!std::isfinite(total))
        fail(ErrorKind::Training, "training diverged (non-finite loss) at epoch " +
                                      std::to_string(epoch + 1));
      loss_sum += total * static_cast<double>(end - begin);
      adam_step(model, opt, lr, hyper);
    }

    auto [val_loss, val_oa] = evaluate_validation(model, val_set, weights);
    if (!std::isfinite(val_loss))
      fail(ErrorKind::Training, "validation loss is non-finite at epoch " +
                                    std::to_string(epoch + 1));
    result.history.push_back(EpochRecord{epoch + 1, lr,
                                         loss_sum / static_cast<double>(train_set.size()),
                                         val_loss, val_oa});

    if (result.best_epoch < 0 || val_loss < result.best_val_loss) {
      result.best_epoch = epoch + 1;
      result.best_val_loss = val_loss;
      result.best_val_oa = val_oa;
      result.model = model;
      waited = 0;
    } else if (++waited > config.patience) {
      break;
    }
  }
  return result;
}

template <class T>
TrainResult<T> train(Model<T> model, const LabeledSet<T>& train_set, const TrainConfig& config) {
  validate(config);
  Prng splitter = Prng(config.seed).child(kSplitTag);
  auto [tr, va] =
      split_train_val(train_set.labels, train_set.num_classes, config.val_fraction, splitter);
  return train(std::move(model), train_set.subset(tr), train_set.subset(va), config);
}

#define MDLRS_INSTANTIATE_TRAINING(T)                                                            \
  template void adam_step<T>(std::span<BasicTensor<T>* const>,                                   \
                             std::span<const BasicTensor<T>* const>, OptimizerState<T>&, double, \
                             const AdamHyper&);                                                  \
  template void adam_step<T>(Model<T>&, OptimizerState<T>&, double, const AdamHyper&);           \
  template struct LabeledSet<T>;                                                                 \
  template BasicTensor<T> onehot_matrix<T>(std::span<const int>, std::size_t);                   \
  template TrainResult<T> train(Model<T>, const LabeledSet<T>&, const LabeledSet<T>&,            \
                                const TrainConfig&);                                             \
  template TrainResult<T> train(Model<T>, const LabeledSet<T>&, const TrainConfig&);

MDLRS_INSTANTIATE_TRAINING(float)
MDLRS_INSTANTIATE_TRAINING(double)

#undef MDLRS_INSTANTIATE_TRAINING

}  // namespace mdlrs
