#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "errors.hpp"
#include "losses.hpp"
#include "support.hpp"
#include "training.hpp"

using namespace mdlrs;
using namespace testing_support;

namespace {

// Two tight clusters, linearly separable in both
// modalities: class 1 near (0.2, 0.2), class 2 near (0.8, 0.8).
LabeledSet<float> separable_set(std::size_t per_class, Prng& rng) {
  LabeledSet<float> s;
  s.num_classes = 2;
  const std::size_t n = 2 * per_class;
  s.input.x1 = Tensor({n, 2});
  s.input.x2 = Tensor({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < per_class ? 1 : 2;
    const float centre = label == 1 ? 0.2f : 0.8f;
    for (std::size_t j = 0; j < 2; ++j) {
      s.input.x1[2 * i + j] = centre + 0.1f * static_cast<float>(rng.uniform() - 0.5);
      s.input.x2[2 * i + j] = centre + 0.1f * static_cast<float>(rng.uniform() - 0.5);
    }
    s.labels.push_back(label);
  }
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.max_epochs = 60;
  c.patience = 100;
  c.base_lr = 0.01;
  c.seed = 3;
  return c;
}

std::vector<float> flat_params(const Model<float>& m) {
  std::vector<float> out;
  m.for_each_block([&](const Block<float>& b, BlockSlot) {
    for (const Tensor* t : {&b.params.W, &b.params.b, &b.params.gamma, &b.params.beta,
                            &b.params.running_mean, &b.params.running_var})
      out.insert(out.end(), t->data().begin(), t->data().end());
  });
  return out;
}

}  // namespace

TEST(Losses, CrossEntropyExamples) {
  EXPECT_EQ(cross_entropy_loss(Tensor64({1, 2}, {1.0, 0.0}), Tensor64({1, 2}, {1.0, 0.0})), 0.0);
  EXPECT_NEAR(cross_entropy_loss(Tensor64({1, 4}, {0.25, 0.25, 0.25, 0.25}),
                                 Tensor64({1, 4}, {0, 1, 0, 0})),
              std::log(4.0), 1e-15);
  EXPECT_NEAR(cross_entropy_loss(Tensor64({2, 2}, {1.0, 0.0, 0.5, 0.5}),
                                 Tensor64({2, 2}, {1, 0, 0, 1})),
              std::log(2.0) / 2, 1e-15);
  // zero probability is clamped rather than infinite
  EXPECT_NEAR(cross_entropy_loss(Tensor64({1, 2}, {0.0, 1.0}), Tensor64({1, 2}, {1, 0})),
              -std::log(kProbabilityFloor), 1e-9);
  EXPECT_EQ(error_kind([] {
              cross_entropy_loss(Tensor64({1, 2}, {0.5, 0.5}), Tensor64({1, 2}, {1, 1}));
            }),
            ErrorKind::Argument);
}

TEST(Losses, ReconstructionExamples) {
  const Tensor64 x1({1, 2}, {1.0, 0.0}), zero1({1, 2});
  const Tensor64 x2({1, 3}, {0.5, 0.5, 0.0}), r2({1, 3}, {0.0, 0.5, 1.0});
  EXPECT_EQ(reconstruction_loss(x1, x2, x1, x2), 0.0);
  EXPECT_EQ(reconstruction_loss(x1, x2, zero1, x2), 1.0);
  const double both = reconstruction_loss(x1, x2, zero1, r2);
  EXPECT_NEAR(both, reconstruction_loss(x1, x2, zero1, x2) + reconstruction_loss(x1, x2, x1, r2),
              1e-15);
  EXPECT_NEAR(both, 1.0 + 0.25 + 1.0, 1e-15);
  EXPECT_EQ(error_kind([&] { reconstruction_loss(x1, x2, x2, x2); }), ErrorKind::Dimension);
}

TEST(Losses, L2PenaltyAndGradient) {
  const Tensor64 w({2}, {3.0, 4.0});
  EXPECT_EQ(l2_penalty<double>({&w}, 0.0), 0.0);
  EXPECT_EQ(l2_penalty<double>({&w}, 1.0), 25.0);
  Prng rng(4);
  Tensor64 v = random_tensor({3, 4}, rng);
  Tensor64 g({3, 4});
  add_l2_gradient(g, v, 0.3);
  auto loss = [&] { return l2_penalty<double>({&v}, 0.3); };
  EXPECT_TRUE(check_tensor(loss, v, g, rng, 0, "w").ok());
}

TEST(Schedule, PinnedValues) {
  TrainConfig c;
  EXPECT_EQ(lr_at(0, c), 0.001);
  EXPECT_EQ(lr_at(29, c), 0.001);
  // k = 3: 0.001 * (1 - 90/300)^0.5
  EXPECT_NEAR(lr_at(108, c), 0.001 * std::sqrt(0.7), 1e-15);
  EXPECT_NEAR(lr_at(30, c), 0.001 * std::sqrt(0.9), 1e-15);
  EXPECT_EQ(lr_at(300, c), 0.0);
}

TEST(Schedule, StaircaseAndMonotone) {
  Prng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    TrainConfig c;
    c.max_epochs = 30 + static_cast<int>(rng.below(400));
    c.lr_update_interval_epochs = 1 + static_cast<int>(rng.below(40));
    c.base_lr = 1e-4 + rng.uniform() * 1e-2;
    double prev = lr_at(0, c);
    EXPECT_EQ(prev, c.base_lr);
    for (int e = 1; e <= c.max_epochs; ++e) {
      const double lr = lr_at(e, c);
      EXPECT_LE(lr, prev);
      if (e % c.lr_update_interval_epochs != 0) {
        EXPECT_EQ(lr, prev) << "epoch " << e;
      }
      prev = lr;
    }
  }
}

TEST(Schedule, RejectsEpochOutsideRange) {
  TrainConfig c;
  EXPECT_EQ(error_kind([&] { lr_at(301, c); }), ErrorKind::Argument);
  EXPECT_EQ(error_kind([&] { lr_at(-1, c); }), ErrorKind::Argument);
}

TEST(Adam, MatchesHandRolledUpdates) {
  Prng rng(9);
  Tensor64 p = random_tensor({5}, rng);
  std::vector<double> ref(p.data().begin(), p.data().end()), m(5, 0.0), v(5, 0.0);
  OptimizerState<double> st;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 4; ++t) {
    const Tensor64 g = random_tensor({5}, rng);
    Tensor64* ps[] = {&p};
    const Tensor64* gs[] = {&g};
    adam_step<double>(ps, gs, st, lr);
    for (std::size_t i = 0; i < 5; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(p[i], ref[i], 1e-14);
      EXPECT_GE(st.v[0][i], 0.0);
    }
  }
  EXPECT_EQ(st.t, 4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor64 p({3}, {1.0, 1.0, 1.0});
  const Tensor64 g({3}, {2.5, -0.01, 0.0});
  OptimizerState<double> st;
  Tensor64* ps[] = {&p};
  const Tensor64* gs[] = {&g};
  adam_step<double>(ps, gs, st, 0.001);
  EXPECT_NEAR(p[0], 1.0 - 0.001, 1e-9);
  EXPECT_NEAR(p[1], 1.0 + 0.001, 1e-6);
  EXPECT_EQ(p[2], 1.0);
  for (int i = 0; i < 10; ++i) adam_step<double>(ps, gs, st, 0.001);
  EXPECT_EQ(st.m[0].shape(), p.shape());
  EXPECT_EQ(p[2], 1.0);
}

TEST(Split, EightyTwentyPerClass) {
  std::vector<int> labels(100, 1);
  Prng rng(1);
  auto [tr, va] = split_train_val(labels, 1, 0.2, rng);
  EXPECT_EQ(tr.size(), 80u);
  EXPECT_EQ(va.size(), 20u);
}

TEST(Split, DisjointCoveringStratified) {
  Prng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 2 + rng.below(5);
    std::vector<int> labels;
    std::vector<std::size_t> per(c);
    for (std::size_t k = 0; k < c; ++k) {
      per[k] = 5 + rng.below(40);
      for (std::size_t i = 0; i < per[k]; ++i) labels.push_back(static_cast<int>(k + 1));
    }
    rng.shuffle(std::span<int>(labels));
    auto [tr, va] = split_train_val(labels, c, 0.2, rng);
    std::set<std::size_t> all(tr.begin(), tr.end());
    for (std::size_t i : va) EXPECT_TRUE(all.insert(i).second) << "index " << i << " in both";
    EXPECT_EQ(all.size(), labels.size());
    std::vector<std::size_t> val_per(c);
    for (std::size_t i : va) ++val_per[static_cast<std::size_t>(labels[i] - 1)];
    for (std::size_t k = 0; k < c; ++k)
      EXPECT_EQ(val_per[k], static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(per[k]))));
  }
}

TEST(Split, SeedsGiveDifferentSplits) {
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3) + 1;
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Prng rng(seed);
    seen.insert(split_train_val(labels, 3, 0.2, rng).second);
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(Split, TooFewSamplesIsConfigError) {
  const std::vector<int> labels = {1, 1, 1, 1, 1, 2, 2, 2, 2};
  Prng rng(0);
  EXPECT_EQ(error_kind([&] { split_train_val(labels, 2, 0.2, rng); }), ErrorKind::Config);
}

TEST(Train, SeparableToyReachesFullTrainingAccuracy) {
  Prng rng(10);
  const LabeledSet<float> data = separable_set(40, rng);
  TrainConfig c = small_config();
  c.max_epochs = 200;
  c.patience = 200;
  auto r = train(Model<float>({Flavor::FC, Architecture::Middle, 2, 2, 2}, 1), data, c);
  ASSERT_LE(r.history.size(), 200u);
  const Tensor probs = r.model.predict(data.input);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    correct += (probs[2 * i + 1] > probs[2 * i] ? 2 : 1) == data.labels[i];
  EXPECT_EQ(correct, data.size());
}

TEST(Train, HistoryAndBestEpoch) {
  Prng rng(11);
  const LabeledSet<float> data = separable_set(30, rng);
  const TrainConfig c = small_config();
  auto r = train(Model<float>({Flavor::FC, Architecture::Late, 2, 2, 2}, 2), data, c);
  ASSERT_FALSE(r.history.empty());
  EXPECT_LE(r.history.size(), static_cast<std::size_t>(c.max_epochs));
  EXPECT_LE(r.best_val_loss, r.history.front().val_loss);
  double best = INFINITY;
  for (const auto& e : r.history) best = std::min(best, e.val_loss);
  EXPECT_EQ(r.best_val_loss, best);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_loss, best);
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_EQ(r.history[i].epoch, static_cast<int>(i + 1));
    EXPECT_EQ(r.history[i].lr, lr_at(static_cast<int>(i), c));
  }
}

TEST(Train, ZeroPatienceStopsAtFirstNonImprovingEpoch) {
  Prng rng(12);
  const LabeledSet<float> data = separable_set(30, rng);
  TrainConfig c = small_config();
  c.patience = 0;
  c.max_epochs = 300;
  auto r = train(Model<float>({Flavor::FC, Architecture::Early, 2, 2, 2}, 3), data, c);
  const auto& h = r.history;
  ASSERT_GE(h.size(), 2u);
  for (std::size_t i = 1; i + 1 < h.size(); ++i) EXPECT_LT(h[i].val_loss, h[i - 1].val_loss);
  EXPECT_GE(h.back().val_loss, h[h.size() - 2].val_loss);
  EXPECT_EQ(r.best_epoch, static_cast<int>(h.size()) - 1);
}

TEST(Train, PatienceCountsEpochsWithoutImprovement) {
  Prng rng(13);
  const LabeledSet<float> data = separable_set(30, rng);
  TrainConfig c = small_config();
  c.patience = 3;
  c.max_epochs = 300;
  c.base_lr = 0.05;
  auto r = train(Model<float>({Flavor::FC, Architecture::Middle, 2, 2, 2}, 4), data, c);
  ASSERT_LT(r.history.size(), 300u);
  EXPECT_EQ(r.history.size(), static_cast<std::size_t>(r.best_epoch + c.patience + 1));
}

TEST(Train, SameSeedIsBitIdentical) {
  Prng rng(14);
  const LabeledSet<float> data = separable_set(25, rng);
  TrainConfig c = small_config();
  c.max_epochs = 8;
  for (auto arch : {Architecture::Middle, Architecture::Cross, Architecture::EnDe}) {
    const ModelSpec spec{Flavor::FC, arch, 2, 2, 2};
    auto a = train(Model<float>(spec, 5), data, c);
    auto b = train(Model<float>(spec, 5), data, c);
    EXPECT_EQ(flat_params(a.model), flat_params(b.model));
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i)
      EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    c.seed += 1;
    auto d = train(Model<float>(spec, 5), data, c);
    EXPECT_NE(flat_params(a.model), flat_params(d.model));
    c.seed -= 1;
  }
}

TEST(Train, DivergenceNamesTheEpoch) {
  Prng rng(15);
  LabeledSet<float> data = separable_set(20, rng);
  data.input.x1[0] = NAN;
  const TrainConfig c = small_config();
  try {
    train(Model<float>({Flavor::FC, Architecture::Middle, 2, 2, 2}, 6), data, c);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Training);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.val_fraction = 1.0;
  EXPECT_EQ(error_kind([&] { validate(c); }), ErrorKind::Config);
  c = {};
  c.base_lr = 0.0;
  EXPECT_EQ(error_kind([&] { validate(c); }), ErrorKind::Config);
  c = {};
  c.batch_size = 1;
  EXPECT_EQ(error_kind([&] { validate(c); }), ErrorKind::Config);
}
