#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "metrics.hpp"
#include "support.hpp"

using namespace mdlrs;
using namespace testing_support;

namespace {

// Sample-by-sample evaluation without a confusion matrix.
struct BruteForce {
  double oa, aa, kappa;
};

BruteForce brute_force(const std::vector<int>& pred, const std::vector<int>& truth, int c) {
  double n = 0, hits = 0, aa_sum = 0, present = 0, pe = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) continue;
    n += 1;
    hits += pred[i] == truth[i];
  }
  for (int k = 1; k <= c; ++k) {
    double real = 0, predicted = 0, right = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == 0) continue;
      real += truth[i] == k;
      predicted += pred[i] == k;
      right += truth[i] == k && pred[i] == k;
    }
    if (real > 0) {
      aa_sum += right / real;
      present += 1;
    }
    pe += real * predicted;
  }
  pe /= n * n;
  return {hits / n, aa_sum / present, (hits / n - pe) / (1 - pe)};
}

}  // namespace

TEST(Confusion, WorkedFixture) {
  const std::vector<int> truth = {1, 1, 2, 2}, pred = {1, 2, 2, 2};
  const ConfusionMatrix m = confusion(pred, truth, 2);
  EXPECT_EQ(m.at(1, 1), 1u);
  EXPECT_EQ(m.at(1, 2), 1u);
  EXPECT_EQ(m.at(2, 1), 0u);
  EXPECT_EQ(m.at(2, 2), 2u);
  EXPECT_EQ(overall_accuracy(m), 0.75);
  EXPECT_EQ(average_accuracy(m), 0.75);
  // Pe = (2*1 + 2*3) / 16 = 0.5
  EXPECT_EQ(kappa(m), 0.5);
}

TEST(Confusion, UnlabeledTruthIsSkipped) {
  const std::vector<int> truth = {0, 1, 0, 2}, pred = {2, 1, 1, 2};
  const ConfusionMatrix m = confusion(pred, truth, 2);
  EXPECT_EQ(m.total(), 2u);
  EXPECT_EQ(overall_accuracy(m), 1.0);
}

TEST(Confusion, OrderDoesNotMatter) {
  Prng rng(3);
  std::vector<int> truth(200), pred(200);
  for (std::size_t i = 0; i < 200; ++i) {
    truth[i] = 1 + static_cast<int>(rng.below(5));
    pred[i] = 1 + static_cast<int>(rng.below(5));
  }
  const ConfusionMatrix a = confusion(pred, truth, 5);
  std::vector<std::size_t> order(200);
  for (std::size_t i = 0; i < 200; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> t2, p2;
  for (std::size_t i : order) {
    t2.push_back(truth[i]);
    p2.push_back(pred[i]);
  }
  const ConfusionMatrix b = confusion(p2, t2, 5);
  for (int i = 1; i <= 5; ++i)
    for (int j = 1; j <= 5; ++j) EXPECT_EQ(a.at(i, j), b.at(i, j));
}

TEST(Confusion, BadLabelsAreArgumentErrors) {
  const std::vector<int> truth = {1, 3}, pred = {1, 1};
  EXPECT_EQ(error_kind([&] { confusion(pred, truth, 2); }), ErrorKind::Argument);
  const std::vector<int> pred_bad = {1, 0};
  const std::vector<int> truth_ok = {1, 2};
  EXPECT_EQ(error_kind([&] { confusion(pred_bad, truth_ok, 2); }), ErrorKind::Argument);
  const std::vector<int> shorter = {1};
  EXPECT_EQ(error_kind([&] { confusion(shorter, truth_ok, 2); }), ErrorKind::Dimension);
  EXPECT_EQ(error_kind([] { overall_accuracy(ConfusionMatrix(3)); }), ErrorKind::Argument);
}

TEST(Metrics, MatchBruteForceOnRandomPairs) {
  Prng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(15));
    const std::size_t n = 5 + rng.below(300);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(c) + 1));  // 0 = unlabeled
      // biased toward correct so kappa spans its range
      const int guess = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
      pred[i] = rng.uniform() < 0.6 && truth[i] != 0 ? truth[i] : guess;
    }
    if (std::count(truth.begin(), truth.end(), 0) == static_cast<long>(n)) truth[0] = 1;
    const ConfusionMatrix m = confusion(pred, truth, static_cast<std::size_t>(c));
    const BruteForce want = brute_force(pred, truth, c);
    EXPECT_NEAR(overall_accuracy(m), want.oa, 1e-12);
    EXPECT_NEAR(average_accuracy(m), want.aa, 1e-12);
    if (std::isfinite(want.kappa)) {
      EXPECT_NEAR(kappa(m), want.kappa, 1e-12);
    }
  }
}

TEST(Metrics, Properties) {
  Prng rng(18);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(6);
    const std::size_t n = 10 + rng.below(100);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = 1 + static_cast<int>(rng.below(c));
      pred[i] = 1 + static_cast<int>(rng.below(c));
    }
    const ConfusionMatrix m = confusion(pred, truth, c);
    const double oa = overall_accuracy(m), aa = average_accuracy(m);
    EXPECT_GE(oa, 0.0);
    EXPECT_LE(oa, 1.0);
    EXPECT_GE(aa, 0.0);
    EXPECT_LE(aa, 1.0);
    const auto k = error_kind([&] { kappa(m); });
    if (!k) {
      EXPECT_LE(kappa(m), 1.0);
      if (oa < 1.0) {
        EXPECT_LT(kappa(m), oa);
      }
    }
  }
}

TEST(Metrics, PerfectAndIndependentPredictions) {
  const std::vector<int> truth = {1, 2, 3, 1, 2, 3};
  const ConfusionMatrix perfect = confusion(truth, truth, 3);
  EXPECT_EQ(overall_accuracy(perfect), 1.0);
  EXPECT_EQ(kappa(perfect), 1.0);
  // Product-form counts: every truth class spread evenly over both predictions.
  const std::vector<int> t2 = {1, 1, 2, 2}, p2 = {1, 2, 1, 2};
  EXPECT_EQ(kappa(confusion(p2, t2, 2)), 0.0);
  const std::vector<int> wrong = {2, 3, 1, 2, 3, 1};
  EXPECT_EQ(overall_accuracy(confusion(wrong, truth, 3)), 0.0);
}

TEST(Metrics, BalancedClassesGiveAaEqualToOa) {
  Prng rng(19);
  std::vector<int> truth, pred;
  for (int k = 1; k <= 4; ++k)
    for (int i = 0; i < 25; ++i) {
      truth.push_back(k);
      pred.push_back(1 + static_cast<int>(rng.below(4)));
    }
  const ConfusionMatrix m = confusion(pred, truth, 4);
  EXPECT_NEAR(average_accuracy(m), overall_accuracy(m), 1e-15);
}

TEST(Metrics, AbsentClassExcludedFromAverage) {
  const std::vector<int> truth = {1, 1, 3, 3}, pred = {1, 2, 3, 3};
  const ConfusionMatrix m = confusion(pred, truth, 3);
  const auto per = per_class_accuracy(m);
  EXPECT_EQ(per[0], 0.5);
  EXPECT_FALSE(per[1].has_value());
  EXPECT_EQ(per[2], 1.0);
  EXPECT_EQ(average_accuracy(m), 0.75);
}

TEST(Metrics, KappaUndefinedForSingleClass) {
  const std::vector<int> truth = {2, 2, 2}, pred = {2, 2, 2};
  const ConfusionMatrix m = confusion(pred, truth, 3);
  EXPECT_EQ(error_kind([&] { kappa(m); }), ErrorKind::UndefinedValue);
  const MetricsReport r = make_report(m);
  EXPECT_FALSE(r.kappa.has_value());
  EXPECT_NE(format_report_text(r).find("kappa      --\n"), std::string::npos) << format_report_text(r);
}

TEST(Report, TextAndCsv) {
  // rows t1: {1,1,0}, t3: {1,0,3}; Pe = (2*2 + 4*3) / 36, kappa = (2/3 - 4/9) / (5/9) = 0.4
  const std::vector<int> truth = {1, 1, 3, 3, 3, 3}, pred = {1, 2, 3, 3, 3, 1};
  const MetricsReport r = make_report(confusion(pred, truth, 3));
  EXPECT_NEAR(*r.kappa, 0.4, 1e-15);
  EXPECT_EQ(format_report_csv(r),
            "class,accuracy\n1,50.00\n2,--\n3,75.00\nOA,66.67\nAA,62.50\nkappa,40.00\n");
  EXPECT_EQ(format_report_text(r),
            "class   1   50.00\n"
            "class   2      --\n"
            "class   3   75.00\n"
            "OA      66.67\n"
            "AA      62.50\n"
            "kappa   40.00\n");
}
