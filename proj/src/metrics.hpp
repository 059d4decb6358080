#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdlrs {

// Rows are ground truth, columns predictions; classes are 1..C and label 0
// (unlabeled) never enters the matrix.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(int truth, int predicted);

  std::size_t num_classes() const noexcept { return c_; }
  std::uint64_t at(int truth, int predicted) const;
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int predicted) const;

 private:
  std::size_t c_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// Pairs with truth 0 are skipped.
ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth,
                          std::size_t num_classes);

double overall_accuracy(const ConfusionMatrix& m);

// Per-class recall; empty for classes with no ground-truth samples.
std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& m);

// Mean of the per-class recalls over classes present in the ground truth.
double average_accuracy(const ConfusionMatrix& m);

// (OA - Pe) / (1 - Pe) with Pe = sum_i row_i * col_i / N^2.
double kappa(const ConfusionMatrix& m);

struct MetricsReport {
  std::size_t num_classes = 0;
  std::vector<std::optional<double>> per_class;
  double oa = 0.0;
  double aa = 0.0;
  std::optional<double> kappa;  // empty when undefined
};

MetricsReport make_report(const ConfusionMatrix& m);

// Percentages with two decimals (kappa scaled by 100 as well); absent
// classes print as "--".
std::string format_report_text(const MetricsReport& r);
std::string format_report_csv(const MetricsReport& r);

}  // namespace mdlrs
