#include "metrics.hpp"

#include <fmt/format.h>

#include "errors.hpp"

namespace mdlrs {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : c_(num_classes) {
  require(num_classes >= 1, ErrorKind::Argument, "confusion matrix needs at least one class");
  counts_.assign(c_ * c_, 0);
}

namespace {

std::size_t class_index(int label, std::size_t c, const char* what) {
  require(label >= 1 && static_cast<std::size_t>(label) <= c, ErrorKind::Argument,
          fmt::format("{} label {} outside 1..{}", what, label, c));
  return static_cast<std::size_t>(label - 1);
}

}  // namespace

void ConfusionMatrix::add(int truth, int predicted) {
  const std::size_t t = class_index(truth, c_, "true");
  const std::size_t p = class_index(predicted, c_, "predicted");
  ++counts_[t * c_ + p];
  ++total_;
}

std::uint64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_[class_index(truth, c_, "true") * c_ + class_index(predicted, c_, "predicted")];
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  const std::size_t t = class_index(truth, c_, "true");
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < c_; ++j) s += counts_[t * c_ + j];
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(int predicted) const {
  const std::size_t p = class_index(predicted, c_, "predicted");
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < c_; ++i) s += counts_[i * c_ + p];
  return s;
}

ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth,
                          std::size_t num_classes) {
  require(predicted.size() == truth.size(), ErrorKind::Dimension,
          fmt::format("{} predictions for {} ground-truth labels", predicted.size(), truth.size()));
  ConfusionMatrix m(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] != 0) m.add(truth[i], predicted[i]);
  return m;
}

double overall_accuracy(const ConfusionMatrix& m) {
  require(m.total() > 0, ErrorKind::Argument, "overall accuracy of an empty matrix");
  std::uint64_t diag = 0;
  for (std::size_t i = 1; i <= m.num_classes(); ++i)
    diag += m.at(static_cast<int>(i), static_cast<int>(i));
  return static_cast<double>(diag) / static_cast<double>(m.total());
}

std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& m) {
  std::vector<std::optional<double>> acc(m.num_classes());
  for (std::size_t i = 1; i <= m.num_classes(); ++i) {
    const int k = static_cast<int>(i);
    const std::uint64_t n = m.row_sum(k);
    if (n > 0) acc[i - 1] = static_cast<double>(m.at(k, k)) / static_cast<double>(n);
  }
  return acc;
}

double average_accuracy(const ConfusionMatrix& m) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& a : per_class_accuracy(m)) {
    if (!a) continue;
    sum += *a;
    ++present;
  }
  require(present > 0, ErrorKind::Argument, "average accuracy with no classes present");
  return sum / static_cast<double>(present);
}

double kappa(const ConfusionMatrix& m) {
  const double oa = overall_accuracy(m);
  const double n = static_cast<double>(m.total());
  double pe = 0.0;
  for (std::size_t i = 1; i <= m.num_classes(); ++i) {
    const int k = static_cast<int>(i);
    pe += static_cast<double>(m.row_sum(k)) * static_cast<double>(m.col_sum(k));
  }
  pe /= n * n;
  require(pe < 1.0, ErrorKind::UndefinedValue,
          "kappa is undefined when the chance agreement equals 1");
  return (oa - pe) / (1.0 - pe);
}

MetricsReport make_report(const ConfusionMatrix& m) {
  MetricsReport r;
  r.num_classes = m.num_classes();
  r.per_class = per_class_accuracy(m);
  r.oa = overall_accuracy(m);
  r.aa = average_accuracy(m);
  try {
    r.kappa = kappa(m);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedValue) throw;
  }
  return r;
}

namespace {

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

std::string pct(const std::optional<double>& v) { return v ? pct(*v) : std::string("--"); }

}  // namespace

std::string format_report_text(const MetricsReport& r) {
  std::string out;
  for (std::size_t i = 0; i < r.per_class.size(); ++i)
    out += fmt::format("class {:>3}  {:>6}\n", i + 1, pct(r.per_class[i]));
  out += fmt::format("OA     {:>6}\n", pct(r.oa));
  out += fmt::format("AA     {:>6}\n", pct(r.aa));
  out += fmt::format("kappa  {:>6}\n", pct(r.kappa));
  return out;
}

std::string format_report_csv(const MetricsReport& r) {
  std::string out = "class,accuracy\n";
  for (std::size_t i = 0; i < r.per_class.size(); ++i)
    out += fmt::format("{},{}\n", i + 1, pct(r.per_class[i]));
  out += fmt::format("OA,{}\nAA,{}\nkappa,{}\n", pct(r.oa), pct(r.aa), pct(r.kappa));
  return out;
}

}  // namespace mdlrs
