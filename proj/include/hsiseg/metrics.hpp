#pragma once

// Confusion-derived segmentation metrics, Spearman rank correlation, coverage
// error and the (FPR, FNR) distance-to-ideal trade-off.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/cube.hpp"
#include "hsiseg/error.hpp"

namespace hsiseg::metrics {

// Rows are truth, columns are prediction.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kClassCount>, kClassCount> counts{};

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
    return t;
  }
  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kClassCount; ++i) t += counts[i][i];
    return t;
  }
  std::uint64_t truth_count(std::size_t k) const {
    return std::accumulate(counts[k].begin(), counts[k].end(), std::uint64_t{0});
  }
  std::uint64_t predicted_count(std::size_t k) const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < kClassCount; ++i) t += counts[i][k];
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < kClassCount; ++i)
      for (std::size_t j = 0; j < kClassCount; ++j) counts[i][j] += o.counts[i][j];
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) {
    throw ArgumentError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " truth labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= kClassCount || truth[i] >= kClassCount) throw ArgumentError("confusion: label out of range");
    ++cm.counts[truth[i]][pred[i]];
  }
  return cm;
}

inline ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth) {
  if (pred.height() != truth.height() || pred.width() != truth.width()) {
    throw ArgumentError("confusion: prediction is " + std::to_string(pred.height()) + "x" +
                        std::to_string(pred.width()) + ", truth is " + std::to_string(truth.height()) + "x" +
                        std::to_string(truth.width()));
  }
  return confusion(pred.labels(), truth.labels());
}

struct BinaryCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// One-vs-rest collapse for class k.
inline BinaryCounts binary_counts(const ConfusionMatrix& cm, std::size_t k) {
  if (k >= kClassCount) throw ArgumentError("class index out of range");
  BinaryCounts b;
  b.tp = cm.counts[k][k];
  b.fn = cm.truth_count(k) - b.tp;
  b.fp = cm.predicted_count(k) - b.tp;
  b.tn = cm.total() - b.tp - b.fn - b.fp;
  return b;
}

struct ClassBinaryRates {
  double tpr = 0, tnr = 0, fpr = 0, fnr = 0;
};

// The complements are computed from integer counts, so TPR+FNR and TNR+FPR
// are 1 up to a single rounding each.
inline ClassBinaryRates binary_rates(const ConfusionMatrix& cm, std::size_t k) {
  const auto b = binary_counts(cm, k);
  const std::uint64_t pos = b.tp + b.fn, neg = b.fp + b.tn;
  if (pos == 0) throw UndefinedMetricError(std::string("class ") + class_name(k) + " has no positive pixels");
  if (neg == 0) throw UndefinedMetricError(std::string("class ") + class_name(k) + " has no negative pixels");
  ClassBinaryRates r;
  r.tpr = static_cast<double>(b.tp) / static_cast<double>(pos);
  r.fnr = static_cast<double>(b.fn) / static_cast<double>(pos);
  r.tnr = static_cast<double>(b.tn) / static_cast<double>(neg);
  r.fpr = static_cast<double>(b.fp) / static_cast<double>(neg);
  return r;
}

inline double recall(const ConfusionMatrix& cm, std::size_t k) {
  const auto n = cm.truth_count(k);
  if (n == 0) throw UndefinedMetricError(std::string("class ") + class_name(k) + " has no truth pixels");
  return static_cast<double>(cm.counts[k][k]) / static_cast<double>(n);
}

// Unweighted mean of per-class recall.
inline double average_accuracy(const ConfusionMatrix& cm) {
  double s = 0;
  for (std::size_t k = 0; k < kClassCount; ++k) s += recall(cm, k);
  return s / static_cast<double>(kClassCount);
}

inline double overall_accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UndefinedMetricError("overall accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

// 2TP / (2TP + FP + FN); 0 when the denominator is 0.
inline double f1(const ConfusionMatrix& cm, std::size_t k) {
  const auto b = binary_counts(cm, k);
  const auto den = 2 * b.tp + b.fp + b.fn;
  return den == 0 ? 0.0 : 2.0 * static_cast<double>(b.tp) / static_cast<double>(den);
}

inline double macro_f1(const ConfusionMatrix& cm) {
  double s = 0;
  for (std::size_t k = 0; k < kClassCount; ++k) s += f1(cm, k);
  return s / static_cast<double>(kClassCount);
}

// Euclidean distance of (FPR, FNR) from the ideal origin.
inline double tradeoff_distance(double fpr, double fnr) { return std::hypot(fpr, fnr); }
inline double tradeoff_distance(const ClassBinaryRates& r) { return tradeoff_distance(r.fpr, r.fnr); }

// 1-based ranks; tied values share the mean of the positions they occupy.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("pearson: length mismatch");
  if (a.size() < 2) throw ArgumentError("pearson: need at least 2 items");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) throw UndefinedMetricError("correlation with a constant sequence");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Pearson correlation of the average ranks of `a` and `b`. Inputs may be ranks
// or raw scores; only their order matters.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("spearman: length mismatch");
  if (a.size() < 2) throw ArgumentError("spearman: need at least 2 items");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  return pearson(ra, rb);
}

// Mean absolute error between two equally long per-image coverage lists.
inline double coverage_mae(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ArgumentError("coverage_mae: length mismatch");
  if (predicted.empty()) throw ArgumentError("coverage_mae: no images");
  double s = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - truth[i]);
  return s / static_cast<double>(predicted.size());
}

// Everything derivable from one confusion matrix. Ratios that are undefined
// for the data (absent class) are left empty instead of throwing.
struct MetricsReport {
  ConfusionMatrix cm;
  std::optional<double> average_accuracy;
  double overall_accuracy = 0;
  std::array<double, kClassCount> f1{};
  double macro_f1 = 0;
  std::array<std::optional<ClassBinaryRates>, kClassCount> rates;
  std::array<std::optional<double>, kClassCount> distance;
};

inline MetricsReport report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.cm = cm;
  r.overall_accuracy = overall_accuracy(cm);
  bool all_present = true;
  for (std::size_t k = 0; k < kClassCount; ++k) {
    r.f1[k] = f1(cm, k);
    all_present = all_present && cm.truth_count(k) > 0;
    const auto b = binary_counts(cm, k);
    if (b.tp + b.fn > 0 && b.fp + b.tn > 0) {
      r.rates[k] = binary_rates(cm, k);
      r.distance[k] = tradeoff_distance(*r.rates[k]);
    }
  }
  r.macro_f1 = macro_f1(cm);
  if (all_present) r.average_accuracy = average_accuracy(cm);
  return r;
}

namespace detail {
inline void put(std::ostream& os, const char* metric, const char* cls, std::optional<double> v) {
  os << metric << ',' << cls << ',';
  if (v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    os << buf;
  } else {
    os << "undefined";
  }
  os << '\n';
}
}  // namespace detail

// "metric,class,value" lines; class is "all" for aggregate metrics.
inline void write_report(std::ostream& os, const MetricsReport& r) {
  os << "metric,class,value\n";
  detail::put(os, "average_accuracy", "all", r.average_accuracy);
  detail::put(os, "overall_accuracy", "all", r.overall_accuracy);
  detail::put(os, "macro_f1", "all", r.macro_f1);
  for (std::size_t k = 0; k < kClassCount; ++k) {
    const char* c = class_name(k);
    detail::put(os, "f1", c, r.f1[k]);
    const auto& rt = r.rates[k];
    detail::put(os, "tpr", c, rt ? std::optional(rt->tpr) : std::nullopt);
    detail::put(os, "tnr", c, rt ? std::optional(rt->tnr) : std::nullopt);
    detail::put(os, "fpr", c, rt ? std::optional(rt->fpr) : std::nullopt);
    detail::put(os, "fnr", c, rt ? std::optional(rt->fnr) : std::nullopt);
    detail::put(os, "tradeoff_distance", c, r.distance[k]);
  }
}

}  // namespace hsiseg::metrics
