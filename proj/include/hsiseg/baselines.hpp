#pragma once

// Classical per-pixel classifiers: Gaussian naive Bayes, LDA, QDA and a
// multinomial logistic model trained by plain SGD. All operate on PixelBatch
// rows; estimates are computed in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/cube.hpp"
#include "hsiseg/error.hpp"
#include "hsiseg/rng.hpp"

namespace hsiseg::baselines {

inline constexpr double kVarianceFloor = 1e-9;
inline constexpr double kRidgeScale = 1e-6;

namespace detail {

inline void check_data(const PixelBatch& x, std::span<const std::uint8_t> y, std::size_t classes) {
  if (classes < 2) throw ArgumentError("need at least 2 classes");
  if (x.count == 0 || x.channels == 0) throw ArgumentError("empty training data");
  if (y.size() != x.count) throw ArgumentError("label count does not match pixel count");
  if (x.values.size() != x.count * x.channels) throw ArgumentError("pixel batch payload size mismatch");
  for (auto v : y) {
    if (v >= classes) throw ArgumentError("label " + std::to_string(v) + " outside " + std::to_string(classes) + " classes");
  }
}

inline std::vector<std::size_t> class_counts(std::span<const std::uint8_t> y, std::size_t classes) {
  std::vector<std::size_t> n(classes, 0);
  for (auto v : y) ++n[v];
  for (std::size_t k = 0; k < classes; ++k) {
    if (n[k] == 0) throw ArgumentError("class " + std::to_string(k) + " is absent from the training data");
  }
  return n;
}

inline std::vector<double> class_means(const PixelBatch& x, std::span<const std::uint8_t> y,
                                       const std::vector<std::size_t>& n) {
  const std::size_t c = x.channels;
  std::vector<double> mu(n.size() * c, 0.0);
  for (std::size_t i = 0; i < x.count; ++i) {
    for (std::size_t j = 0; j < c; ++j) mu[y[i] * c + j] += x.values[i * c + j];
  }
  for (std::size_t k = 0; k < n.size(); ++k) {
    for (std::size_t j = 0; j < c; ++j) mu[k * c + j] /= static_cast<double>(n[k]);
  }
  return mu;
}

inline void add_ridge(std::vector<double>& cov, std::size_t dim) {
  double trace = 0;
  for (std::size_t i = 0; i < dim; ++i) trace += cov[i * dim + i];
  const double eps = kRidgeScale * trace / static_cast<double>(dim);
  for (std::size_t i = 0; i < dim; ++i) cov[i * dim + i] += eps;
}

template <typename Scores>
std::vector<std::uint8_t> argmax_rows(const PixelBatch& x, std::size_t classes, Scores&& score) {
  std::vector<std::uint8_t> out(x.count);
  std::vector<double> s(classes);
  for (std::size_t i = 0; i < x.count; ++i) {
    score(x.row(i), s);
    std::size_t best = 0;
    for (std::size_t k = 1; k < classes; ++k) {
      if (s[k] > s[best]) best = k;
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

inline void check_predict(const PixelBatch& x, std::size_t channels) {
  if (x.channels != channels) {
    throw ArgumentError("model expects " + std::to_string(channels) + " channels, got " + std::to_string(x.channels));
  }
}

}  // namespace detail

// Lower-triangular L with A = L L^T for a dense symmetric (dim x dim) matrix.
class Cholesky {
 public:
  Cholesky() = default;
  Cholesky(const std::vector<double>& a, std::size_t dim) : dim_(dim), l_(dim * dim, 0.0) {
    for (std::size_t j = 0; j < dim; ++j) {
      double d = a[j * dim + j];
      for (std::size_t k = 0; k < j; ++k) d -= l_[j * dim + k] * l_[j * dim + k];
      if (!(d > 0.0) || !std::isfinite(d)) throw NumericError("covariance is not positive definite");
      const double ljj = std::sqrt(d);
      l_[j * dim + j] = ljj;
      for (std::size_t i = j + 1; i < dim; ++i) {
        double s = a[i * dim + j];
        for (std::size_t k = 0; k < j; ++k) s -= l_[i * dim + k] * l_[j * dim + k];
        l_[i * dim + j] = s / ljj;
      }
    }
  }

  std::size_t dim() const { return dim_; }

  double log_det() const {
    double s = 0;
    for (std::size_t i = 0; i < dim_; ++i) s += std::log(l_[i * dim_ + i]);
    return 2.0 * s;
  }

  // Solves L z = b in place.
  void forward_solve(std::vector<double>& b) const {
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_[i * dim_ + k] * b[k];
      b[i] = s / l_[i * dim_ + i];
    }
  }

  // Solves A x = b.
  std::vector<double> solve(std::vector<double> b) const {
    forward_solve(b);
    for (std::size_t ii = dim_; ii-- > 0;) {
      double s = b[ii];
      for (std::size_t k = ii + 1; k < dim_; ++k) s -= l_[k * dim_ + ii] * b[k];
      b[ii] = s / l_[ii * dim_ + ii];
    }
    return b;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> l_;
};

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

struct GaussianNBModel {
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> priors;     // (K)
  std::vector<double> means;      // (K, C)
  std::vector<double> variances;  // (K, C), each >= kVarianceFloor
};

inline GaussianNBModel nb_fit(const PixelBatch& x, std::span<const std::uint8_t> y, std::size_t classes) {
  detail::check_data(x, y, classes);
  const auto n = detail::class_counts(y, classes);
  const std::size_t c = x.channels;
  GaussianNBModel m;
  m.channels = c;
  m.classes = classes;
  m.means = detail::class_means(x, y, n);
  m.variances.assign(classes * c, 0.0);
  for (std::size_t i = 0; i < x.count; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x.values[i * c + j] - m.means[y[i] * c + j];
      m.variances[y[i] * c + j] += d * d;
    }
  }
  for (std::size_t k = 0; k < classes; ++k) {
    m.priors.push_back(static_cast<double>(n[k]) / static_cast<double>(x.count));
    for (std::size_t j = 0; j < c; ++j) {
      auto& v = m.variances[k * c + j];
      v = std::max(v / static_cast<double>(n[k]), kVarianceFloor);
    }
  }
  return m;
}

inline void nb_log_posterior(const GaussianNBModel& m, std::span<const float> px, std::vector<double>& out) {
  const std::size_t c = m.channels;
  out.assign(m.classes, 0.0);
  for (std::size_t k = 0; k < m.classes; ++k) {
    double s = std::log(m.priors[k]);
    for (std::size_t j = 0; j < c; ++j) {
      const double v = m.variances[k * c + j];
      const double d = px[j] - m.means[k * c + j];
      s -= 0.5 * (std::log(2.0 * std::numbers::pi * v) + d * d / v);
    }
    out[k] = s;
  }
}

inline std::vector<std::uint8_t> nb_predict(const GaussianNBModel& m, const PixelBatch& x) {
  detail::check_predict(x, m.channels);
  return detail::argmax_rows(x, m.classes, [&](std::span<const float> px, std::vector<double>& s) {
    nb_log_posterior(m, px, s);
  });
}

// ---------------------------------------------------------------------------
// Linear discriminant analysis: shared ridge-regularised covariance.

struct LdaModel {
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> priors;      // (K)
  std::vector<double> means;       // (K, C)
  std::vector<double> covariance;  // (C, C), ridge already added

  // Derived by lda_prepare: Sigma^-1 mu_k and the class offsets.
  std::vector<double> coef;    // (K, C)
  std::vector<double> offset;  // (K)
};

inline void lda_prepare(LdaModel& m) {
  const std::size_t c = m.channels;
  const Cholesky chol(m.covariance, c);
  m.coef.assign(m.classes * c, 0.0);
  m.offset.assign(m.classes, 0.0);
  for (std::size_t k = 0; k < m.classes; ++k) {
    std::vector<double> mu(m.means.begin() + static_cast<std::ptrdiff_t>(k * c),
                           m.means.begin() + static_cast<std::ptrdiff_t>((k + 1) * c));
    const auto w = chol.solve(mu);
    double q = 0;
    for (std::size_t j = 0; j < c; ++j) q += w[j] * mu[j];
    std::copy(w.begin(), w.end(), m.coef.begin() + static_cast<std::ptrdiff_t>(k * c));
    m.offset[k] = -0.5 * q + std::log(m.priors[k]);
  }
}

inline LdaModel lda_fit(const PixelBatch& x, std::span<const std::uint8_t> y, std::size_t classes) {
  detail::check_data(x, y, classes);
  const auto n = detail::class_counts(y, classes);
  const std::size_t c = x.channels;
  LdaModel m;
  m.channels = c;
  m.classes = classes;
  m.means = detail::class_means(x, y, n);
  for (std::size_t k = 0; k < classes; ++k) m.priors.push_back(static_cast<double>(n[k]) / static_cast<double>(x.count));
  m.covariance.assign(c * c, 0.0);
  std::vector<double> d(c);
  for (std::size_t i = 0; i < x.count; ++i) {
    for (std::size_t j = 0; j < c; ++j) d[j] = x.values[i * c + j] - m.means[y[i] * c + j];
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) m.covariance[a * c + b] += d[a] * d[b];
  }
  for (auto& v : m.covariance) v /= static_cast<double>(x.count);
  detail::add_ridge(m.covariance, c);
  lda_prepare(m);
  return m;
}

inline void lda_scores(const LdaModel& m, std::span<const float> px, std::vector<double>& out) {
  out.assign(m.classes, 0.0);
  for (std::size_t k = 0; k < m.classes; ++k) {
    double s = m.offset[k];
    for (std::size_t j = 0; j < m.channels; ++j) s += m.coef[k * m.channels + j] * px[j];
    out[k] = s;
  }
}

inline std::vector<std::uint8_t> lda_predict(const LdaModel& m, const PixelBatch& x) {
  detail::check_predict(x, m.channels);
  return detail::argmax_rows(x, m.classes, [&](std::span<const float> px, std::vector<double>& s) {
    lda_scores(m, px, s);
  });
}

// ---------------------------------------------------------------------------
// Quadratic discriminant analysis: one ridge-regularised covariance per class.

struct QdaModel {
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> priors;       // (K)
  std::vector<double> means;        // (K, C)
  std::vector<double> covariances;  // (K, C, C), ridge already added

  std::vector<Cholesky> factors;  // derived by qda_prepare
};

inline void qda_prepare(QdaModel& m) {
  const std::size_t c = m.channels;
  m.factors.clear();
  for (std::size_t k = 0; k < m.classes; ++k) {
    std::vector<double> cov(m.covariances.begin() + static_cast<std::ptrdiff_t>(k * c * c),
                            m.covariances.begin() + static_cast<std::ptrdiff_t>((k + 1) * c * c));
    m.factors.emplace_back(cov, c);
  }
}

inline QdaModel qda_fit(const PixelBatch& x, std::span<const std::uint8_t> y, std::size_t classes) {
  detail::check_data(x, y, classes);
  const auto n = detail::class_counts(y, classes);
  const std::size_t c = x.channels;
  for (std::size_t k = 0; k < classes; ++k) {
    if (n[k] < c + 1) {
      throw ArgumentError("QDA needs at least channels+1 = " + std::to_string(c + 1) + " samples of class " +
                          std::to_string(k) + ", got " + std::to_string(n[k]));
    }
  }
  QdaModel m;
  m.channels = c;
  m.classes = classes;
  m.means = detail::class_means(x, y, n);
  for (std::size_t k = 0; k < classes; ++k) m.priors.push_back(static_cast<double>(n[k]) / static_cast<double>(x.count));
  m.covariances.assign(classes * c * c, 0.0);
  std::vector<double> d(c);
  for (std::size_t i = 0; i < x.count; ++i) {
    double* cov = &m.covariances[y[i] * c * c];
    for (std::size_t j = 0; j < c; ++j) d[j] = x.values[i * c + j] - m.means[y[i] * c + j];
    for (std::size_t a = 0; a < c; ++a)
      for (std::size_t b = 0; b < c; ++b) cov[a * c + b] += d[a] * d[b];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> cov(c * c);
    for (std::size_t i = 0; i < c * c; ++i) cov[i] = m.covariances[k * c * c + i] / static_cast<double>(n[k]);
    detail::add_ridge(cov, c);
    std::copy(cov.begin(), cov.end(), m.covariances.begin() + static_cast<std::ptrdiff_t>(k * c * c));
  }
  qda_prepare(m);
  return m;
}

inline void qda_scores(const QdaModel& m, std::span<const float> px, std::vector<double>& out) {
  out.assign(m.classes, 0.0);
  std::vector<double> d(m.channels);
  for (std::size_t k = 0; k < m.classes; ++k) {
    for (std::size_t j = 0; j < m.channels; ++j) d[j] = px[j] - m.means[k * m.channels + j];
    m.factors[k].forward_solve(d);
    double q = 0;
    for (double v : d) q += v * v;
    out[k] = -0.5 * m.factors[k].log_det() - 0.5 * q + std::log(m.priors[k]);
  }
}

inline std::vector<std::uint8_t> qda_predict(const QdaModel& m, const PixelBatch& x) {
  detail::check_predict(x, m.channels);
  return detail::argmax_rows(x, m.classes, [&](std::span<const float> px, std::vector<double>& s) {
    qda_scores(m, px, s);
  });
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression, per-sample SGD from zero weights.

struct SgdConfig {
  double lr = 0.01;
  std::size_t epochs = 5;
  std::uint64_t seed = 0;
};

struct SgdLinearModel {
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::vector<double> weight;  // (K, C)
  std::vector<double> bias;    // (K)
  SgdConfig config;
};

inline void sgd_logits(const SgdLinearModel& m, std::span<const float> px, std::vector<double>& out) {
  out.assign(m.classes, 0.0);
  for (std::size_t k = 0; k < m.classes; ++k) {
    double s = m.bias[k];
    for (std::size_t j = 0; j < m.channels; ++j) s += m.weight[k * m.channels + j] * px[j];
    out[k] = s;
  }
}

inline SgdLinearModel sgd_fit(const PixelBatch& x, std::span<const std::uint8_t> y, std::size_t classes,
                              const SgdConfig& cfg = {}) {
  detail::check_data(x, y, classes);
  if (!(cfg.lr > 0)) throw ArgumentError("SGD learning rate must be > 0");
  const std::size_t c = x.channels;
  SgdLinearModel m;
  m.channels = c;
  m.classes = classes;
  m.weight.assign(classes * c, 0.0);
  m.bias.assign(classes, 0.0);
  m.config = cfg;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(x.count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> z;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    rng.shuffle(order);
    for (auto i : order) {
      const auto px = x.row(i);
      sgd_logits(m, px, z);
      const double peak = *std::max_element(z.begin(), z.end());
      double total = 0;
      for (auto& v : z) total += (v = std::exp(v - peak));
      for (std::size_t k = 0; k < classes; ++k) {
        const double g = z[k] / total - (y[i] == k ? 1.0 : 0.0);
        for (std::size_t j = 0; j < c; ++j) m.weight[k * c + j] -= cfg.lr * g * px[j];
        m.bias[k] -= cfg.lr * g;
      }
    }
  }
  return m;
}

inline std::vector<std::uint8_t> sgd_predict(const SgdLinearModel& m, const PixelBatch& x) {
  detail::check_predict(x, m.channels);
  return detail::argmax_rows(x, m.classes, [&](std::span<const float> px, std::vector<double>& s) {
    sgd_logits(m, px, s);
  });
}

inline double accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ArgumentError("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace hsiseg::baselines
