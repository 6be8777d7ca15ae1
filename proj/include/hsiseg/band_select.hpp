#pragma once

// Channel screening: per-channel deviations, an isolation forest over those
// deviations, and first-principal-component loadings for picking one band in
// each of the blue, green+red, and NIR ranges.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/cube.hpp"
#include "hsiseg/error.hpp"
#include "hsiseg/rng.hpp"

namespace hsiseg::bands {

struct ChannelStats {
  std::vector<double> stddev;
  std::size_t samples = 0;

  std::size_t channels() const { return stddev.size(); }
};

// Population standard deviation of every channel over all pixels of all cubes.
inline ChannelStats channel_std(std::span<const HsiCube> cubes) {
  if (cubes.empty()) throw ArgumentError("channel_std needs at least one cube");
  const std::size_t c = cubes.front().channels();
  std::vector<double> mean(c, 0.0);
  std::vector<double> m2(c, 0.0);
  std::size_t n = 0;
  // Welford, so that radiance offsets do not cancel catastrophically.
  for (const auto& cube : cubes) {
    if (cube.channels() != c) throw ArgumentError("channel_std: channel count mismatch between cubes");
    const auto v = cube.values();
    for (std::size_t i = 0; i < v.size(); i += c) {
      ++n;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double x = v[i + ch];
        const double d = x - mean[ch];
        mean[ch] += d / static_cast<double>(n);
        m2[ch] += d * (x - mean[ch]);
      }
    }
  }
  ChannelStats s{std::vector<double>(c), n};
  for (std::size_t ch = 0; ch < c; ++ch) s.stddev[ch] = std::sqrt(std::max(0.0, m2[ch] / static_cast<double>(n)));
  return s;
}

inline ChannelStats channel_std(const HsiCube& cube) { return channel_std(std::span<const HsiCube>(&cube, 1)); }

// The eight channels removed before training: four all-zero blue channels
// and four in the oxygen absorption dip near 760 nm.
inline std::vector<std::size_t> default_drop_list() { return {0, 1, 2, 3, 106, 107, 108, 109}; }

// ---------------------------------------------------------------------------
// Isolation forest over scalar values

inline double harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  return h;
}

// Average path length of an unsuccessful BST search among n points.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (nd - 1.0) / nd;
}

struct IsolationNode {
  // Leaves have left == right == -1 and carry the number of training points
  // that reached them.
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t size = 0;

  bool is_leaf() const { return left < 0; }
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;  // nodes[0] is the root
};

struct IsolationForestModel {
  std::size_t subsample = 0;
  std::size_t depth_limit = 0;
  std::vector<IsolationTree> trees;
};

struct IsolationForestParams {
  std::size_t trees = 100;
  std::size_t max_subsample = 256;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::int32_t grow(IsolationTree& tree, std::vector<double>& pts, std::size_t begin, std::size_t end,
                         std::size_t depth, std::size_t depth_limit, Rng& rng) {
  const auto index = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.push_back({});
  const auto [lo_it, hi_it] = std::minmax_element(pts.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  pts.begin() + static_cast<std::ptrdiff_t>(end));
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (end - begin <= 1 || depth >= depth_limit || !(hi > lo)) {
    tree.nodes[index].size = static_cast<std::uint32_t>(end - begin);
    return index;
  }
  double split = rng.uniform(lo, hi);
  if (!(split > lo)) split = std::nextafter(lo, hi);
  const auto mid_it = std::partition(pts.begin() + static_cast<std::ptrdiff_t>(begin),
                                     pts.begin() + static_cast<std::ptrdiff_t>(end), [&](double x) { return x < split; });
  const auto mid = static_cast<std::size_t>(mid_it - pts.begin());
  const auto left = grow(tree, pts, begin, mid, depth + 1, depth_limit, rng);
  const auto right = grow(tree, pts, mid, end, depth + 1, depth_limit, rng);
  tree.nodes[index].threshold = split;
  tree.nodes[index].left = left;
  tree.nodes[index].right = right;
  tree.nodes[index].size = static_cast<std::uint32_t>(end - begin);
  return index;
}

}  // namespace detail

// Each tree is grown on a seeded subsample drawn without replacement, with
// uniform split thresholds between the node's min and max, until a point is
// isolated, all points coincide, or the depth cap ceil(log2(subsample)) hits.
inline IsolationForestModel iforest_fit(std::span<const double> values, const IsolationForestParams& params = {}) {
  if (values.size() < 2) throw ArgumentError("iforest_fit needs at least 2 values");
  if (params.trees == 0 || params.max_subsample < 2) throw ArgumentError("iforest_fit: invalid forest parameters");
  IsolationForestModel model;
  model.subsample = std::min(params.max_subsample, values.size());
  model.depth_limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(model.subsample))));
  Rng rng(params.seed);
  std::vector<std::size_t> order(values.size());
  std::vector<double> pts(model.subsample);
  for (std::size_t t = 0; t < params.trees; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `subsample` slots are the draw.
    for (std::size_t i = 0; i < model.subsample; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
      std::swap(order[i], order[j]);
      pts[i] = values[order[i]];
    }
    IsolationTree tree;
    detail::grow(tree, pts, 0, pts.size(), 0, model.depth_limit, rng);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline double path_length(const IsolationTree& tree, double x) {
  std::size_t depth = 0;
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    i = static_cast<std::size_t>(x < tree.nodes[i].threshold ? tree.nodes[i].left : tree.nodes[i].right);
    ++depth;
  }
  return static_cast<double>(depth) + average_path_length(tree.nodes[i].size);
}

// s(x) = 2^(-E[h(x)] / c(subsample)); higher means more anomalous.
inline std::vector<double> iforest_scores(const IsolationForestModel& model, std::span<const double> values) {
  const double norm = average_path_length(model.subsample);
  std::vector<double> scores(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double total = 0.0;
    for (const auto& tree : model.trees) total += path_length(tree, values[i]);
    scores[i] = std::exp2(-(total / static_cast<double>(model.trees.size())) / norm);
  }
  return scores;
}

// Number of flags for a contamination fraction: ceil(contamination * n). The
// small slack absorbs products like 0.05 * 100 = 5.000000000000001.
inline std::size_t flag_count(double contamination, std::size_t n) {
  const double raw = contamination * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw))));
}

// Indices of the ceil(contamination * n) highest scores, ascending by index.
// Equal scores rank by lower index first.
inline std::vector<std::size_t> iforest_flag(const IsolationForestModel& model, std::span<const double> values,
                                             double contamination) {
  if (!(contamination > 0.0 && contamination <= 0.5)) throw ArgumentError("contamination must lie in (0, 0.5]");
  const auto scores = iforest_scores(model, values);
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(flag_count(contamination, values.size()));
  std::sort(order.begin(), order.end());
  return order;
}

// ---------------------------------------------------------------------------
// First principal component

struct PcaLoadings {
  std::vector<double> weights;  // unit norm, largest |w| positive
  double eigenvalue = 0.0;
  double explained = 0.0;  // eigenvalue / trace
  std::size_t iterations = 0;
};

struct PowerIterationParams {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

// Mean-centred population covariance, row-major (C, C).
inline std::vector<double> covariance(const PixelBatch& pixels) {
  const std::size_t c = pixels.channels;
  std::vector<double> mean(c, 0.0);
  for (std::size_t i = 0; i < pixels.count; ++i) {
    const auto row = pixels.row(i);
    for (std::size_t a = 0; a < c; ++a) mean[a] += row[a];
  }
  for (auto& m : mean) m /= static_cast<double>(pixels.count);
  std::vector<double> cov(c * c, 0.0);
  std::vector<double> centred(c);
  for (std::size_t i = 0; i < pixels.count; ++i) {
    const auto row = pixels.row(i);
    for (std::size_t a = 0; a < c; ++a) centred[a] = row[a] - mean[a];
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = a; b < c; ++b) cov[a * c + b] += centred[a] * centred[b];
    }
  }
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a; b < c; ++b) {
      cov[a * c + b] /= static_cast<double>(pixels.count);
      cov[b * c + a] = cov[a * c + b];
    }
  }
  return cov;
}

// Dominant eigenvector of a symmetric PSD matrix by power iteration.
inline PcaLoadings dominant_eigenvector(std::span<const double> sym, std::size_t dim,
                                        const PowerIterationParams& params = {}) {
  double trace = 0.0;
  for (std::size_t a = 0; a < dim; ++a) trace += sym[a * dim + a];
  if (!(trace > 0.0)) throw DegenerateDataError("covariance is zero: all pixels identical");

  // Fixed pseudo-random start; a constant vector can be orthogonal to the
  // answer for antisymmetric data.
  Rng rng(0x9e3779b97f4a7c15ull);
  std::vector<double> w(dim);
  for (auto& x : w) x = 0.5 + rng.uniform();
  auto normalize = [](std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return n;
  };
  normalize(w);

  PcaLoadings out;
  std::vector<double> next(dim);
  for (out.iterations = 1; out.iterations <= params.max_iterations; ++out.iterations) {
    for (std::size_t a = 0; a < dim; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < dim; ++b) acc += sym[a * dim + b] * w[b];
      next[a] = acc;
    }
    if (normalize(next) == 0.0) throw DegenerateDataError("power iteration collapsed to the zero vector");
    double delta = 0.0;
    for (std::size_t a = 0; a < dim; ++a) delta = std::max(delta, std::abs(next[a] - w[a]));
    w.swap(next);
    if (delta < params.tolerance) break;
  }
  out.iterations = std::min(out.iterations, params.max_iterations);

  std::size_t peak = 0;
  for (std::size_t a = 1; a < dim; ++a) {
    if (std::abs(w[a]) > std::abs(w[peak])) peak = a;
  }
  if (w[peak] < 0.0) {
    for (double& x : w) x = -x;
  }
  double rq = 0.0;
  for (std::size_t a = 0; a < dim; ++a) {
    double acc = 0.0;
    for (std::size_t b = 0; b < dim; ++b) acc += sym[a * dim + b] * w[b];
    rq += w[a] * acc;
  }
  out.weights = std::move(w);
  out.eigenvalue = rq;
  out.explained = std::clamp(rq / trace, 0.0, 1.0);
  return out;
}

inline PcaLoadings pca_first_component(const PixelBatch& pixels, const PowerIterationParams& params = {}) {
  if (pixels.count < 2) throw ArgumentError("pca_first_component needs at least 2 pixels");
  if (pixels.channels == 0) throw ArgumentError("pca_first_component needs at least 1 channel");
  const auto cov = covariance(pixels);
  return dominant_eigenvector(cov, pixels.channels, params);
}

// ---------------------------------------------------------------------------
// Range-constrained band pick

struct WavelengthRange {
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive, except for the last range
};

// Blue [-inf, 500), green+red [500, 700), NIR [700, +inf].
struct SpectralRanges {
  WavelengthRange blue{-std::numeric_limits<double>::infinity(), 500.0};
  WavelengthRange green_red{500.0, 700.0};
  WavelengthRange nir{700.0, std::numeric_limits<double>::infinity()};
};

struct RgbLikeBands {
  std::size_t blue = 0;
  std::size_t green_red = 0;
  std::size_t nir = 0;

  std::vector<std::size_t> as_list() const { return {blue, green_red, nir}; }
  bool operator==(const RgbLikeBands&) const = default;
};

// Per range, the channel with the largest |loading|; ties go to the lower index.
inline RgbLikeBands select_rgb_like(std::span<const double> loadings, std::span<const float> wavelengths,
                                    const SpectralRanges& ranges = {}) {
  if (loadings.size() != wavelengths.size()) throw ArgumentError("select_rgb_like: loadings/wavelengths length mismatch");
  if (!(ranges.blue.hi <= ranges.green_red.lo && ranges.green_red.hi <= ranges.nir.lo)) {
    throw ArgumentError("select_rgb_like: spectral ranges must be ordered and non-overlapping");
  }
  auto pick = [&](const WavelengthRange& r, bool closed, const char* name) {
    std::size_t best = loadings.size();
    for (std::size_t i = 0; i < loadings.size(); ++i) {
      const double wl = wavelengths[i];
      const bool inside = wl >= r.lo && (wl < r.hi || (closed && wl <= r.hi));
      if (inside && (best == loadings.size() || std::abs(loadings[i]) > std::abs(loadings[best]))) best = i;
    }
    if (best == loadings.size()) throw ArgumentError(std::string("select_rgb_like: no channel in the ") + name + " range");
    return best;
  };
  return RgbLikeBands{pick(ranges.blue, false, "blue"), pick(ranges.green_red, false, "green+red"),
                      pick(ranges.nir, true, "NIR")};
}

}  // namespace hsiseg::bands
