#pragma once

// Supervised training: fused softmax/cross-entropy loss, backpropagation
// through every layer kind, Adam, the epoch/batch loop, and a
// finite-difference gradient checker.
//
// Activations are stored in T; every gradient is carried in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/error.hpp"
#include "hsiseg/model.hpp"
#include "hsiseg/models.hpp"
#include "hsiseg/rng.hpp"

namespace hsiseg::train {

using nn::LayerKind;
using nn::Tensor;
using nn::WeightBundle;

inline constexpr double kLogClamp = 1e-12;

struct TrainConfig {
  std::size_t epochs = 2;
  std::size_t batch = 32;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  bool shuffle = true;
  double bn_momentum = 0.99;

  // 2 epochs of 32 pixels for 1D models, 3 epochs of 4 patches for 2D ones.
  static TrainConfig for_1d() { return {}; }
  static TrainConfig for_2d() {
    TrainConfig c;
    c.epochs = 3;
    c.batch = 4;
    return c;
  }

  void validate() const {
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (batch < 1) throw ArgumentError("batch size must be >= 1");
    if (!(lr > 0.0)) throw ArgumentError("learning rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ArgumentError("Adam betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ArgumentError("Adam epsilon must be > 0");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ArgumentError("BN momentum must lie in [0, 1)");
  }
};

// One sample per entry; targets hold one class code per output position
// (1 for 1D models, P*P in row-major order for 2D ones).
template <typename T>
struct Dataset {
  std::vector<Tensor<T>> inputs;
  std::vector<std::vector<std::uint8_t>> targets;

  std::size_t size() const { return inputs.size(); }
};

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;  // NaN when no validation set was given
};

enum class BatchNormMode { Training, Inference };

// -ln(max(p[target], 1e-12)).
template <typename T>
double xent_loss(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size()) throw ArgumentError("target class " + std::to_string(target) + " out of range");
  return -std::log(std::max(static_cast<double>(probs[target]), kLogClamp));
}

template <typename T>
double xent_loss(std::span<const T> probs, std::span<const std::size_t> targets, std::size_t classes) {
  if (probs.size() != targets.size() * classes) throw ArgumentError("xent_loss: probability/target length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) total += xent_loss(probs.subspan(i * classes, classes), targets[i]);
  return targets.empty() ? 0.0 : total / static_cast<double>(targets.size());
}

// ---------------------------------------------------------------------------
// Batch forward pass with the state backward needs

struct BatchStats {
  std::size_t layer = 0;
  std::vector<double> mean;
  std::vector<double> var;
};

template <typename T>
struct ForwardTrace {
  std::vector<std::vector<Tensor<T>>> act;  // act[0] = inputs, act[i + 1] = output of layer i
  std::vector<std::vector<Tensor<T>>> pre;  // pre-activation output of layer i
  std::vector<std::vector<std::vector<std::uint32_t>>> argmax;  // per pooling layer and sample
  std::vector<std::vector<double>> bn_mean, bn_invstd;          // per BN layer
  std::vector<BatchStats> batch_stats;
  // Every ReLU sign (packed) and pooling choice, in evaluation order. Finite
  // differences are only meaningful when a perturbation leaves it unchanged.
  std::vector<std::uint64_t> pattern;
};

namespace detail {

// Slot offsets of each layer's first tensor.
inline std::vector<std::size_t> slot_offsets(const nn::ModelSpec& spec) {
  std::vector<std::size_t> off(spec.layers.size());
  std::size_t slot = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    off[i] = slot;
    switch (spec.layers[i].kind) {
      case LayerKind::Conv1D:
      case LayerKind::Conv2D:
      case LayerKind::Dense: slot += 2; break;
      case LayerKind::BatchNorm: slot += 4; break;
      default: break;
    }
  }
  return off;
}

template <typename T>
Tensor<T> maxpool1d_argmax(const Tensor<T>& in, std::vector<std::uint32_t>& arg) {
  const std::size_t len = in.shape[0], c = in.shape[1];
  if (len < 2) throw ShapeError("maxpool1d: input length < 2");
  Tensor<T> out({len / 2, c});
  arg.resize(out.size());
  for (std::size_t t = 0; t < len / 2; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t a = 2 * t * c + ch, b = (2 * t + 1) * c + ch;
      const std::size_t pick = in.data[b] > in.data[a] ? b : a;
      arg[t * c + ch] = static_cast<std::uint32_t>(pick);
      out.data[t * c + ch] = in.data[pick];
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d_argmax(const Tensor<T>& in, std::vector<std::uint32_t>& arg) {
  const std::size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  if (h % 2 || w % 2) throw ShapeError("maxpool2d: odd spatial dims");
  Tensor<T> out({h / 2, w / 2, c});
  arg.resize(out.size());
  for (std::size_t r = 0; r < h / 2; ++r) {
    for (std::size_t col = 0; col < w / 2; ++col) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t cand[4] = {((2 * r) * w + 2 * col) * c + ch, ((2 * r) * w + 2 * col + 1) * c + ch,
                                     ((2 * r + 1) * w + 2 * col) * c + ch, ((2 * r + 1) * w + 2 * col + 1) * c + ch};
        std::size_t pick = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (in.data[cand[q]] > in.data[pick]) pick = cand[q];
        }
        const std::size_t o = (r * (w / 2) + col) * c + ch;
        arg[o] = static_cast<std::uint32_t>(pick);
        out.data[o] = in.data[pick];
      }
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
ForwardTrace<T> forward_trace(const nn::ModelSpec& spec, const WeightBundle<T>& w, std::span<const Tensor<T>> inputs,
                              BatchNormMode mode) {
  const auto offsets = detail::slot_offsets(spec);
  const std::size_t batch = inputs.size();
  ForwardTrace<T> tr;
  tr.act.emplace_back(inputs.begin(), inputs.end());
  tr.pre.resize(spec.layers.size());
  tr.argmax.resize(spec.layers.size());
  tr.bn_mean.resize(spec.layers.size());
  tr.bn_invstd.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& x = tr.act[i];
    auto& z = tr.pre[i];
    z.resize(batch);
    const std::size_t s = offsets[i];
    switch (l.kind) {
      case LayerKind::Conv1D:
        for (std::size_t b = 0; b < batch; ++b) z[b] = nn::conv1d_valid(x[b], w.tensors[s].tensor, w.tensors[s + 1].tensor);
        break;
      case LayerKind::Conv2D:
        for (std::size_t b = 0; b < batch; ++b) z[b] = nn::conv2d_same(x[b], w.tensors[s].tensor, w.tensors[s + 1].tensor);
        break;
      case LayerKind::Dense:
        for (std::size_t b = 0; b < batch; ++b) z[b] = nn::dense(x[b], w.tensors[s].tensor, w.tensors[s + 1].tensor);
        break;
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D:
        tr.argmax[i].resize(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          z[b] = l.kind == LayerKind::MaxPool1D ? detail::maxpool1d_argmax(x[b], tr.argmax[i][b])
                                                : detail::maxpool2d_argmax(x[b], tr.argmax[i][b]);
          tr.pattern.insert(tr.pattern.end(), tr.argmax[i][b].begin(), tr.argmax[i][b].end());
        }
        break;
      case LayerKind::Upsample2D:
        for (std::size_t b = 0; b < batch; ++b) z[b] = nn::upsample2d(x[b]);
        break;
      case LayerKind::Flatten:
        for (std::size_t b = 0; b < batch; ++b) z[b] = Tensor<T>({x[b].size()}, x[b].data);
        break;
      case LayerKind::BatchNorm: {
        const auto& gamma = w.tensors[s].tensor;
        const auto& beta = w.tensors[s + 1].tensor;
        const std::size_t c = x[0].shape.back();
        std::vector<double> mean(c, 0.0), var(c, 0.0);
        if (mode == BatchNormMode::Training) {
          std::size_t m = 0;
          for (const auto& xb : x) {
            for (std::size_t p = 0; p < xb.size(); p += c) {
              for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += xb.data[p + ch];
            }
            m += xb.size() / c;
          }
          for (auto& v : mean) v /= static_cast<double>(m);
          for (const auto& xb : x) {
            for (std::size_t p = 0; p < xb.size(); p += c) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = xb.data[p + ch] - mean[ch];
                var[ch] += d * d;
              }
            }
          }
          for (auto& v : var) v /= static_cast<double>(m);
          tr.batch_stats.push_back({i, mean, var});
        } else {
          for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = w.tensors[s + 2].tensor[ch];
            var[ch] = w.tensors[s + 3].tensor[ch];
          }
        }
        std::vector<double> invstd(c);
        for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = 1.0 / std::sqrt(var[ch] + nn::kBatchNormEpsilon);
        for (std::size_t b = 0; b < batch; ++b) {
          z[b] = Tensor<T>(x[b].shape);
          for (std::size_t p = 0; p < x[b].size(); p += c) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double xhat = (x[b].data[p + ch] - mean[ch]) * invstd[ch];
              z[b].data[p + ch] = static_cast<T>(gamma[ch] * xhat + beta[ch]);
            }
          }
        }
        tr.bn_mean[i] = std::move(mean);
        tr.bn_invstd[i] = std::move(invstd);
        break;
      }
    }
    std::vector<Tensor<T>> y(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      y[b] = nn::activate(z[b], l.activation);
      if (l.activation == nn::Activation::ReLU) {
        for (std::size_t k = 0; k < z[b].size(); ++k) {
          if (k % 64 == 0) tr.pattern.push_back(0);
          if (z[b].data[k] > T{0}) tr.pattern.back() |= std::uint64_t{1} << (k % 64);
        }
      }
    }
    tr.act.push_back(std::move(y));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Backward

struct BackwardResult {
  double loss = 0.0;
  WeightBundle<double> grads;  // zero for BN moving statistics
  std::vector<BatchStats> batch_stats;
  std::size_t correct = 0;   // argmax hits over all positions
  std::size_t positions = 0;
  std::vector<std::uint64_t> pattern;
};

namespace detail {

template <typename T>
void check_batch(const nn::ModelSpec& spec, std::span<const Tensor<T>> inputs,
                 std::span<const std::vector<std::uint8_t>> targets) {
  if (inputs.empty()) throw ArgumentError("empty batch");
  if (inputs.size() != targets.size()) throw ShapeError("batch has " + std::to_string(inputs.size()) + " inputs but " +
                                                        std::to_string(targets.size()) + " targets");
  const auto out = nn::output_shape(spec, spec.input_shape());
  const std::size_t positions = nn::shape_size(out) / spec.classes;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    if (inputs[b].shape != spec.input_shape()) {
      throw ShapeError("sample " + std::to_string(b) + " has shape " + nn::to_string(inputs[b].shape) + ", expected " +
                       nn::to_string(spec.input_shape()));
    }
    if (targets[b].size() != positions) throw ShapeError("sample " + std::to_string(b) + " has the wrong target count");
    for (auto t : targets[b]) {
      if (t >= spec.classes) throw ArgumentError("target class " + std::to_string(t) + " out of range");
    }
  }
}

// Loss over a finished trace plus the fused logit gradient (probs - onehot)/n.
template <typename T>
double fused_head(const ForwardTrace<T>& tr, std::span<const std::vector<std::uint8_t>> targets, std::size_t classes,
                  std::vector<Tensor<double>>* dlogits, std::size_t* correct, std::size_t* positions) {
  const auto& probs = tr.act.back();
  std::size_t n = 0;
  for (const auto& t : targets) n += t.size();
  double loss = 0.0;
  std::size_t hits = 0;
  if (dlogits) dlogits->resize(probs.size());
  for (std::size_t b = 0; b < probs.size(); ++b) {
    if (dlogits) (*dlogits)[b] = Tensor<double>(probs[b].shape);
    for (std::size_t p = 0; p < targets[b].size(); ++p) {
      const T* pr = &probs[b].data[p * classes];
      const std::size_t target = targets[b][p];
      loss += -std::log(std::max(static_cast<double>(pr[target]), kLogClamp));
      if (nn::argmax(pr, classes) == target) ++hits;
      if (dlogits) {
        for (std::size_t k = 0; k < classes; ++k) {
          (*dlogits)[b].data[p * classes + k] = (static_cast<double>(pr[k]) - (k == target ? 1.0 : 0.0)) / static_cast<double>(n);
        }
      }
    }
  }
  if (correct) *correct = hits;
  if (positions) *positions = n;
  return loss / static_cast<double>(n);
}

}  // namespace detail

template <typename T>
double batch_loss(const nn::ModelSpec& spec, const WeightBundle<T>& w, std::span<const Tensor<T>> inputs,
                  std::span<const std::vector<std::uint8_t>> targets, BatchNormMode mode = BatchNormMode::Training,
                  std::vector<std::uint64_t>* pattern = nullptr) {
  auto tr = forward_trace(spec, w, inputs, mode);
  if (pattern) *pattern = std::move(tr.pattern);
  return detail::fused_head(tr, targets, spec.classes, nullptr, nullptr, nullptr);
}

// Gradients of the mean batch loss with respect to every trainable tensor.
// The output layer must apply softmax; its gradient is fused with the loss.
template <typename T>
BackwardResult backward(const nn::ModelSpec& spec, const WeightBundle<T>& w, std::span<const Tensor<T>> inputs,
                        std::span<const std::vector<std::uint8_t>> targets, BatchNormMode mode = BatchNormMode::Training) {
  nn::check_weights(spec, w);
  detail::check_batch(spec, inputs, targets);
  if (spec.layers.back().activation != nn::Activation::Softmax) throw ShapeError("backward: output layer must be softmax");

  const auto offsets = detail::slot_offsets(spec);
  auto tr = forward_trace(spec, w, inputs, mode);
  BackwardResult res;
  res.pattern = std::move(tr.pattern);
  for (const auto& t : w.tensors) res.grads.tensors.push_back({t.name, Tensor<double>(t.tensor.shape)});

  std::vector<Tensor<double>> grad;  // gradient w.r.t. the current layer's pre-activation
  res.loss = detail::fused_head(tr, targets, spec.classes, &grad, &res.correct, &res.positions);
  const std::size_t batch = inputs.size();

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const auto& l = spec.layers[li];
    const auto& x = tr.act[li];
    const auto& z = tr.pre[li];
    const auto& y = tr.act[li + 1];
    if (li + 1 != spec.layers.size()) {
      for (std::size_t b = 0; b < batch; ++b) {
        auto& g = grad[b];
        switch (l.activation) {
          case nn::Activation::ReLU:
            for (std::size_t k = 0; k < g.size(); ++k) {
              if (!(z[b].data[k] > T{0})) g.data[k] = 0.0;
            }
            break;
          case nn::Activation::Tanh:
            for (std::size_t k = 0; k < g.size(); ++k) {
              const double t = y[b].data[k];
              g.data[k] *= 1.0 - t * t;
            }
            break;
          default: break;
        }
      }
    }

    std::vector<Tensor<double>> gin(batch);
    const std::size_t s = offsets[li];
    switch (l.kind) {
      case LayerKind::Conv1D: {
        const auto& k = w.tensors[s].tensor;
        auto& dk = res.grads.tensors[s].tensor.data;
        auto& db = res.grads.tensors[s + 1].tensor.data;
        const std::size_t cin = x[0].shape[1], cout = k.shape[0], ks = k.shape[2], out_len = z[0].shape[0];
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t o = 0; o < cout; ++o) {
              const double g = grad[b].data[t * cout + o];
              db[o] += g;
              for (std::size_t c = 0; c < cin; ++c) {
                for (std::size_t j = 0; j < ks; ++j) {
                  dk[(o * cin + c) * ks + j] += g * x[b].data[(t + j) * cin + c];
                  gin[b].data[(t + j) * cin + c] += g * k.data[(o * cin + c) * ks + j];
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::Conv2D: {
        const auto& k = w.tensors[s].tensor;
        auto& dk = res.grads.tensors[s].tensor.data;
        auto& db = res.grads.tensors[s + 1].tensor.data;
        const std::size_t h = x[0].shape[0], wd = x[0].shape[1], cin = x[0].shape[2];
        const std::size_t cout = k.shape[0], ks = k.shape[2];
        const auto half = static_cast<std::ptrdiff_t>(ks / 2);
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < wd; ++c) {
              for (std::size_t o = 0; o < cout; ++o) {
                const double g = grad[b].data[(r * wd + c) * cout + o];
                db[o] += g;
                for (std::size_t i = 0; i < ks; ++i) {
                  const auto rr = static_cast<std::ptrdiff_t>(r + i) - half;
                  if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t j = 0; j < ks; ++j) {
                    const auto cc = static_cast<std::ptrdiff_t>(c + j) - half;
                    if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(wd)) continue;
                    const std::size_t px = (static_cast<std::size_t>(rr) * wd + static_cast<std::size_t>(cc)) * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                      const std::size_t ki = ((o * cin + ci) * ks + i) * ks + j;
                      dk[ki] += g * x[b].data[px + ci];
                      gin[b].data[px + ci] += g * k.data[ki];
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::Dense: {
        const auto& wt = w.tensors[s].tensor;
        auto& dw = res.grads.tensors[s].tensor.data;
        auto& db = res.grads.tensors[s + 1].tensor.data;
        const std::size_t n_out = wt.shape[0], n_in = wt.shape[1];
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          for (std::size_t o = 0; o < n_out; ++o) {
            const double g = grad[b].data[o];
            db[o] += g;
            for (std::size_t i = 0; i < n_in; ++i) {
              dw[o * n_in + i] += g * x[b].data[i];
              gin[b].data[i] += g * wt.data[o * n_in + i];
            }
          }
        }
        break;
      }
      case LayerKind::MaxPool1D:
      case LayerKind::MaxPool2D:
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          const auto& arg = tr.argmax[li][b];
          for (std::size_t o = 0; o < arg.size(); ++o) gin[b].data[arg[o]] += grad[b].data[o];
        }
        break;
      case LayerKind::Upsample2D:
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          const std::size_t h2 = grad[b].shape[0], w2 = grad[b].shape[1], c = grad[b].shape[2];
          for (std::size_t r = 0; r < h2; ++r) {
            for (std::size_t col = 0; col < w2; ++col) {
              for (std::size_t ch = 0; ch < c; ++ch) {
                gin[b].data[((r / 2) * (w2 / 2) + col / 2) * c + ch] += grad[b].data[(r * w2 + col) * c + ch];
              }
            }
          }
        }
        break;
      case LayerKind::Flatten:
        for (std::size_t b = 0; b < batch; ++b) gin[b] = Tensor<double>(x[b].shape, grad[b].data);
        break;
      case LayerKind::BatchNorm: {
        const auto& gamma = w.tensors[s].tensor;
        auto& dgamma = res.grads.tensors[s].tensor.data;
        auto& dbeta = res.grads.tensors[s + 1].tensor.data;
        const auto& mean = tr.bn_mean[li];
        const auto& invstd = tr.bn_invstd[li];
        const std::size_t c = x[0].shape.back();
        std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0);
        std::size_t m = 0;
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t p = 0; p < x[b].size(); p += c) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double g = grad[b].data[p + ch];
              const double xhat = (x[b].data[p + ch] - mean[ch]) * invstd[ch];
              dgamma[ch] += g * xhat;
              dbeta[ch] += g;
              sum_dxhat[ch] += g * gamma[ch];
              sum_dxhat_xhat[ch] += g * gamma[ch] * xhat;
            }
          }
          m += x[b].size() / c;
        }
        for (std::size_t b = 0; b < batch; ++b) {
          gin[b] = Tensor<double>(x[b].shape);
          for (std::size_t p = 0; p < x[b].size(); p += c) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double dxhat = grad[b].data[p + ch] * gamma[ch];
              if (mode == BatchNormMode::Training) {
                const double xhat = (x[b].data[p + ch] - mean[ch]) * invstd[ch];
                const double md = static_cast<double>(m);
                gin[b].data[p + ch] = invstd[ch] / md * (md * dxhat - sum_dxhat[ch] - xhat * sum_dxhat_xhat[ch]);
              } else {
                gin[b].data[p + ch] = dxhat * invstd[ch];
              }
            }
          }
        }
        break;
      }
    }
    grad = std::move(gin);
  }
  res.batch_stats = std::move(tr.batch_stats);
  return res;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  template <typename T>
  static AdamState zeros_like(const WeightBundle<T>& w) {
    AdamState s;
    for (const auto& t : w.tensors) {
      s.m.emplace_back(t.tensor.size(), 0.0);
      s.v.emplace_back(t.tensor.size(), 0.0);
    }
    return s;
  }
};

inline bool is_trainable(const std::string& name) {
  return name.find("/moving_mean") == std::string::npos && name.find("/moving_variance") == std::string::npos;
}

// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; w <- w - lr mhat / (sqrt(vhat) + eps)
template <typename T>
void adam_step(WeightBundle<T>& w, const WeightBundle<double>& g, AdamState& state, const TrainConfig& cfg) {
  if (g.tensors.size() != w.tensors.size() || state.m.size() != w.tensors.size()) {
    throw ShapeError("adam_step: weights, gradients, and state are not aligned");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    if (!is_trainable(w.tensors[i].name)) continue;
    auto& wt = w.tensors[i].tensor.data;
    const auto& gt = g.tensors[i].tensor.data;
    if (gt.size() != wt.size()) throw ShapeError("adam_step: gradient shape mismatch for " + w.tensors[i].name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < wt.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gt[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gt[k] * gt[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      wt[k] = static_cast<T>(static_cast<double>(wt[k]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

// Exponential moving average of the batch statistics into the BN slots.
template <typename T>
void update_moving_stats(const nn::ModelSpec& spec, WeightBundle<T>& w, std::span<const BatchStats> stats,
                         double momentum) {
  const auto offsets = detail::slot_offsets(spec);
  for (const auto& st : stats) {
    auto& mean = w.tensors[offsets[st.layer] + 2].tensor.data;
    auto& var = w.tensors[offsets[st.layer] + 3].tensor.data;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      mean[c] = static_cast<T>(momentum * mean[c] + (1.0 - momentum) * st.mean[c]);
      var[c] = static_cast<T>(momentum * var[c] + (1.0 - momentum) * st.var[c]);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode loss and pixel accuracy over a dataset.
template <typename T>
Evaluation evaluate(const nn::ModelSpec& spec, const WeightBundle<T>& w, const Dataset<T>& data,
                    std::size_t chunk = 256) {
  if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
  double loss_sum = 0.0;
  std::size_t hits = 0, positions = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, data.size() - begin);
    std::span<const Tensor<T>> xs(data.inputs.data() + begin, n);
    std::span<const std::vector<std::uint8_t>> ys(data.targets.data() + begin, n);
    detail::check_batch(spec, xs, ys);
    const auto tr = forward_trace(spec, w, xs, BatchNormMode::Inference);
    std::size_t c = 0, p = 0;
    const double l = detail::fused_head(tr, ys, spec.classes, nullptr, &c, &p);
    loss_sum += l * static_cast<double>(p);
    hits += c;
    positions += p;
  }
  return {loss_sum / static_cast<double>(positions), static_cast<double>(hits) / static_cast<double>(positions)};
}

template <typename T>
struct FitResult {
  WeightBundle<T> weights;
  TrainHistory history;
};

// Seeded shuffle each epoch, a partial final batch at its true size, and no
// early stopping. History records the running (in-epoch) training loss and
// accuracy plus inference-mode validation accuracy after each epoch.
template <typename T>
FitResult<T> fit(const nn::ModelSpec& spec, const Dataset<T>& train, const TrainConfig& cfg,
                 const Dataset<T>* validation = nullptr, std::optional<WeightBundle<T>> initial = std::nullopt) {
  cfg.validate();
  if (train.size() == 0) throw ArgumentError("fit: empty training set");
  if (train.inputs.size() != train.targets.size()) throw ArgumentError("fit: inputs/targets length mismatch");
  FitResult<T> out{initial ? std::move(*initial) : models::init_weights<T>(spec, cfg.seed), {}};
  nn::check_weights(spec, out.weights);
  auto state = AdamState::zeros_like(out.weights);
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor<T>> xs;
  std::vector<std::vector<std::uint8_t>> ys;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t hits = 0, positions = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - begin);
      xs.clear();
      ys.clear();
      for (std::size_t k = 0; k < n; ++k) {
        xs.push_back(train.inputs[order[begin + k]]);
        ys.push_back(train.targets[order[begin + k]]);
      }
      const auto res = backward<T>(spec, out.weights, xs, ys, BatchNormMode::Training);
      adam_step(out.weights, res.grads, state, cfg);
      update_moving_stats(spec, out.weights, res.batch_stats, cfg.bn_momentum);
      loss_sum += res.loss * static_cast<double>(res.positions);
      hits += res.correct;
      positions += res.positions;
    }
    out.history.loss.push_back(loss_sum / static_cast<double>(positions));
    out.history.train_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(positions));
    out.history.val_accuracy.push_back(validation && validation->size() ? evaluate(spec, out.weights, *validation).accuracy
                                                                        : std::nan(""));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU or pooling switch
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  bool passes(double tolerance) const { return max_rel_error < tolerance && checked > 0; }
};

struct GradCheckOptions {
  double step = 1e-3;
  // Five-point central stencil, O(h^4); the three-point one is O(h^2) and its
  // truncation error dominates gradients near 1e-5.
  bool five_point = true;
  std::size_t batch = 3;
  BatchNormMode mode = BatchNormMode::Training;
  // Applied to the analytic gradients before comparison; used to confirm the
  // harness notices wrong gradients.
  std::function<void(WeightBundle<double>&)> tamper;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Compares backward() with central differences in double precision on one
// random batch: Glorot weights jittered so biases and BN parameters are
// non-trivial, uniform [0, 1) inputs, random targets.
inline GradCheckReport grad_check(const nn::ModelSpec& spec, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 17);
  auto w = models::init_weights<double>(spec, seed);
  for (auto& t : w.tensors) {
    const bool var = t.name.ends_with("/moving_variance");
    for (auto& v : t.tensor.data) v = var ? 0.5 + rng.uniform() : v + rng.uniform(-0.1, 0.1);
  }
  const auto out_shape = nn::output_shape(spec, spec.input_shape());
  const std::size_t positions = nn::shape_size(out_shape) / spec.classes;
  std::vector<Tensor<double>> xs;
  std::vector<std::vector<std::uint8_t>> ys;
  for (std::size_t b = 0; b < opt.batch; ++b) {
    Tensor<double> x(spec.input_shape());
    for (auto& v : x.data) v = rng.uniform();
    xs.push_back(std::move(x));
    std::vector<std::uint8_t> y(positions);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(spec.classes));
    ys.push_back(std::move(y));
  }

  auto res = backward<double>(spec, w, xs, ys, opt.mode);
  if (opt.tamper) opt.tamper(res.grads);

  GradCheckReport report;
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    if (!is_trainable(w.tensors[i].name)) continue;
    TensorCheck tc{w.tensors[i].name};
    for (std::size_t k = 0; k < w.tensors[i].tensor.size(); ++k) {
      double& p = w.tensors[i].tensor.data[k];
      const double saved = p;
      const auto loss_at = [&](double offset, bool& kinked) {
        std::vector<std::uint64_t> pat;
        p = saved + offset;
        const double l = batch_loss<double>(spec, w, xs, ys, opt.mode, &pat);
        kinked = kinked || pat != res.pattern;
        return l;
      };
      bool kinked = false;
      const double h = opt.step;
      double numeric = 0.0;
      if (opt.five_point) {
        const double l2p = loss_at(2 * h, kinked), l1p = loss_at(h, kinked);
        const double l1m = loss_at(-h, kinked), l2m = loss_at(-2 * h, kinked);
        numeric = (l2m - 8.0 * l1m + 8.0 * l1p - l2p) / (12.0 * h);
      } else {
        const double lp = loss_at(h, kinked), lm = loss_at(-h, kinked);
        numeric = (lp - lm) / (2.0 * h);
      }
      p = saved;
      if (kinked) {
        ++tc.skipped;
        continue;
      }
      tc.max_rel_error = std::max(tc.max_rel_error, relative_error(res.grads.tensors[i].tensor.data[k], numeric));
      ++tc.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.checked += tc.checked;
    report.skipped += tc.skipped;
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

}  // namespace hsiseg::train
