#pragma once

// Single-sample compute kernels. 1D activations are (length, channels), 2D
// activations are (height, width, channels); the channel axis is always last.
// Products are accumulated in double regardless of T.

#include <algorithm>
#include <cmath>
#include <string>

#include "hsiseg/error.hpp"
#include "hsiseg/tensor.hpp"

namespace hsiseg::nn {

enum class Activation { None, ReLU, Tanh, Softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

namespace detail {
template <typename T>
void expect_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape));
  }
}
}  // namespace detail

// out[t, o] = bias[o] + sum_{c,k} in[t + k, c] * kernel[o, c, k]
template <typename T>
Tensor<T> conv1d_valid(const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& bias) {
  detail::expect_rank(in, 2, "conv1d", "input");
  detail::expect_rank(kernel, 3, "conv1d", "kernel");
  const std::size_t len = in.shape[0], cin = in.shape[1];
  const std::size_t cout = kernel.shape[0], k = kernel.shape[2];
  if (kernel.shape[1] != cin) throw ShapeError("conv1d: kernel expects " + std::to_string(kernel.shape[1]) +
                                               " input channels, input has " + std::to_string(cin));
  if (bias.shape != Shape{cout}) throw ShapeError("conv1d: bias shape " + to_string(bias.shape));
  if (len < k) throw ShapeError("conv1d: input length " + std::to_string(len) + " < kernel size " + std::to_string(k));
  const std::size_t out_len = len - k + 1;
  Tensor<T> out({out_len, cout});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = bias[o];
      const T* w = &kernel.data[o * cin * k];
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t j = 0; j < k; ++j) acc += static_cast<double>(in.data[(t + j) * cin + c]) * w[c * k + j];
      }
      out.data[t * cout + o] = static_cast<T>(acc);
    }
  }
  return out;
}

// Pairwise max along the length axis; an odd trailing element is dropped.
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& in) {
  detail::expect_rank(in, 2, "maxpool1d", "input");
  const std::size_t len = in.shape[0], c = in.shape[1];
  if (len < 2) throw ShapeError("maxpool1d: input length " + std::to_string(len) + " < 2");
  Tensor<T> out({len / 2, c});
  for (std::size_t t = 0; t < len / 2; ++t) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      out.data[t * c + ch] = std::max(in.data[2 * t * c + ch], in.data[(2 * t + 1) * c + ch]);
    }
  }
  return out;
}

// Zero-padded "same" cross-correlation; K must be odd.
template <typename T>
Tensor<T> conv2d_same(const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& bias) {
  detail::expect_rank(in, 3, "conv2d", "input");
  detail::expect_rank(kernel, 4, "conv2d", "kernel");
  const std::size_t h = in.shape[0], w = in.shape[1], cin = in.shape[2];
  const std::size_t cout = kernel.shape[0], k = kernel.shape[2];
  if (kernel.shape[3] != k) throw UnsupportedConfigError("conv2d: only square kernels are supported");
  if (k % 2 == 0) throw UnsupportedConfigError("conv2d: same padding needs an odd kernel size, got " + std::to_string(k));
  if (kernel.shape[1] != cin) throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.shape[1]) +
                                               " input channels, input has " + std::to_string(cin));
  if (bias.shape != Shape{cout}) throw ShapeError("conv2d: bias shape " + to_string(bias.shape));
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  Tensor<T> out({h, w, cout});
  std::vector<double> acc(cout);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t o = 0; o < cout; ++o) acc[o] = bias[o];
      for (std::size_t i = 0; i < k; ++i) {
        const auto rr = static_cast<std::ptrdiff_t>(r) + static_cast<std::ptrdiff_t>(i) - half;
        if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const auto cc = static_cast<std::ptrdiff_t>(c) + static_cast<std::ptrdiff_t>(j) - half;
          if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* px = &in.data[(static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)) * cin];
          for (std::size_t o = 0; o < cout; ++o) {
            const T* kw = &kernel.data[((o * cin) * k + i) * k + j];
            double s = 0.0;
            for (std::size_t ci = 0; ci < cin; ++ci) s += static_cast<double>(px[ci]) * kw[ci * k * k];
            acc[o] += s;
          }
        }
      }
      for (std::size_t o = 0; o < cout; ++o) out.data[(r * w + c) * cout + o] = static_cast<T>(acc[o]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& in) {
  detail::expect_rank(in, 3, "maxpool2d", "input");
  const std::size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  if (h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0) {
    throw ShapeError("maxpool2d: spatial dims " + std::to_string(h) + "x" + std::to_string(w) + " are not even");
  }
  Tensor<T> out({h / 2, w / 2, c});
  for (std::size_t r = 0; r < h / 2; ++r) {
    for (std::size_t col = 0; col < w / 2; ++col) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T a = in.data[((2 * r) * w + 2 * col) * c + ch];
        const T b = in.data[((2 * r) * w + 2 * col + 1) * c + ch];
        const T d = in.data[((2 * r + 1) * w + 2 * col) * c + ch];
        const T e = in.data[((2 * r + 1) * w + 2 * col + 1) * c + ch];
        out.data[(r * (w / 2) + col) * c + ch] = std::max(std::max(a, b), std::max(d, e));
      }
    }
  }
  return out;
}

// Nearest-neighbour 2x replication.
template <typename T>
Tensor<T> upsample2d(const Tensor<T>& in) {
  detail::expect_rank(in, 3, "upsample2d", "input");
  const std::size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  Tensor<T> out({2 * h, 2 * w, c});
  for (std::size_t r = 0; r < 2 * h; ++r) {
    for (std::size_t col = 0; col < 2 * w; ++col) {
      const T* src = &in.data[((r / 2) * w + col / 2) * c];
      std::copy(src, src + c, &out.data[(r * 2 * w + col) * c]);
    }
  }
  return out;
}

// gamma * (x - mean) / sqrt(var + eps) + beta over the last axis.
template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& in, const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean,
                          const Tensor<T>& var, double eps) {
  if (in.rank() == 0) throw ShapeError("batchnorm: scalar input");
  const std::size_t c = in.shape.back();
  for (const auto* p : {&gamma, &beta, &mean, &var}) {
    if (p->shape != Shape{c}) throw ShapeError("batchnorm: parameter shape " + to_string(p->shape) +
                                               " does not match " + std::to_string(c) + " channels");
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (var[ch] < T{0} || std::isnan(static_cast<double>(var[ch]))) {
      throw ArgumentError("batchnorm: negative variance in channel " + std::to_string(ch));
    }
  }
  Tensor<T> out(in.shape);
  for (std::size_t i = 0; i < in.size(); i += c) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(var[ch]) + eps);
      out.data[i + ch] = static_cast<T>(static_cast<double>(gamma[ch]) * (in.data[i + ch] - static_cast<double>(mean[ch])) * inv +
                                        static_cast<double>(beta[ch]));
    }
  }
  return out;
}

// weight (Out, In) * x + bias
template <typename T>
Tensor<T> dense(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::expect_rank(in, 1, "dense", "input");
  detail::expect_rank(weight, 2, "dense", "weight");
  const std::size_t n_out = weight.shape[0], n_in = weight.shape[1];
  if (in.shape[0] != n_in) throw ShapeError("dense: weight expects " + std::to_string(n_in) + " inputs, got " +
                                            std::to_string(in.shape[0]));
  if (bias.shape != Shape{n_out}) throw ShapeError("dense: bias shape " + to_string(bias.shape));
  Tensor<T> out({n_out});
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = bias[o];
    const T* w = &weight.data[o * n_in];
    for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(w[i]) * in.data[i];
    out.data[o] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
T relu(T x) {
  return x > T{0} ? x : T{0};
}

// Numerically stable softmax of one vector, written into `out`.
template <typename T>
void softmax(const T* in, T* out, std::size_t n) {
  T peak = in[0];
  for (std::size_t i = 1; i < n; ++i) peak = std::max(peak, in[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(static_cast<double>(in[i]) - peak);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(std::exp(static_cast<double>(in[i]) - peak) / total);
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& v) {
  std::vector<T> out(v.size());
  if (!v.empty()) softmax(v.data(), out.data(), v.size());
  return out;
}

// Softmax is taken over the last axis (per position for 2D maps).
template <typename T>
Tensor<T> activate(const Tensor<T>& in, Activation act) {
  Tensor<T> out = in;
  switch (act) {
    case Activation::None: break;
    case Activation::ReLU:
      for (auto& x : out.data) x = relu(x);
      break;
    case Activation::Tanh:
      for (auto& x : out.data) x = std::tanh(x);
      break;
    case Activation::Softmax: {
      const std::size_t c = in.shape.empty() ? in.size() : in.shape.back();
      for (std::size_t i = 0; i < in.size(); i += c) softmax(&in.data[i], &out.data[i], c);
      break;
    }
  }
  return out;
}

}  // namespace hsiseg::nn
