#pragma once

// Declarative layer graphs: shape propagation, parameter slots, parameter
// counting, and inference.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/error.hpp"
#include "hsiseg/layers.hpp"
#include "hsiseg/tensor.hpp"

namespace hsiseg::nn {

inline constexpr double kBatchNormEpsilon = 1e-3;

enum class LayerKind { Conv1D, MaxPool1D, Conv2D, MaxPool2D, Upsample2D, BatchNorm, Flatten, Dense };
enum class Padding { Valid, Same };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::MaxPool1D: return "maxpool1d";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::Upsample2D: return "upsample2d";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::size_t units = 0;   // kernel count for convolutions, output width for dense
  std::size_t kernel = 0;  // length (1D) or side (2D)
  Activation activation = Activation::None;
  Padding padding = Padding::Valid;

  static LayerSpec conv1d(std::size_t n, std::size_t k, Activation a) {
    return {LayerKind::Conv1D, n, k, a, Padding::Valid};
  }
  static LayerSpec conv2d(std::size_t n, std::size_t k, Activation a) {
    return {LayerKind::Conv2D, n, k, a, Padding::Same};
  }
  static LayerSpec maxpool1d() { return {LayerKind::MaxPool1D}; }
  static LayerSpec maxpool2d() { return {LayerKind::MaxPool2D}; }
  static LayerSpec upsample2d() { return {LayerKind::Upsample2D}; }
  static LayerSpec batchnorm(Activation a = Activation::None) { return {LayerKind::BatchNorm, 0, 0, a}; }
  static LayerSpec flatten() { return {LayerKind::Flatten}; }
  static LayerSpec dense(std::size_t n, Activation a) { return {LayerKind::Dense, n, 0, a}; }

  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::string name;
  std::size_t input_channels = 0;
  std::size_t classes = 0;
  // Side of the square input patch for 2D models; 0 marks a 1D model whose
  // input is one spectral signature of shape (input_channels, 1).
  std::size_t patch_size = 0;
  std::vector<LayerSpec> layers;

  bool is_2d() const { return patch_size > 0; }

  Shape input_shape() const {
    return is_2d() ? Shape{patch_size, patch_size, input_channels} : Shape{input_channels, 1};
  }

  bool operator==(const ModelSpec&) const = default;
};

namespace detail {
inline std::string layer_label(std::size_t index, const LayerSpec& l) {
  return "layer " + std::to_string(index) + " (" + to_string(l.kind) + ")";
}
}  // namespace detail

// Output shape of one layer for a given input shape.
inline Shape layer_output_shape(const LayerSpec& l, const Shape& in, std::size_t index) {
  const auto fail = [&](const std::string& why) -> ShapeError {
    return ShapeError(detail::layer_label(index, l) + ": " + why + " for input " + to_string(in));
  };
  switch (l.kind) {
    case LayerKind::Conv1D:
      if (in.size() != 2) throw fail("expects (length, channels)");
      if (l.units == 0 || l.kernel == 0) throw fail("needs N >= 1 and K >= 1");
      if (in[0] < l.kernel) throw fail("features vanish: length " + std::to_string(in[0]) + " < kernel " + std::to_string(l.kernel));
      return {in[0] - l.kernel + 1, l.units};
    case LayerKind::MaxPool1D:
      if (in.size() != 2) throw fail("expects (length, channels)");
      if (in[0] < 2) throw fail("features vanish: length < 2");
      return {in[0] / 2, in[1]};
    case LayerKind::Conv2D:
      if (in.size() != 3) throw fail("expects (height, width, channels)");
      if (l.units == 0 || l.kernel == 0) throw fail("needs N >= 1 and K >= 1");
      if (l.kernel % 2 == 0) throw UnsupportedConfigError(detail::layer_label(index, l) + ": same padding needs an odd kernel");
      return {in[0], in[1], l.units};
    case LayerKind::MaxPool2D:
      if (in.size() != 3) throw fail("expects (height, width, channels)");
      if (in[0] % 2 != 0 || in[1] % 2 != 0 || in[0] == 0 || in[1] == 0) throw fail("odd spatial dims");
      return {in[0] / 2, in[1] / 2, in[2]};
    case LayerKind::Upsample2D:
      if (in.size() != 3) throw fail("expects (height, width, channels)");
      return {in[0] * 2, in[1] * 2, in[2]};
    case LayerKind::BatchNorm:
      if (in.empty()) throw fail("needs a channel axis");
      return in;
    case LayerKind::Flatten:
      return {shape_size(in)};
    case LayerKind::Dense:
      if (in.size() != 1) throw fail("expects a flattened input");
      if (l.units == 0) throw fail("needs N >= 1");
      return {l.units};
  }
  throw fail("unknown layer kind");
}

// Propagates `input` through every layer; throws ShapeError naming the first
// layer that cannot accept its input.
inline std::vector<Shape> shape_trace(const ModelSpec& spec, const Shape& input) {
  std::vector<Shape> trace{input};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.activation == Activation::Softmax && i + 1 != spec.layers.size()) {
      throw ShapeError(detail::layer_label(i, l) + ": softmax is only supported on the output layer");
    }
    trace.push_back(layer_output_shape(l, trace.back(), i));
  }
  return trace;
}

inline Shape output_shape(const ModelSpec& spec, const Shape& input) { return shape_trace(spec, input).back(); }

// Validates a spec against its declared input: shapes propagate, and the
// output is a softmax over `classes` entries per position.
inline void validate(const ModelSpec& spec) {
  if (spec.input_channels == 0) throw ArgumentError(spec.name + ": input channels must be >= 1");
  if (spec.classes < 2) throw ArgumentError(spec.name + ": at least 2 classes are required");
  if (spec.layers.empty()) throw ArgumentError(spec.name + ": no layers");
  const Shape out = output_shape(spec, spec.input_shape());
  if (spec.layers.back().activation != Activation::Softmax) {
    throw ShapeError(spec.name + ": final layer must apply softmax");
  }
  if (out.back() != spec.classes || out.size() != (spec.is_2d() ? 3u : 1u)) {
    throw ShapeError(spec.name + ": output shape " + to_string(out) + " does not end in " +
                     std::to_string(spec.classes) + " classes");
  }
}

// ---------------------------------------------------------------------------
// Parameter slots

struct TensorSlot {
  std::string name;
  Shape shape;
  std::size_t layer = 0;
  bool trainable = true;
};

// Canonical, ordered list of every tensor a spec owns: Conv1D kernel
// (Cout, Cin, K) + bias; Conv2D kernel (Cout, Cin, K, K) + bias; Dense
// (Out, In) + bias; BatchNorm gamma, beta, moving_mean, moving_variance.
inline std::vector<TensorSlot> tensor_slots(const ModelSpec& spec) {
  const auto trace = shape_trace(spec, spec.input_shape());
  std::vector<TensorSlot> slots;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Shape& in = trace[i];
    const std::string prefix = std::string(to_string(l.kind)) + "_" + std::to_string(i) + "/";
    switch (l.kind) {
      case LayerKind::Conv1D:
        slots.push_back({prefix + "kernel", {l.units, in[1], l.kernel}, i});
        slots.push_back({prefix + "bias", {l.units}, i});
        break;
      case LayerKind::Conv2D:
        slots.push_back({prefix + "kernel", {l.units, in[2], l.kernel, l.kernel}, i});
        slots.push_back({prefix + "bias", {l.units}, i});
        break;
      case LayerKind::Dense:
        slots.push_back({prefix + "kernel", {l.units, in[0]}, i});
        slots.push_back({prefix + "bias", {l.units}, i});
        break;
      case LayerKind::BatchNorm: {
        const std::size_t c = in.back();
        slots.push_back({prefix + "gamma", {c}, i});
        slots.push_back({prefix + "beta", {c}, i});
        slots.push_back({prefix + "moving_mean", {c}, i, false});
        slots.push_back({prefix + "moving_variance", {c}, i, false});
        break;
      }
      default: break;
    }
  }
  return slots;
}

// Conv1D Cin*Cout*K + Cout; Conv2D Cin*Cout*K^2 + Cout; Dense In*Out + Out;
// BatchNorm 4*C (moving statistics included).
inline std::size_t param_count(const ModelSpec& spec) {
  const auto trace = shape_trace(spec, spec.input_shape());
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const Shape& in = trace[i];
    switch (l.kind) {
      case LayerKind::Conv1D: total += in[1] * l.units * l.kernel + l.units; break;
      case LayerKind::Conv2D: total += in[2] * l.units * l.kernel * l.kernel + l.units; break;
      case LayerKind::Dense: total += in[0] * l.units + l.units; break;
      case LayerKind::BatchNorm: total += 4 * in.back(); break;
      default: break;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Weights

template <typename T>
struct WeightBundle {
  std::vector<NamedTensor<T>> tensors;

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.tensor.size();
    return n;
  }

  template <typename U>
  WeightBundle<U> cast() const {
    WeightBundle<U> out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.tensor.template cast<U>()});
    return out;
  }

  bool operator==(const WeightBundle&) const = default;
};

// Checks names, order, shapes, and finiteness against the spec's slots.
template <typename T>
void check_weights(const ModelSpec& spec, const WeightBundle<T>& w) {
  const auto slots = tensor_slots(spec);
  if (slots.size() != w.tensors.size()) {
    throw ShapeError(spec.name + ": expected " + std::to_string(slots.size()) + " weight tensors, got " +
                     std::to_string(w.tensors.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& t = w.tensors[i];
    if (t.name != slots[i].name) throw ShapeError(spec.name + ": tensor " + std::to_string(i) + " is named \"" + t.name +
                                                  "\", expected \"" + slots[i].name + "\"");
    if (t.tensor.shape != slots[i].shape) {
      throw ShapeError(spec.name + ": tensor \"" + t.name + "\" has shape " + to_string(t.tensor.shape) + ", expected " +
                       to_string(slots[i].shape));
    }
    for (const auto v : t.tensor.data) {
      if (!std::isfinite(static_cast<double>(v))) throw NumericError(spec.name + ": tensor \"" + t.name + "\" has non-finite values");
    }
  }
}

// ---------------------------------------------------------------------------
// Inference

// Runs one sample of shape spec.input_shape() through the network and returns
// class probabilities: (classes) for 1D models, (H, W, classes) for 2D ones.
// Weights are assumed checked; use forward() for the validating entry point.
template <typename T>
Tensor<T> forward_unchecked(const ModelSpec& spec, const WeightBundle<T>& w, Tensor<T> x) {
  std::size_t slot = 0;
  const auto& ts = w.tensors;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    try {
      switch (l.kind) {
        case LayerKind::Conv1D:
          x = conv1d_valid(x, ts[slot].tensor, ts[slot + 1].tensor);
          slot += 2;
          break;
        case LayerKind::Conv2D:
          x = conv2d_same(x, ts[slot].tensor, ts[slot + 1].tensor);
          slot += 2;
          break;
        case LayerKind::Dense:
          x = dense(x, ts[slot].tensor, ts[slot + 1].tensor);
          slot += 2;
          break;
        case LayerKind::BatchNorm:
          x = batchnorm_infer(x, ts[slot].tensor, ts[slot + 1].tensor, ts[slot + 2].tensor, ts[slot + 3].tensor,
                              kBatchNormEpsilon);
          slot += 4;
          break;
        case LayerKind::MaxPool1D: x = maxpool1d(x); break;
        case LayerKind::MaxPool2D: x = maxpool2d(x); break;
        case LayerKind::Upsample2D: x = upsample2d(x); break;
        case LayerKind::Flatten: x.shape = {x.size()}; break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError(detail::layer_label(i, l) + ": " + e.what());
    }
    x = activate(x, l.activation);
  }
  return x;
}

template <typename T>
Tensor<T> forward(const ModelSpec& spec, const WeightBundle<T>& w, const Tensor<T>& input) {
  check_weights(spec, w);
  if (input.shape != spec.input_shape()) {
    throw ShapeError(spec.name + ": input shape " + to_string(input.shape) + " does not match expected " +
                     to_string(spec.input_shape()));
  }
  return forward_unchecked(spec, w, input);
}

// Index of the largest probability; ties resolve to the lowest class.
template <typename T>
std::uint8_t argmax(const T* probs, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace hsiseg::nn
