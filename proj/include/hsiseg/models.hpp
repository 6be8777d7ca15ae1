#pragma once

// Builders for the seven in-scope architectures. Each builder is a total
// function of (architecture, input channels, classes).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "hsiseg/model.hpp"
#include "hsiseg/rng.hpp"

namespace hsiseg::models {

using nn::Activation;
using nn::LayerSpec;
using nn::ModelSpec;

enum class ArchitectureId { Liuetal, JustoLiuNet, Huetal, JustoHuNet, LucasCNN, JustoLucasCNN, JustoUNetSimple };

inline constexpr std::array<ArchitectureId, 7> kAllArchitectures = {
    ArchitectureId::Liuetal,  ArchitectureId::JustoLiuNet,   ArchitectureId::Huetal,         ArchitectureId::JustoHuNet,
    ArchitectureId::LucasCNN, ArchitectureId::JustoLucasCNN, ArchitectureId::JustoUNetSimple};

inline constexpr std::size_t kDefaultPatchSize = 48;

// Display name as printed in the architecture table.
inline std::string_view display_name(ArchitectureId id) {
  switch (id) {
    case ArchitectureId::Liuetal: return "Liuetal";
    case ArchitectureId::JustoLiuNet: return "1D-Justo-LiuNet";
    case ArchitectureId::Huetal: return "Huetal";
    case ArchitectureId::JustoHuNet: return "1D-Justo-HuNet";
    case ArchitectureId::LucasCNN: return "LucasCNN";
    case ArchitectureId::JustoLucasCNN: return "1D-Justo-LucasCNN";
    case ArchitectureId::JustoUNetSimple: return "2D-Justo-UNet-Simple";
  }
  return "?";
}

// Lowercase-hyphen form used on the command line and in weight files.
inline std::string canonical_name(ArchitectureId id) {
  std::string s(display_name(id));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::optional<ArchitectureId> parse_architecture(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto id : kAllArchitectures) {
    if (canonical_name(id) == lowered) return id;
  }
  return std::nullopt;
}

inline bool is_2d(ArchitectureId id) { return id == ArchitectureId::JustoUNetSimple; }

namespace detail {

inline void conv_pool_blocks(ModelSpec& s, std::initializer_list<std::size_t> kernels, std::size_t k, Activation a) {
  for (auto n : kernels) {
    s.layers.push_back(LayerSpec::conv1d(n, k, a));
    s.layers.push_back(LayerSpec::maxpool1d());
  }
  s.layers.push_back(LayerSpec::flatten());
}

inline void conv_bn(ModelSpec& s, std::size_t n, Activation a) {
  s.layers.push_back(LayerSpec::conv2d(n, 3, Activation::None));
  s.layers.push_back(LayerSpec::batchnorm(a));
}

}  // namespace detail

// Builds and validates the spec. Throws nn::ShapeError when the input is too
// short for the convolution/pooling chain (e.g. any 1D model on 3 channels).
// `patch_size` only applies to the 2D architecture.
inline ModelSpec build(ArchitectureId id, std::size_t in_channels, std::size_t classes,
                       std::size_t patch_size = kDefaultPatchSize) {
  if (in_channels == 0) throw ArgumentError("in_channels must be >= 1");
  if (classes < 2) throw ArgumentError("classes must be >= 2");
  ModelSpec s;
  s.name = canonical_name(id);
  s.input_channels = in_channels;
  s.classes = classes;
  switch (id) {
    case ArchitectureId::Liuetal:
      detail::conv_pool_blocks(s, {32, 32, 64, 64}, 3, Activation::ReLU);
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::JustoLiuNet:
      detail::conv_pool_blocks(s, {6, 12, 18, 24}, 6, Activation::ReLU);
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::Huetal:
      detail::conv_pool_blocks(s, {20}, 12, Activation::Tanh);
      s.layers.push_back(LayerSpec::dense(100, Activation::Tanh));
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::JustoHuNet:
      detail::conv_pool_blocks(s, {6}, 9, Activation::Tanh);
      s.layers.push_back(LayerSpec::dense(30, Activation::ReLU));
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::LucasCNN:
      detail::conv_pool_blocks(s, {32, 32, 64, 64}, 3, Activation::ReLU);
      s.layers.push_back(LayerSpec::dense(120, Activation::ReLU));
      s.layers.push_back(LayerSpec::dense(160, Activation::ReLU));
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::JustoLucasCNN:
      detail::conv_pool_blocks(s, {16}, 9, Activation::Tanh);
      s.layers.push_back(LayerSpec::dense(30, Activation::Tanh));
      s.layers.push_back(LayerSpec::dense(5, Activation::Tanh));
      s.layers.push_back(LayerSpec::dense(classes, Activation::Softmax));
      break;
    case ArchitectureId::JustoUNetSimple:
      // Two-scale encoder-decoder without skip connections; BN sits between
      // every convolution and its activation, including the output one.
      s.patch_size = patch_size;
      detail::conv_bn(s, 6, Activation::ReLU);
      s.layers.push_back(LayerSpec::maxpool2d());
      detail::conv_bn(s, 12, Activation::ReLU);
      s.layers.push_back(LayerSpec::maxpool2d());
      s.layers.push_back(LayerSpec::upsample2d());
      detail::conv_bn(s, 6, Activation::ReLU);
      s.layers.push_back(LayerSpec::upsample2d());
      detail::conv_bn(s, classes, Activation::Softmax);
      break;
  }
  nn::validate(s);
  return s;
}

// Same topology with every hidden convolution/dense width divided by
// `divisor` (rounded up, at least 2). The output layer keeps `classes` units.
// Small variants keep finite-difference checks affordable.
inline ModelSpec shrink(ModelSpec spec, std::size_t divisor) {
  if (divisor == 0) throw ArgumentError("shrink divisor must be >= 1");
  std::size_t last = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto k = spec.layers[i].kind;
    if (k == nn::LayerKind::Conv1D || k == nn::LayerKind::Conv2D || k == nn::LayerKind::Dense) last = i;
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto& l = spec.layers[i];
    const bool parameterized = l.kind == nn::LayerKind::Conv1D || l.kind == nn::LayerKind::Conv2D || l.kind == nn::LayerKind::Dense;
    if (parameterized && i != last) l.units = std::max<std::size_t>(2, (l.units + divisor - 1) / divisor);
  }
  spec.name += "-shrunk";
  nn::validate(spec);
  return spec;
}

// Glorot-uniform kernels, zero biases, BN gamma=1, beta=0, mean=0, var=1.
template <typename T = float>
nn::WeightBundle<T> init_weights(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  nn::WeightBundle<T> w;
  for (const auto& slot : nn::tensor_slots(spec)) {
    nn::Tensor<T> t(slot.shape);
    const std::string_view field = std::string_view(slot.name).substr(slot.name.find('/') + 1);
    if (field == "kernel") {
      double fan_in = 0, fan_out = 0;
      if (slot.shape.size() == 2) {
        fan_out = static_cast<double>(slot.shape[0]);
        fan_in = static_cast<double>(slot.shape[1]);
      } else {
        double receptive = 1;
        for (std::size_t a = 2; a < slot.shape.size(); ++a) receptive *= static_cast<double>(slot.shape[a]);
        fan_out = static_cast<double>(slot.shape[0]) * receptive;
        fan_in = static_cast<double>(slot.shape[1]) * receptive;
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
    } else if (field == "gamma" || field == "moving_variance") {
      std::fill(t.data.begin(), t.data.end(), T{1});
    }
    w.tensors.push_back({slot.name, std::move(t)});
  }
  return w;
}

}  // namespace hsiseg::models
