#pragma once

// Cube-level glue: dataset construction for training and whole-image
// inference. 1D models see one spectral signature per pixel; 2D models see
// edge-padded, non-overlapping patches whose predictions are stitched back and
// cropped to the original extent.

#include <span>
#include <vector>

#include "hsiseg/cube.hpp"
#include "hsiseg/model.hpp"
#include "hsiseg/train.hpp"

namespace hsiseg::pipeline {

namespace detail {
inline void check_channels(const nn::ModelSpec& spec, const HsiCube& cube) {
  if (cube.channels() != spec.input_channels) {
    throw ArgumentError(spec.name + " expects " + std::to_string(spec.input_channels) + " channels, cube has " +
                        std::to_string(cube.channels()));
  }
}
}  // namespace detail

// Appends every pixel (1D) or every padded patch (2D) of `cube` with its labels.
inline void append_samples(const nn::ModelSpec& spec, const HsiCube& cube, const LabelMap& labels,
                           train::Dataset<float>& out) {
  detail::check_channels(spec, cube);
  if (labels.height() != cube.height() || labels.width() != cube.width()) {
    throw ArgumentError("label map does not match cube dimensions");
  }
  const std::size_t c = cube.channels();
  if (!spec.is_2d()) {
    for (std::size_t i = 0; i < cube.pixels(); ++i) {
      std::vector<float> v(cube.values().begin() + static_cast<std::ptrdiff_t>(i * c),
                           cube.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
      out.inputs.emplace_back(nn::Shape{c, 1}, std::move(v));
      out.targets.push_back({labels.labels()[i]});
    }
    return;
  }
  const std::size_t p = spec.patch_size;
  const auto [padded, info] = pad_to_multiple(cube, p);
  const auto patches = extract_patches(padded, p);
  const auto tiles = extract_label_patches(pad_labels(labels, info), p);
  for (std::size_t i = 0; i < patches.count; ++i) {
    const auto px = patches.patch(i);
    out.inputs.emplace_back(nn::Shape{p, p, c}, std::vector<float>(px.begin(), px.end()));
    out.targets.emplace_back(tiles[i].labels().begin(), tiles[i].labels().end());
  }
}

inline train::Dataset<float> make_dataset(const nn::ModelSpec& spec, std::span<const HsiCube> cubes,
                                          std::span<const LabelMap> labels) {
  if (cubes.size() != labels.size()) throw ArgumentError("cube and label counts differ");
  train::Dataset<float> d;
  for (std::size_t i = 0; i < cubes.size(); ++i) append_samples(spec, cubes[i], labels[i], d);
  return d;
}

// Per-pixel argmax class map with the cube's spatial dimensions.
inline LabelMap infer_cube(const nn::ModelSpec& spec, const nn::WeightBundle<float>& w, const HsiCube& cube) {
  nn::check_weights(spec, w);
  detail::check_channels(spec, cube);
  const std::size_t c = cube.channels(), k = spec.classes;
  if (!spec.is_2d()) {
    std::vector<std::uint8_t> labels(cube.pixels());
    nn::Tensor<float> x(nn::Shape{c, 1});
    for (std::size_t i = 0; i < cube.pixels(); ++i) {
      std::copy_n(cube.values().begin() + static_cast<std::ptrdiff_t>(i * c), c, x.data.begin());
      const auto probs = nn::forward_unchecked(spec, w, x);
      labels[i] = nn::argmax(probs.data.data(), k);
    }
    return LabelMap(cube.height(), cube.width(), std::move(labels));
  }
  const std::size_t p = spec.patch_size;
  const auto [padded, info] = pad_to_multiple(cube, p);
  const auto patches = extract_patches(padded, p);
  std::vector<LabelMap> tiles;
  tiles.reserve(patches.count);
  nn::Tensor<float> x(nn::Shape{p, p, c});
  for (std::size_t i = 0; i < patches.count; ++i) {
    const auto px = patches.patch(i);
    std::copy(px.begin(), px.end(), x.data.begin());
    const auto probs = nn::forward_unchecked(spec, w, x);
    std::vector<std::uint8_t> t(p * p);
    for (std::size_t q = 0; q < p * p; ++q) t[q] = nn::argmax(&probs.data[q * k], k);
    tiles.emplace_back(p, p, std::move(t));
  }
  return stitch_labels(tiles, info);
}

}  // namespace hsiseg::pipeline
