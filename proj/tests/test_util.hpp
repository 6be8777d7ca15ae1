#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hsiseg/cube.hpp"
#include "hsiseg/rng.hpp"
#include "hsiseg/train.hpp"

namespace testutil {

inline hsiseg::HsiCube random_cube(std::size_t h, std::size_t w, std::size_t c, hsiseg::Rng& rng, float lo = 0.0f,
                                   float hi = 1.0f) {
  std::vector<float> v(h * w * c);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return hsiseg::HsiCube(h, w, c, std::move(v));
}

inline hsiseg::LabelMap random_labels(std::size_t h, std::size_t w, hsiseg::Rng& rng) {
  std::vector<std::uint8_t> v(h * w);
  for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(hsiseg::kClassCount));
  return hsiseg::LabelMap(h, w, std::move(v));
}

// A fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hsiseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Three linearly separable spectral shapes (rising ramp, falling ramp, central
// bump) in [0, 1] with small additive noise; one (C, 1) sample per pixel.
inline double class_profile(std::size_t cls, std::size_t ch, std::size_t channels) {
  const double x = static_cast<double>(ch) / static_cast<double>(channels - 1);
  switch (cls) {
    case 0: return 0.2 + 0.6 * x;
    case 1: return 0.8 - 0.6 * x;
    default: return 0.2 + 0.6 * std::exp(-40.0 * (x - 0.5) * (x - 0.5));
  }
}

inline hsiseg::train::Dataset<float> separable_spectra(std::size_t n, std::size_t channels, hsiseg::Rng& rng,
                                                       double noise = 0.02) {
  hsiseg::train::Dataset<float> d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % 3;
    hsiseg::nn::Tensor<float> x({channels, 1});
    for (std::size_t c = 0; c < channels; ++c)
      x.data[c] = static_cast<float>(class_profile(cls, c, channels) + noise * rng.normal());
    d.inputs.push_back(std::move(x));
    d.targets.push_back({static_cast<std::uint8_t>(cls)});
  }
  return d;
}

struct Labelled {
  hsiseg::PixelBatch x;
  std::vector<std::uint8_t> y;
};

// n unit-scale Gaussian draws around each class mean, classes interleaved.
inline Labelled gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& means, hsiseg::Rng& rng,
                               double sigma = 1.0) {
  Labelled d;
  d.x.channels = means[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < means.size(); ++k) {
      for (double m : means[k]) d.x.values.push_back(static_cast<float>(m + sigma * rng.normal()));
      d.y.push_back(static_cast<std::uint8_t>(k));
      ++d.x.count;
    }
  }
  return d;
}

// Shrunk variant of every architecture, sized so finite differences stay
// cheap while each conv/pool chain still propagates.
inline std::vector<hsiseg::nn::ModelSpec> gradient_cases() {
  using hsiseg::models::ArchitectureId;
  struct Case {
    ArchitectureId id;
    std::size_t channels, divisor, patch;
  };
  const Case cases[] = {{ArchitectureId::Liuetal, 48, 8, 0},      {ArchitectureId::JustoLiuNet, 96, 2, 0},
                        {ArchitectureId::Huetal, 32, 4, 0},       {ArchitectureId::JustoHuNet, 24, 2, 0},
                        {ArchitectureId::LucasCNN, 48, 8, 0},     {ArchitectureId::JustoLucasCNN, 24, 2, 0},
                        {ArchitectureId::JustoUNetSimple, 3, 2, 8}};
  std::vector<hsiseg::nn::ModelSpec> out;
  for (const auto& c : cases) {
    const auto full = hsiseg::models::build(c.id, c.channels, 3, c.patch ? c.patch : hsiseg::models::kDefaultPatchSize);
    out.push_back(hsiseg::models::shrink(full, c.divisor));
  }
  return out;
}

}  // namespace testutil
