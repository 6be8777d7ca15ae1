// Writes the small synthetic inputs the CLI smoke test runs against.

#include <cstdio>
#include <filesystem>

#include "test_util.hpp"

using namespace hsiseg;
namespace fs = std::filesystem;

namespace {

// Cube whose pixel classes follow `labels`, with the separable class spectra.
HsiCube spectral_cube(const LabelMap& labels, std::size_t channels, Rng& rng) {
  std::vector<float> v;
  for (std::size_t r = 0; r < labels.height(); ++r)
    for (std::size_t c = 0; c < labels.width(); ++c)
      for (std::size_t ch = 0; ch < channels; ++ch)
        v.push_back(static_cast<float>(testutil::class_profile(labels.at(r, c), ch, channels) + 0.02 * rng.normal()));
  return HsiCube(labels.height(), labels.width(), channels, std::move(v));
}

LabelMap cloud_map(std::size_t cloud_pixels) {
  LabelMap m(10, 10, std::uint8_t{0});
  for (std::size_t i = 0; i < cloud_pixels; ++i) m.set(i / 10, i % 10, 2);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixtures <dir>\n");
    return 2;
  }
  const fs::path root = argv[1];
  for (const char* sub : {"bands", "train", "maps"}) fs::create_directories(root / sub);
  Rng rng(2024);

  // Channels 0-3 are constant, so their std is exactly zero.
  for (int i = 0; i < 3; ++i) {
    auto cube = testutil::random_cube(12, 12, 120, rng, 0.0f, 1.0f + 0.05f * static_cast<float>(i));
    std::vector<float> v(cube.values().begin(), cube.values().end());
    for (std::size_t p = 0; p < cube.pixels(); ++p)
      for (std::size_t ch = 0; ch < 4; ++ch) v[p * 120 + ch] = 0.0f;
    std::vector<float> wl(120);
    for (std::size_t ch = 0; ch < 120; ++ch) wl[ch] = 400.0f + 3.5f * static_cast<float>(ch);
    save_cube(HsiCube(12, 12, 120, std::move(v), wl), root / "bands" / ("cube" + std::to_string(i) + ".hsc"));
  }

  for (int i = 0; i < 2; ++i) {
    const auto labels = testutil::random_labels(16, 16, rng);
    const auto cube = spectral_cube(labels, 112, rng);
    const std::string id = "scene" + std::to_string(i);
    save_cube(cube, root / "train" / (id + ".hsc"));
    save_labels(labels, root / "train" / (id + ".lbl"));
  }

  // Cloud coverage 0.9 / 0.1 / 0.5 for A / B / C.
  save_labels(cloud_map(90), root / "maps" / "A.lbl");
  save_labels(cloud_map(10), root / "maps" / "B.lbl");
  save_labels(cloud_map(50), root / "maps" / "C.lbl");
  return 0;
}
