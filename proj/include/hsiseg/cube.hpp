#pragma once

// Hyperspectral cubes, label maps, and the layout transforms between them:
// normalization, channel dropping/selection, padding, patching, and pixel
// flattening. Everything here is a pure function of its arguments.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsiseg/binary_io.hpp"
#include "hsiseg/error.hpp"

namespace hsiseg {

inline constexpr std::size_t kClassCount = 3;

enum class SurfaceClass : std::uint8_t { Sea = 0, Land = 1, Cloud = 2 };

inline const char* class_name(std::size_t code) {
  switch (code) {
    case 0: return "sea";
    case 1: return "land";
    case 2: return "cloud";
    default: return "unknown";
  }
}

// Dense (H, W, C) float32 cube, row-major with the channel axis fastest.
class HsiCube {
 public:
  HsiCube(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> values,
          std::optional<std::vector<float>> wavelengths = std::nullopt)
      : height_(height), width_(width), channels_(channels), values_(std::move(values)),
        wavelengths_(std::move(wavelengths)) {
    if (height_ == 0 || width_ == 0 || channels_ == 0) {
      throw ArgumentError("cube dimensions must be >= 1");
    }
    if (values_.size() != height_ * width_ * channels_) {
      throw ArgumentError("cube payload has " + std::to_string(values_.size()) + " values, expected " +
                          std::to_string(height_ * width_ * channels_));
    }
    if (wavelengths_) {
      if (wavelengths_->size() != channels_) {
        throw ArgumentError("wavelength table length does not match channel count");
      }
      for (std::size_t i = 1; i < wavelengths_->size(); ++i) {
        if (!((*wavelengths_)[i] > (*wavelengths_)[i - 1])) {
          throw ArgumentError("wavelengths must be strictly increasing");
        }
      }
    }
  }

  // Zero-filled cube.
  HsiCube(std::size_t height, std::size_t width, std::size_t channels)
      : HsiCube(height, width, channels, std::vector<float>(height * width * channels, 0.0f)) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return height_ * width_; }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }
  const std::optional<std::vector<float>>& wavelengths() const { return wavelengths_; }

  float at(std::size_t r, std::size_t c, std::size_t ch) const {
    return values_[(r * width_ + c) * channels_ + ch];
  }
  float& at(std::size_t r, std::size_t c, std::size_t ch) {
    return values_[(r * width_ + c) * channels_ + ch];
  }

  // The spectral signature at (r, c).
  std::span<const float> pixel(std::size_t r, std::size_t c) const {
    return std::span<const float>(values_).subspan((r * width_ + c) * channels_, channels_);
  }

  bool operator==(const HsiCube&) const = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<float> values_;
  std::optional<std::vector<float>> wavelengths_;
};

// Per-pixel class codes, 0=sea, 1=land, 2=cloud.
class LabelMap {
 public:
  LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
      : height_(height), width_(width), labels_(std::move(labels)) {
    if (height_ == 0 || width_ == 0) throw ArgumentError("label map dimensions must be >= 1");
    if (labels_.size() != height_ * width_) {
      throw ArgumentError("label payload does not match height*width");
    }
    for (auto v : labels_) {
      if (v >= kClassCount) throw ArgumentError("label code " + std::to_string(v) + " is not a class");
    }
  }

  LabelMap(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : LabelMap(height, width, std::vector<std::uint8_t>(height * width, fill)) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return labels_.size(); }
  std::span<const std::uint8_t> labels() const { return labels_; }

  std::uint8_t at(std::size_t r, std::size_t c) const { return labels_[r * width_ + c]; }
  void set(std::size_t r, std::size_t c, std::uint8_t v) {
    if (v >= kClassCount) throw ArgumentError("label code " + std::to_string(v) + " is not a class");
    labels_[r * width_ + c] = v;
  }

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<std::uint8_t> labels_;
};

struct NormStats {
  std::vector<float> min;
  std::vector<float> max;

  std::size_t channels() const { return min.size(); }
  bool operator==(const NormStats&) const = default;
};

struct PadInfo {
  std::size_t original_height = 0;
  std::size_t original_width = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;
  std::size_t patch_size = 0;

  std::size_t tiles_down() const { return padded_height / patch_size; }
  std::size_t tiles_across() const { return padded_width / patch_size; }
  std::size_t tile_count() const { return tiles_down() * tiles_across(); }
  bool operator==(const PadInfo&) const = default;
};

// (N, P, P, C) patches in row-major tile order.
struct PatchBatch {
  std::size_t count = 0;
  std::size_t patch_size = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  std::size_t patch_stride() const { return patch_size * patch_size * channels; }
  std::span<const float> patch(std::size_t i) const {
    return std::span<const float>(values).subspan(i * patch_stride(), patch_stride());
  }
};

// (N, C) spectral signatures in row-major pixel order.
struct PixelBatch {
  std::size_t count = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * channels, channels);
  }
};

// ---------------------------------------------------------------------------
// HSC1 / LBL1 / NRM1 files

inline constexpr std::uint32_t kDtypeFloat32 = 1;

inline void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("HSC1");
  w.u32(static_cast<std::uint32_t>(cube.height()));
  w.u32(static_cast<std::uint32_t>(cube.width()));
  w.u32(static_cast<std::uint32_t>(cube.channels()));
  w.u32(kDtypeFloat32);
  w.f32s(cube.values());
  if (cube.wavelengths()) {
    w.magic("WLEN");
    w.f32s(*cube.wavelengths());
  }
  w.save(path);
}

inline HsiCube load_cube(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("HSC1");
  const std::size_t h = r.u32();
  const std::size_t w = r.u32();
  const std::size_t c = r.u32();
  const std::uint32_t dtype = r.u32();
  if (dtype != kDtypeFloat32) throw FormatError(path.string() + ": unsupported dtype code " + std::to_string(dtype));
  if (h == 0 || w == 0 || c == 0) throw FormatError(path.string() + ": zero-sized dimension in header");
  auto values = r.f32s(h * w * c, "cube payload");
  std::optional<std::vector<float>> wl;
  if (!r.at_end()) {
    r.expect_magic("WLEN");
    wl = r.f32s(c, "wavelength block");
    if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after wavelength block");
  }
  return HsiCube(h, w, c, std::move(values), std::move(wl));
}

inline void save_labels(const LabelMap& labels, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("LBL1");
  w.u32(static_cast<std::uint32_t>(labels.height()));
  w.u32(static_cast<std::uint32_t>(labels.width()));
  for (auto v : labels.labels()) w.u8(v);
  w.save(path);
}

inline LabelMap load_labels(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("LBL1");
  const std::size_t h = r.u32();
  const std::size_t w = r.u32();
  if (h == 0 || w == 0) throw FormatError(path.string() + ": zero-sized dimension in header");
  if (r.remaining() < h * w) throw LengthError(path.string() + ": label payload truncated");
  std::vector<std::uint8_t> codes(h * w);
  for (auto& v : codes) v = r.u8();
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after label payload");
  for (auto v : codes) {
    if (v >= kClassCount) throw FormatError(path.string() + ": label code out of range");
  }
  return LabelMap(h, w, std::move(codes));
}

// NRM1: magic, u32 channels, then channels float32 minima and maxima.
inline void save_norm_stats(const NormStats& stats, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("NRM1");
  w.u32(static_cast<std::uint32_t>(stats.channels()));
  w.f32s(stats.min);
  w.f32s(stats.max);
  w.save(path);
}

inline NormStats load_norm_stats(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("NRM1");
  const std::size_t c = r.u32();
  NormStats s;
  s.min = r.f32s(c, "norm minima");
  s.max = r.f32s(c, "norm maxima");
  for (std::size_t i = 0; i < c; ++i) {
    if (s.max[i] < s.min[i]) throw FormatError(path.string() + ": max < min in channel " + std::to_string(i));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Normalization

inline NormStats minmax_fit(std::span<const HsiCube> cubes) {
  if (cubes.empty()) throw ArgumentError("minmax_fit needs at least one cube");
  const std::size_t c = cubes.front().channels();
  NormStats s{std::vector<float>(c, std::numeric_limits<float>::infinity()),
              std::vector<float>(c, -std::numeric_limits<float>::infinity())};
  for (const auto& cube : cubes) {
    if (cube.channels() != c) throw ArgumentError("minmax_fit: channel count mismatch between cubes");
    const auto v = cube.values();
    for (std::size_t i = 0; i < v.size(); i += c) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        s.min[ch] = std::min(s.min[ch], v[i + ch]);
        s.max[ch] = std::max(s.max[ch], v[i + ch]);
      }
    }
  }
  return s;
}

inline NormStats minmax_fit(const HsiCube& cube) { return minmax_fit(std::span<const HsiCube>(&cube, 1)); }

// (x - min) / (max - min) per channel; constant channels map to 0. Values
// outside the fitted range are not clipped.
inline HsiCube minmax_apply(const HsiCube& cube, const NormStats& stats) {
  const std::size_t c = cube.channels();
  if (stats.channels() != c) throw ArgumentError("minmax_apply: stats have " + std::to_string(stats.channels()) +
                                                 " channels, cube has " + std::to_string(c));
  std::vector<float> out(cube.values().begin(), cube.values().end());
  for (std::size_t i = 0; i < out.size(); i += c) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double range = static_cast<double>(stats.max[ch]) - stats.min[ch];
      out[i + ch] = range > 0.0 ? static_cast<float>((out[i + ch] - static_cast<double>(stats.min[ch])) / range) : 0.0f;
    }
  }
  return HsiCube(cube.height(), cube.width(), c, std::move(out), cube.wavelengths());
}

// ---------------------------------------------------------------------------
// Channel selection

inline HsiCube select_channels(const HsiCube& cube, std::span<const std::size_t> keep) {
  if (keep.empty()) throw ArgumentError("select_channels: keep list is empty");
  std::vector<bool> seen(cube.channels(), false);
  for (auto k : keep) {
    if (k >= cube.channels()) throw ArgumentError("channel index " + std::to_string(k) + " out of range");
    if (seen[k]) throw ArgumentError("duplicate channel index " + std::to_string(k));
    seen[k] = true;
  }
  const std::size_t c_in = cube.channels();
  const std::size_t c_out = keep.size();
  std::vector<float> out(cube.pixels() * c_out);
  const auto v = cube.values();
  for (std::size_t p = 0; p < cube.pixels(); ++p) {
    for (std::size_t j = 0; j < c_out; ++j) out[p * c_out + j] = v[p * c_in + keep[j]];
  }
  std::optional<std::vector<float>> wl;
  if (cube.wavelengths()) {
    wl.emplace();
    for (auto k : keep) wl->push_back((*cube.wavelengths())[k]);
  }
  return HsiCube(cube.height(), cube.width(), c_out, std::move(out), std::move(wl));
}

// The channels of a `channels`-band cube that survive dropping `drop`.
inline std::vector<std::size_t> complement_channels(std::size_t channels, std::span<const std::size_t> drop) {
  std::vector<bool> dropped(channels, false);
  for (auto d : drop) {
    if (d >= channels) throw ArgumentError("channel index " + std::to_string(d) + " out of range");
    if (dropped[d]) throw ArgumentError("duplicate channel index " + std::to_string(d));
    dropped[d] = true;
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < channels; ++i) {
    if (!dropped[i]) keep.push_back(i);
  }
  return keep;
}

inline HsiCube drop_channels(const HsiCube& cube, std::span<const std::size_t> drop) {
  const auto keep = complement_channels(cube.channels(), drop);
  if (keep.empty()) throw ArgumentError("drop_channels would remove every channel");
  return select_channels(cube, keep);
}

// ---------------------------------------------------------------------------
// Geometry

inline std::size_t round_up(std::size_t n, std::size_t multiple) { return (n + multiple - 1) / multiple * multiple; }

// Edge-replication padding up to the next multiple of patch_size.
inline std::pair<HsiCube, PadInfo> pad_to_multiple(const HsiCube& cube, std::size_t patch_size) {
  if (patch_size == 0) throw ArgumentError("patch size must be >= 1");
  PadInfo info{cube.height(), cube.width(), round_up(cube.height(), patch_size), round_up(cube.width(), patch_size),
               patch_size};
  const std::size_t c = cube.channels();
  std::vector<float> out(info.padded_height * info.padded_width * c);
  for (std::size_t r = 0; r < info.padded_height; ++r) {
    const std::size_t src_r = std::min(r, cube.height() - 1);
    for (std::size_t col = 0; col < info.padded_width; ++col) {
      const auto px = cube.pixel(src_r, std::min(col, cube.width() - 1));
      std::copy(px.begin(), px.end(), out.begin() + static_cast<std::ptrdiff_t>((r * info.padded_width + col) * c));
    }
  }
  return {HsiCube(info.padded_height, info.padded_width, c, std::move(out), cube.wavelengths()), info};
}

inline LabelMap pad_labels(const LabelMap& labels, const PadInfo& info) {
  if (labels.height() != info.original_height || labels.width() != info.original_width) {
    throw ArgumentError("pad_labels: label map does not match pad info");
  }
  LabelMap out(info.padded_height, info.padded_width);
  for (std::size_t r = 0; r < info.padded_height; ++r) {
    for (std::size_t c = 0; c < info.padded_width; ++c) {
      out.set(r, c, labels.at(std::min(r, labels.height() - 1), std::min(c, labels.width() - 1)));
    }
  }
  return out;
}

inline PatchBatch extract_patches(const HsiCube& cube, std::size_t patch_size) {
  if (patch_size == 0 || cube.height() % patch_size != 0 || cube.width() % patch_size != 0) {
    throw ArgumentError("extract_patches: " + std::to_string(cube.height()) + "x" + std::to_string(cube.width()) +
                        " is not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t c = cube.channels();
  const std::size_t down = cube.height() / patch_size;
  const std::size_t across = cube.width() / patch_size;
  PatchBatch batch{down * across, patch_size, c, {}};
  batch.values.reserve(cube.values().size());
  for (std::size_t tr = 0; tr < down; ++tr) {
    for (std::size_t tc = 0; tc < across; ++tc) {
      for (std::size_t r = 0; r < patch_size; ++r) {
        const auto row_start = cube.pixel(tr * patch_size + r, tc * patch_size);
        batch.values.insert(batch.values.end(), row_start.data(), row_start.data() + patch_size * c);
      }
    }
  }
  return batch;
}

inline std::vector<LabelMap> extract_label_patches(const LabelMap& labels, std::size_t patch_size) {
  if (patch_size == 0 || labels.height() % patch_size != 0 || labels.width() % patch_size != 0) {
    throw ArgumentError("extract_label_patches: dims not divisible by patch size");
  }
  std::vector<LabelMap> tiles;
  for (std::size_t tr = 0; tr < labels.height() / patch_size; ++tr) {
    for (std::size_t tc = 0; tc < labels.width() / patch_size; ++tc) {
      LabelMap tile(patch_size, patch_size);
      for (std::size_t r = 0; r < patch_size; ++r) {
        for (std::size_t c = 0; c < patch_size; ++c) tile.set(r, c, labels.at(tr * patch_size + r, tc * patch_size + c));
      }
      tiles.push_back(std::move(tile));
    }
  }
  return tiles;
}

// Reassembles per-tile predictions and crops the padding away.
inline LabelMap stitch_labels(std::span<const LabelMap> tiles, const PadInfo& info) {
  if (info.patch_size == 0 || tiles.size() != info.tile_count()) {
    throw ArgumentError("stitch_labels: got " + std::to_string(tiles.size()) + " tiles, pad info implies " +
                        std::to_string(info.patch_size == 0 ? 0 : info.tile_count()));
  }
  const std::size_t p = info.patch_size;
  LabelMap out(info.original_height, info.original_width);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].height() != p || tiles[t].width() != p) throw ArgumentError("stitch_labels: tile size mismatch");
    const std::size_t r0 = (t / info.tiles_across()) * p;
    const std::size_t c0 = (t % info.tiles_across()) * p;
    for (std::size_t r = 0; r < p && r0 + r < info.original_height; ++r) {
      for (std::size_t c = 0; c < p && c0 + c < info.original_width; ++c) out.set(r0 + r, c0 + c, tiles[t].at(r, c));
    }
  }
  return out;
}

inline PixelBatch flatten_pixels(const HsiCube& cube) {
  return PixelBatch{cube.pixels(), cube.channels(), std::vector<float>(cube.values().begin(), cube.values().end())};
}

inline HsiCube unflatten_pixels(const PixelBatch& batch, std::size_t height, std::size_t width) {
  if (batch.count != height * width) throw ArgumentError("unflatten_pixels: pixel count does not match dims");
  return HsiCube(height, width, batch.channels, batch.values);
}

inline LabelMap unflatten_labels(std::vector<std::uint8_t> labels, std::size_t height, std::size_t width) {
  return LabelMap(height, width, std::move(labels));
}

}  // namespace hsiseg
