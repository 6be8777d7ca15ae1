#include <gtest/gtest.h>

#include <fstream>

#include "hsiseg/band_select.hpp"
#include "hsiseg/binary_io.hpp"
#include "hsiseg/cube.hpp"
#include "test_util.hpp"

using namespace hsiseg;

TEST(CubeIo, RoundTripIsBitExact) {
  Rng rng(1);
  const auto dir = testutil::scratch_dir("cube_io");
  HsiCube cube(2, 2, 3, {0.f, 1.f, -2.5f, 3.f, 4.f, 5.f, 6.f, 7.f, 8.f, 9.f, 1e-30f, -0.f});
  save_cube(cube, dir / "a.hsc");
  const auto back = load_cube(dir / "a.hsc");
  EXPECT_EQ(back.height(), 2u);
  EXPECT_EQ(back.width(), 2u);
  EXPECT_EQ(back.channels(), 3u);
  ASSERT_EQ(back.values().size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.values()[i]), std::bit_cast<std::uint32_t>(cube.values()[i]));
  }

  auto big = testutil::random_cube(5, 7, 4, rng);
  HsiCube with_wl(5, 7, 4, std::vector<float>(big.values().begin(), big.values().end()),
                  std::vector<float>{400.f, 450.5f, 700.f, 747.77f});
  save_cube(with_wl, dir / "b.hsc");
  EXPECT_EQ(load_cube(dir / "b.hsc"), with_wl);
}

TEST(CubeIo, HeaderIsTwentyBytes) {
  // Full-size scene: 956*684*120 floats + 20-byte header. Checked by arithmetic
  // on a small cube and the same formula.
  const auto dir = testutil::scratch_dir("cube_size");
  save_cube(HsiCube(3, 4, 5), dir / "s.hsc");
  EXPECT_EQ(std::filesystem::file_size(dir / "s.hsc"), 3u * 4u * 5u * 4u + 20u);
  EXPECT_EQ(956ull * 684ull * 120ull * 4ull + 20ull, 313873940ull);
}

TEST(CubeIo, BadMagicIsFormatError) {
  const auto dir = testutil::scratch_dir("cube_magic");
  io::ByteWriter w;
  w.magic("XXXX");
  w.u32(1);
  w.u32(1);
  w.u32(1);
  w.u32(1);
  w.f32(0.f);
  w.save(dir / "x.hsc");
  EXPECT_THROW(load_cube(dir / "x.hsc"), FormatError);
}

TEST(CubeIo, TruncatedPayloadIsLengthError) {
  const auto dir = testutil::scratch_dir("cube_trunc");
  io::ByteWriter w;
  w.magic("HSC1");
  w.u32(2);
  w.u32(2);
  w.u32(3);
  w.u32(1);
  for (int i = 0; i < 11; ++i) w.f32(1.f);
  w.save(dir / "t.hsc");
  EXPECT_THROW(load_cube(dir / "t.hsc"), LengthError);
}

TEST(CubeIo, ZeroDimensionsRejectedBeforeWrite) {
  EXPECT_THROW(HsiCube(0, 2, 3), ArgumentError);
  EXPECT_THROW(HsiCube(2, 2, 0), ArgumentError);
}

TEST(CubeIo, UnwritablePathIsIoError) {
  EXPECT_THROW(save_cube(HsiCube(1, 1, 1), "/nonexistent_dir_hsiseg/x.hsc"), IoError);
}

TEST(CubeIo, LabelRoundTrip) {
  Rng rng(2);
  const auto dir = testutil::scratch_dir("labels");
  const auto labels = testutil::random_labels(9, 4, rng);
  save_labels(labels, dir / "l.lbl");
  EXPECT_EQ(load_labels(dir / "l.lbl"), labels);
  EXPECT_THROW(LabelMap(1, 2, std::vector<std::uint8_t>{0, 3}), ArgumentError);
}

TEST(CubeIo, NormStatsRoundTrip) {
  const auto dir = testutil::scratch_dir("norm");
  NormStats s{{0.f, -1.f}, {2.f, 5.f}};
  save_norm_stats(s, dir / "n.nrm");
  EXPECT_EQ(load_norm_stats(dir / "n.nrm"), s);
}

TEST(MinMax, FitExtrema) {
  HsiCube one(1, 3, 1, {0.f, 5.f, 10.f});
  const auto s = minmax_fit(one);
  EXPECT_EQ(s.min[0], 0.f);
  EXPECT_EQ(s.max[0], 10.f);

  std::vector<HsiCube> two{HsiCube(1, 2, 1, {0.f, 4.f}), HsiCube(1, 2, 1, {2.f, 9.f})};
  const auto u = minmax_fit(two);
  EXPECT_EQ(u.min[0], 0.f);
  EXPECT_EQ(u.max[0], 9.f);

  const auto c = minmax_fit(HsiCube(1, 3, 1, {7.f, 7.f, 7.f}));
  EXPECT_EQ(c.min[0], 7.f);
  EXPECT_EQ(c.max[0], 7.f);

  EXPECT_THROW(minmax_fit(std::span<const HsiCube>()), ArgumentError);
  std::vector<HsiCube> mixed{HsiCube(1, 1, 1), HsiCube(1, 1, 2)};
  EXPECT_THROW(minmax_fit(mixed), ArgumentError);
}

TEST(MinMax, ApplyMidpointConstantAndNoClipping) {
  NormStats s{{0.f, 7.f}, {10.f, 7.f}};
  HsiCube x(1, 2, 2, {5.f, 7.f, 12.f, 7.f});
  const auto y = minmax_apply(x, s);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0), 0.5f);
  EXPECT_EQ(y.at(0, 0, 1), 0.f);
  EXPECT_FLOAT_EQ(y.at(0, 1, 0), 1.2f);
  EXPECT_EQ(y.at(0, 1, 1), 0.f);
  EXPECT_THROW(minmax_apply(HsiCube(1, 1, 3), s), ArgumentError);
}

TEST(MinMax, FittingDataLandsInUnitIntervalAndMapIsAffine) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cube = testutil::random_cube(6, 5, 4, rng, -50.f, 80.f);
    const auto s = minmax_fit(cube);
    const auto n = minmax_apply(cube, s);
    for (float v : n.values()) {
      EXPECT_GE(v, 0.f);
      EXPECT_LE(v, 1.f);
    }
    // f(a) + f(b) - f(0-point) relation: f((a+b)/2) == (f(a)+f(b))/2 per channel.
    for (std::size_t ch = 0; ch < 4; ++ch) {
      const float a = cube.at(0, 0, ch), b = cube.at(1, 1, ch);
      HsiCube probe(1, 3, 4);
      for (std::size_t k = 0; k < 4; ++k) {
        probe.at(0, 0, k) = a;
        probe.at(0, 1, k) = b;
        probe.at(0, 2, k) = (a + b) / 2;
      }
      const auto p = minmax_apply(probe, s);
      EXPECT_NEAR(p.at(0, 2, ch), (p.at(0, 0, ch) + p.at(0, 1, ch)) / 2, 1e-5);
    }
  }
}

TEST(Channels, DropDefaultListGives112) {
  std::vector<float> wl(120);
  for (std::size_t i = 0; i < 120; ++i) wl[i] = 387.85f + 3.54f * static_cast<float>(i);
  Rng rng(4);
  auto base = testutil::random_cube(2, 2, 120, rng);
  HsiCube cube(2, 2, 120, std::vector<float>(base.values().begin(), base.values().end()), wl);
  const auto drop = bands::default_drop_list();
  const auto out = drop_channels(cube, drop);
  EXPECT_EQ(out.channels(), 112u);
  EXPECT_EQ(out.at(1, 1, 0), cube.at(1, 1, 4));
  EXPECT_EQ(out.at(1, 1, 101), cube.at(1, 1, 105));
  EXPECT_EQ(out.at(1, 1, 102), cube.at(1, 1, 110));
  ASSERT_TRUE(out.wavelengths());
  EXPECT_EQ((*out.wavelengths())[102], wl[110]);

  EXPECT_EQ(drop_channels(cube, std::vector<std::size_t>{}), cube);
  std::vector<std::size_t> all(120);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_THROW(drop_channels(cube, all), ArgumentError);
  EXPECT_THROW(drop_channels(cube, std::vector<std::size_t>{120}), ArgumentError);
}

TEST(Channels, SelectKeepList) {
  Rng rng(5);
  const auto cube = testutil::random_cube(2, 3, 112, rng);
  const std::vector<std::size_t> keep{7, 89, 103};
  const auto out = select_channels(cube, keep);
  EXPECT_EQ(out.channels(), 3u);
  EXPECT_EQ(out.at(1, 2, 1), cube.at(1, 2, 89));
  std::vector<std::size_t> all(112);
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(select_channels(cube, all), cube);
  EXPECT_THROW(select_channels(cube, std::vector<std::size_t>{3, 3}), ArgumentError);
  EXPECT_THROW(select_channels(cube, std::vector<std::size_t>{112}), ArgumentError);
}

TEST(Channels, DropThenSelectComplementIsIdentity) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + rng.below(20);
    const auto cube = testutil::random_cube(3, 2, c, rng);
    std::vector<std::size_t> drop;
    for (std::size_t i = 0; i < c; ++i) {
      if (rng.uniform() < 0.3) drop.push_back(i);
    }
    if (drop.size() == c) drop.pop_back();
    const auto keep = complement_channels(c, drop);
    EXPECT_EQ(drop_channels(cube, drop), select_channels(cube, keep));
  }
}

TEST(Padding, SceneSizeRoundsUpTo960x720) {
  const auto [padded, info] = pad_to_multiple(HsiCube(956, 684, 1), 48);
  EXPECT_EQ(padded.height(), 960u);
  EXPECT_EQ(padded.width(), 720u);
  EXPECT_EQ(info.original_height, 956u);
  EXPECT_EQ(info.original_width, 684u);
  EXPECT_EQ(info.tile_count(), 300u);
  EXPECT_EQ(extract_patches(padded, 48).count, 300u);
}

TEST(Padding, AlignedCubeIsUnchanged) {
  Rng rng(7);
  const auto cube = testutil::random_cube(48, 48, 2, rng);
  const auto [padded, info] = pad_to_multiple(cube, 48);
  EXPECT_EQ(padded, cube);
  EXPECT_EQ(info.padded_height, info.original_height);
  EXPECT_EQ(info.padded_width, info.original_width);
}

TEST(Padding, EdgeReplicationFiveToEight) {
  Rng rng(8);
  const auto cube = testutil::random_cube(5, 5, 2, rng);
  const auto [p, info] = pad_to_multiple(cube, 4);
  ASSERT_EQ(p.height(), 8u);
  ASSERT_EQ(p.width(), 8u);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      for (std::size_t ch = 0; ch < 2; ++ch) {
        EXPECT_EQ(p.at(r, c, ch), cube.at(std::min<std::size_t>(r, 4), std::min<std::size_t>(c, 4), ch));
      }
    }
  }
}

TEST(Patching, TileOrderAndErrors) {
  Rng rng(9);
  const auto one = testutil::random_cube(48, 48, 3, rng);
  const auto b1 = extract_patches(one, 48);
  ASSERT_EQ(b1.count, 1u);
  EXPECT_TRUE(std::equal(b1.values.begin(), b1.values.end(), one.values().begin()));

  const auto tall = testutil::random_cube(96, 48, 1, rng);
  const auto b2 = extract_patches(tall, 48);
  ASSERT_EQ(b2.count, 2u);
  EXPECT_EQ(b2.patch(0)[0], tall.at(0, 0, 0));
  EXPECT_EQ(b2.patch(1)[0], tall.at(48, 0, 0));
  EXPECT_EQ(b2.patch(1)[47 * 48 + 47], tall.at(95, 47, 0));

  EXPECT_THROW(extract_patches(testutil::random_cube(50, 48, 1, rng), 48), ArgumentError);
}

TEST(Stitching, SceneCropAndWrongTileCount) {
  PadInfo info{956, 684, 960, 720, 48};
  std::vector<LabelMap> tiles(300, LabelMap(48, 48, 1));
  const auto m = stitch_labels(tiles, info);
  EXPECT_EQ(m.height(), 956u);
  EXPECT_EQ(m.width(), 684u);
  tiles.pop_back();
  EXPECT_THROW(stitch_labels(tiles, info), ArgumentError);
}

TEST(Stitching, RoundTripPropertyOverRandomShapes) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng.below(70), w = 1 + rng.below(70), p = 1 + rng.below(64);
    const auto labels = testutil::random_labels(h, w, rng);
    const auto [padded, info] = pad_to_multiple(HsiCube(h, w, 1), p);
    const auto tiles = extract_label_patches(pad_labels(labels, info), p);
    EXPECT_EQ(tiles.size(), info.tile_count());
    EXPECT_EQ(stitch_labels(tiles, info), labels);
  }
}

TEST(Flatten, LayoutAndRoundTrip) {
  Rng rng(11);
  const auto cube = testutil::random_cube(2, 3, 4, rng);
  const auto px = flatten_pixels(cube);
  EXPECT_EQ(px.count, 6u);
  EXPECT_EQ(px.channels, 4u);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t ch = 0; ch < 4; ++ch) EXPECT_EQ(px.row(r * 3 + c)[ch], cube.at(r, c, ch));
  EXPECT_EQ(unflatten_pixels(px, 2, 3), cube);
  const auto single = flatten_pixels(testutil::random_cube(1, 1, 5, rng));
  EXPECT_EQ(single.count, 1u);
  EXPECT_EQ(single.channels, 5u);
}
