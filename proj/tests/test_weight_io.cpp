#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "hsiseg/weight_io.hpp"
#include "test_util.hpp"

using namespace hsiseg;
using namespace hsiseg::weights;
using models::ArchitectureId;

namespace {

// Independent little-endian JWB1 builder, byte by byte.
struct Bytes {
  std::vector<char> b;
  Bytes& raw(const std::string& s) {
    b.insert(b.end(), s.begin(), s.end());
    return *this;
  }
  Bytes& u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    return *this;
  }
  Bytes& str(const std::string& s) { return u32(static_cast<std::uint32_t>(s.size())).raw(s); }
  Bytes& f32(float f) { return u32(std::bit_cast<std::uint32_t>(f)); }
  Bytes& record(const std::string& name, std::vector<std::uint32_t> dims, const std::vector<float>& v) {
    str(name).u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) u32(d);
    for (float f : v) f32(f);
    return *this;
  }
};

WeightFile decode_bytes(const std::vector<char>& bytes) {
  auto r = io::ByteReader(bytes, "<test>");
  return decode(r);
}

Bytes nb_bytes() {
  Bytes b;
  b.raw("JWB1").u32(1).str("ml-nb").u32(1).u32(2).u32(3);
  b.record("priors", {2}, {0.25f, 0.75f});
  b.record("means", {2, 1}, {-1.0f, 2.0f});
  b.record("variances", {2, 1}, {1.0f, 0.5f});
  return b;
}

nn::WeightBundle<float> random_weights(const nn::ModelSpec& spec, Rng& rng) {
  auto w = models::init_weights(spec, rng.next_u64());
  for (auto& t : w.tensors)
    for (auto& v : t.tensor.data) v = static_cast<float>(rng.uniform(0.1, 1.0));
  return w;
}

}  // namespace

TEST(Jwb1, HandWrittenBaselineBytes) {
  const auto bytes = nb_bytes().b;
  const auto f = decode_bytes(bytes);
  EXPECT_EQ(f.architecture, "ml-nb");
  EXPECT_EQ(f.in_channels, 1u);
  ASSERT_EQ(f.records.size(), 3u);
  EXPECT_EQ(f.records[1].tensor.shape, (nn::Shape{2, 1}));
  const auto m = std::get<baselines::GaussianNBModel>(baseline_from_file(f));
  EXPECT_EQ(m.priors, (std::vector<double>{0.25, 0.75}));
  EXPECT_EQ(m.variances[1], 0.5);
  EXPECT_EQ(encode(to_file(BaselineModel(m))), bytes);
  EXPECT_EQ(predict(BaselineModel(m), PixelBatch{2, 1, {-3.0f, 3.0f}}), (std::vector<std::uint8_t>{0, 1}));
}

TEST(Jwb1, HandWrittenNetworkBytes) {
  // 1D-Justo-HuNet on 10 channels: conv 9x1x6, pool to 1, flatten 6, dense 30, dense 3.
  const auto spec = models::build(ArchitectureId::JustoHuNet, 10, 3);
  Rng rng(1);
  const auto w = random_weights(spec, rng);
  Bytes b;
  b.raw("JWB1").u32(1).str("1d-justo-hunet").u32(10).u32(3).u32(6);
  b.record("conv1d_0/kernel", {6, 1, 9}, w.tensors[0].tensor.data);
  b.record("conv1d_0/bias", {6}, w.tensors[1].tensor.data);
  b.record("dense_3/kernel", {30, 6}, w.tensors[2].tensor.data);
  b.record("dense_3/bias", {30}, w.tensors[3].tensor.data);
  b.record("dense_4/kernel", {3, 30}, w.tensors[4].tensor.data);
  b.record("dense_4/bias", {3}, w.tensors[5].tensor.data);
  EXPECT_EQ(encode(to_file(spec, w)), b.b);
  const auto loaded = from_file(decode_bytes(b.b));
  EXPECT_EQ(loaded.spec, spec);
  EXPECT_EQ(loaded.weights, w);
  EXPECT_FALSE(loaded.normalized);
}

TEST(Jwb1, RoundtripBitExactThroughFiles) {
  const auto dir = testutil::scratch_dir("jwb1_roundtrip");
  Rng rng(2);
  for (auto id : models::kAllArchitectures) {
    const auto spec = models::build(id, id == ArchitectureId::JustoUNetSimple ? 3 : 112, 3);
    auto w = random_weights(spec, rng);
    w.tensors[0].tensor.data[0] = std::bit_cast<float>(0x00000001u);  // denormal survives
    w.tensors[0].tensor.data[1] = -0.0f;
    const auto path = dir / (spec.name + ".jwb");
    save_weights(spec, w, path);
    const auto back = load_weights(path);
    ASSERT_EQ(back.weights.tensors.size(), w.tensors.size());
    for (std::size_t i = 0; i < w.tensors.size(); ++i) {
      const auto& a = w.tensors[i].tensor.data;
      const auto& c = back.weights.tensors[i].tensor.data;
      ASSERT_EQ(a.size(), c.size());
      EXPECT_EQ(std::memcmp(a.data(), c.data(), a.size() * sizeof(float)), 0) << w.tensors[i].name;
    }
    EXPECT_EQ(back.spec, spec);
  }
}

TEST(Jwb1, PayloadMatchesParameterCount) {
  const auto spec = models::build(ArchitectureId::JustoLiuNet, 112, 3);
  const auto f = to_file(spec, models::init_weights(spec, 0));
  EXPECT_EQ(f.value_count(), 4563u);
  // Header: magic, version, arch string, in_channels, classes, count.
  std::size_t header = 4 + 4 + 4 + spec.name.size() + 12;
  for (const auto& r : f.records) header += 4 + r.name.size() + 4 + 4 * r.tensor.rank();
  EXPECT_EQ(encode(f).size(), header + 4 * 4563);
}

TEST(Jwb1, ShapeMismatchNamesTensor) {
  const auto spec = models::build(ArchitectureId::JustoLiuNet, 112, 3);
  auto f = to_file(spec, models::init_weights(spec, 0));
  for (auto& r : f.records)
    if (r.name == "dense_9/kernel") r.tensor = nn::Tensor<float>({100});
  try {
    from_file(decode_bytes(encode(f)));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dense_9/kernel"), std::string::npos);
  }
}

TEST(Jwb1, RejectsBadHeaders) {
  auto bad_magic = nb_bytes().b;
  bad_magic[3] = '2';
  EXPECT_THROW(decode_bytes(bad_magic), FormatError);
  Bytes v2;
  v2.raw("JWB1").u32(2).str("ml-nb").u32(1).u32(2).u32(0);
  EXPECT_THROW(decode_bytes(v2.b), FormatError);
  auto truncated = nb_bytes().b;
  truncated.pop_back();
  EXPECT_THROW(decode_bytes(truncated), IoError);
  auto trailing = nb_bytes().b;
  trailing.push_back(0);
  EXPECT_THROW(decode_bytes(trailing), FormatError);
  Bytes unknown;
  unknown.raw("JWB1").u32(1).str("2d-nu-net").u32(3).u32(3).u32(0);
  EXPECT_THROW(from_file(decode_bytes(unknown.b)), FormatError);
  Bytes rank5;
  rank5.raw("JWB1").u32(1).str("ml-nb").u32(1).u32(2).u32(1).record("x", {1, 1, 1, 1, 1}, {1});
  EXPECT_THROW(decode_bytes(rank5.b), FormatError);
  EXPECT_THROW(from_file(decode_bytes(nb_bytes().b)), FormatError);
  EXPECT_THROW(load_weights("/nonexistent/dir/model.jwb"), IoError);
}

TEST(Jwb1, NormalizationRecord) {
  const auto spec = models::build(ArchitectureId::JustoHuNet, 10, 3);
  const auto w = models::init_weights(spec, 3);
  const auto f = to_file(spec, w, true);
  EXPECT_EQ(f.records.back().name, kNormalizationRecord);
  EXPECT_EQ(f.value_count(), nn::param_count(spec));
  const auto m = from_file(decode_bytes(encode(f)));
  EXPECT_TRUE(m.normalized);
  EXPECT_EQ(m.weights, w);
  auto other = f;
  other.records.back().name = "meta/other";
  EXPECT_THROW(from_file(other), FormatError);
}

TEST(Jwb1, RejectsNonBuiltinSpecs) {
  auto spec = models::shrink(models::build(ArchitectureId::JustoHuNet, 10, 3), 2);
  EXPECT_THROW(to_file(spec, models::init_weights(spec, 0)), UnsupportedConfigError);
}

TEST(Baselines, RoundtripEveryKind) {
  Rng rng(4);
  const auto d = testutil::gaussian_blobs(40, {{0, 0, 1}, {2, 1, 0}, {-1, 3, 2}}, rng);
  PixelBatch q{300, 3, {}};
  for (int i = 0; i < 900; ++i) q.values.push_back(static_cast<float>(rng.uniform(-2, 4)));
  const auto dir = testutil::scratch_dir("jwb1_baselines");
  const std::vector<BaselineModel> models{baselines::nb_fit(d.x, d.y, 3), baselines::lda_fit(d.x, d.y, 3),
                                          baselines::qda_fit(d.x, d.y, 3),
                                          baselines::sgd_fit(d.x, d.y, 3, {0.01, 5, 0x123456789abcdefull})};
  for (const auto& m : models) {
    const auto path = dir / (std::string(baseline_tag(m)) + ".jwb");
    save_baseline(m, path);
    const auto back = load_baseline(path);
    EXPECT_EQ(back.index(), m.index());
    // The stored file is float32, so compare the reloaded model's file form
    // and its predictions against a second load.
    EXPECT_EQ(encode(to_file(back)), encode(to_file(m)));
    EXPECT_EQ(predict(back, q), predict(load_baseline(path), q));
    EXPECT_EQ(predict(back, q), predict(m, q)) << baseline_tag(m);
  }
  const auto sgd = std::get<baselines::SgdLinearModel>(load_baseline(dir / "ml-sgd.jwb"));
  EXPECT_EQ(sgd.config.seed, 0x123456789abcdefull);
  EXPECT_EQ(sgd.config.epochs, 5u);
}

TEST(Baselines, MissingOrMisshapenRecord) {
  auto f = to_file(BaselineModel(std::get<baselines::GaussianNBModel>(baseline_from_file(decode_bytes(nb_bytes().b)))));
  f.records.pop_back();
  EXPECT_THROW(baseline_from_file(f), FormatError);
  auto g = decode_bytes(nb_bytes().b);
  g.records[0].tensor = nn::Tensor<float>({3});
  EXPECT_THROW(baseline_from_file(g), ShapeError);
  g.architecture = "ml-svm";
  EXPECT_THROW(baseline_from_file(g), FormatError);
}
