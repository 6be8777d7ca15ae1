#pragma once

// JWB1 weight container (little-endian):
//
//   "JWB1" | u32 version=1 | str architecture | u32 in_channels | u32 classes
//   | u32 record_count | record*
//   record: str name | u32 rank | rank x u32 dims | prod(dims) x float32
//
// str is a u32 byte length followed by UTF-8 bytes. CNN files carry one record
// per tensor slot in layer order (see nn::tensor_slots for names and layouts);
// an optional trailing zero-length record "meta/normalization" declares that
// inputs must be min-max normalised before inference. Baseline models use the
// architecture tags "ml-nb", "ml-lda", "ml-qda" and "ml-sgd".

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <type_traits>
#include <string>
#include <variant>
#include <vector>

#include "hsiseg/baselines.hpp"
#include "hsiseg/binary_io.hpp"
#include "hsiseg/model.hpp"
#include "hsiseg/models.hpp"

namespace hsiseg::weights {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr const char* kNormalizationRecord = "meta/normalization";

// The file exactly as stored, before any architecture validation.
struct WeightFile {
  std::uint32_t version = kVersion;
  std::string architecture;
  std::uint32_t in_channels = 0;
  std::uint32_t classes = 0;
  std::vector<nn::NamedTensor<float>> records;

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.tensor.size();
    return n;
  }
  bool operator==(const WeightFile&) const = default;
};

inline std::vector<char> encode(const WeightFile& f) {
  io::ByteWriter w;
  w.magic("JWB1");
  w.u32(f.version);
  w.str(f.architecture);
  w.u32(f.in_channels);
  w.u32(f.classes);
  w.u32(static_cast<std::uint32_t>(f.records.size()));
  for (const auto& r : f.records) {
    w.str(r.name);
    w.u32(static_cast<std::uint32_t>(r.tensor.rank()));
    for (auto d : r.tensor.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(r.tensor.data);
  }
  return w.bytes();
}

inline WeightFile decode(io::ByteReader& r) {
  r.expect_magic("JWB1");
  WeightFile f;
  f.version = r.u32();
  if (f.version != kVersion) {
    throw FormatError(r.source() + ": unsupported JWB1 version " + std::to_string(f.version));
  }
  f.architecture = r.str();
  f.in_channels = r.u32();
  f.classes = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 4) throw FormatError(r.source() + ": record \"" + name + "\" has rank " + std::to_string(rank));
    nn::Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    auto values = r.f32s(nn::shape_size(shape), "record \"" + name + "\"");
    f.records.push_back({std::move(name), nn::Tensor<float>(std::move(shape), std::move(values))});
  }
  if (!r.at_end()) throw FormatError(r.source() + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return f;
}

inline void write_file(const WeightFile& f, const std::filesystem::path& path) {
  const auto bytes = encode(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline WeightFile read_file(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  return decode(r);
}

inline bool is_baseline_tag(const std::string& arch) { return arch.rfind("ml-", 0) == 0; }

// ---------------------------------------------------------------------------
// CNN models

struct LoadedModel {
  nn::ModelSpec spec;
  nn::WeightBundle<float> weights;
  bool normalized = false;
};

inline WeightFile to_file(const nn::ModelSpec& spec, const nn::WeightBundle<float>& w, bool normalized = false) {
  if (!models::parse_architecture(spec.name)) {
    throw UnsupportedConfigError("only the built-in architectures can be saved, got \"" + spec.name + "\"");
  }
  nn::check_weights(spec, w);
  WeightFile f;
  f.architecture = spec.name;
  f.in_channels = static_cast<std::uint32_t>(spec.input_channels);
  f.classes = static_cast<std::uint32_t>(spec.classes);
  f.records = w.tensors;
  if (normalized) f.records.push_back({kNormalizationRecord, nn::Tensor<float>(nn::Shape{0})});
  return f;
}

// Rebuilds the named architecture locally and refuses any record whose name,
// order or shape disagrees with it.
inline LoadedModel from_file(const WeightFile& f) {
  if (is_baseline_tag(f.architecture)) {
    throw FormatError("\"" + f.architecture + "\" is a baseline model, not a network");
  }
  const auto id = models::parse_architecture(f.architecture);
  if (!id) throw FormatError("unknown architecture \"" + f.architecture + "\"");
  LoadedModel m;
  m.spec = models::build(*id, f.in_channels, f.classes);
  for (const auto& r : f.records) {
    if (r.name == kNormalizationRecord) {
      m.normalized = true;
    } else if (r.name.rfind("meta/", 0) == 0) {
      throw FormatError("unknown metadata record \"" + r.name + "\"");
    } else {
      if (m.normalized) throw FormatError("tensor record \"" + r.name + "\" after metadata");
      m.weights.tensors.push_back(r);
    }
  }
  nn::check_weights(m.spec, m.weights);
  return m;
}

inline void save_weights(const nn::ModelSpec& spec, const nn::WeightBundle<float>& w, const std::filesystem::path& path,
                         bool normalized = false) {
  write_file(to_file(spec, w, normalized), path);
}

inline LoadedModel load_weights(const std::filesystem::path& path) { return from_file(read_file(path)); }

// ---------------------------------------------------------------------------
// Baselines. Estimates are stored as float32; the derived factors are
// recomputed on load.

using BaselineModel =
    std::variant<baselines::GaussianNBModel, baselines::LdaModel, baselines::QdaModel, baselines::SgdLinearModel>;

namespace detail {

inline nn::NamedTensor<float> rec(std::string name, nn::Shape shape, const std::vector<double>& v) {
  return {std::move(name), nn::Tensor<float>(std::move(shape), std::vector<float>(v.begin(), v.end()))};
}

inline std::vector<double> take(const WeightFile& f, const std::string& name, const nn::Shape& shape) {
  for (const auto& r : f.records) {
    if (r.name != name) continue;
    if (r.tensor.shape != shape) {
      throw ShapeError(f.architecture + ": record \"" + name + "\" has shape " + nn::to_string(r.tensor.shape) +
                       ", expected " + nn::to_string(shape));
    }
    return {r.tensor.data.begin(), r.tensor.data.end()};
  }
  throw FormatError(f.architecture + ": missing record \"" + name + "\"");
}

// A 64-bit seed split into four exactly representable 16-bit limbs.
inline std::vector<double> seed_limbs(std::uint64_t s) {
  return {static_cast<double>(s & 0xffff), static_cast<double>((s >> 16) & 0xffff),
          static_cast<double>((s >> 32) & 0xffff), static_cast<double>(s >> 48)};
}

inline std::uint64_t seed_from_limbs(const std::vector<double>& v) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < 4; ++i) s |= static_cast<std::uint64_t>(v[i]) << (16 * i);
  return s;
}

}  // namespace detail

inline const char* baseline_tag(const BaselineModel& m) {
  switch (m.index()) {
    case 0: return "ml-nb";
    case 1: return "ml-lda";
    case 2: return "ml-qda";
    default: return "ml-sgd";
  }
}

inline WeightFile to_file(const BaselineModel& model) {
  WeightFile f;
  f.architecture = baseline_tag(model);
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        const std::size_t k = m.classes, c = m.channels;
        f.in_channels = static_cast<std::uint32_t>(c);
        f.classes = static_cast<std::uint32_t>(k);
        if constexpr (std::is_same_v<M, baselines::GaussianNBModel>) {
          f.records.push_back(detail::rec("priors", {k}, m.priors));
          f.records.push_back(detail::rec("means", {k, c}, m.means));
          f.records.push_back(detail::rec("variances", {k, c}, m.variances));
        } else if constexpr (std::is_same_v<M, baselines::LdaModel>) {
          f.records.push_back(detail::rec("priors", {k}, m.priors));
          f.records.push_back(detail::rec("means", {k, c}, m.means));
          f.records.push_back(detail::rec("covariance", {c, c}, m.covariance));
        } else if constexpr (std::is_same_v<M, baselines::QdaModel>) {
          f.records.push_back(detail::rec("priors", {k}, m.priors));
          f.records.push_back(detail::rec("means", {k, c}, m.means));
          f.records.push_back(detail::rec("covariances", {k, c, c}, m.covariances));
        } else {
          f.records.push_back(detail::rec("weight", {k, c}, m.weight));
          f.records.push_back(detail::rec("bias", {k}, m.bias));
          f.records.push_back(detail::rec("hyper/lr", {1}, {m.config.lr}));
          f.records.push_back(detail::rec("hyper/epochs", {1}, {static_cast<double>(m.config.epochs)}));
          f.records.push_back(detail::rec("hyper/seed", {4}, detail::seed_limbs(m.config.seed)));
        }
      },
      model);
  return f;
}

inline BaselineModel baseline_from_file(const WeightFile& f) {
  const std::size_t k = f.classes, c = f.in_channels;
  if (k < 2 || c < 1) throw FormatError(f.architecture + ": invalid channel/class counts");
  if (f.architecture == "ml-nb") {
    baselines::GaussianNBModel m;
    m.channels = c;
    m.classes = k;
    m.priors = detail::take(f, "priors", {k});
    m.means = detail::take(f, "means", {k, c});
    m.variances = detail::take(f, "variances", {k, c});
    return m;
  }
  if (f.architecture == "ml-lda") {
    baselines::LdaModel m;
    m.channels = c;
    m.classes = k;
    m.priors = detail::take(f, "priors", {k});
    m.means = detail::take(f, "means", {k, c});
    m.covariance = detail::take(f, "covariance", {c, c});
    baselines::lda_prepare(m);
    return m;
  }
  if (f.architecture == "ml-qda") {
    baselines::QdaModel m;
    m.channels = c;
    m.classes = k;
    m.priors = detail::take(f, "priors", {k});
    m.means = detail::take(f, "means", {k, c});
    m.covariances = detail::take(f, "covariances", {k, c, c});
    baselines::qda_prepare(m);
    return m;
  }
  if (f.architecture == "ml-sgd") {
    baselines::SgdLinearModel m;
    m.channels = c;
    m.classes = k;
    m.weight = detail::take(f, "weight", {k, c});
    m.bias = detail::take(f, "bias", {k});
    m.config.lr = detail::take(f, "hyper/lr", {1})[0];
    m.config.epochs = static_cast<std::size_t>(detail::take(f, "hyper/epochs", {1})[0]);
    m.config.seed = detail::seed_from_limbs(detail::take(f, "hyper/seed", {4}));
    return m;
  }
  throw FormatError("unknown baseline model kind \"" + f.architecture + "\"");
}

inline void save_baseline(const BaselineModel& m, const std::filesystem::path& path) { write_file(to_file(m), path); }
inline BaselineModel load_baseline(const std::filesystem::path& path) { return baseline_from_file(read_file(path)); }

inline std::vector<std::uint8_t> predict(const BaselineModel& model, const PixelBatch& x) {
  return std::visit(
      [&](const auto& m) -> std::vector<std::uint8_t> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, baselines::GaussianNBModel>) return baselines::nb_predict(m, x);
        else if constexpr (std::is_same_v<M, baselines::LdaModel>) return baselines::lda_predict(m, x);
        else if constexpr (std::is_same_v<M, baselines::QdaModel>) return baselines::qda_predict(m, x);
        else return baselines::sgd_predict(m, x);
      },
      model);
}

}  // namespace hsiseg::weights
