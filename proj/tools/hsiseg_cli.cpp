// hsiseg: command-line front end for band selection, training, inference,
// evaluation, downlink ranking and timing.
//
// Exit codes: 0 success, 1 domain error, 2 usage or I/O error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsiseg/hsiseg.hpp"

namespace fs = std::filesystem;
using namespace hsiseg;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::string fmt(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// "default" selects the standard 8-channel drop list.
std::vector<std::size_t> parse_indices(const std::string& text) {
  if (text == "default") return bands::default_drop_list();
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-') throw ArgumentError("not a channel index: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Drops happen before selection, so --select-channels indexes the kept set.
struct ChannelOps {
  std::string drop_text;
  std::string select_text;

  HsiCube apply(HsiCube cube) const {
    if (!drop_text.empty()) cube = drop_channels(cube, parse_indices(drop_text));
    if (!select_text.empty()) cube = select_channels(cube, parse_indices(select_text));
    return cube;
  }

  void add_to(CLI::App* app) {
    app->add_option("--drop-channels", drop_text, "Comma-separated channel indices to drop, or 'default'");
    app->add_option("--select-channels", select_text, "Comma-separated channel indices to keep (after drops)");
  }
};

struct LabeledCube {
  std::string id;
  HsiCube cube;
  LabelMap labels;
};

// Every <id>.hsc in `dir` paired with <id>.lbl.
std::vector<LabeledCube> load_pairs(const fs::path& dir, const ChannelOps& ops) {
  std::vector<LabeledCube> out;
  for (const auto& p : list_files(dir, ".hsc")) {
    auto lbl = p;
    lbl.replace_extension(".lbl");
    if (!fs::exists(lbl)) throw IoError("missing labels for " + p.string() + " (expected " + lbl.string() + ")");
    out.push_back({p.stem().string(), ops.apply(load_cube(p)), load_labels(lbl)});
  }
  if (out.empty()) throw ArgumentError("no .hsc cubes in " + dir.string());
  return out;
}

bool declares_normalization(const weights::WeightFile& f) {
  return std::any_of(f.records.begin(), f.records.end(),
                     [](const auto& r) { return r.name == weights::kNormalizationRecord; });
}

// A loaded weight file ready to label cubes.
struct Predictor {
  weights::WeightFile file;
  std::optional<weights::LoadedModel> cnn;
  std::optional<weights::BaselineModel> baseline;

  static Predictor load(const fs::path& path) {
    Predictor p;
    p.file = weights::read_file(path);
    if (weights::is_baseline_tag(p.file.architecture)) {
      p.baseline = weights::baseline_from_file(p.file);
    } else {
      p.cnn = weights::from_file(p.file);
    }
    return p;
  }

  std::size_t channels() const { return file.in_channels; }

  LabelMap run(const HsiCube& cube) const {
    if (cnn) return pipeline::infer_cube(cnn->spec, cnn->weights, cube);
    if (cube.channels() != channels()) {
      throw ArgumentError(file.architecture + " expects " + std::to_string(channels()) + " channels, cube has " +
                          std::to_string(cube.channels()));
    }
    return unflatten_labels(weights::predict(*baseline, flatten_pixels(cube)), cube.height(), cube.width());
  }
};

HsiCube prepare_cube(const fs::path& cube_path, const ChannelOps& ops, const std::string& norm_path,
                     const weights::WeightFile& file) {
  auto cube = ops.apply(load_cube(cube_path));
  if (norm_path.empty()) {
    if (declares_normalization(file)) {
      throw ArgumentError("the weight file declares min-max normalised inputs; pass --norm-stats");
    }
    return cube;
  }
  return minmax_apply(cube, load_norm_stats(norm_path));
}

// ---------------------------------------------------------------------------

struct BandsArgs {
  std::string cubes, out, drop;
  double contamination = 0.08;
  std::uint64_t seed = 0;
  std::size_t trees = 100, subsample = 256;
};

void cmd_bands(const BandsArgs& a) {
  std::vector<HsiCube> cubes;
  for (const auto& p : list_files(a.cubes, ".hsc")) cubes.push_back(load_cube(p));
  if (cubes.empty()) throw ArgumentError("no .hsc cubes in " + a.cubes);
  const auto stats = bands::channel_std(cubes);
  const auto model = bands::iforest_fit(stats.stddev, {a.trees, a.subsample, a.seed});
  const auto flagged = bands::iforest_flag(model, stats.stddev, a.contamination);
  const auto& wl = cubes.front().wavelengths();

  fs::create_directories(a.out);
  std::string table = "channel,wavelength,std,flagged\n";
  for (std::size_t c = 0; c < stats.stddev.size(); ++c) {
    const bool f = std::binary_search(flagged.begin(), flagged.end(), c);
    table += std::to_string(c) + "," + (wl ? fmt((*wl)[c], 2) : std::string()) + "," + fmt(stats.stddev[c]) + "," +
             (f ? "1" : "0") + "\n";
  }
  write_text(fs::path(a.out) / "channels.csv", table);

  const auto drop = a.drop.empty() ? flagged : parse_indices(a.drop);
  const auto keep = complement_channels(stats.stddev.size(), drop);
  write_text(fs::path(a.out) / "drop.txt", join(drop) + "\n");
  write_text(fs::path(a.out) / "keep.txt", join(keep) + "\n");
  std::cout << "flagged," << join(flagged) << "\n";
  std::cout << "drop," << join(drop) << "\n";
  std::cout << "keep," << join(keep) << "\n";

  if (!wl) return;
  // First principal component of the normalised kept channels, pooled over
  // all cubes, then the strongest loading per spectral range.
  std::vector<HsiCube> kept;
  for (const auto& c : cubes) kept.push_back(drop_channels(c, drop));
  const auto norm = minmax_fit(kept);
  PixelBatch pixels;
  pixels.channels = keep.size();
  for (const auto& c : kept) {
    const auto flat = flatten_pixels(minmax_apply(c, norm));
    pixels.values.insert(pixels.values.end(), flat.values.begin(), flat.values.end());
    pixels.count += flat.count;
  }
  const auto pca = bands::pca_first_component(pixels);
  const auto rgb = bands::select_rgb_like(pca.weights, *kept.front().wavelengths());
  std::string loadings = "channel,wavelength,loading\n";
  for (std::size_t c = 0; c < pca.weights.size(); ++c) {
    loadings += std::to_string(c) + "," + fmt((*kept.front().wavelengths())[c], 2) + "," + fmt(pca.weights[c], 8) + "\n";
  }
  write_text(fs::path(a.out) / "pca.csv", loadings);
  write_text(fs::path(a.out) / "rgb.txt", join(rgb.as_list()) + "\n");
  std::cout << "explained_variance," << fmt(pca.explained) << "\n";
  std::cout << "rgb_like," << join(rgb.as_list()) << "\n";
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, train_dir, val_dir, out, history, norm_out;
  bool normalize = false;
  ChannelOps ops;
};

PixelBatch pixels_of(const std::vector<LabeledCube>& data, std::vector<std::uint8_t>& labels) {
  PixelBatch px;
  px.channels = data.front().cube.channels();
  for (const auto& d : data) {
    if (d.cube.channels() != px.channels) throw ArgumentError("cubes disagree on channel count");
    const auto f = flatten_pixels(d.cube);
    px.values.insert(px.values.end(), f.values.begin(), f.values.end());
    px.count += f.count;
    labels.insert(labels.end(), d.labels.labels().begin(), d.labels.labels().end());
  }
  return px;
}

void cmd_train(const TrainArgs& a) {
  const auto kv = config::load(a.config);
  kv.require_known({"arch", "channels", "classes", "epochs", "batch", "lr", "beta1", "beta2", "epsilon", "seed",
                    "shuffle"});
  const std::string arch = kv.text("arch");
  const std::size_t channels = kv.integer("channels");
  const std::size_t classes = kv.integer_or("classes", kClassCount);
  if (classes > kClassCount) throw ArgumentError("label files hold at most " + std::to_string(kClassCount) + " classes");

  std::optional<nn::ModelSpec> spec;
  if (!weights::is_baseline_tag(arch)) {
    const auto id = models::parse_architecture(arch);
    if (!id) throw ArgumentError("unknown architecture '" + arch + "'");
    spec = models::build(*id, channels, classes);  // shape errors surface here
  } else if (arch != "ml-nb" && arch != "ml-lda" && arch != "ml-qda" && arch != "ml-sgd") {
    throw ArgumentError("unknown baseline '" + arch + "'");
  }

  auto data = load_pairs(a.train_dir, a.ops);
  std::vector<LabeledCube> val;
  if (!a.val_dir.empty()) val = load_pairs(a.val_dir, a.ops);
  for (const auto* set : {&data, &val}) {
    for (const auto& d : *set) {
      if (d.cube.channels() != channels) {
        throw ArgumentError("config declares channels=" + std::to_string(channels) + " but " + d.id + " has " +
                            std::to_string(d.cube.channels()) + " after channel selection");
      }
    }
  }
  if (a.normalize) {
    std::vector<HsiCube> cubes;
    for (const auto& d : data) cubes.push_back(d.cube);
    const auto stats = minmax_fit(cubes);
    for (auto* set : {&data, &val})
      for (auto& d : *set) d.cube = minmax_apply(d.cube, stats);
    save_norm_stats(stats, a.norm_out.empty() ? a.out + ".nrm" : a.norm_out);
  }

  weights::WeightFile file;
  if (!spec) {
    std::vector<std::uint8_t> y;
    const auto x = pixels_of(data, y);
    weights::BaselineModel model;
    if (arch == "ml-nb") model = baselines::nb_fit(x, y, classes);
    else if (arch == "ml-lda") model = baselines::lda_fit(x, y, classes);
    else if (arch == "ml-qda") model = baselines::qda_fit(x, y, classes);
    else {
      baselines::SgdConfig sc;
      sc.lr = kv.number_or("lr", sc.lr);
      sc.epochs = kv.integer_or("epochs", sc.epochs);
      sc.seed = kv.integer_or("seed", sc.seed);
      model = baselines::sgd_fit(x, y, classes, sc);
    }
    file = weights::to_file(model);
    if (a.normalize) file.records.push_back({weights::kNormalizationRecord, nn::Tensor<float>(nn::Shape{0})});
    weights::write_file(file, a.out);
    std::vector<std::uint8_t> yv;
    const double acc = baselines::accuracy(weights::predict(model, x), y);
    std::string hist = "epoch,loss,train_acc,val_acc\n0,," + fmt(acc) + ",";
    if (!val.empty()) {
      const auto xv = pixels_of(val, yv);
      hist += fmt(baselines::accuracy(weights::predict(model, xv), yv));
    }
    write_text(a.history.empty() ? a.out + ".history.csv" : a.history, hist + "\n");
    std::cout << "model," << arch << "\ntrain_acc," << fmt(acc) << "\n";
    return;
  }

  auto cfg = spec->is_2d() ? train::TrainConfig::for_2d() : train::TrainConfig::for_1d();
  cfg.epochs = kv.integer_or("epochs", cfg.epochs);
  cfg.batch = kv.integer_or("batch", cfg.batch);
  cfg.lr = kv.number_or("lr", cfg.lr);
  cfg.beta1 = kv.number_or("beta1", cfg.beta1);
  cfg.beta2 = kv.number_or("beta2", cfg.beta2);
  cfg.epsilon = kv.number_or("epsilon", cfg.epsilon);
  cfg.seed = kv.integer_or("seed", cfg.seed);
  cfg.shuffle = kv.integer_or("shuffle", 1) != 0;

  train::Dataset<float> train_set, val_set;
  for (const auto& d : data) pipeline::append_samples(*spec, d.cube, d.labels, train_set);
  for (const auto& d : val) pipeline::append_samples(*spec, d.cube, d.labels, val_set);
  const auto result = train::fit(*spec, train_set, cfg, val.empty() ? nullptr : &val_set);
  weights::save_weights(*spec, result.weights, a.out, a.normalize);

  std::string hist = "epoch,loss,train_acc,val_acc\n";
  const auto& h = result.history;
  for (std::size_t e = 0; e < h.loss.size(); ++e) {
    hist += std::to_string(e + 1) + "," + fmt(h.loss[e]) + "," + fmt(h.train_accuracy[e]) + "," +
            (std::isnan(h.val_accuracy[e]) ? std::string() : fmt(h.val_accuracy[e])) + "\n";
  }
  write_text(a.history.empty() ? a.out + ".history.csv" : a.history, hist);
  std::cout << "model," << spec->name << "\nparams," << nn::param_count(*spec) << "\n";
  std::cout << "final_loss," << fmt(h.loss.back()) << "\nfinal_train_acc," << fmt(h.train_accuracy.back()) << "\n";
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string weights, cube, out, norm;
  ChannelOps ops;
};

void cmd_infer(const InferArgs& a) {
  const auto pred = Predictor::load(a.weights);
  const auto cube = prepare_cube(a.cube, a.ops, a.norm, pred.file);
  save_labels(pred.run(cube), a.out);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred, truth, out;
  bool per_image = false;
};

void cmd_eval(const EvalArgs& a) {
  std::vector<std::pair<LabelMap, LabelMap>> pairs;
  if (fs::is_directory(a.pred)) {
    for (const auto& p : list_files(a.pred, ".lbl")) {
      const auto t = fs::path(a.truth) / p.filename();
      if (!fs::exists(t)) throw IoError("no truth labels for " + p.filename().string() + " in " + a.truth);
      pairs.emplace_back(load_labels(p), load_labels(t));
    }
    if (pairs.empty()) throw ArgumentError("no .lbl files in " + a.pred);
  } else {
    pairs.emplace_back(load_labels(a.pred), load_labels(a.truth));
  }

  metrics::MetricsReport rep;
  if (!a.per_image) {
    metrics::ConfusionMatrix cm;
    for (const auto& [p, t] : pairs) cm += metrics::confusion(p, t);
    rep = metrics::report(cm);
  } else {
    // Mean over images of each metric, skipping images where it is undefined.
    struct Acc {
      double sum = 0;
      std::size_t n = 0;
      void add(std::optional<double> v) {
        if (v) sum += *v, ++n;
      }
      std::optional<double> mean() const { return n ? std::optional(sum / static_cast<double>(n)) : std::nullopt; }
    };
    Acc aa, oa, mf;
    std::array<Acc, kClassCount> f1, tpr, tnr, fpr, fnr, dist;
    for (const auto& [p, t] : pairs) {
      const auto cm = metrics::confusion(p, t);
      rep.cm += cm;
      const auto r = metrics::report(cm);
      aa.add(r.average_accuracy);
      oa.add(r.overall_accuracy);
      mf.add(r.macro_f1);
      for (std::size_t k = 0; k < kClassCount; ++k) {
        f1[k].add(r.f1[k]);
        dist[k].add(r.distance[k]);
        if (r.rates[k]) {
          tpr[k].add(r.rates[k]->tpr);
          tnr[k].add(r.rates[k]->tnr);
          fpr[k].add(r.rates[k]->fpr);
          fnr[k].add(r.rates[k]->fnr);
        }
      }
    }
    rep.average_accuracy = aa.mean();
    rep.overall_accuracy = *oa.mean();
    rep.macro_f1 = *mf.mean();
    for (std::size_t k = 0; k < kClassCount; ++k) {
      rep.f1[k] = *f1[k].mean();
      rep.distance[k] = dist[k].mean();
      rep.rates[k].reset();
      if (tpr[k].n) rep.rates[k] = metrics::ClassBinaryRates{*tpr[k].mean(), *tnr[k].mean(), *fpr[k].mean(), *fnr[k].mean()};
    }
  }
  std::ostringstream os;
  metrics::write_report(os, rep);
  if (a.out.empty()) std::cout << os.str();
  else write_text(a.out, os.str());
}

// ---------------------------------------------------------------------------

struct RankArgs {
  std::string labels_dir, truth_dir, config, out;
};

std::vector<ranker::CoverageReport> coverages(const fs::path& dir) {
  std::vector<ranker::CoverageReport> out;
  for (const auto& p : list_files(dir, ".lbl")) out.push_back(ranker::coverage(load_labels(p), p.stem().string()));
  if (out.empty()) throw ArgumentError("no .lbl files in " + dir.string());
  return out;
}

void cmd_rank(const RankArgs& a) {
  const auto cfg = a.config.empty() ? ranker::RankerConfig{} : ranker::RankerConfig::from(config::load(a.config));
  cfg.validate();
  const auto reports = coverages(a.labels_dir);

  std::ostringstream queue, actions, cover, scores;
  queue << "position,image_id,criterion,coverage\n";
  for (auto c : ranker::kAllCriteria) ranker::write_queue(queue, ranker::rank(reports, c));
  actions << "image_id,segment,action\n";
  cover << "image_id,sea,land,cloud\n";
  for (const auto& r : reports) {
    const auto act = ranker::decide_actions(r, cfg);
    for (std::size_t k = 0; k < kClassCount; ++k) {
      actions << r.image_id << ',' << class_name(k) << ',' << ranker::to_string(act[k]) << '\n';
    }
    cover << r.image_id << ',' << fmt(r.sea()) << ',' << fmt(r.land()) << ',' << fmt(r.cloud()) << '\n';
  }
  if (!a.truth_dir.empty()) {
    auto truth = coverages(a.truth_dir);
    if (truth.size() != reports.size()) throw ArgumentError("prediction and truth directories hold different images");
    scores << "metric,criterion,value\n";
    for (auto c : ranker::kAllCriteria) {
      scores << "spearman," << ranker::to_string(c) << ','
             << fmt(ranker::spearman_vs_truth(ranker::rank(reports, c), ranker::rank(truth, c))) << '\n';
    }
    scores << "spearman,mean," << fmt(ranker::mean_spearman(reports, truth)) << '\n';
    std::map<std::string, const ranker::CoverageReport*> by_id;
    for (const auto& t : truth) by_id[t.image_id] = &t;
    for (std::size_t k = 0; k < kClassCount; ++k) {
      std::vector<double> p, t;
      for (const auto& r : reports) {
        const auto it = by_id.find(r.image_id);
        if (it == by_id.end()) throw ArgumentError("no truth labels for image " + r.image_id);
        p.push_back(r.fraction[k]);
        t.push_back(it->second->fraction[k]);
      }
      scores << "coverage_mae," << class_name(k) << ',' << fmt(metrics::coverage_mae(p, t)) << '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << queue.str() << '\n' << actions.str() << '\n' << cover.str();
    if (!a.truth_dir.empty()) std::cout << '\n' << scores.str();
    return;
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "queue.csv", queue.str());
  write_text(fs::path(a.out) / "actions.csv", actions.str());
  write_text(fs::path(a.out) / "coverage.csv", cover.str());
  if (!a.truth_dir.empty()) write_text(fs::path(a.out) / "ranking_metrics.csv", scores.str());
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string weights, cube, norm;
  std::size_t repeats = 5;
  ChannelOps ops;
};

void cmd_bench(const BenchArgs& a) {
  if (a.repeats < 1) throw ArgumentError("--repeats must be >= 1");
  const auto pred = Predictor::load(a.weights);
  const auto cube = prepare_cube(a.cube, a.ops, a.norm, pred.file);
  std::cout << "architecture," << pred.file.architecture << "\nchannels," << cube.channels() << "\n";
  std::cout << "repeat,ms\n";
  double total = 0;
  for (std::size_t i = 0; i < a.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto labels = pred.run(cube);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    total += ms;
    std::cout << (i + 1) << ',' << fmt(ms, 3) << '\n';
  }
  std::cout << "mean," << fmt(total / static_cast<double>(a.repeats), 3) << '\n';
}

// ---------------------------------------------------------------------------

void cmd_export_info(const std::string& path) {
  const auto f = weights::read_file(path);
  std::cout << "format,JWB1\nversion," << f.version << "\narchitecture," << f.architecture << "\nin_channels,"
            << f.in_channels << "\nclasses," << f.classes << "\nrecords," << f.records.size() << "\n";
  for (const auto& r : f.records) {
    std::cout << "record," << r.name << ',' << nn::to_string(r.tensor.shape) << ',' << r.tensor.size() << '\n';
  }
  std::cout << "values," << f.value_count() << '\n';
  if (weights::is_baseline_tag(f.architecture)) {
    weights::baseline_from_file(f);
  } else {
    const auto m = weights::from_file(f);
    std::cout << "param_count," << nn::param_count(m.spec) << '\n';
    std::cout << "normalized," << (m.normalized ? 1 : 0) << '\n';
  }
  std::cout << "validation,ok\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperspectral sea/land/cloud segmentation toolkit"};
  app.require_subcommand(1);

  BandsArgs bands_args;
  auto* bands_cmd = app.add_subcommand("bands", "Channel std-dev anomaly flags, drop/keep lists and PCA band picks");
  bands_cmd->add_option("--cubes", bands_args.cubes, "Directory of .hsc cubes")->required();
  bands_cmd->add_option("--out", bands_args.out, "Output directory for channels.csv, drop.txt, keep.txt, pca.csv, rgb.txt")
      ->required();
  bands_cmd->add_option("--contamination", bands_args.contamination, "Fraction of channels to flag")->capture_default_str();
  bands_cmd->add_option("--seed", bands_args.seed, "Isolation forest seed")->capture_default_str();
  bands_cmd->add_option("--trees", bands_args.trees, "Isolation trees")->capture_default_str();
  bands_cmd->add_option("--subsample", bands_args.subsample, "Maximum subsample per tree")->capture_default_str();
  bands_cmd->add_option("--drop-channels", bands_args.drop, "Override the drop list ('default' or indices)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a network or baseline from <id>.hsc/<id>.lbl pairs");
  train_cmd->add_option("--config", train_args.config, "key=value file: arch, channels, classes, epochs, batch, lr, "
                                                       "beta1, beta2, epsilon, seed")
      ->required();
  train_cmd->add_option("--train-dir", train_args.train_dir, "Training pairs")->required();
  train_cmd->add_option("--val-dir", train_args.val_dir, "Validation pairs");
  train_cmd->add_option("--out", train_args.out, "Output JWB1 weight file")->required();
  train_cmd->add_option("--history", train_args.history, "History CSV (default <out>.history.csv)");
  train_cmd->add_flag("--normalize", train_args.normalize, "Fit min-max statistics on the training cubes");
  train_cmd->add_option("--norm-out", train_args.norm_out, "Where to write the statistics (default <out>.nrm)");
  train_args.ops.add_to(train_cmd);

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Label a cube");
  infer_cmd->add_option("--weights", infer_args.weights, "JWB1 weight file")->required();
  infer_cmd->add_option("--cube", infer_args.cube, "Input .hsc cube")->required();
  infer_cmd->add_option("--out", infer_args.out, "Output .lbl file")->required();
  infer_cmd->add_option("--norm-stats", infer_args.norm, "Min-max statistics written by train --normalize");
  infer_args.ops.add_to(infer_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Segmentation metrics as metric,class,value lines");
  eval_cmd->add_option("--pred", eval_args.pred, "Predicted .lbl file or directory")->required();
  eval_cmd->add_option("--truth", eval_args.truth, "Truth .lbl file or directory")->required();
  eval_cmd->add_option("--out", eval_args.out, "Write the table here instead of stdout");
  eval_cmd->add_flag("--per-image", eval_args.per_image, "Average metrics over images instead of pooling pixels");

  RankArgs rank_args;
  auto* rank_cmd = app.add_subcommand("rank", "Downlink queues and per-segment actions from label maps");
  rank_cmd->add_option("--labels-dir", rank_args.labels_dir, "Directory of predicted .lbl maps")->required();
  rank_cmd->add_option("--truth-dir", rank_args.truth_dir, "Truth maps for Spearman and coverage MAE");
  rank_cmd->add_option("--config", rank_args.config, "key=value thresholds: th_cl, th_sea, th_land (default 0.5)");
  rank_cmd->add_option("--out", rank_args.out, "Output directory (default: stdout)");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Per-image inference time; the model and cube are loaded once and only inference is timed");
  bench_cmd->add_option("--weights", bench_args.weights, "JWB1 weight file")->required();
  bench_cmd->add_option("--cube", bench_args.cube, "Input .hsc cube")->required();
  bench_cmd->add_option("--repeats", bench_args.repeats, "Timed repetitions")->capture_default_str();
  bench_cmd->add_option("--norm-stats", bench_args.norm, "Min-max statistics");
  bench_args.ops.add_to(bench_cmd);

  std::string info_path;
  auto* info_cmd = app.add_subcommand("export-info", "Describe and validate a JWB1 file");
  info_cmd->add_option("--weights", info_path, "JWB1 weight file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*bands_cmd) cmd_bands(bands_args);
    else if (*train_cmd) cmd_train(train_args);
    else if (*infer_cmd) cmd_infer(infer_args);
    else if (*eval_cmd) cmd_eval(eval_args);
    else if (*rank_cmd) cmd_rank(rank_args);
    else if (*bench_cmd) cmd_bench(bench_args);
    else if (*info_cmd) cmd_export_info(info_path);
  } catch (const IoError& e) {
    std::cerr << "hsiseg: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "hsiseg: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hsiseg: " << e.what() << '\n';
    return kExitDomain;
  }
  return 0;
}
