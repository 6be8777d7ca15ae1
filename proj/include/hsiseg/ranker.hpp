#pragma once

// Downlink ranking from segmented maps: per-image coverage, three priority
// queues and threshold-driven actions per class segment.
//
// Decision table (strict comparisons, one action per segment):
//
//   segment | condition          | action
//   --------+--------------------+-------------------
//   cloud   | cloud > th_cl      | discard
//   sea     | sea   > th_sea     | downlink-priority
//   land    | land  > th_land    | downlink-priority
//   any     | otherwise          | lossy-compress
//
// Thresholds gate class segments, not whole images; an image's place in the
// downlink order comes from the queues.

#include <algorithm>
#include <array>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hsiseg/config.hpp"
#include "hsiseg/cube.hpp"
#include "hsiseg/metrics.hpp"

namespace hsiseg::ranker {

struct CoverageReport {
  std::string image_id;
  std::array<double, kClassCount> fraction{};  // indexed by class code

  double sea() const { return fraction[0]; }
  double land() const { return fraction[1]; }
  double cloud() const { return fraction[2]; }
};

inline CoverageReport coverage(const LabelMap& seg, std::string image_id = {}) {
  if (seg.size() == 0) throw ArgumentError("coverage of an empty map");
  std::array<std::size_t, kClassCount> counts{};
  for (auto v : seg.labels()) ++counts[v];
  CoverageReport r;
  r.image_id = std::move(image_id);
  for (std::size_t k = 0; k < kClassCount; ++k) {
    r.fraction[k] = static_cast<double>(counts[k]) / static_cast<double>(seg.size());
  }
  return r;
}

enum class Criterion { CloudAsc, SeaDesc, LandDesc };

inline constexpr std::array<Criterion, 3> kAllCriteria = {Criterion::CloudAsc, Criterion::SeaDesc,
                                                          Criterion::LandDesc};

inline const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::CloudAsc: return "cloud-asc";
    case Criterion::SeaDesc: return "sea-desc";
    case Criterion::LandDesc: return "land-desc";
  }
  return "?";
}

inline double criterion_value(const CoverageReport& r, Criterion c) {
  switch (c) {
    case Criterion::CloudAsc: return r.cloud();
    case Criterion::SeaDesc: return r.sea();
    case Criterion::LandDesc: return r.land();
  }
  return 0;
}

struct QueueEntry {
  std::string image_id;
  double coverage = 0;
  bool operator==(const QueueEntry&) const = default;
};

struct RankedQueue {
  Criterion criterion = Criterion::CloudAsc;
  std::vector<QueueEntry> entries;  // highest priority first

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.image_id);
    return out;
  }
  bool operator==(const RankedQueue&) const = default;
};

// Ties on coverage are broken by ascending image id, so the order is a total
// function of the reports' contents, not their input order.
inline RankedQueue rank(std::vector<CoverageReport> reports, Criterion c) {
  if (reports.empty()) throw ArgumentError("rank: no reports");
  std::set<std::string> seen;
  for (const auto& r : reports) {
    if (!seen.insert(r.image_id).second) throw ArgumentError("rank: duplicate image id '" + r.image_id + "'");
  }
  const bool ascending = c == Criterion::CloudAsc;
  std::sort(reports.begin(), reports.end(), [&](const CoverageReport& a, const CoverageReport& b) {
    const double va = criterion_value(a, c), vb = criterion_value(b, c);
    if (va != vb) return ascending ? va < vb : va > vb;
    return a.image_id < b.image_id;
  });
  RankedQueue q;
  q.criterion = c;
  for (const auto& r : reports) q.entries.push_back({r.image_id, criterion_value(r, c)});
  return q;
}

// Spearman coefficient between the queue positions of the same ids.
inline double spearman_vs_truth(const RankedQueue& pred, const RankedQueue& truth) {
  if (pred.entries.size() != truth.entries.size()) throw ArgumentError("spearman_vs_truth: queue lengths differ");
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < pred.entries.size(); ++i) pos[pred.entries[i].image_id] = i;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < truth.entries.size(); ++i) {
    auto it = pos.find(truth.entries[i].image_id);
    if (it == pos.end()) throw ArgumentError("spearman_vs_truth: id '" + truth.entries[i].image_id + "' missing");
    a.push_back(static_cast<double>(it->second));
    b.push_back(static_cast<double>(i));
  }
  return metrics::spearman(a, b);
}

// Mean coefficient over the three criteria.
inline double mean_spearman(const std::vector<CoverageReport>& pred, const std::vector<CoverageReport>& truth) {
  double s = 0;
  for (auto c : kAllCriteria) s += spearman_vs_truth(rank(pred, c), rank(truth, c));
  return s / static_cast<double>(kAllCriteria.size());
}

struct RankerConfig {
  double th_cl = 0.5;
  double th_sea = 0.5;
  double th_land = 0.5;

  void validate() const {
    for (double t : {th_cl, th_sea, th_land}) {
      if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("ranker thresholds must lie in [0, 1]");
    }
  }

  static RankerConfig from(const config::KeyValues& kv) {
    kv.require_known({"th_cl", "th_sea", "th_land"});
    RankerConfig c;
    c.th_cl = kv.number_or("th_cl", c.th_cl);
    c.th_sea = kv.number_or("th_sea", c.th_sea);
    c.th_land = kv.number_or("th_land", c.th_land);
    c.validate();
    return c;
  }
};

enum class DataAction { DownlinkPriority, LossyCompress, Discard };

inline const char* to_string(DataAction a) {
  switch (a) {
    case DataAction::DownlinkPriority: return "downlink-priority";
    case DataAction::LossyCompress: return "lossy-compress";
    case DataAction::Discard: return "discard";
  }
  return "?";
}

// One action per class segment, indexed by class code.
inline std::array<DataAction, kClassCount> decide_actions(const CoverageReport& r, const RankerConfig& cfg) {
  cfg.validate();
  std::array<DataAction, kClassCount> a{};
  a.fill(DataAction::LossyCompress);
  if (r.cloud() > cfg.th_cl) a[2] = DataAction::Discard;
  if (r.sea() > cfg.th_sea) a[0] = DataAction::DownlinkPriority;
  if (r.land() > cfg.th_land) a[1] = DataAction::DownlinkPriority;
  return a;
}

// "position,image_id,criterion,coverage" with 1-based positions.
inline void write_queue(std::ostream& os, const RankedQueue& q) {
  for (std::size_t i = 0; i < q.entries.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", q.entries[i].coverage);
    os << (i + 1) << ',' << q.entries[i].image_id << ',' << to_string(q.criterion) << ',' << buf << '\n';
  }
}

}  // namespace hsiseg::ranker
