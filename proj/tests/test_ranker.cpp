#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "hsiseg/ranker.hpp"
#include "hsiseg/rng.hpp"

using namespace hsiseg;
using namespace hsiseg::ranker;

namespace {

CoverageReport report(std::string id, double sea, double land, double cloud) {
  CoverageReport r;
  r.image_id = std::move(id);
  r.fraction = {sea, land, cloud};
  return r;
}

std::vector<CoverageReport> random_reports(std::size_t n, Rng& rng, std::size_t levels = 0) {
  std::vector<CoverageReport> out;
  for (std::size_t i = 0; i < n; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (levels) {
      a = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      b = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
    }
    const double lo = std::min(a, b), hi = std::max(a, b);
    out.push_back(report("img" + std::to_string(1000 + i), lo, hi - lo, 1 - hi));
  }
  return out;
}

}  // namespace

TEST(Coverage, Examples) {
  const auto r = coverage(LabelMap(1, 4, {0, 0, 1, 2}), "a");
  EXPECT_EQ(r.sea(), 0.5);
  EXPECT_EQ(r.land(), 0.25);
  EXPECT_EQ(r.cloud(), 0.25);
  EXPECT_EQ(r.image_id, "a");
  for (std::uint8_t k = 0; k < 3; ++k) {
    const auto c = coverage(LabelMap(3, 5, k));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.fraction[j], j == k ? 1.0 : 0.0);
  }
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::uint8_t> v(1 + rng.below(300));
    for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(3));
    const auto c = coverage(LabelMap(1, v.size(), v));
    EXPECT_NEAR(c.sea() + c.land() + c.cloud(), 1.0, 1e-9);
  }
}

TEST(Rank, Examples) {
  const std::vector<CoverageReport> r{report("A", 0.05, 0.05, 0.9), report("B", 0.45, 0.45, 0.1),
                                      report("C", 0.25, 0.25, 0.5)};
  EXPECT_EQ(rank(r, Criterion::CloudAsc).ids(), (std::vector<std::string>{"B", "C", "A"}));
  const std::vector<CoverageReport> eq{report("z", 0.2, 0.3, 0.5), report("m", 0.2, 0.3, 0.5), report("a", 0.2, 0.3, 0.5)};
  for (auto c : kAllCriteria) EXPECT_EQ(rank(eq, c).ids(), (std::vector<std::string>{"a", "m", "z"}));
  const std::vector<CoverageReport> sea{report("low", 0.2, 0.8, 0), report("high", 0.8, 0.2, 0)};
  EXPECT_EQ(rank(sea, Criterion::SeaDesc).ids().front(), "high");
  EXPECT_EQ(rank(sea, Criterion::LandDesc).ids().front(), "low");
  EXPECT_THROW(rank({report("x", 1, 0, 0), report("x", 0, 1, 0)}, Criterion::SeaDesc), ArgumentError);
  EXPECT_THROW(rank({}, Criterion::SeaDesc), ArgumentError);
}

TEST(Rank, PermutationOrderedAndInputOrderInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto reports = random_reports(1 + rng.below(30), rng, trial % 2 ? 4 : 0);
    for (auto c : kAllCriteria) {
      const auto q = rank(reports, c);
      auto ids = q.ids();
      std::vector<std::string> in;
      for (const auto& r : reports) in.push_back(r.image_id);
      std::sort(ids.begin(), ids.end());
      std::sort(in.begin(), in.end());
      EXPECT_EQ(ids, in);
      for (std::size_t i = 1; i < q.entries.size(); ++i) {
        const auto& a = q.entries[i - 1];
        const auto& b = q.entries[i];
        if (a.coverage == b.coverage) EXPECT_LT(a.image_id, b.image_id);
        else if (c == Criterion::CloudAsc) EXPECT_LT(a.coverage, b.coverage);
        else EXPECT_GT(a.coverage, b.coverage);
      }
      auto shuffled = reports;
      rng.shuffle(shuffled);
      EXPECT_EQ(rank(shuffled, c), q);
    }
  }
}

TEST(Rank, QueueOutput) {
  std::ostringstream os;
  write_queue(os, rank({report("b", 0.5, 0.5, 0), report("a", 0.25, 0.75, 0)}, Criterion::SeaDesc));
  EXPECT_EQ(os.str(), "1,b,sea-desc,0.500000\n2,a,sea-desc,0.250000\n");
}

TEST(SpearmanVsTruth, Examples) {
  const std::vector<CoverageReport> r{report("a", 0.1, 0.2, 0.7), report("b", 0.3, 0.3, 0.4), report("c", 0.6, 0.3, 0.1)};
  const auto q = rank(r, Criterion::CloudAsc);
  EXPECT_NEAR(spearman_vs_truth(q, q), 1.0, 1e-15);
  auto rev = q;
  std::reverse(rev.entries.begin(), rev.entries.end());
  EXPECT_NEAR(spearman_vs_truth(rev, q), -1.0, 1e-15);
  EXPECT_NEAR(mean_spearman(r, r), 1.0, 1e-15);
  auto other = rank({report("a", 0, 0, 1), report("x", 0, 0, 1), report("c", 0, 0, 1)}, Criterion::CloudAsc);
  EXPECT_THROW(spearman_vs_truth(other, q), ArgumentError);
}

TEST(Actions, Examples) {
  const RankerConfig def;
  EXPECT_EQ(decide_actions(report("a", 0.03, 0.02, 0.95), def)[2], DataAction::Discard);
  const auto sea = decide_actions(report("a", 0.6, 0.3, 0.1), def);
  EXPECT_EQ(sea[0], DataAction::DownlinkPriority);
  EXPECT_EQ(sea[1], DataAction::LossyCompress);
  EXPECT_EQ(sea[2], DataAction::LossyCompress);
  const RankerConfig ones{1, 1, 1};
  for (const auto& r : {report("a", 1, 0, 0), report("b", 0, 0, 1), report("c", 0, 1, 0)})
    for (auto a : decide_actions(r, ones)) EXPECT_EQ(a, DataAction::LossyCompress);
  // Strictly greater than the threshold.
  EXPECT_EQ(decide_actions(report("a", 0.25, 0.25, 0.5), def)[2], DataAction::LossyCompress);
  EXPECT_THROW(decide_actions(report("a", 1, 0, 0), RankerConfig{1.5, 0.5, 0.5}), ArgumentError);
}

TEST(Actions, MonotoneUnderCoverageSweeps) {
  const auto level = [](DataAction a) { return a == DataAction::LossyCompress ? 0 : 1; };
  for (double th : {0.0, 0.25, 0.5, 0.73, 1.0}) {
    const RankerConfig cfg{th, th, th};
    for (std::size_t cls = 0; cls < 3; ++cls) {
      int prev = 0;
      for (int step = 0; step <= 100; ++step) {
        const double v = step / 100.0;
        CoverageReport r;
        r.fraction = {(1 - v) / 2, (1 - v) / 2, (1 - v) / 2};
        r.fraction[cls] = v;
        const int now = level(decide_actions(r, cfg)[cls]);
        EXPECT_GE(now, prev) << "class " << cls << " coverage " << v;
        prev = now;
      }
    }
  }
}

TEST(Config, ParseAndValidate) {
  const auto c = RankerConfig::from(config::parse("# thresholds\nth_cl = 0.7\nth_sea=0.2\n"));
  EXPECT_EQ(c.th_cl, 0.7);
  EXPECT_EQ(c.th_sea, 0.2);
  EXPECT_EQ(c.th_land, 0.5);
  EXPECT_THROW(RankerConfig::from(config::parse("th_cloud=0.7\n")), ArgumentError);
  EXPECT_THROW(RankerConfig::from(config::parse("th_cl=1.2\n")), ArgumentError);
  EXPECT_THROW(RankerConfig::from(config::parse("th_cl=abc\n")), ArgumentError);
  EXPECT_THROW(config::parse("th_cl 0.7\n"), FormatError);
  EXPECT_THROW(config::parse("th_cl=0.1\nth_cl=0.2\n"), FormatError);
}
