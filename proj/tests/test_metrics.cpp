#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "cci/error.hpp"
#include "cci/metrics.hpp"
#include "oracles.hpp"

using namespace cci;
using Images = std::vector<std::vector<BoundingBox>>;

namespace {

BoundingBox box(int cls, float cx, float cy, float w, float h, float conf = 1.0f) {
  return {cls, cx, cy, w, h, conf};
}

/// Ground truth plus jittered predictions, at most 10 in total, all
/// confidences distinct.
std::pair<Images, Images> random_fixture(Rng& rng) {
  std::uniform_real_distribution<float> pos(0.2f, 0.8f), size(0.1f, 0.3f), jitter(-0.04f, 0.04f),
      conf(0.01f, 1.0f);
  std::uniform_int_distribution<int> cls(0, 1), count(0, 3);
  Images preds(3), gts(3);
  int budget = 10;
  for (std::size_t im = 0; im < 3; ++im) {
    const int n = count(rng);
    for (int k = 0; k < n; ++k) gts[im].push_back(box(cls(rng), pos(rng), pos(rng), size(rng), size(rng)));
    for (const auto& g : gts[im]) {
      const int copies = std::min(budget, count(rng));
      for (int c = 0; c < copies; ++c, --budget) {
        const int label = (rng() % 5 == 0) ? 1 - g.class_id : g.class_id;
        preds[im].push_back(box(label, g.cx + jitter(rng), g.cy + jitter(rng), g.w * (1 + jitter(rng) * 3),
                                g.h * (1 + jitter(rng) * 3), conf(rng)));
      }
    }
    if (budget > 0 && rng() % 2 == 0) {
      preds[im].push_back(box(cls(rng), pos(rng), pos(rng), size(rng), size(rng), conf(rng)));
      --budget;
    }
  }
  return {preds, gts};
}

TEST(AveragePrecision, HandCases) {
  EXPECT_DOUBLE_EQ(metrics::average_precision({true, true, true}, 3), 1.0);
  EXPECT_DOUBLE_EQ(metrics::average_precision({false, false}, 2), 0.0);
  EXPECT_DOUBLE_EQ(metrics::average_precision({true, false, true}, 2), 0.5 + 0.5 * (2.0 / 3.0));
  EXPECT_DOUBLE_EQ(metrics::average_precision({true, false, true}, 2), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(metrics::average_precision({true}, 0), 0.0);
  EXPECT_DOUBLE_EQ(metrics::average_precision({}, 4), 0.0);
}

TEST(AveragePrecision, MatchesOracleOnRandomFlags) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    std::vector<bool> flags(rng() % 12);
    int hits = 0;
    for (auto&& f : flags) {
      f = rng() % 2 == 0;
      hits += f ? 1 : 0;
    }
    const int num_gt = hits + static_cast<int>(rng() % 3);
    EXPECT_NEAR(metrics::average_precision(flags, num_gt), oracle::average_precision(flags, num_gt), 1e-12);
  }
}

TEST(Match, OverlappingCandidates) {
  // Two ground truths side by side, three predictions straddling them.
  const std::vector<BoundingBox> gts{box(0, 1.0f, 1.0f, 2.0f, 2.0f), box(0, 2.2f, 1.0f, 2.0f, 2.0f)};
  const std::vector<BoundingBox> preds{box(0, 1.7f, 1.0f, 2.0f, 2.0f, 0.9f), box(0, 1.1f, 1.0f, 2.0f, 2.0f, 0.8f),
                                       box(0, 2.1f, 1.0f, 2.0f, 2.0f, 0.7f)};
  const metrics::MatchResult m = metrics::match_detections(preds, gts, 0.5);
  EXPECT_EQ(m.tp, (std::vector<bool>{true, true, false}));
  EXPECT_EQ(m.fn, 0);

  // Exhaustive enumeration of one-to-one assignments above threshold.
  int best = 0;
  for (int a = -1; a < 2; ++a)
    for (int b = -1; b < 2; ++b)
      for (int c = -1; c < 2; ++c) {
        const int pick[3] = {a, b, c};
        bool ok = true;
        int matched = 0;
        for (int i = 0; i < 3 && ok; ++i) {
          if (pick[i] < 0) continue;
          for (int j = 0; j < i; ++j) ok = ok && pick[j] != pick[i];
          ok = ok && oracle::iou(preds[static_cast<std::size_t>(i)], gts[static_cast<std::size_t>(pick[i])]) >= 0.5;
          ++matched;
        }
        if (ok) best = std::max(best, matched);
      }
  EXPECT_EQ(std::count(m.tp.begin(), m.tp.end(), true), best);
}

TEST(Match, TrivialCases) {
  const std::vector<BoundingBox> gts{box(0, 0.3f, 0.3f, 0.2f, 0.2f), box(1, 0.7f, 0.7f, 0.2f, 0.2f)};
  const metrics::MatchResult perfect = metrics::match_detections(gts, gts, 0.5);
  EXPECT_EQ(perfect.tp, (std::vector<bool>{true, true}));
  EXPECT_EQ(perfect.fn, 0);
  EXPECT_EQ(metrics::match_detections({}, gts, 0.5).fn, 2);
  // right place, wrong class
  const std::vector<BoundingBox> swapped{box(1, 0.3f, 0.3f, 0.2f, 0.2f)};
  EXPECT_EQ(metrics::match_detections(swapped, gts, 0.5).tp, (std::vector<bool>{false}));
}

TEST(Evaluate, AgreesWithBruteForceOnSmallFixtures) {
  Rng rng(7);
  int nontrivial = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto [preds, gts] = random_fixture(rng);
    const metrics::EvalReport r = metrics::map_at(preds, gts);
    const oracle::MapCurve want = oracle::detection_map(preds, gts);
    EXPECT_NEAR(r.map50, want.map50, 1e-9) << "trial " << trial;
    EXPECT_NEAR(r.map50_95, want.map50_95, 1e-9) << "trial " << trial;
    if (r.map50 > 0.0 && r.map50 < 1.0) ++nontrivial;
  }
  EXPECT_GT(nontrivial, 50);
}

TEST(Evaluate, GroundTruthAsPredictionsIsPerfect) {
  const Images gts{{box(0, 0.3f, 0.3f, 0.2f, 0.2f), box(1, 0.6f, 0.6f, 0.3f, 0.1f)}, {box(1, 0.5f, 0.5f, 0.4f, 0.4f)}};
  const metrics::EvalReport r = metrics::map_at(gts, gts);
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_DOUBLE_EQ(r.map50_95, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_EQ(r.images, 2);
}

TEST(Evaluate, NoPredictionsScoresZero) {
  const Images gts{{box(0, 0.3f, 0.3f, 0.2f, 0.2f)}};
  const metrics::EvalReport r = metrics::map_at(Images(1), gts);
  EXPECT_EQ(r.map50, 0.0);
  EXPECT_EQ(r.map50_95, 0.0);
  EXPECT_EQ(r.fn, 1);
}

TEST(Evaluate, DuplicatePerfectPredictionIsOneTpOneFp) {
  const BoundingBox g = box(0, 0.5f, 0.5f, 0.2f, 0.2f);
  BoundingBox dup = g;
  dup.confidence = 0.9f;
  const metrics::EvalReport r = metrics::map_at(Images{{g, dup}}, Images{{g}});
  EXPECT_EQ(r.tp, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
}

TEST(Evaluate, MonotoneConfidenceMapLeavesApUnchanged) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto [preds, gts] = random_fixture(rng);
    const metrics::EvalReport before = metrics::map_at(preds, gts);
    for (auto& im : preds)
      for (auto& b : im) b.confidence = b.confidence * b.confidence * b.confidence * 0.5f;
    const metrics::EvalReport after = metrics::map_at(preds, gts);
    EXPECT_DOUBLE_EQ(before.map50, after.map50);
    EXPECT_DOUBLE_EQ(before.map50_95, after.map50_95);
  }
}

TEST(Evaluate, EmptyImageChangesNothing) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto [preds, gts] = random_fixture(rng);
    const metrics::EvalReport before = metrics::map_at(preds, gts);
    preds.insert(preds.begin() + 1, std::vector<BoundingBox>{});
    gts.insert(gts.begin() + 1, std::vector<BoundingBox>{});
    const metrics::EvalReport after = metrics::map_at(preds, gts);
    EXPECT_EQ(before.map50, after.map50);
    EXPECT_EQ(before.map50_95, after.map50_95);
    EXPECT_EQ(before.precision, after.precision);
    EXPECT_EQ(before.tp, after.tp);
    EXPECT_EQ(before.fp, after.fp);
  }
}

TEST(Evaluate, ValuesBoundedAndMeanBetweenThresholds) {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [preds, gts] = random_fixture(rng);
    const metrics::EvalReport r = metrics::map_at(preds, gts);
    for (const double v : {r.precision, r.recall, r.map50, r.map50_95}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const oracle::MapCurve b = oracle::detection_map(preds, gts);
    const auto [lo, hi] = std::minmax_element(b.per_threshold.begin(), b.per_threshold.end());
    EXPECT_GE(r.map50_95, *lo - 1e-12);
    EXPECT_LE(r.map50_95, *hi + 1e-9);
  }
}

TEST(Evaluate, ConfidenceCutoffOnlyAffectsPrecisionRecall) {
  const BoundingBox g = box(0, 0.5f, 0.5f, 0.2f, 0.2f);
  BoundingBox p = g;
  p.confidence = 0.1f;
  const metrics::EvalReport r = metrics::map_at(Images{{p}}, Images{{g}}, 0.25);
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_EQ(r.tp, 0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
}

TEST(Evaluate, ClassesWithoutGroundTruthExcluded) {
  const Images gts{{box(0, 0.5f, 0.5f, 0.2f, 0.2f)}};
  const Images preds{{box(0, 0.5f, 0.5f, 0.2f, 0.2f, 0.9f), box(1, 0.2f, 0.2f, 0.1f, 0.1f, 0.8f)}};
  const metrics::EvalReport r = metrics::map_at(preds, gts);
  ASSERT_EQ(r.classes.size(), 1u);
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_EQ(r.fp, 1);
}

TEST(Evaluate, MismatchedImageCountsRejected) {
  EXPECT_THROW(metrics::map_at(Images(2), Images(3)), ConfigError);
}

TEST(Report, HasClassRowsAndAggregate) {
  const Images gts{{box(0, 0.3f, 0.3f, 0.2f, 0.2f), box(1, 0.6f, 0.6f, 0.3f, 0.1f)}};
  const std::vector<std::string> names{"smoke", "fire"};
  const std::string text = metrics::format_report(metrics::map_at(gts, gts), names);
  EXPECT_NE(text.find("smoke"), std::string::npos);
  EXPECT_NE(text.find("fire"), std::string::npos);
  EXPECT_NE(text.find("all"), std::string::npos);
  EXPECT_NE(text.find("100.00"), std::string::npos);
  EXPECT_NE(text.find("all-point"), std::string::npos);
}

}  // namespace
