#pragma once

#include <span>
#include <string>
#include <vector>

#include "cci/detect.hpp"

/// Detection evaluation: greedy matching, all-point AP, mAP50 and mAP50:95.
namespace cci::metrics {

struct MatchResult {
  std::vector<bool> tp;  // one flag per prediction, in input order
  int fn = 0;
};

/// Greedy per-class matching. Predictions must already be in
/// sort_by_confidence order; each claims the unmatched ground truth of its
/// class with the highest IoU >= `iou_threshold` (lowest index on ties).
MatchResult match_detections(std::span<const BoundingBox> preds, std::span<const BoundingBox> gts,
                             double iou_threshold);

/// All-point AP: precision made non-increasing from the right, integrated
/// over recall. `tp` is in descending confidence order. 0 when num_gt is 0.
double average_precision(const std::vector<bool>& tp, int num_gt);

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

struct ClassReport {
  int class_id = 0;
  int num_gt = 0;
  int tp = 0;  // at IoU 0.5 and the confidence cutoff
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double ap50 = 0.0;
  double ap50_95 = 0.0;
};

struct EvalReport {
  std::vector<ClassReport> classes;  // classes with at least one ground truth
  double precision = 0.0;            // means over `classes`
  double recall = 0.0;
  double map50 = 0.0;
  double map50_95 = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int images = 0;
};

/// Evaluates per-image predictions against per-image ground truth.
/// `thresholds` must contain 0.5 (precision and recall are reported there);
/// mAP50 is the AP at 0.5 and mAP50:95 the mean over all thresholds.
/// Precision and recall count only predictions with confidence >= conf_cutoff.
EvalReport evaluate(std::span<const std::vector<BoundingBox>> preds,
                    std::span<const std::vector<BoundingBox>> gts, std::span<const double> thresholds,
                    double conf_cutoff = 0.25);

/// Default COCO threshold set.
EvalReport map_at(std::span<const std::vector<BoundingBox>> preds,
                  std::span<const std::vector<BoundingBox>> gts, double conf_cutoff = 0.25);

/// Table text: one row per class plus "all", columns P R mAP50 mAP50:95 in percent.
std::string format_report(const EvalReport& report, std::span<const std::string> class_names);

}  // namespace cci::metrics
