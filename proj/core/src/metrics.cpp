#include "cci/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "cci/error.hpp"

namespace cci::metrics {

MatchResult match_detections(std::span<const BoundingBox> preds, std::span<const BoundingBox> gts,
                             double iou_threshold) {
  MatchResult r;
  r.tp.assign(preds.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].class_id != preds[i].class_id) continue;
      const double v = iou(preds[i], gts[j]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(j);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      r.tp[i] = true;
    }
  }
  r.fn = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return r;
}

double average_precision(const std::vector<bool>& tp, int num_gt) {
  if (num_gt <= 0) return 0.0;
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  int hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i]) ++hits;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

namespace {

struct Scored {
  float confidence;
  std::size_t image;
  std::size_t order;  // position within the image's sorted predictions
  bool tp;
};

}  // namespace

EvalReport evaluate(std::span<const std::vector<BoundingBox>> preds,
                    std::span<const std::vector<BoundingBox>> gts, std::span<const double> thresholds,
                    double conf_cutoff) {
  if (preds.size() != gts.size()) {
    throw ConfigError("evaluate: " + std::to_string(preds.size()) + " prediction lists for " +
                      std::to_string(gts.size()) + " images");
  }
  const auto half = std::find_if(thresholds.begin(), thresholds.end(),
                                 [](double t) { return std::abs(t - 0.5) < 1e-12; });
  if (half == thresholds.end()) throw ConfigError("evaluate: thresholds must include 0.5");
  const auto half_index = static_cast<std::size_t>(half - thresholds.begin());

  std::map<int, int> gt_count;
  for (const auto& image : gts) {
    for (const BoundingBox& b : image) ++gt_count[b.class_id];
  }

  std::vector<std::vector<BoundingBox>> sorted(preds.begin(), preds.end());
  for (auto& image : sorted) sort_by_confidence(image);

  EvalReport report;
  report.images = static_cast<int>(gts.size());
  for (const auto& [cls, num_gt] : gt_count) {
    ClassReport cr;
    cr.class_id = cls;
    cr.num_gt = num_gt;
    double ap_sum = 0.0;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      std::vector<Scored> scored;
      for (std::size_t im = 0; im < sorted.size(); ++im) {
        std::vector<BoundingBox> p, g;
        for (const BoundingBox& b : sorted[im]) {
          if (b.class_id == cls) p.push_back(b);
        }
        for (const BoundingBox& b : gts[im]) {
          if (b.class_id == cls) g.push_back(b);
        }
        const MatchResult m = match_detections(p, g, thresholds[t]);
        for (std::size_t k = 0; k < p.size(); ++k) {
          scored.push_back({p[k].confidence, im, k, m.tp[k]});
        }
      }
      std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        return a.confidence > b.confidence;
      });
      std::vector<bool> flags;
      flags.reserve(scored.size());
      for (const Scored& s : scored) flags.push_back(s.tp);
      const double ap = average_precision(flags, num_gt);
      ap_sum += ap;
      if (t == half_index) {
        cr.ap50 = ap;
        for (const Scored& s : scored) {
          if (s.confidence < conf_cutoff) continue;
          if (s.tp) {
            ++cr.tp;
          } else {
            ++cr.fp;
          }
        }
        cr.fn = num_gt - cr.tp;
        cr.precision = cr.tp + cr.fp > 0 ? static_cast<double>(cr.tp) / (cr.tp + cr.fp) : 0.0;
        cr.recall = static_cast<double>(cr.tp) / num_gt;
      }
    }
    cr.ap50_95 = ap_sum / static_cast<double>(thresholds.size());
    report.classes.push_back(cr);
  }
  // Predictions of classes without ground truth are false positives.
  for (const auto& image : sorted) {
    for (const BoundingBox& b : image) {
      if (gt_count.count(b.class_id) == 0 && b.confidence >= conf_cutoff) ++report.fp;
    }
  }
  if (!report.classes.empty()) {
    for (const ClassReport& cr : report.classes) {
      report.precision += cr.precision;
      report.recall += cr.recall;
      report.map50 += cr.ap50;
      report.map50_95 += cr.ap50_95;
      report.tp += cr.tp;
      report.fp += cr.fp;
      report.fn += cr.fn;
    }
    const auto k = static_cast<double>(report.classes.size());
    report.precision /= k;
    report.recall /= k;
    report.map50 /= k;
    report.map50_95 /= k;
  }
  return report;
}

EvalReport map_at(std::span<const std::vector<BoundingBox>> preds,
                  std::span<const std::vector<BoundingBox>> gts, double conf_cutoff) {
  const std::vector<double> t = coco_thresholds();
  return evaluate(preds, gts, t, conf_cutoff);
}

std::string format_report(const EvalReport& report, std::span<const std::string> class_names) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %6s %8s %9s %10s\n", "class", "gt", "P(%)", "R(%)",
                "mAP50(%)", "mAP50:95(%)");
  out += line;
  const auto row = [&](const std::string& name, int gt, double p, double r, double m50, double m95) {
    std::snprintf(line, sizeof line, "%-10s %6d %6.2f %8.2f %9.2f %10.2f\n", name.c_str(), gt,
                  100.0 * p, 100.0 * r, 100.0 * m50, 100.0 * m95);
    out += line;
  };
  int total_gt = 0;
  for (const ClassReport& cr : report.classes) {
    const auto id = static_cast<std::size_t>(cr.class_id);
    const std::string name = id < class_names.size() ? class_names[id] : std::to_string(cr.class_id);
    row(name, cr.num_gt, cr.precision, cr.recall, cr.ap50, cr.ap50_95);
    total_gt += cr.num_gt;
  }
  row("all", total_gt, report.precision, report.recall, report.map50, report.map50_95);
  std::snprintf(line, sizeof line, "images %d  tp %d  fp %d  fn %d  (AP: all-point, IoU 0.50:0.95)\n",
                report.images, report.tp, report.fp, report.fn);
  out += line;
  return out;
}

}  // namespace cci::metrics
