#include "viewbench/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>

#include "viewbench/error.hpp"

namespace viewbench {

double iou(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

PrCurve pr_curve(const std::vector<bool>& flags, int n_gt, ApRule rule) {
  PrCurve curve;
  if (n_gt < 1) return curve;
  curve.points.reserve(flags.size());
  long tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    curve.points.push_back({static_cast<double>(tp) / n_gt,
                            static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  if (curve.points.empty()) return curve;

  if (rule == ApRule::kElevenPoint) {
    double sum = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double r = t / 10.0;
      double best = 0.0;
      for (const PrPoint& p : curve.points) {
        if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
      }
      sum += best;
    }
    curve.ap = sum / 11.0;
    return curve;
  }

  // Precision envelope: the running maximum from the right.
  std::vector<double> envelope(curve.points.size());
  double running = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    envelope[i] = running;
  }
  double area = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    area += (curve.points[i].recall - prev_recall) * envelope[i];
    prev_recall = curve.points[i].recall;
  }
  curve.ap = area;
  return curve;
}

EvalReport evaluate(std::span<const GroundTruthRecord> gts, std::span<const DetectionRecord> dets,
                    const EvalOptions& options) {
  for (int k : options.bins) {
    if (k < 2) {
      throw Error(ErrorCode::kInvalidBinning, "AVP bin count must be at least 2, got " +
                                                  std::to_string(k));
    }
  }
  if (!(options.iou_threshold > 0.0) || options.iou_threshold > 1.0) {
    throw Error(ErrorCode::kInvalidParameter, "IoU threshold must lie in (0, 1]");
  }
  for (const DetectionRecord& d : dets) {
    if (!std::isfinite(d.score)) {
      throw Error(ErrorCode::kInvalidParameter, "detection score is not finite");
    }
  }

  EvalReport report;
  report.bins = options.bins;
  report.iou_threshold = options.iou_threshold;
  report.rule = options.rule;

  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  for (const auto& d : dets) classes.insert(d.class_id);

  for (int cls : classes) {
    // Ground truth of this class, indexed by image.
    std::unordered_map<std::string, std::vector<std::size_t>> by_image;
    int n_gt = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != cls) continue;
      by_image[gts[g].image_id].push_back(g);
      ++n_gt;
    }
    ClassMetrics& metrics = report.per_class[cls];
    metrics.n_gt = n_gt;
    if (n_gt == 0) continue;

    std::vector<std::size_t> order;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].class_id == cls) order.push_back(d);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].score > dets[b].score;
    });

    std::vector<bool> matched(gts.size(), false);
    std::vector<bool> tp_flags;
    std::vector<std::vector<bool>> avp_flags(options.bins.size());
    tp_flags.reserve(order.size());
    for (std::size_t d : order) {
      const DetectionRecord& det = dets[d];
      std::optional<std::size_t> best;
      double best_iou = -1.0;
      if (auto it = by_image.find(det.image_id); it != by_image.end()) {
        for (std::size_t g : it->second) {
          if (matched[g]) continue;
          const double o = iou(det.box, gts[g].box);
          if (o > best_iou) {
            best_iou = o;
            best = g;
          }
        }
      }
      const bool is_tp = best && best_iou >= options.iou_threshold;
      if (is_tp) matched[*best] = true;
      tp_flags.push_back(is_tp);
      for (std::size_t k = 0; k < options.bins.size(); ++k) {
        const int n_bins = options.bins[k];
        avp_flags[k].push_back(is_tp && azimuth_to_bin(det.azimuth_pred, n_bins) ==
                                            azimuth_to_bin(gts[*best].azimuth, n_bins));
      }
    }

    metrics.ap = pr_curve(tp_flags, n_gt, options.rule).ap;
    for (std::size_t k = 0; k < options.bins.size(); ++k) {
      metrics.avp[options.bins[k]] = pr_curve(avp_flags[k], n_gt, options.rule).ap;
    }
  }

  int counted = 0;
  for (int k : options.bins) report.mean_avp[k] = 0.0;
  for (const auto& [cls, m] : report.per_class) {
    if (m.n_gt == 0) continue;
    ++counted;
    report.mean_ap += *m.ap;
    for (const auto& [k, v] : m.avp) report.mean_avp[k] += v;
  }
  if (counted > 0) {
    report.mean_ap /= counted;
    for (auto& [k, v] : report.mean_avp) v /= counted;
  }
  return report;
}

}  // namespace viewbench
