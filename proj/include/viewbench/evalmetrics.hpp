#pragma once

// Joint detection and viewpoint evaluation: greedy IoU matching, PR curves,
// AP and AVP-K (a detection only counts for AVP-K when its azimuth lands in
// the ground truth's K-bin).

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewbench/viewgeom.hpp"

namespace viewbench {

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  bool valid() const noexcept { return x_min < x_max && y_min < y_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct GroundTruthRecord {
  std::string image_id;
  int class_id = 1;
  Box box;
  AngleRad azimuth;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

struct DetectionRecord {
  std::string image_id;
  int class_id = 1;
  Box box;
  double score = 0.0;
  AngleRad azimuth_pred;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

enum class ApRule { kAllPoints, kElevenPoint };

struct PrPoint {
  double recall;
  double precision;
};

struct PrCurve {
  std::vector<PrPoint> points;
  double ap = 0.0;
};

struct ClassMetrics {
  int n_gt = 0;
  std::optional<double> ap;           // empty when n_gt == 0
  std::map<int, double> avp;          // K -> AVP_K, empty when n_gt == 0
};

struct EvalReport {
  std::vector<int> bins;
  double iou_threshold = 0.5;
  ApRule rule = ApRule::kAllPoints;
  std::map<int, ClassMetrics> per_class;
  double mean_ap = 0.0;
  std::map<int, double> mean_avp;
};

struct EvalOptions {
  std::vector<int> bins = {4, 8, 16, 24};
  double iou_threshold = 0.5;
  ApRule rule = ApRule::kAllPoints;
};

double iou(const Box& a, const Box& b) noexcept;

/// Cumulative precision/recall over flags in score order; `true` is a true
/// positive.
PrCurve pr_curve(const std::vector<bool>& flags, int n_gt, ApRule rule = ApRule::kAllPoints);

EvalReport evaluate(std::span<const GroundTruthRecord> gts, std::span<const DetectionRecord> dets,
                    const EvalOptions& options = {});

}  // namespace viewbench
