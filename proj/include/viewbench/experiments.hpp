#pragma once

// End-to-end benchmark pipelines on the synthetic suite: train pose
// estimators and detectors, turn their predictions into detection records
// and score them with AP / AVP-K.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewbench/evalmetrics.hpp"
#include "viewbench/synthbench.hpp"
#include "viewbench/tinynet.hpp"

namespace viewbench {

enum class PoseMethod {
  kRegression2D,
  kRegression3D,
  kClassification,
  kGeometricClassification,
  kJointRegression2D,
  kJointRegression3D,
  kJointClassification,
};

std::string method_name(PoseMethod method);

/// Whether the method's own network also scores detections.
bool method_is_joint(PoseMethod method) noexcept;

struct TrainedModel {
  NetConfig net;
  LossSpec loss;
  TrainResult result;
};

struct BenchmarkOptions {
  SuiteOptions suite;
  std::vector<int> trunk_widths = {64, 64};
  int split_depth = 1;
  int n_bins = 24;
  TrainConfig train;
  EvalOptions eval;
  double score_floor = 0.0;
};

/// Turns per-proposal predictions into detection records: one record per
/// (proposal, class) whose score is at least `score_floor`. Scores come from
/// `scorer` when given, otherwise from `pose` itself.
std::vector<DetectionRecord> make_detections(const Dataset& dataset,
                                             std::span<const Prediction> pose,
                                             std::span<const Prediction> scorer,
                                             double score_floor);

/// One seeded instance of the benchmark: generated train/test data and the
/// models trained on it.
class BenchmarkRun {
 public:
  explicit BenchmarkRun(BenchmarkOptions options);

  const BenchmarkOptions& options() const noexcept { return options_; }
  const Dataset& train_set() const noexcept { return train_; }
  const Dataset& test_set() const noexcept { return test_; }

  NetConfig net_config(PoseMethod method) const;
  LossSpec loss_spec(PoseMethod method) const;

  /// Trains (once) and returns the model for a method.
  const TrainedModel& model(PoseMethod method);

  /// The shared detector: a two-branch net trained with lambda = 0, i.e. on
  /// the detection cross-entropy alone.
  const TrainedModel& detector();

  /// Detections on the test split. Pose-only methods are always ranked by
  /// the shared detector; joint methods use their own scores unless
  /// `use_shared_detector` is set.
  std::vector<DetectionRecord> detections(PoseMethod method, bool use_shared_detector = false);

  EvalReport evaluate_method(PoseMethod method, bool use_shared_detector = false);

 private:
  BenchmarkOptions options_;
  Dataset train_;
  Dataset test_;
  SampleSet train_samples_;
  std::map<int, TrainedModel> models_;
  std::optional<TrainedModel> detector_;
};

/// Ambiguity probe on a single near-noiseless 2-fold symmetric class.
struct SymmetryProbeResult {
  double regression2d_accuracy = 0.0;
  double regression3d_accuracy = 0.0;
  double classification_accuracy = 0.0;
  // Mean probability mass the classifier puts on the true bin and its
  // antipode.
  double classification_antipodal_mass = 0.0;
  // Fraction of samples whose two most probable bins are exactly the true
  // bin and its antipode.
  double classification_top2_hit = 0.0;
  std::size_t n_test = 0;
};

struct SymmetryProbeOptions {
  std::uint64_t seed = 0;
  int feature_dim = 32;
  int train_scenes = 400;
  int test_scenes = 200;
  double noise_sigma = 1e-3;
  int n_bins = 24;
  std::vector<int> trunk_widths = {64, 64};
  TrainConfig train;
};

SymmetryProbeResult symmetry_probe(const SymmetryProbeOptions& options);

double median(std::vector<double> values);

}  // namespace viewbench
