#pragma once

// A small rectifier MLP with the four viewpoint head layouts, and an SGD
// trainer with momentum, weight decay, a step learning-rate schedule and
// controlled foreground/background batch composition.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "viewbench/losses.hpp"

namespace viewbench {

struct HeadSpec {
  HeadKind kind = HeadKind::kClsPose;
  int pose_width = 24;  // N_d (2 or 3) or N_v

  static HeadSpec reg_pose(EmbeddingKind kind) { return {HeadKind::kRegPose, embedding_dim(kind)}; }
  static HeadSpec cls_pose(int n_bins) { return {HeadKind::kClsPose, n_bins}; }
  static HeadSpec joint_reg(EmbeddingKind kind) { return {HeadKind::kJointReg, embedding_dim(kind)}; }
  static HeadSpec joint_cls(int n_bins) { return {HeadKind::kJointCls, n_bins}; }

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

struct NetConfig {
  int input_dim = 32;
  std::vector<int> trunk_widths = {64, 64};
  // Hidden layers [0, split_depth) are shared by the detection and pose
  // branches of a JointReg net; the rest are duplicated per branch.
  int split_depth = 1;
  HeadSpec head;
  int n_classes = 4;
  std::uint64_t seed = 0;

  OutputLayout output_layout() const;
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Affine layer, weight stored row-major as [out_dim x in_dim].
struct Dense {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Dense() = default;
  Dense(int in, int out)
      : in_dim(in),
        out_dim(out),
        weight(static_cast<std::size_t>(in) * static_cast<std::size_t>(out), 0.0),
        bias(static_cast<std::size_t>(out), 0.0) {}

  friend bool operator==(const Dense&, const Dense&) = default;
};

/// Layers of a network. `branch` is the output path of single-head nets and
/// the detection path of JointReg nets; `pose_branch` is only used by
/// JointReg. A rectifier follows every layer except the last of a branch.
struct LayerSet {
  std::vector<Dense> trunk;
  std::vector<Dense> branch;
  std::vector<Dense> pose_branch;

  std::size_t parameter_count() const;
  /// Zero-filled copy with identical shapes.
  LayerSet zeros_like() const;

  /// Every parameter in a fixed order (trunk, branch, pose_branch; weight
  /// then bias per layer). Used by finite-difference checks.
  std::vector<double*> parameter_pointers();

  friend bool operator==(const LayerSet&, const LayerSet&) = default;
};

struct ModelParams {
  LayerSet weights;
  LayerSet velocity;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ParamGrads = LayerSet;
using FeatureBatch = std::vector<std::vector<double>>;

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 128;
  double positive_fraction = 0.25;
  double lr_decay_factor = 10.0;
  long decay_at_iter = 2000;
  long total_iters = 3000;
  bool flip_augment = true;
  std::uint64_t seed = 0;
  long log_interval = 100;

  double lr_at(long iter) const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class LossKind {
  kRegression,
  kClassification,
  kGeometricClassification,
  kJointRegression,
  kJointClassification,
};

struct LossSpec {
  LossKind kind = LossKind::kClassification;
  std::optional<double> sigma;  // geometric loss; default scales with N_v
  double lambda = kDefaultJointLambda;
  double huber_delta = kDefaultHuberDelta;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

bool loss_matches_head(LossKind loss, HeadKind head) noexcept;
bool loss_uses_background(LossKind loss) noexcept;

LossResult compute_loss(const LossSpec& spec, std::span<const OutputTensor> outputs,
                        std::span<const SampleTarget> targets);

/// Training material: one feature row and one target per sample, plus the
/// per-coordinate sign pattern that maps a feature onto the feature of the
/// horizontally mirrored object.
struct SampleSet {
  FeatureBatch features;
  std::vector<SampleTarget> targets;
  std::vector<double> flip_signs;

  std::size_t size() const noexcept { return targets.size(); }
};

struct Batch {
  FeatureBatch features;
  std::vector<SampleTarget> targets;
};

ModelParams init_params(const NetConfig& cfg);

std::vector<OutputTensor> forward(const ModelParams& params, const NetConfig& cfg,
                                  const FeatureBatch& features);

/// Gradient of sum_i <loss_grad_i, output_i> with respect to every weight.
ParamGrads backward(const ModelParams& params, const NetConfig& cfg, const FeatureBatch& features,
                    std::span<const OutputTensor> loss_grad);

/// On/off state of every rectified unit, per sample, in layer order. Two
/// parameter settings with equal patterns lie in the same linear region.
std::vector<std::uint8_t> activation_pattern(const ModelParams& params, const NetConfig& cfg,
                                             const FeatureBatch& features);

void sgd_step(ModelParams& params, const ParamGrads& grads, const TrainConfig& tcfg, long iter);

Batch make_batch(const SampleSet& samples, const TrainConfig& tcfg, std::mt19937_64& rng);

/// `loss` is measured on a fixed monitoring batch drawn once before
/// training, so the curve is comparable across iterations; `batch_loss` is
/// the loss of the minibatch used for that update.
struct LogEntry {
  long iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_per_sample = 0.0;
  double batch_loss = 0.0;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogEntry> log;
};

/// Called after every update with the 1-based count of finished iterations.
using TrainCallback = std::function<void(long done, const ModelParams&)>;

TrainResult train(const SampleSet& samples, const NetConfig& ncfg, const TrainConfig& tcfg,
                  const LossSpec& loss, const TrainCallback& on_iteration = {});

/// Mean loss per sample over a whole sample set (background samples are
/// skipped for pose-only losses).
double mean_loss(const ModelParams& params, const NetConfig& ncfg, const SampleSet& samples,
                 const LossSpec& loss);

struct ClassPrediction {
  std::optional<double> score;  // detection probability; absent for pose-only heads
  AngleRad azimuth;
  std::optional<BinIndex> bin;  // classification heads only
};

struct Prediction {
  std::vector<ClassPrediction> classes;  // index c-1 for class c
  std::optional<double> background;
};

std::vector<Prediction> predict(const ModelParams& params, const NetConfig& ncfg,
                                const FeatureBatch& features);

Prediction predict_one(const OutputTensor& output);

}  // namespace viewbench
