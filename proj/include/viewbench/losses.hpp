#pragma once

// Training objectives for viewpoint estimation and their analytic gradients
// with respect to the network outputs.
//
// Every loss is a plain sum over the batch. All softmaxes subtract the
// maximum logit of their normalisation group first.

#include <optional>
#include <span>
#include <vector>

#include "viewbench/viewgeom.hpp"

namespace viewbench {

enum class HeadKind { kRegPose, kClsPose, kJointReg, kJointCls };

/// Shape of one network output.
///   RegPose:  [N_c x N_d]                      pose rows per class
///   ClsPose:  [N_c x N_v]                      bin logits per class
///   JointReg: [N_c + 1] ++ [N_c x N_d]         detection logits (0 = bg), pose rows
///   JointCls: [N_c x N_v] ++ [1]               object slots, background slot
struct OutputLayout {
  HeadKind kind = HeadKind::kClsPose;
  int n_classes = 1;
  int pose_width = 2;  // N_d for regression heads, N_v for classification heads

  static OutputLayout reg_pose(int n_classes, EmbeddingKind kind);
  static OutputLayout cls_pose(int n_classes, int n_bins);
  static OutputLayout joint_reg(int n_classes, EmbeddingKind kind);
  static OutputLayout joint_cls(int n_classes, int n_bins);

  std::size_t size() const noexcept;
  std::size_t pose_offset(int class_id) const;
  bool has_detection_head() const noexcept { return kind == HeadKind::kJointReg; }
  bool has_background_slot() const noexcept { return kind == HeadKind::kJointCls; }
  bool is_regression() const noexcept {
    return kind == HeadKind::kRegPose || kind == HeadKind::kJointReg;
  }
  EmbeddingKind embedding_kind() const;

  void validate() const;
  friend bool operator==(const OutputLayout&, const OutputLayout&) = default;
};

class OutputTensor {
 public:
  explicit OutputTensor(OutputLayout layout);
  OutputTensor(OutputLayout layout, std::vector<double> values);

  const OutputLayout& layout() const noexcept { return layout_; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Row of class `class_id` (1-based) in the pose part.
  std::span<double> pose_row(int class_id);
  std::span<const double> pose_row(int class_id) const;

  /// JointReg detection logits, index 0 is background.
  std::span<double> detection();
  std::span<const double> detection() const;

  /// JointCls background logit.
  double& background();
  double background() const;

 private:
  OutputLayout layout_;
  std::vector<double> values_;
};

/// Ground truth for one training sample; class 0 marks background.
class SampleTarget {
 public:
  static SampleTarget background();
  static SampleTarget foreground(int class_id, AngleRad azimuth);

  int class_id() const noexcept { return class_id_; }
  bool is_background() const noexcept { return class_id_ == 0; }
  const std::optional<AngleRad>& azimuth() const noexcept { return azimuth_; }

  BinIndex bin(int n_bins) const;
  PoseEmbedding embedding(EmbeddingKind kind) const;

  /// Target of the horizontally mirrored sample.
  SampleTarget flipped() const;

  friend bool operator==(const SampleTarget&, const SampleTarget&) = default;

 private:
  SampleTarget(int class_id, std::optional<AngleRad> azimuth)
      : class_id_(class_id), azimuth_(azimuth) {}

  int class_id_ = 0;
  std::optional<AngleRad> azimuth_;
};

struct LossResult {
  double value = 0.0;
  std::vector<OutputTensor> grad;
};

struct HuberValue {
  double value;
  double derivative;
};

inline constexpr double kDefaultHuberDelta = 1.0;
inline constexpr double kDefaultJointLambda = 1.0;

HuberValue huber(double residual, double delta);

/// sigma = 3 at 360 bins, scaled linearly with the bin count.
double default_geometric_sigma(int n_bins);

LossResult regression_loss(std::span<const OutputTensor> outputs,
                           std::span<const SampleTarget> targets, EmbeddingKind kind,
                           double huber_delta = kDefaultHuberDelta);

LossResult classification_loss(std::span<const OutputTensor> outputs,
                               std::span<const SampleTarget> targets);

LossResult geometric_classification_loss(std::span<const OutputTensor> outputs,
                                         std::span<const SampleTarget> targets, double sigma);

LossResult joint_regression_loss(std::span<const OutputTensor> outputs,
                                 std::span<const SampleTarget> targets, double lambda,
                                 EmbeddingKind kind, double huber_delta = kDefaultHuberDelta);

LossResult joint_classification_loss(std::span<const OutputTensor> outputs,
                                     std::span<const SampleTarget> targets);

/// Highest-scoring bin of one class; ties go to the smallest bin.
BinIndex pose_argmax(const OutputTensor& output, int class_id);

/// Probability mass of class `class_id` under the global (class, bin, bg)
/// softmax of a JointCls output.
double joint_detection_score(const OutputTensor& output, int class_id);

/// Probability of the background slot under the same softmax.
double joint_background_probability(const OutputTensor& output);

/// Softmax over the bins of one class.
std::vector<double> pose_probabilities(const OutputTensor& output, int class_id);

/// log(sum(exp(x))) with the max shift.
double log_sum_exp(std::span<const double> logits);

}  // namespace viewbench
