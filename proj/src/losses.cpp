#include "viewbench/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "viewbench/error.hpp"

namespace viewbench {

namespace {

void require_same_batch(std::span<const OutputTensor> outputs,
                        std::span<const SampleTarget> targets) {
  if (outputs.size() != targets.size()) {
    throw Error(ErrorCode::kLayoutError, "batch has " + std::to_string(outputs.size()) +
                                             " outputs but " + std::to_string(targets.size()) +
                                             " targets");
  }
}

void require_layout(const OutputTensor& out, HeadKind kind, const char* loss) {
  if (out.layout().kind != kind) {
    throw Error(ErrorCode::kLayoutError, std::string(loss) + ": output has the wrong head layout");
  }
}

void require_class(const OutputLayout& layout, int class_id) {
  if (class_id < 1 || class_id > layout.n_classes) {
    throw Error(ErrorCode::kClassOutOfRange, "class " + std::to_string(class_id) +
                                                 " outside 1.." +
                                                 std::to_string(layout.n_classes));
  }
}

// Writes softmax(logits) into probs and returns log-sum-exp.
// Neumaier compensated summation; keeps long sums (hundreds of bins) within
// a few ulps so that finite differences of the loss stay meaningful.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    comp_ += std::fabs(sum_) >= std::fabs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double softmax_into(std::span<const double> logits, std::span<double> probs) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  CompensatedSum acc;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = std::exp(logits[k] - shift);
    acc.add(probs[k]);
  }
  const double sum = acc.value();
  for (double& p : probs) p /= sum;
  return shift + std::log(sum);
}

// Adds sum_k H(row_k - target_k) to the return value and the derivative into grad.
double huber_row(std::span<const double> row, const PoseEmbedding& target, double delta,
                 double weight, std::span<double> grad) {
  double value = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    const HuberValue h = huber(row[k] - target[static_cast<int>(k)], delta);
    value += h.value;
    grad[k] = weight * h.derivative;
  }
  return value;
}

// Cross-entropy of one softmax group against a single index.
double cross_entropy_row(std::span<const double> logits, std::size_t target, double weight,
                         std::span<double> grad) {
  const double lse = softmax_into(logits, grad);
  for (double& g : grad) g *= weight;
  grad[target] -= weight;
  return lse - logits[target];
}

}  // namespace

OutputLayout OutputLayout::reg_pose(int n_classes, EmbeddingKind kind) {
  return {HeadKind::kRegPose, n_classes, embedding_dim(kind)};
}

OutputLayout OutputLayout::cls_pose(int n_classes, int n_bins) {
  return {HeadKind::kClsPose, n_classes, n_bins};
}

OutputLayout OutputLayout::joint_reg(int n_classes, EmbeddingKind kind) {
  return {HeadKind::kJointReg, n_classes, embedding_dim(kind)};
}

OutputLayout OutputLayout::joint_cls(int n_classes, int n_bins) {
  return {HeadKind::kJointCls, n_classes, n_bins};
}

std::size_t OutputLayout::size() const noexcept {
  const auto pose = static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(pose_width);
  switch (kind) {
    case HeadKind::kJointReg: return pose + static_cast<std::size_t>(n_classes) + 1;
    case HeadKind::kJointCls: return pose + 1;
    default: return pose;
  }
}

std::size_t OutputLayout::pose_offset(int class_id) const {
  require_class(*this, class_id);
  const std::size_t base = kind == HeadKind::kJointReg ? static_cast<std::size_t>(n_classes) + 1 : 0;
  return base + static_cast<std::size_t>(class_id - 1) * static_cast<std::size_t>(pose_width);
}

EmbeddingKind OutputLayout::embedding_kind() const {
  if (!is_regression()) {
    throw Error(ErrorCode::kLayoutError, "classification layouts carry no embedding");
  }
  return pose_width == 2 ? EmbeddingKind::kTwoD : EmbeddingKind::kThreeD;
}

void OutputLayout::validate() const {
  if (n_classes < 1) throw Error(ErrorCode::kLayoutError, "layout needs at least one class");
  if (is_regression()) {
    if (pose_width != 2 && pose_width != 3) {
      throw Error(ErrorCode::kLayoutError, "regression pose width must be 2 or 3");
    }
  } else if (pose_width < 2) {
    throw Error(ErrorCode::kInvalidBinning, "classification layout needs at least 2 bins");
  }
}

OutputTensor::OutputTensor(OutputLayout layout) : layout_(layout) {
  layout_.validate();
  values_.assign(layout_.size(), 0.0);
}

OutputTensor::OutputTensor(OutputLayout layout, std::vector<double> values)
    : layout_(layout), values_(std::move(values)) {
  layout_.validate();
  if (values_.size() != layout_.size()) {
    throw Error(ErrorCode::kLayoutError, "output has " + std::to_string(values_.size()) +
                                             " values, layout needs " +
                                             std::to_string(layout_.size()));
  }
}

std::span<double> OutputTensor::pose_row(int class_id) {
  return std::span<double>(values_).subspan(layout_.pose_offset(class_id),
                                            static_cast<std::size_t>(layout_.pose_width));
}

std::span<const double> OutputTensor::pose_row(int class_id) const {
  return std::span<const double>(values_).subspan(layout_.pose_offset(class_id),
                                                  static_cast<std::size_t>(layout_.pose_width));
}

std::span<double> OutputTensor::detection() {
  if (!layout_.has_detection_head()) throw Error(ErrorCode::kLayoutError, "no detection head");
  return std::span<double>(values_).first(static_cast<std::size_t>(layout_.n_classes) + 1);
}

std::span<const double> OutputTensor::detection() const {
  if (!layout_.has_detection_head()) throw Error(ErrorCode::kLayoutError, "no detection head");
  return std::span<const double>(values_).first(static_cast<std::size_t>(layout_.n_classes) + 1);
}

double& OutputTensor::background() {
  if (!layout_.has_background_slot()) throw Error(ErrorCode::kLayoutError, "no background slot");
  return values_.back();
}

double OutputTensor::background() const {
  if (!layout_.has_background_slot()) throw Error(ErrorCode::kLayoutError, "no background slot");
  return values_.back();
}

SampleTarget SampleTarget::background() { return SampleTarget(0, std::nullopt); }

SampleTarget SampleTarget::foreground(int class_id, AngleRad azimuth) {
  if (class_id < 1) {
    throw Error(ErrorCode::kClassOutOfRange, "foreground class ids start at 1");
  }
  return SampleTarget(class_id, azimuth);
}

BinIndex SampleTarget::bin(int n_bins) const {
  if (!azimuth_) throw Error(ErrorCode::kBackgroundInPoseLoss, "background sample has no pose");
  return azimuth_to_bin(*azimuth_, n_bins);
}

PoseEmbedding SampleTarget::embedding(EmbeddingKind kind) const {
  if (!azimuth_) throw Error(ErrorCode::kBackgroundInRegression, "background sample has no pose");
  return encode(*azimuth_, kind);
}

SampleTarget SampleTarget::flipped() const {
  if (!azimuth_) return *this;
  return SampleTarget(class_id_, flip_azimuth(*azimuth_));
}

HuberValue huber(double residual, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidParameter, "Huber delta must be positive");
  const double a = std::fabs(residual);
  if (a <= delta) return {0.5 * residual * residual, residual};
  return {delta * (a - 0.5 * delta), residual > 0.0 ? delta : -delta};
}

double default_geometric_sigma(int n_bins) { return 3.0 * n_bins / 360.0; }

double log_sum_exp(std::span<const double> logits) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  CompensatedSum sum;
  for (double x : logits) sum.add(std::exp(x - shift));
  return shift + std::log(sum.value());
}

LossResult regression_loss(std::span<const OutputTensor> outputs,
                           std::span<const SampleTarget> targets, EmbeddingKind kind,
                           double huber_delta) {
  require_same_batch(outputs, targets);
  LossResult result;
  result.grad.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const OutputTensor& out = outputs[i];
    require_layout(out, HeadKind::kRegPose, "regression loss");
    if (out.layout().pose_width != embedding_dim(kind)) {
      throw Error(ErrorCode::kLayoutError, "regression head width does not match embedding");
    }
    if (targets[i].is_background()) {
      throw Error(ErrorCode::kBackgroundInRegression,
                  "background sample " + std::to_string(i) + " in regression batch");
    }
    OutputTensor& grad = result.grad.emplace_back(out.layout());
    const int c = targets[i].class_id();
    result.value += huber_row(out.pose_row(c), targets[i].embedding(kind), huber_delta, 1.0,
                              grad.pose_row(c));
  }
  return result;
}

LossResult classification_loss(std::span<const OutputTensor> outputs,
                               std::span<const SampleTarget> targets) {
  require_same_batch(outputs, targets);
  LossResult result;
  result.grad.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const OutputTensor& out = outputs[i];
    require_layout(out, HeadKind::kClsPose, "classification loss");
    if (targets[i].is_background()) {
      throw Error(ErrorCode::kBackgroundInPoseLoss,
                  "background sample " + std::to_string(i) + " in pose batch");
    }
    OutputTensor& grad = result.grad.emplace_back(out.layout());
    const int c = targets[i].class_id();
    const auto bin = static_cast<std::size_t>(targets[i].bin(out.layout().pose_width).zero_based());
    result.value += cross_entropy_row(out.pose_row(c), bin, 1.0, grad.pose_row(c));
  }
  return result;
}

LossResult geometric_classification_loss(std::span<const OutputTensor> outputs,
                                         std::span<const SampleTarget> targets, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidParameter, "sigma must be positive");
  require_same_batch(outputs, targets);
  LossResult result;
  result.grad.reserve(outputs.size());
  std::vector<double> weights;
  std::vector<double> probs;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const OutputTensor& out = outputs[i];
    require_layout(out, HeadKind::kClsPose, "geometric classification loss");
    if (targets[i].is_background()) {
      throw Error(ErrorCode::kBackgroundInPoseLoss,
                  "background sample " + std::to_string(i) + " in pose batch");
    }
    const int n_bins = out.layout().pose_width;
    const int c = targets[i].class_id();
    const BinIndex truth = targets[i].bin(n_bins);
    weights.resize(static_cast<std::size_t>(n_bins));
    probs.resize(static_cast<std::size_t>(n_bins));
    double weight_sum = 0.0;
    for (int v = 1; v <= n_bins; ++v) {
      const double w = std::exp(-bin_distance(BinIndex(v, n_bins), truth) / sigma);
      weights[static_cast<std::size_t>(v - 1)] = w;
      weight_sum += w;
    }
    const auto row = out.pose_row(c);
    const double shift = *std::max_element(row.begin(), row.end());
    CompensatedSum exp_sum;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      probs[v] = std::exp(row[v] - shift);
      exp_sum.add(probs[v]);
    }
    const double log_sum = std::log(exp_sum.value());
    for (double& p : probs) p /= exp_sum.value();
    OutputTensor& grad = result.grad.emplace_back(out.layout());
    auto g = grad.pose_row(c);
    // sum_v w_v (lse - row_v) with lse = shift + log_sum kept unrounded.
    CompensatedSum value;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      value.add(weights[v] * (shift - row[v]));
      g[v] = weight_sum * probs[v] - weights[v];
    }
    value.add(weight_sum * log_sum);
    result.value += value.value();
  }
  return result;
}

LossResult joint_regression_loss(std::span<const OutputTensor> outputs,
                                 std::span<const SampleTarget> targets, double lambda,
                                 EmbeddingKind kind, double huber_delta) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidParameter, "lambda must be nonnegative");
  require_same_batch(outputs, targets);
  LossResult result;
  result.grad.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const OutputTensor& out = outputs[i];
    require_layout(out, HeadKind::kJointReg, "joint regression loss");
    if (out.layout().pose_width != embedding_dim(kind)) {
      throw Error(ErrorCode::kLayoutError, "pose head width does not match embedding");
    }
    const int c = targets[i].class_id();
    if (c > out.layout().n_classes) require_class(out.layout(), c);
    OutputTensor& grad = result.grad.emplace_back(out.layout());
    result.value +=
        cross_entropy_row(out.detection(), static_cast<std::size_t>(c), 1.0, grad.detection());
    if (c != 0 && lambda > 0.0) {
      result.value += lambda * huber_row(out.pose_row(c), targets[i].embedding(kind),
                                         huber_delta, lambda, grad.pose_row(c));
    }
  }
  return result;
}

LossResult joint_classification_loss(std::span<const OutputTensor> outputs,
                                     std::span<const SampleTarget> targets) {
  require_same_batch(outputs, targets);
  LossResult result;
  result.grad.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const OutputTensor& out = outputs[i];
    require_layout(out, HeadKind::kJointCls, "joint classification loss");
    const int c = targets[i].class_id();
    if (c > out.layout().n_classes) require_class(out.layout(), c);
    std::size_t slot = out.layout().size() - 1;  // background
    if (c != 0) {
      slot = out.layout().pose_offset(c) +
             static_cast<std::size_t>(targets[i].bin(out.layout().pose_width).zero_based());
    }
    OutputTensor& grad = result.grad.emplace_back(out.layout());
    result.value += cross_entropy_row(out.values(), slot, 1.0, grad.values());
  }
  return result;
}

BinIndex pose_argmax(const OutputTensor& output, int class_id) {
  if (output.layout().is_regression()) {
    throw Error(ErrorCode::kLayoutError, "pose_argmax needs a classification layout");
  }
  require_class(output.layout(), class_id);
  const auto row = output.pose_row(class_id);
  // max_element returns the first maximum, which is the smallest bin on ties.
  const auto best = std::max_element(row.begin(), row.end());
  return BinIndex(static_cast<int>(best - row.begin()) + 1, output.layout().pose_width);
}

double joint_detection_score(const OutputTensor& output, int class_id) {
  if (output.layout().kind != HeadKind::kJointCls) {
    throw Error(ErrorCode::kLayoutError, "detection score needs a JointCls layout");
  }
  require_class(output.layout(), class_id);
  const auto all = output.values();
  const double shift = *std::max_element(all.begin(), all.end());
  double total = 0.0;
  for (double x : all) total += std::exp(x - shift);
  double mass = 0.0;
  for (double x : output.pose_row(class_id)) mass += std::exp(x - shift);
  return mass / total;
}

double joint_background_probability(const OutputTensor& output) {
  const auto all = output.values();
  const double shift = *std::max_element(all.begin(), all.end());
  double total = 0.0;
  for (double x : all) total += std::exp(x - shift);
  return std::exp(output.background() - shift) / total;
}

std::vector<double> pose_probabilities(const OutputTensor& output, int class_id) {
  if (output.layout().is_regression()) {
    throw Error(ErrorCode::kLayoutError, "pose probabilities need a classification layout");
  }
  const auto row = output.pose_row(class_id);
  std::vector<double> probs(row.size());
  softmax_into(row, probs);
  return probs;
}

}  // namespace viewbench
