#include "viewbench/tinynet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "viewbench/error.hpp"

namespace viewbench {

namespace {

struct StackTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> outputs;  // after the rectifier, when applied
};

std::vector<double> run_stack(const std::vector<Dense>& layers, std::vector<double> x,
                              bool rectify_last, StackTrace* trace) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dense& layer = layers[l];
    std::vector<double> y(layer.bias);
    for (int o = 0; o < layer.out_dim; ++o) {
      const double* w = layer.weight.data() + static_cast<std::size_t>(o) * layer.in_dim;
      double acc = 0.0;
      for (int i = 0; i < layer.in_dim; ++i) acc += w[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] += acc;
    }
    if (rectify_last || l + 1 < layers.size()) {
      for (double& v : y) v = v > 0.0 ? v : 0.0;
    }
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->outputs.push_back(y);
    }
    x = std::move(y);
  }
  return x;
}

// Accumulates parameter gradients into `grads` and returns d(input).
std::vector<double> back_stack(const std::vector<Dense>& layers, std::vector<Dense>& grads,
                               const StackTrace& trace, std::vector<double> d_out,
                               bool rectify_last) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Dense& layer = layers[l];
    Dense& g = grads[l];
    if (rectify_last || l + 1 < layers.size()) {
      const auto& out = trace.outputs[l];
      for (std::size_t o = 0; o < d_out.size(); ++o) {
        if (!(out[o] > 0.0)) d_out[o] = 0.0;
      }
    }
    const auto& in = trace.inputs[l];
    std::vector<double> d_in(static_cast<std::size_t>(layer.in_dim), 0.0);
    for (int o = 0; o < layer.out_dim; ++o) {
      const double d = d_out[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      const std::size_t row = static_cast<std::size_t>(o) * layer.in_dim;
      const double* w = layer.weight.data() + row;
      double* gw = g.weight.data() + row;
      for (int i = 0; i < layer.in_dim; ++i) {
        gw[i] += d * in[static_cast<std::size_t>(i)];
        d_in[static_cast<std::size_t>(i)] += d * w[i];
      }
      g.bias[static_cast<std::size_t>(o)] += d;
    }
    d_out = std::move(d_in);
  }
  return d_out;
}

void require_features(const NetConfig& cfg, const FeatureBatch& features) {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != static_cast<std::size_t>(cfg.input_dim)) {
      throw Error(ErrorCode::kLayoutError, "feature " + std::to_string(i) + " has dimension " +
                                               std::to_string(features[i].size()) +
                                               ", network expects " +
                                               std::to_string(cfg.input_dim));
    }
  }
}

std::size_t pose_block_size(const NetConfig& cfg) {
  return static_cast<std::size_t>(cfg.n_classes) * static_cast<std::size_t>(cfg.head.pose_width);
}

struct SampleTrace {
  StackTrace trunk;
  StackTrace branch;
  StackTrace pose_branch;
};

OutputTensor forward_one(const ModelParams& params, const NetConfig& cfg,
                         const std::vector<double>& x, SampleTrace* trace) {
  const LayerSet& w = params.weights;
  std::vector<double> h = run_stack(w.trunk, x, true, trace ? &trace->trunk : nullptr);
  const OutputLayout layout = cfg.output_layout();
  if (cfg.head.kind != HeadKind::kJointReg) {
    return OutputTensor(layout, run_stack(w.branch, std::move(h), false,
                                          trace ? &trace->branch : nullptr));
  }
  std::vector<double> det = run_stack(w.branch, h, false, trace ? &trace->branch : nullptr);
  std::vector<double> pose =
      run_stack(w.pose_branch, std::move(h), false, trace ? &trace->pose_branch : nullptr);
  det.insert(det.end(), pose.begin(), pose.end());
  return OutputTensor(layout, std::move(det));
}

bool all_finite(const LayerSet& set) {
  auto ok = [](const std::vector<Dense>& layers) {
    for (const Dense& d : layers) {
      for (double v : d.weight) if (!std::isfinite(v)) return false;
      for (double v : d.bias) if (!std::isfinite(v)) return false;
    }
    return true;
  };
  return ok(set.trunk) && ok(set.branch) && ok(set.pose_branch);
}

void update_stack(std::vector<Dense>& weights, std::vector<Dense>& velocity,
                  const std::vector<Dense>& grads, double lr, const TrainConfig& tcfg) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Dense& w = weights[l];
    Dense& v = velocity[l];
    const Dense& g = grads[l];
    for (std::size_t k = 0; k < w.weight.size(); ++k) {
      v.weight[k] = tcfg.momentum * v.weight[k] + g.weight[k] + tcfg.weight_decay * w.weight[k];
      w.weight[k] -= lr * v.weight[k];
    }
    for (std::size_t k = 0; k < w.bias.size(); ++k) {
      v.bias[k] = tcfg.momentum * v.bias[k] + g.bias[k];
      w.bias[k] -= lr * v.bias[k];
    }
  }
}

}  // namespace

OutputLayout NetConfig::output_layout() const {
  return OutputLayout{head.kind, n_classes, head.pose_width};
}

void NetConfig::validate() const {
  if (input_dim < 1) throw Error(ErrorCode::kInvalidConfig, "input_dim must be positive");
  if (n_classes < 1) throw Error(ErrorCode::kInvalidConfig, "n_classes must be positive");
  for (int w : trunk_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidConfig, "zero-width trunk layer");
  }
  if (split_depth < 0 || split_depth > static_cast<int>(trunk_widths.size())) {
    throw Error(ErrorCode::kInvalidConfig, "split_depth must lie in 0..len(trunk_widths)");
  }
  try {
    output_layout().validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
}

std::size_t LayerSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto* stack : {&trunk, &branch, &pose_branch}) {
    for (const Dense& d : *stack) n += d.weight.size() + d.bias.size();
  }
  return n;
}

LayerSet LayerSet::zeros_like() const {
  LayerSet out;
  auto copy = [](const std::vector<Dense>& src, std::vector<Dense>& dst) {
    for (const Dense& d : src) dst.emplace_back(d.in_dim, d.out_dim);
  };
  copy(trunk, out.trunk);
  copy(branch, out.branch);
  copy(pose_branch, out.pose_branch);
  return out;
}

std::vector<double*> LayerSet::parameter_pointers() {
  std::vector<double*> ptrs;
  ptrs.reserve(parameter_count());
  for (auto* stack : {&trunk, &branch, &pose_branch}) {
    for (Dense& d : *stack) {
      for (double& v : d.weight) ptrs.push_back(&v);
      for (double& v : d.bias) ptrs.push_back(&v);
    }
  }
  return ptrs;
}

double TrainConfig::lr_at(long iter) const {
  return iter >= decay_at_iter ? lr / lr_decay_factor : lr;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "lr must be nonnegative");
  if (!(positive_fraction > 0.0 && positive_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "positive_fraction must lie in (0, 1]");
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be positive");
  if (!(lr_decay_factor > 0.0)) throw Error(ErrorCode::kInvalidConfig, "lr_decay_factor must be positive");
  if (total_iters < 0) throw Error(ErrorCode::kInvalidConfig, "total_iters must be nonnegative");
  if (log_interval < 1) throw Error(ErrorCode::kInvalidConfig, "log_interval must be positive");
}

bool loss_matches_head(LossKind loss, HeadKind head) noexcept {
  switch (loss) {
    case LossKind::kRegression: return head == HeadKind::kRegPose;
    case LossKind::kClassification:
    case LossKind::kGeometricClassification: return head == HeadKind::kClsPose;
    case LossKind::kJointRegression: return head == HeadKind::kJointReg;
    case LossKind::kJointClassification: return head == HeadKind::kJointCls;
  }
  return false;
}

bool loss_uses_background(LossKind loss) noexcept {
  return loss == LossKind::kJointRegression || loss == LossKind::kJointClassification;
}

LossResult compute_loss(const LossSpec& spec, std::span<const OutputTensor> outputs,
                        std::span<const SampleTarget> targets) {
  if (outputs.empty()) return {};
  const OutputLayout& layout = outputs.front().layout();
  switch (spec.kind) {
    case LossKind::kRegression:
      return regression_loss(outputs, targets, layout.embedding_kind(), spec.huber_delta);
    case LossKind::kClassification:
      return classification_loss(outputs, targets);
    case LossKind::kGeometricClassification:
      return geometric_classification_loss(
          outputs, targets, spec.sigma.value_or(default_geometric_sigma(layout.pose_width)));
    case LossKind::kJointRegression:
      return joint_regression_loss(outputs, targets, spec.lambda, layout.embedding_kind(),
                                   spec.huber_delta);
    case LossKind::kJointClassification:
      return joint_classification_loss(outputs, targets);
  }
  throw Error(ErrorCode::kConfigError, "unknown loss kind");
}

ModelParams init_params(const NetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto make_layer = [&rng](int in, int out) {
    Dense d(in, out);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    for (double& w : d.weight) w = dist(rng);
    return d;
  };

  ModelParams params;
  LayerSet& w = params.weights;
  const bool joint_reg = cfg.head.kind == HeadKind::kJointReg;
  const int n_shared = joint_reg ? cfg.split_depth : static_cast<int>(cfg.trunk_widths.size());
  int width = cfg.input_dim;
  for (int l = 0; l < n_shared; ++l) {
    w.trunk.push_back(make_layer(width, cfg.trunk_widths[static_cast<std::size_t>(l)]));
    width = cfg.trunk_widths[static_cast<std::size_t>(l)];
  }
  auto build_branch = [&](std::vector<Dense>& branch, int out_dim) {
    int in = width;
    for (std::size_t l = static_cast<std::size_t>(n_shared); l < cfg.trunk_widths.size(); ++l) {
      branch.push_back(make_layer(in, cfg.trunk_widths[l]));
      in = cfg.trunk_widths[l];
    }
    branch.push_back(make_layer(in, out_dim));
  };
  if (joint_reg) {
    build_branch(w.branch, cfg.n_classes + 1);
    build_branch(w.pose_branch, static_cast<int>(pose_block_size(cfg)));
  } else {
    build_branch(w.branch, static_cast<int>(cfg.output_layout().size()));
  }
  params.velocity = w.zeros_like();
  return params;
}

std::vector<OutputTensor> forward(const ModelParams& params, const NetConfig& cfg,
                                  const FeatureBatch& features) {
  require_features(cfg, features);
  std::vector<OutputTensor> outputs;
  outputs.reserve(features.size());
  for (const auto& x : features) outputs.push_back(forward_one(params, cfg, x, nullptr));
  return outputs;
}

ParamGrads backward(const ModelParams& params, const NetConfig& cfg, const FeatureBatch& features,
                    std::span<const OutputTensor> loss_grad) {
  require_features(cfg, features);
  if (loss_grad.size() != features.size()) {
    throw Error(ErrorCode::kLayoutError, "loss gradient batch does not match features");
  }
  const OutputLayout layout = cfg.output_layout();
  const LayerSet& w = params.weights;
  ParamGrads grads = w.zeros_like();
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!(loss_grad[i].layout() == layout)) {
      throw Error(ErrorCode::kLayoutError, "loss gradient layout does not match the network");
    }
    SampleTrace trace;
    forward_one(params, cfg, features[i], &trace);
    const auto g = loss_grad[i].values();
    std::vector<double> d_hidden;
    if (cfg.head.kind != HeadKind::kJointReg) {
      d_hidden = back_stack(w.branch, grads.branch, trace.branch,
                            std::vector<double>(g.begin(), g.end()), false);
    } else {
      const std::size_t n_det = static_cast<std::size_t>(cfg.n_classes) + 1;
      d_hidden = back_stack(w.branch, grads.branch, trace.branch,
                            std::vector<double>(g.begin(), g.begin() + static_cast<long>(n_det)),
                            false);
      const std::vector<double> d_pose =
          back_stack(w.pose_branch, grads.pose_branch, trace.pose_branch,
                     std::vector<double>(g.begin() + static_cast<long>(n_det), g.end()), false);
      for (std::size_t k = 0; k < d_hidden.size(); ++k) d_hidden[k] += d_pose[k];
    }
    back_stack(w.trunk, grads.trunk, trace.trunk, std::move(d_hidden), true);
  }
  return grads;
}

std::vector<std::uint8_t> activation_pattern(const ModelParams& params, const NetConfig& cfg,
                                             const FeatureBatch& features) {
  require_features(cfg, features);
  std::vector<std::uint8_t> pattern;
  auto record = [&pattern](const StackTrace& t, bool rectify_last) {
    for (std::size_t l = 0; l < t.outputs.size(); ++l) {
      if (!rectify_last && l + 1 == t.outputs.size()) break;
      for (double v : t.outputs[l]) pattern.push_back(v > 0.0 ? 1 : 0);
    }
  };
  for (const auto& x : features) {
    SampleTrace trace;
    forward_one(params, cfg, x, &trace);
    record(trace.trunk, true);
    record(trace.branch, false);
    record(trace.pose_branch, false);
  }
  return pattern;
}

void sgd_step(ModelParams& params, const ParamGrads& grads, const TrainConfig& tcfg, long iter) {
  const double lr = tcfg.lr_at(iter);
  LayerSet& w = params.weights;
  LayerSet& v = params.velocity;
  if (grads.trunk.size() != w.trunk.size() || grads.branch.size() != w.branch.size() ||
      grads.pose_branch.size() != w.pose_branch.size()) {
    throw Error(ErrorCode::kLayoutError, "gradient shapes do not match parameters");
  }
  update_stack(w.trunk, v.trunk, grads.trunk, lr, tcfg);
  update_stack(w.branch, v.branch, grads.branch, lr, tcfg);
  update_stack(w.pose_branch, v.pose_branch, grads.pose_branch, lr, tcfg);
}

Batch make_batch(const SampleSet& samples, const TrainConfig& tcfg, std::mt19937_64& rng) {
  std::vector<std::size_t> fg;
  std::vector<std::size_t> bg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples.targets[i].is_background() ? bg : fg).push_back(i);
  }
  const auto n_fg = static_cast<int>(
      std::ceil(tcfg.positive_fraction * tcfg.batch_size - 1e-9));
  const int n_bg = tcfg.batch_size - n_fg;
  if (fg.empty()) throw Error(ErrorCode::kEmptyClass, "no foreground samples to draw from");
  if (n_bg > 0 && bg.empty()) {
    throw Error(ErrorCode::kEmptyClass, "batch needs background samples but none exist");
  }
  if (tcfg.flip_augment && samples.flip_signs.size() != static_cast<std::size_t>(
                                                           samples.features.empty()
                                                               ? 0
                                                               : samples.features[0].size())) {
    throw Error(ErrorCode::kConfigError, "flip augmentation needs a flip sign per feature");
  }

  Batch batch;
  batch.features.reserve(static_cast<std::size_t>(tcfg.batch_size));
  batch.targets.reserve(static_cast<std::size_t>(tcfg.batch_size));
  std::bernoulli_distribution coin(0.5);
  auto draw = [&](const std::vector<std::size_t>& pool, int count) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int k = 0; k < count; ++k) {
      const std::size_t i = pool[pick(rng)];
      std::vector<double> x = samples.features[i];
      SampleTarget t = samples.targets[i];
      if (tcfg.flip_augment && coin(rng)) {
        for (std::size_t j = 0; j < x.size(); ++j) x[j] *= samples.flip_signs[j];
        t = t.flipped();
      }
      batch.features.push_back(std::move(x));
      batch.targets.push_back(t);
    }
  };
  draw(fg, n_fg);
  if (n_bg > 0) draw(bg, n_bg);
  return batch;
}

TrainResult train(const SampleSet& samples, const NetConfig& ncfg, const TrainConfig& tcfg,
                  const LossSpec& loss, const TrainCallback& on_iteration) {
  ncfg.validate();
  tcfg.validate();
  if (!loss_matches_head(loss.kind, ncfg.head.kind)) {
    throw Error(ErrorCode::kConfigError, "loss is not compatible with the network head");
  }
  TrainConfig effective = tcfg;
  if (!loss_uses_background(loss.kind)) effective.positive_fraction = 1.0;

  TrainResult result;
  result.params = init_params(ncfg);
  std::mt19937_64 rng(tcfg.seed);
  std::mt19937_64 monitor_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const Batch monitor = make_batch(samples, effective, monitor_rng);
  for (long iter = 0; iter < tcfg.total_iters; ++iter) {
    const Batch batch = make_batch(samples, effective, rng);
    const std::vector<OutputTensor> outputs = forward(result.params, ncfg, batch.features);
    const LossResult lr = compute_loss(loss, outputs, batch.targets);
    if (!std::isfinite(lr.value)) {
      throw DivergenceError(iter, "loss became non-finite at iteration " + std::to_string(iter));
    }
    if (iter % tcfg.log_interval == 0 || iter + 1 == tcfg.total_iters) {
      const double monitored =
          compute_loss(loss, forward(result.params, ncfg, monitor.features), monitor.targets).value;
      if (!std::isfinite(monitored)) {
        throw DivergenceError(iter, "loss became non-finite at iteration " + std::to_string(iter));
      }
      result.log.push_back({iter, tcfg.lr_at(iter), monitored,
                            monitored / static_cast<double>(monitor.targets.size()), lr.value});
    }
    const ParamGrads grads = backward(result.params, ncfg, batch.features, lr.grad);
    sgd_step(result.params, grads, tcfg, iter);
    if (on_iteration) on_iteration(iter + 1, result.params);
  }
  if (!all_finite(result.params.weights)) {
    throw DivergenceError(tcfg.total_iters, "parameters became non-finite");
  }
  return result;
}

double mean_loss(const ModelParams& params, const NetConfig& ncfg, const SampleSet& samples,
                 const LossSpec& loss) {
  FeatureBatch features;
  std::vector<SampleTarget> targets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!loss_uses_background(loss.kind) && samples.targets[i].is_background()) continue;
    features.push_back(samples.features[i]);
    targets.push_back(samples.targets[i]);
  }
  if (targets.empty()) return 0.0;
  const auto outputs = forward(params, ncfg, features);
  return compute_loss(loss, outputs, targets).value / static_cast<double>(targets.size());
}

Prediction predict_one(const OutputTensor& output) {
  const OutputLayout& layout = output.layout();
  Prediction p;
  p.classes.reserve(static_cast<std::size_t>(layout.n_classes));
  std::vector<double> det_probs;
  if (layout.kind == HeadKind::kJointReg) {
    const auto det = output.detection();
    det_probs.resize(det.size());
    const double lse = log_sum_exp(det);
    for (std::size_t k = 0; k < det.size(); ++k) det_probs[k] = std::exp(det[k] - lse);
    p.background = det_probs[0];
  } else if (layout.kind == HeadKind::kJointCls) {
    p.background = joint_background_probability(output);
  }
  for (int c = 1; c <= layout.n_classes; ++c) {
    ClassPrediction cp;
    switch (layout.kind) {
      case HeadKind::kRegPose:
        cp.azimuth = decode(output.pose_row(c), layout.embedding_kind());
        break;
      case HeadKind::kJointReg:
        cp.score = det_probs[static_cast<std::size_t>(c)];
        cp.azimuth = decode(output.pose_row(c), layout.embedding_kind());
        break;
      case HeadKind::kClsPose:
        cp.bin = pose_argmax(output, c);
        cp.azimuth = bin_center(*cp.bin);
        break;
      case HeadKind::kJointCls:
        cp.score = joint_detection_score(output, c);
        cp.bin = pose_argmax(output, c);
        cp.azimuth = bin_center(*cp.bin);
        break;
    }
    p.classes.push_back(cp);
  }
  return p;
}

std::vector<Prediction> predict(const ModelParams& params, const NetConfig& ncfg,
                                const FeatureBatch& features) {
  const auto outputs = forward(params, ncfg, features);
  std::vector<Prediction> out;
  out.reserve(outputs.size());
  for (const auto& o : outputs) out.push_back(predict_one(o));
  return out;
}

}  // namespace viewbench
