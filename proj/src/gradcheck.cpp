#include "viewbench/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace viewbench {

namespace {

constexpr double kRelativeFloor = 1e-3;

struct LossInstance {
  std::vector<OutputTensor> outputs;
  std::vector<SampleTarget> targets;
  LossSpec spec;
};

SampleTarget random_target(int n_classes, bool allow_background, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cls(allow_background ? 0 : 1, n_classes);
  std::uniform_real_distribution<double> az(0.0, kTwoPi);
  const int c = cls(rng);
  if (c == 0) return SampleTarget::background();
  return SampleTarget::foreground(c, AngleRad(az(rng)));
}

LossInstance random_instance(LossKind kind, int index, std::mt19937_64& rng) {
  static constexpr std::array<int, 3> kClasses = {1, 2, 5};
  static constexpr std::array<int, 4> kBins = {2, 8, 24, 360};
  const int n_classes = kClasses[static_cast<std::size_t>(index) % kClasses.size()];
  const int n_bins = kBins[static_cast<std::size_t>(index) % kBins.size()];
  const EmbeddingKind emb = index % 2 == 0 ? EmbeddingKind::kTwoD : EmbeddingKind::kThreeD;
  const int batch = 8;

  LossInstance inst;
  inst.spec.kind = kind;
  OutputLayout layout;
  switch (kind) {
    case LossKind::kRegression: layout = OutputLayout::reg_pose(n_classes, emb); break;
    case LossKind::kClassification:
    case LossKind::kGeometricClassification: layout = OutputLayout::cls_pose(n_classes, n_bins); break;
    case LossKind::kJointRegression: layout = OutputLayout::joint_reg(n_classes, emb); break;
    case LossKind::kJointClassification: layout = OutputLayout::joint_cls(n_classes, n_bins); break;
  }
  if (kind == LossKind::kGeometricClassification) {
    inst.spec.sigma = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
  }
  if (kind == LossKind::kJointRegression) {
    inst.spec.lambda = std::uniform_real_distribution<double>(0.25, 2.0)(rng);
  }
  std::normal_distribution<double> logit(0.0, 2.0);
  std::normal_distribution<double> residual(0.0, 0.8);
  for (int i = 0; i < batch; ++i) {
    inst.targets.push_back(random_target(n_classes, loss_uses_background(kind), rng));
    OutputTensor out(layout);
    for (double& v : out.values()) v = logit(rng);
    if (layout.is_regression()) {
      // Centre pose rows near the curve so both Huber branches are exercised.
      const AngleRad a(std::uniform_real_distribution<double>(0.0, kTwoPi)(rng));
      const PoseEmbedding e = encode(a, emb);
      for (int c = 1; c <= n_classes; ++c) {
        auto row = out.pose_row(c);
        for (std::size_t k = 0; k < row.size(); ++k) row[k] = e[static_cast<int>(k)] + residual(rng);
      }
    }
    inst.outputs.push_back(std::move(out));
  }
  return inst;
}

void check_loss(LossKind kind, const GradCheckOptions& opt, GradCheckCase& report) {
  std::mt19937_64 rng(opt.seed * 7919 + static_cast<std::uint64_t>(kind) + 1);
  for (int n = 0; n < opt.instances; ++n) {
    LossInstance inst = random_instance(kind, n, rng);
    LossResult analytic = compute_loss(inst.spec, inst.outputs, inst.targets);
    if (opt.corrupt && n == 0) analytic.grad[0].values()[0] += 0.01;
    // The loss is a plain sum over samples, so each output only moves its own
    // term; probing that term alone keeps roundoff from the rest of the batch
    // out of the difference quotient.
    double term_sum = 0.0;
    for (std::size_t i = 0; i < inst.outputs.size(); ++i) {
      std::vector<OutputTensor> one{inst.outputs[i]};
      const std::vector<SampleTarget> target{inst.targets[i]};
      term_sum += compute_loss(inst.spec, one, target).value;
      auto values = one[0].values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        const double saved = values[k];
        values[k] = saved + opt.epsilon;
        const double up = compute_loss(inst.spec, one, target).value;
        values[k] = saved - opt.epsilon;
        const double down = compute_loss(inst.spec, one, target).value;
        values[k] = saved;
        const double numeric = (up - down) / (2.0 * opt.epsilon);
        report.max_rel_error = std::max(
            report.max_rel_error, relative_error(analytic.grad[i].values()[k], numeric));
        ++report.checked;
      }
    }
    // A batch value that is not the sum of its terms invalidates the probes.
    if (std::fabs(analytic.value - term_sum) > 1e-9 * std::max(1.0, std::fabs(term_sum))) {
      report.max_rel_error = std::numeric_limits<double>::infinity();
    }
    ++report.instances;
  }
}

NetConfig small_net(LossKind kind, int index) {
  NetConfig cfg;
  cfg.input_dim = 4;
  cfg.trunk_widths = {6, 5};
  cfg.split_depth = 1;
  cfg.n_classes = 2;
  const EmbeddingKind emb = index % 2 == 0 ? EmbeddingKind::kTwoD : EmbeddingKind::kThreeD;
  switch (kind) {
    case LossKind::kRegression: cfg.head = HeadSpec::reg_pose(emb); break;
    case LossKind::kClassification:
    case LossKind::kGeometricClassification: cfg.head = HeadSpec::cls_pose(8); break;
    case LossKind::kJointRegression: cfg.head = HeadSpec::joint_reg(emb); break;
    case LossKind::kJointClassification: cfg.head = HeadSpec::joint_cls(6); break;
  }
  return cfg;
}

void check_network(LossKind kind, const GradCheckOptions& opt, GradCheckCase& report) {
  std::mt19937_64 rng(opt.seed * 104729 + static_cast<std::uint64_t>(kind) + 11);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int n = 0; n < opt.instances; ++n) {
    NetConfig cfg = small_net(kind, n);
    cfg.seed = rng();
    ModelParams params = init_params(cfg);
    // Nonzero biases so that every parameter has a generic gradient.
    for (double* p : params.weights.parameter_pointers()) *p += 0.1 * n01(rng);

    FeatureBatch features(6, std::vector<double>(static_cast<std::size_t>(cfg.input_dim)));
    for (auto& row : features) for (double& v : row) v = n01(rng);
    std::vector<SampleTarget> targets;
    for (std::size_t i = 0; i < features.size(); ++i) {
      targets.push_back(random_target(cfg.n_classes, loss_uses_background(kind), rng));
    }
    LossSpec spec;
    spec.kind = kind;
    if (kind == LossKind::kGeometricClassification) spec.sigma = 1.5;

    auto loss_at = [&](const ModelParams& p) {
      return compute_loss(spec, forward(p, cfg, features), targets).value;
    };
    const LossResult out_grad = compute_loss(spec, forward(params, cfg, features), targets);
    ParamGrads analytic = backward(params, cfg, features, out_grad.grad);
    const std::vector<double*> grad_ptrs = analytic.parameter_pointers();
    if (opt.corrupt && n == 0) *grad_ptrs[0] += 0.01;

    const std::vector<std::uint8_t> base_pattern = activation_pattern(params, cfg, features);
    const std::vector<double*> ptrs = params.weights.parameter_pointers();
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
      const double saved = *ptrs[k];
      *ptrs[k] = saved + opt.epsilon;
      const double up = loss_at(params);
      const bool same_up = activation_pattern(params, cfg, features) == base_pattern;
      *ptrs[k] = saved - opt.epsilon;
      const double down = loss_at(params);
      const bool same_down = activation_pattern(params, cfg, features) == base_pattern;
      *ptrs[k] = saved;
      if (!same_up || !same_down) {
        ++report.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt.epsilon);
      report.max_rel_error = std::max(report.max_rel_error, relative_error(*grad_ptrs[k], numeric));
      ++report.checked;
    }
    ++report.instances;
  }
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), kRelativeFloor});
  return std::fabs(analytic - numeric) / scale;
}

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kRegression: return "regression";
    case LossKind::kClassification: return "classification";
    case LossKind::kGeometricClassification: return "geometric";
    case LossKind::kJointRegression: return "joint_regression";
    case LossKind::kJointClassification: return "joint_classification";
  }
  return "unknown";
}

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options) {
  std::vector<GradCheckCase> cases;
  if (options.losses) {
    for (LossKind kind : options.kinds) {
      GradCheckCase c;
      c.name = "loss/" + loss_name(kind);
      c.tolerance = options.loss_tolerance;
      check_loss(kind, options, c);
      cases.push_back(c);
    }
  }
  if (options.end_to_end) {
    for (LossKind kind : options.kinds) {
      GradCheckCase c;
      c.name = "net/" + loss_name(kind);
      c.tolerance = options.network_tolerance;
      check_network(kind, options, c);
      cases.push_back(c);
    }
  }
  return cases;
}

}  // namespace viewbench
