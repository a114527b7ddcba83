#include <doctest.h>

#include <cmath>
#include <random>

#include "viewbench/error.hpp"
#include "viewbench/tinynet.hpp"

using namespace viewbench;

namespace {

bool throws_code(auto&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

FeatureBatch random_features(int n, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureBatch x(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& row : x) {
    for (double& v : row) v = g(rng);
  }
  return x;
}

// Straight-line forward pass written from the layer definitions, used as an
// independent oracle for forward().
std::vector<double> reference_stack(const std::vector<Dense>& layers, std::vector<double> x,
                                    bool rectify_last) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dense& d = layers[l];
    std::vector<double> y(static_cast<std::size_t>(d.out_dim));
    for (int o = 0; o < d.out_dim; ++o) {
      double s = 0.0;
      for (int i = 0; i < d.in_dim; ++i) {
        s += d.weight[static_cast<std::size_t>(o * d.in_dim + i)] * x[static_cast<std::size_t>(i)];
      }
      s += d.bias[static_cast<std::size_t>(o)];
      const bool rectify = rectify_last || l + 1 < layers.size();
      y[static_cast<std::size_t>(o)] = rectify ? std::max(0.0, s) : s;
    }
    x = y;
  }
  return x;
}

std::vector<double> reference_forward(const ModelParams& p, const NetConfig& cfg,
                                      const std::vector<double>& x) {
  const auto h = reference_stack(p.weights.trunk, x, true);
  auto out = reference_stack(p.weights.branch, h, false);
  if (cfg.head.kind == HeadKind::kJointReg) {
    const auto pose = reference_stack(p.weights.pose_branch, h, false);
    out.insert(out.end(), pose.begin(), pose.end());
  }
  return out;
}

std::vector<SampleTarget> random_targets(int n_classes, int n, bool background, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cls(background ? 0 : 1, n_classes);
  std::uniform_real_distribution<double> az(0.0, kTwoPi);
  std::vector<SampleTarget> t;
  for (int i = 0; i < n; ++i) {
    const int c = cls(rng);
    t.push_back(c == 0 ? SampleTarget::background() : SampleTarget::foreground(c, AngleRad(az(rng))));
  }
  return t;
}

bool all_zero(const std::vector<Dense>& layers) {
  for (const Dense& d : layers) {
    for (double v : d.weight) if (v != 0.0) return false;
    for (double v : d.bias) if (v != 0.0) return false;
  }
  return true;
}

// Toy set: x = (r cos a, r sin a, 1) with flip signs (+1, -1, +1), so a
// mirror of the feature is the feature of the mirrored azimuth.
SampleSet toy_samples(int n_fg, int n_bg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> az(0.0, kTwoPi);
  std::uniform_real_distribution<double> r(0.5, 1.5);
  SampleSet s;
  s.flip_signs = {1.0, -1.0, 1.0};
  for (int i = 0; i < n_fg; ++i) {
    const double a = az(rng);
    const double rr = r(rng);
    s.features.push_back({rr * std::cos(a), rr * std::sin(a), 1.0});
    s.targets.push_back(SampleTarget::foreground(1, AngleRad(a)));
  }
  for (int i = 0; i < n_bg; ++i) {
    s.features.push_back({0.1 * r(rng), 0.0, -1.0});
    s.targets.push_back(SampleTarget::background());
  }
  return s;
}

}  // namespace

TEST_CASE("config validation") {
  NetConfig cfg;
  cfg.trunk_widths = {8, 0};
  CHECK(throws_code([&] { init_params(cfg); }, ErrorCode::kInvalidConfig));
  cfg.trunk_widths = {8};
  cfg.split_depth = 2;
  CHECK(throws_code([&] { init_params(cfg); }, ErrorCode::kInvalidConfig));
  TrainConfig t;
  t.positive_fraction = 0.0;
  CHECK(throws_code([&] { t.validate(); }, ErrorCode::kInvalidConfig));
  t.positive_fraction = 1.0;
  t.lr = -1.0;
  CHECK(throws_code([&] { t.validate(); }, ErrorCode::kInvalidConfig));
}

TEST_CASE("init_params") {
  NetConfig cfg;
  cfg.input_dim = 100;
  cfg.trunk_widths = {100};
  cfg.seed = 7;
  const auto a = init_params(cfg);
  const auto b = init_params(cfg);
  CHECK(a == b);
  cfg.seed = 8;
  CHECK_FALSE(init_params(cfg) == a);

  for (const auto* stack : {&a.weights.trunk, &a.weights.branch}) {
    for (const Dense& d : *stack) {
      for (double v : d.bias) CHECK(v == 0.0);
    }
  }
  CHECK(all_zero(a.velocity.trunk));
  CHECK(all_zero(a.velocity.branch));

  const auto& w = a.weights.trunk[0].weight;
  REQUIRE(w.size() == 10000);
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(w.size()));
  CHECK(sd == doctest::Approx(0.1).epsilon(0.1));
  CHECK(std::fabs(mean) < 0.01);
}

TEST_CASE("layer shapes follow the head") {
  NetConfig cfg;
  cfg.input_dim = 5;
  cfg.trunk_widths = {7, 6};
  cfg.n_classes = 3;
  cfg.head = HeadSpec::cls_pose(8);
  auto p = init_params(cfg);
  CHECK(p.weights.trunk.size() == 2);
  CHECK(p.weights.branch.size() == 1);
  CHECK(p.weights.branch[0].out_dim == 24);
  CHECK(p.weights.pose_branch.empty());

  cfg.head = HeadSpec::joint_reg(EmbeddingKind::kThreeD);
  cfg.split_depth = 1;
  p = init_params(cfg);
  CHECK(p.weights.trunk.size() == 1);
  CHECK(p.weights.branch.size() == 2);
  CHECK(p.weights.branch.back().out_dim == 4);
  CHECK(p.weights.pose_branch.size() == 2);
  CHECK(p.weights.pose_branch.back().out_dim == 9);

  cfg.head = HeadSpec::joint_cls(24);
  p = init_params(cfg);
  CHECK(p.weights.branch.back().out_dim == 73);
}

TEST_CASE("forward examples") {
  NetConfig cfg;
  cfg.input_dim = 2;
  cfg.trunk_widths = {2};
  cfg.n_classes = 1;
  cfg.head = HeadSpec::reg_pose(EmbeddingKind::kTwoD);
  ModelParams p = init_params(cfg);

  ModelParams zero = p;
  zero.weights = p.weights.zeros_like();
  std::mt19937_64 rng(31);
  for (const auto& o : forward(zero, cfg, random_features(5, 2, rng))) {
    for (double v : o.values()) CHECK(v == 0.0);
  }

  p.weights.trunk[0].weight = {1, 0, 0, 1};
  p.weights.branch[0].weight = {1, 0, 0, 1};
  const auto out = forward(p, cfg, {{0.25, 3.5}});
  CHECK(out[0].values()[0] == 0.25);
  CHECK(out[0].values()[1] == 3.5);

  CHECK(throws_code([&] { forward(p, cfg, {{1.0, 2.0, 3.0}}); }, ErrorCode::kLayoutError));
}

TEST_CASE("forward matches a straight-line reimplementation") {
  std::mt19937_64 rng(32);
  for (HeadSpec head : {HeadSpec::reg_pose(EmbeddingKind::kThreeD), HeadSpec::cls_pose(8),
                        HeadSpec::joint_reg(EmbeddingKind::kTwoD), HeadSpec::joint_cls(6)}) {
    NetConfig cfg;
    cfg.input_dim = 6;
    cfg.trunk_widths = {9, 7};
    cfg.n_classes = 3;
    cfg.head = head;
    cfg.seed = 99;
    const auto p = init_params(cfg);
    const auto x = random_features(4, 6, rng);
    const auto out = forward(p, cfg, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto ref = reference_forward(p, cfg, x[i]);
      REQUIRE(ref.size() == out[i].values().size());
      for (std::size_t k = 0; k < ref.size(); ++k) CHECK(out[i].values()[k] == ref[k]);
    }
  }
}

TEST_CASE("backward closed form on a 2x2 linear layer") {
  NetConfig cfg;
  cfg.input_dim = 2;
  cfg.trunk_widths = {};
  cfg.split_depth = 0;
  cfg.n_classes = 1;
  cfg.head = HeadSpec::reg_pose(EmbeddingKind::kTwoD);
  ModelParams p = init_params(cfg);
  p.weights.branch[0].weight = {0.5, -1.0, 2.0, 0.25};
  p.weights.branch[0].bias = {0.1, -0.2};
  const FeatureBatch x{{3.0, -2.0}};
  // y = W x + b = (3.6, 5.3); squared loss against t = (1, 1) gives dy = y - t.
  const auto y = forward(p, cfg, x);
  CHECK(y[0].values()[0] == doctest::Approx(3.6));
  CHECK(y[0].values()[1] == doctest::Approx(5.3));
  OutputTensor dy(cfg.output_layout(), {2.6, 4.3});
  const std::vector<OutputTensor> grads{dy};
  const auto g = backward(p, cfg, x, grads);
  const std::vector<double> expected_w{2.6 * 3.0, 2.6 * -2.0, 4.3 * 3.0, 4.3 * -2.0};
  for (std::size_t k = 0; k < 4; ++k) CHECK(g.branch[0].weight[k] == doctest::Approx(expected_w[k]));
  CHECK(g.branch[0].bias[0] == doctest::Approx(2.6));
  CHECK(g.branch[0].bias[1] == doctest::Approx(4.3));

  const std::vector<OutputTensor> zero{OutputTensor(cfg.output_layout())};
  CHECK(all_zero(backward(p, cfg, x, zero).branch));

  const std::vector<OutputTensor> bad{OutputTensor(OutputLayout::cls_pose(1, 2))};
  CHECK(throws_code([&] { backward(p, cfg, x, bad); }, ErrorCode::kLayoutError));
}

TEST_CASE("end-to-end gradients match finite differences for every head and loss") {
  struct Pairing {
    HeadSpec head;
    LossSpec loss;
    bool background;
  };
  const std::vector<Pairing> pairings = {
      {HeadSpec::reg_pose(EmbeddingKind::kTwoD), {LossKind::kRegression}, false},
      {HeadSpec::reg_pose(EmbeddingKind::kThreeD), {LossKind::kRegression}, false},
      {HeadSpec::cls_pose(4), {LossKind::kClassification}, false},
      {HeadSpec::cls_pose(4), {LossKind::kGeometricClassification, 1.5}, false},
      {HeadSpec::joint_reg(EmbeddingKind::kTwoD), {LossKind::kJointRegression}, true},
      {HeadSpec::joint_reg(EmbeddingKind::kThreeD), {LossKind::kJointRegression, {}, 0.3}, true},
      {HeadSpec::joint_cls(4), {LossKind::kJointClassification}, true},
  };
  std::mt19937_64 rng(33);
  const double eps = 1e-5;
  for (const Pairing& pr : pairings) {
    NetConfig cfg;
    cfg.input_dim = 4;
    cfg.trunk_widths = {6, 5};
    cfg.split_depth = 1;
    cfg.n_classes = 2;
    cfg.head = pr.head;
    cfg.seed = rng();
    ModelParams p = init_params(cfg);
    REQUIRE(p.weights.parameter_count() <= 200);
    const auto x = random_features(6, 4, rng);
    const auto t = random_targets(2, 6, pr.background, rng);

    const auto out = forward(p, cfg, x);
    const auto analytic = backward(p, cfg, x, compute_loss(pr.loss, out, t).grad);
    ParamGrads a = analytic;
    const auto grad_ptrs = a.parameter_pointers();
    const auto ptrs = p.weights.parameter_pointers();
    const auto base_pattern = activation_pattern(p, cfg, x);
    double worst = 0.0;
    int checked = 0;
    for (std::size_t k = 0; k < ptrs.size(); ++k) {
      const double saved = *ptrs[k];
      *ptrs[k] = saved + eps;
      const bool same_up = activation_pattern(p, cfg, x) == base_pattern;
      const double up = compute_loss(pr.loss, forward(p, cfg, x), t).value;
      *ptrs[k] = saved - eps;
      const bool same_down = activation_pattern(p, cfg, x) == base_pattern;
      const double down = compute_loss(pr.loss, forward(p, cfg, x), t).value;
      *ptrs[k] = saved;
      if (!same_up || !same_down) continue;
      const double numeric = (up - down) / (2 * eps);
      const double g = *grad_ptrs[k];
      worst = std::max(worst, std::fabs(g - numeric) / std::max({std::fabs(g), std::fabs(numeric), 1e-3}));
      ++checked;
    }
    CAPTURE(static_cast<int>(pr.loss.kind));
    CHECK(checked > static_cast<int>(ptrs.size()) / 2);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("split-depth isolation") {
  NetConfig cfg;
  cfg.input_dim = 4;
  cfg.trunk_widths = {6, 5};
  cfg.split_depth = 1;
  cfg.n_classes = 2;
  cfg.head = HeadSpec::joint_reg(EmbeddingKind::kTwoD);
  const auto p = init_params(cfg);
  std::mt19937_64 rng(34);
  const auto x = random_features(8, 4, rng);
  const auto layout = cfg.output_layout();

  std::vector<OutputTensor> pose_only;
  std::vector<OutputTensor> det_only;
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    OutputTensor a(layout);
    OutputTensor b(layout);
    for (int c = 1; c <= 2; ++c) {
      for (double& v : a.pose_row(c)) v = g(rng);
    }
    for (double& v : b.detection()) v = g(rng);
    pose_only.push_back(a);
    det_only.push_back(b);
  }
  const auto gp = backward(p, cfg, x, pose_only);
  CHECK(all_zero(gp.branch));
  CHECK_FALSE(all_zero(gp.pose_branch));
  const auto gd = backward(p, cfg, x, det_only);
  CHECK(all_zero(gd.pose_branch));
  CHECK_FALSE(all_zero(gd.branch));

  // An all-background batch carries no pose term at all.
  const std::vector<SampleTarget> bg(x.size(), SampleTarget::background());
  const auto out = forward(p, cfg, x);
  const auto gl = backward(p, cfg, x, joint_regression_loss(out, bg, 1.0, EmbeddingKind::kTwoD).grad);
  CHECK(all_zero(gl.pose_branch));
}

TEST_CASE("rectifier blocks a dead layer") {
  NetConfig cfg;
  cfg.input_dim = 3;
  cfg.trunk_widths = {5, 4};
  cfg.n_classes = 2;
  cfg.head = HeadSpec::cls_pose(4);
  ModelParams p = init_params(cfg);
  for (double& b : p.weights.trunk[0].bias) b = -1e3;
  std::mt19937_64 rng(35);
  const auto x = random_features(6, 3, rng);
  const auto out = forward(p, cfg, x);
  // Everything downstream sees a zero vector, so outputs depend on biases only.
  const auto ref = reference_stack(p.weights.branch,
                                   reference_stack({p.weights.trunk[1]}, std::vector<double>(5, 0.0), true),
                                   false);
  for (const auto& o : out) {
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(o.values()[k] == ref[k]);
  }
  std::vector<OutputTensor> grads;
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    OutputTensor t(cfg.output_layout());
    for (double& v : t.values()) v = g(rng);
    grads.push_back(t);
  }
  const auto gr = backward(p, cfg, x, grads);
  CHECK(all_zero({gr.trunk[0]}));
  for (double v : gr.trunk[1].weight) CHECK(v == 0.0);
}

TEST_CASE("sgd_step") {
  ModelParams p;
  p.weights.branch.emplace_back(1, 1);
  p.weights.branch[0].weight = {1.0};
  p.velocity = p.weights.zeros_like();
  ParamGrads g = p.weights.zeros_like();
  TrainConfig t;
  t.lr = 0.1;
  t.momentum = 0.9;
  t.weight_decay = 0.0;

  const ModelParams before = p;
  sgd_step(p, g, t, 0);
  CHECK(p == before);

  g.branch[0].weight = {1.0};
  sgd_step(p, g, t, 0);
  CHECK(p.weights.branch[0].weight[0] == doctest::Approx(0.9).epsilon(1e-15));
  sgd_step(p, g, t, 1);
  CHECK(p.velocity.branch[0].weight[0] == doctest::Approx(1.9).epsilon(1e-15));
  CHECK(p.weights.branch[0].weight[0] == doctest::Approx(0.71).epsilon(1e-15));

  // Weight decay acts on weights only.
  ModelParams q;
  q.weights.branch.emplace_back(1, 1);
  q.weights.branch[0].weight = {2.0};
  q.weights.branch[0].bias = {2.0};
  q.velocity = q.weights.zeros_like();
  t.weight_decay = 0.5;
  sgd_step(q, q.weights.zeros_like(), t, 0);
  CHECK(q.weights.branch[0].weight[0] == doctest::Approx(2.0 - 0.1 * 1.0));
  CHECK(q.weights.branch[0].bias[0] == 2.0);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig t;
  t.lr = 0.003;
  t.decay_at_iter = 5;
  CHECK(t.lr_at(0) == 0.003);
  CHECK(t.lr_at(4) == 0.003);
  CHECK(t.lr_at(5) == 0.003 / 10.0);
  CHECK(t.lr_at(1000) == 0.003 / 10.0);
}

TEST_CASE("make_batch composition") {
  std::mt19937_64 rng(36);
  const SampleSet s = toy_samples(50, 50, rng);
  TrainConfig t;
  t.batch_size = 128;
  t.positive_fraction = 0.25;
  std::mt19937_64 stream(1);
  auto b = make_batch(s, t, stream);
  REQUIRE(b.targets.size() == 128);
  int fg = 0;
  for (const auto& tg : b.targets) fg += !tg.is_background();
  CHECK(fg == 32);

  t.positive_fraction = 1.0;
  b = make_batch(s, t, stream);
  for (const auto& tg : b.targets) CHECK_FALSE(tg.is_background());

  t.positive_fraction = 0.3;
  t.batch_size = 10;
  b = make_batch(s, t, stream);
  fg = 0;
  for (const auto& tg : b.targets) fg += !tg.is_background();
  CHECK(fg == 3);

  const SampleSet only_bg = toy_samples(0, 5, rng);
  CHECK(throws_code([&] { make_batch(only_bg, t, stream); }, ErrorCode::kEmptyClass));
  const SampleSet only_fg = toy_samples(5, 0, rng);
  CHECK(throws_code([&] { make_batch(only_fg, t, stream); }, ErrorCode::kEmptyClass));
}

TEST_CASE("flipped samples carry mirrored targets") {
  std::mt19937_64 rng(37);
  const SampleSet s = toy_samples(200, 10, rng);
  TrainConfig t;
  t.batch_size = 400;
  t.positive_fraction = 1.0;
  std::mt19937_64 stream(2);
  const auto b = make_batch(s, t, stream);
  int flipped = 0;
  for (std::size_t i = 0; i < b.targets.size(); ++i) {
    const auto& x = b.features[i];
    // The feature encodes its own azimuth, flipped or not.
    const AngleRad from_feature(std::atan2(x[1], x[0]));
    CHECK(circular_distance(from_feature, *b.targets[i].azimuth()) < 1e-12);
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.features[j][0] == x[0] && s.features[j][1] == -x[1] && x[1] != 0.0) {
        ++flipped;
        for (int k : {4, 8, 24}) {
          const auto src = s.targets[j].bin(k);
          const auto dst = b.targets[i].bin(k);
          const AngleRad a = *s.targets[j].azimuth();
          const double step = kTwoPi / k;
          const double offset = std::fmod(a.value() + step / 2, step);
          if (offset > 1e-9 && step - offset > 1e-9) CHECK(dst == mirror_bin(src));
        }
        break;
      }
    }
  }
  CHECK(flipped > 150);
  CHECK(flipped < 250);
}

TEST_CASE("training is deterministic") {
  std::mt19937_64 rng(38);
  const SampleSet s = toy_samples(60, 60, rng);
  NetConfig n;
  n.input_dim = 3;
  n.trunk_widths = {8};
  n.n_classes = 1;
  n.head = HeadSpec::joint_cls(8);
  TrainConfig t;
  t.total_iters = 60;
  t.batch_size = 16;
  t.log_interval = 10;
  t.lr = 0.01;
  const LossSpec loss{LossKind::kJointClassification};
  const auto a = train(s, n, t, loss);
  const auto b = train(s, n, t, loss);
  CHECK(a.params == b.params);
  CHECK(a.log == b.log);
  CHECK(a.log.size() == 7);
  CHECK(a.log.back().iter == 59);

  t.seed = 1;
  CHECK_FALSE(train(s, n, t, loss).params == a.params);
}

TEST_CASE("zero learning rate leaves the monitored loss constant") {
  std::mt19937_64 rng(39);
  const SampleSet s = toy_samples(40, 40, rng);
  NetConfig n;
  n.input_dim = 3;
  n.trunk_widths = {8};
  n.n_classes = 1;
  n.head = HeadSpec::cls_pose(4);
  TrainConfig t;
  t.lr = 0.0;
  t.total_iters = 50;
  t.log_interval = 5;
  const auto r = train(s, n, t, LossSpec{LossKind::kClassification});
  REQUIRE(r.log.size() > 2);
  for (const auto& e : r.log) CHECK(e.loss == r.log.front().loss);
  CHECK(r.params.weights == init_params(n).weights);
}

TEST_CASE("train rejects mismatched losses and reports divergence") {
  std::mt19937_64 rng(40);
  const SampleSet s = toy_samples(40, 40, rng);
  NetConfig n;
  n.input_dim = 3;
  n.trunk_widths = {8};
  n.n_classes = 1;
  n.head = HeadSpec::cls_pose(4);
  TrainConfig t;
  t.total_iters = 10;
  CHECK(throws_code([&] { train(s, n, t, LossSpec{LossKind::kRegression}); }, ErrorCode::kConfigError));

  n.head = HeadSpec::reg_pose(EmbeddingKind::kTwoD);
  t.lr = 1e6;
  t.total_iters = 200;
  bool diverged = false;
  try {
    train(s, n, t, LossSpec{LossKind::kRegression});
  } catch (const DivergenceError& e) {
    diverged = true;
    CHECK(e.iteration() >= 0);
  }
  CHECK(diverged);
}

TEST_CASE("separable two-bin toy converges") {
  // Bin 1 (around 0) when x0 > 0, bin 2 (around pi) otherwise, with a margin.
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SampleSet s;
  s.flip_signs = {1.0, -1.0};
  for (int i = 0; i < 400; ++i) {
    double x0 = u(rng);
    x0 += x0 > 0 ? 0.2 : -0.2;
    s.features.push_back({x0, u(rng)});
    s.targets.push_back(SampleTarget::foreground(1, AngleRad(x0 > 0 ? 0.0 : kPi)));
  }
  NetConfig n;
  n.input_dim = 2;
  n.trunk_widths = {16};
  n.n_classes = 1;
  n.head = HeadSpec::cls_pose(2);
  TrainConfig t;
  t.lr = 0.01;
  t.batch_size = 32;
  t.total_iters = 2000;
  t.decay_at_iter = 2000;
  const LossSpec loss{LossKind::kClassification};
  const auto r = train(s, n, t, loss);
  CHECK(mean_loss(r.params, n, s, loss) < 0.1);
}

TEST_CASE("predict examples") {
  SUBCASE("joint classification with a dominant background") {
    OutputTensor o(OutputLayout::joint_cls(3, 8));
    o.background() = 40.0;
    const auto p = predict_one(o);
    for (const auto& c : p.classes) CHECK(*c.score < 1e-6);
    CHECK(*p.background > 1.0 - 1e-6);
  }
  SUBCASE("one-hot classification logits") {
    OutputTensor o(OutputLayout::cls_pose(2, 24));
    o.pose_row(2)[4] = 1.0;
    const auto p = predict_one(o);
    CHECK(p.classes[1].bin->index() == 5);
    CHECK(p.classes[1].azimuth == bin_center(BinIndex(5, 24)));
    CHECK_FALSE(p.classes[1].score.has_value());
  }
  SUBCASE("3D regression output on the curve") {
    const AngleRad theta(2.345);
    const auto e = encode(theta, EmbeddingKind::kThreeD);
    OutputTensor o(OutputLayout::reg_pose(1, EmbeddingKind::kThreeD), {e[0], e[1], e[2]});
    CHECK(circular_distance(predict_one(o).classes[0].azimuth, theta) < 1e-9);
  }
  SUBCASE("joint regression scores are a softmax") {
    OutputTensor o(OutputLayout::joint_reg(2, EmbeddingKind::kTwoD), {0.0, std::log(2.0), std::log(3.0),
                                                                       1, 0, 0, 1});
    const auto p = predict_one(o);
    CHECK(*p.background == doctest::Approx(1.0 / 6.0));
    CHECK(*p.classes[0].score == doctest::Approx(2.0 / 6.0));
    CHECK(*p.classes[1].score == doctest::Approx(3.0 / 6.0));
    CHECK(p.classes[1].azimuth.value() == doctest::Approx(kPi / 2));
  }
}
