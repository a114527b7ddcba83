#include "viewbench/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "viewbench/error.hpp"

namespace viewbench {

std::string method_name(PoseMethod method) {
  switch (method) {
    case PoseMethod::kRegression2D: return "regression_2d";
    case PoseMethod::kRegression3D: return "regression_3d";
    case PoseMethod::kClassification: return "classification";
    case PoseMethod::kGeometricClassification: return "geometric_classification";
    case PoseMethod::kJointRegression2D: return "joint_regression_2d";
    case PoseMethod::kJointRegression3D: return "joint_regression_3d";
    case PoseMethod::kJointClassification: return "joint_classification";
  }
  return "unknown";
}

bool method_is_joint(PoseMethod method) noexcept {
  return method == PoseMethod::kJointRegression2D || method == PoseMethod::kJointRegression3D ||
         method == PoseMethod::kJointClassification;
}

std::vector<DetectionRecord> make_detections(const Dataset& dataset,
                                             std::span<const Prediction> pose,
                                             std::span<const Prediction> scorer,
                                             double score_floor) {
  if (pose.size() != dataset.sample_count() ||
      (!scorer.empty() && scorer.size() != pose.size())) {
    throw Error(ErrorCode::kLayoutError, "predictions do not match the dataset proposals");
  }
  std::vector<DetectionRecord> dets;
  std::size_t i = 0;
  for (const Scene& scene : dataset.scenes) {
    for (const Proposal& prop : scene.proposals) {
      const Prediction& p = pose[i];
      const Prediction& s = scorer.empty() ? pose[i] : scorer[i];
      ++i;
      if (s.classes.size() != p.classes.size()) {
        throw Error(ErrorCode::kLayoutError, "scorer and pose model disagree on class count");
      }
      for (std::size_t c = 0; c < p.classes.size(); ++c) {
        if (!s.classes[c].score) {
          throw Error(ErrorCode::kLayoutError, "pose-only predictions need a separate scorer");
        }
        const double score = *s.classes[c].score;
        if (score < score_floor) continue;
        dets.push_back({scene.image_id, static_cast<int>(c) + 1, prop.box, score,
                        p.classes[c].azimuth});
      }
    }
  }
  return dets;
}

BenchmarkRun::BenchmarkRun(BenchmarkOptions options) : options_(std::move(options)) {
  const BenchmarkSuite suite = default_suite(options_.suite);
  train_ = generate(suite.train, suite.classes);
  test_ = generate(suite.test, suite.classes);
  train_samples_ = to_samples(train_);
}

NetConfig BenchmarkRun::net_config(PoseMethod method) const {
  NetConfig cfg;
  cfg.input_dim = train_.feature_dim;
  cfg.trunk_widths = options_.trunk_widths;
  cfg.split_depth = options_.split_depth;
  cfg.n_classes = static_cast<int>(train_.class_specs.size());
  cfg.seed = options_.suite.seed * 31 + static_cast<std::uint64_t>(method) + 1;
  switch (method) {
    case PoseMethod::kRegression2D: cfg.head = HeadSpec::reg_pose(EmbeddingKind::kTwoD); break;
    case PoseMethod::kRegression3D: cfg.head = HeadSpec::reg_pose(EmbeddingKind::kThreeD); break;
    case PoseMethod::kClassification:
    case PoseMethod::kGeometricClassification: cfg.head = HeadSpec::cls_pose(options_.n_bins); break;
    case PoseMethod::kJointRegression2D: cfg.head = HeadSpec::joint_reg(EmbeddingKind::kTwoD); break;
    case PoseMethod::kJointRegression3D: cfg.head = HeadSpec::joint_reg(EmbeddingKind::kThreeD); break;
    case PoseMethod::kJointClassification: cfg.head = HeadSpec::joint_cls(options_.n_bins); break;
  }
  return cfg;
}

LossSpec BenchmarkRun::loss_spec(PoseMethod method) const {
  LossSpec spec;
  switch (method) {
    case PoseMethod::kRegression2D:
    case PoseMethod::kRegression3D: spec.kind = LossKind::kRegression; break;
    case PoseMethod::kClassification: spec.kind = LossKind::kClassification; break;
    case PoseMethod::kGeometricClassification: spec.kind = LossKind::kGeometricClassification; break;
    case PoseMethod::kJointRegression2D:
    case PoseMethod::kJointRegression3D: spec.kind = LossKind::kJointRegression; break;
    case PoseMethod::kJointClassification: spec.kind = LossKind::kJointClassification; break;
  }
  return spec;
}

const TrainedModel& BenchmarkRun::model(PoseMethod method) {
  const int key = static_cast<int>(method);
  if (auto it = models_.find(key); it != models_.end()) return it->second;
  TrainedModel m;
  m.net = net_config(method);
  m.loss = loss_spec(method);
  TrainConfig tcfg = options_.train;
  tcfg.seed = options_.suite.seed * 977 + static_cast<std::uint64_t>(method) + 5;
  m.result = train(train_samples_, m.net, tcfg, m.loss);
  return models_.emplace(key, std::move(m)).first->second;
}

const TrainedModel& BenchmarkRun::detector() {
  if (detector_) return *detector_;
  TrainedModel m;
  m.net = net_config(PoseMethod::kJointRegression2D);
  m.net.seed = options_.suite.seed * 31 + 101;
  m.loss.kind = LossKind::kJointRegression;
  m.loss.lambda = 0.0;
  TrainConfig tcfg = options_.train;
  tcfg.seed = options_.suite.seed * 977 + 211;
  m.result = train(train_samples_, m.net, tcfg, m.loss);
  detector_ = std::move(m);
  return *detector_;
}

std::vector<DetectionRecord> BenchmarkRun::detections(PoseMethod method, bool use_shared_detector) {
  const FeatureBatch features = proposal_features(test_);
  const TrainedModel& m = model(method);
  const auto pose = predict(m.result.params, m.net, features);
  if (method_is_joint(method) && !use_shared_detector) {
    return make_detections(test_, pose, {}, options_.score_floor);
  }
  const TrainedModel& det = detector();
  const auto scores = predict(det.result.params, det.net, features);
  return make_detections(test_, pose, scores, options_.score_floor);
}

EvalReport BenchmarkRun::evaluate_method(PoseMethod method, bool use_shared_detector) {
  const auto gts = ground_truth(test_);
  const auto dets = detections(method, use_shared_detector);
  return evaluate(gts, dets, options_.eval);
}

SymmetryProbeResult symmetry_probe(const SymmetryProbeOptions& options) {
  const ClassSpec spec = make_class_spec(1, options.feature_dim, 2, options.noise_sigma,
                                         options.seed * 7 + 3);
  GeneratorConfig gen;
  gen.seed = options.seed;
  gen.n_scenes = options.train_scenes;
  gen.split = "train";
  gen.background_per_scene = 0;
  const Dataset train_set = generate(gen, {spec});
  gen.split = "test";
  gen.n_scenes = options.test_scenes;
  gen.proposals_per_gt = 1;
  const Dataset test_set = generate(gen, {spec});
  const SampleSet train_samples = to_samples(train_set);
  const SampleSet test_samples = to_samples(test_set);

  auto make_net = [&](HeadSpec head, std::uint64_t salt) {
    NetConfig cfg;
    cfg.input_dim = options.feature_dim;
    cfg.trunk_widths = options.trunk_widths;
    cfg.n_classes = 1;
    cfg.head = head;
    cfg.seed = options.seed * 13 + salt;
    return cfg;
  };
  TrainConfig tcfg = options.train;

  SymmetryProbeResult result;
  result.n_test = test_samples.size();
  const int n_bins = options.n_bins;
  auto accuracy = [&](const std::vector<Prediction>& preds) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      hits += azimuth_to_bin(preds[i].classes[0].azimuth, n_bins) == test_samples.targets[i].bin(n_bins);
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
  };

  LossSpec reg;
  reg.kind = LossKind::kRegression;
  for (EmbeddingKind emb : {EmbeddingKind::kTwoD, EmbeddingKind::kThreeD}) {
    const NetConfig net = make_net(HeadSpec::reg_pose(emb), embedding_dim(emb));
    tcfg.seed = options.seed * 101 + static_cast<std::uint64_t>(embedding_dim(emb));
    const TrainResult tr = train(train_samples, net, tcfg, reg);
    const double acc = accuracy(predict(tr.params, net, test_samples.features));
    (emb == EmbeddingKind::kTwoD ? result.regression2d_accuracy : result.regression3d_accuracy) = acc;
  }

  LossSpec cls;
  cls.kind = LossKind::kClassification;
  const NetConfig net = make_net(HeadSpec::cls_pose(n_bins), 7);
  tcfg.seed = options.seed * 101 + 7;
  const TrainResult tr = train(train_samples, net, tcfg, cls);
  const auto outputs = forward(tr.params, net, test_samples.features);
  std::vector<Prediction> preds;
  double mass = 0.0;
  std::size_t top2 = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    preds.push_back(predict_one(outputs[i]));
    const BinIndex truth = test_samples.targets[i].bin(n_bins);
    const BinIndex anti = azimuth_to_bin(*test_samples.targets[i].azimuth() + AngleRad(kPi), n_bins);
    const auto probs = pose_probabilities(outputs[i], 1);
    mass += probs[static_cast<std::size_t>(truth.zero_based())] +
            probs[static_cast<std::size_t>(anti.zero_based())];
    std::vector<std::size_t> order(probs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::partial_sort(order.begin(), order.begin() + 2, order.end(),
                      [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    const auto t = static_cast<std::size_t>(truth.zero_based());
    const auto a = static_cast<std::size_t>(anti.zero_based());
    top2 += (order[0] == t && order[1] == a) || (order[0] == a && order[1] == t);
  }
  result.classification_accuracy = accuracy(preds);
  result.classification_antipodal_mass = mass / static_cast<double>(outputs.size());
  result.classification_top2_hit = static_cast<double>(top2) / static_cast<double>(outputs.size());
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace viewbench
