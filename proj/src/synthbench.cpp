#include "viewbench/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "viewbench/error.hpp"

namespace viewbench {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 scene_rng(std::uint64_t seed, const std::string& split, int index) {
  std::uint64_t tag = 1469598103934665603ULL;
  for (unsigned char ch : split) tag = (tag ^ ch) * 1099511628211ULL;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

std::string image_name(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return split + "_" + buf;
}

Box clip_unit(Box b) {
  b.x_min = std::clamp(b.x_min, 0.0, 1.0);
  b.y_min = std::clamp(b.y_min, 0.0, 1.0);
  b.x_max = std::clamp(b.x_max, 0.0, 1.0);
  b.y_max = std::clamp(b.y_max, 0.0, 1.0);
  return b;
}

Box jitter_box(const Box& src, double scale, std::mt19937_64& rng) {
  if (scale == 0.0) return src;
  std::uniform_real_distribution<double> u(-scale, scale);
  const double cx = 0.5 * (src.x_min + src.x_max) + u(rng) * src.width();
  const double cy = 0.5 * (src.y_min + src.y_max) + u(rng) * src.height();
  const double w = src.width() * std::exp(u(rng));
  const double h = src.height() * std::exp(u(rng));
  return clip_unit({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
}

Box random_box(double min_size, double max_size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> size(min_size, max_size);
  const double w = size(rng);
  const double h = size(rng);
  std::uniform_real_distribution<double> ux(0.0, 1.0 - w);
  std::uniform_real_distribution<double> uy(0.0, 1.0 - h);
  const double x = ux(rng);
  const double y = uy(rng);
  return {x, y, x + w, y + h};
}

std::vector<double> background_feature(int dim, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> f(static_cast<std::size_t>(dim));
  for (double& v : f) v = n01(rng);
  return f;
}

void validate(const GeneratorConfig& cfg, const std::vector<ClassSpec>& classes) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (classes.empty()) bad("generator needs at least one class");
  if (cfg.n_scenes < 0 || cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects ||
      cfg.proposals_per_gt < 0 || cfg.background_per_scene < 0) {
    bad("generator counts must be nonnegative and min_objects <= max_objects");
  }
  if (!(cfg.jitter_scale >= 0.0)) bad("jitter_scale must be nonnegative");
  if (!(cfg.min_box_size > 0.0 && cfg.min_box_size <= cfg.max_box_size && cfg.max_box_size < 1.0)) {
    bad("box sizes must satisfy 0 < min <= max < 1");
  }
  if (!cfg.class_weights.empty() && cfg.class_weights.size() != classes.size()) {
    bad("class_weights needs one entry per class");
  }
  const int dim = classes.front().feature_dim();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].class_id != static_cast<int>(c) + 1) bad("class ids must be 1..N_c in order");
    if (classes[c].feature_dim() != dim) bad("classes disagree on feature dimension");
  }
}

}  // namespace

ClassSpec make_class_spec(int class_id, int feature_dim, int symmetry_order, double noise_sigma,
                          std::uint64_t seed, int n_harmonics) {
  if (feature_dim < 2 || feature_dim % 2 != 0) {
    throw Error(ErrorCode::kInvalidConfig, "feature_dim must be even and at least 2");
  }
  if (symmetry_order < 1) throw Error(ErrorCode::kInvalidConfig, "symmetry_order must be >= 1");
  if (n_harmonics < 1) throw Error(ErrorCode::kInvalidConfig, "n_harmonics must be >= 1");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "noise_sigma must be >= 0");

  ClassSpec spec;
  spec.class_id = class_id;
  spec.n_harmonics = n_harmonics;
  spec.symmetry_order = symmetry_order;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> coeff(0.0, 1.0 / std::sqrt(static_cast<double>(n_harmonics)));
  const auto half = static_cast<std::size_t>(feature_dim / 2);
  for (int h = 0; h < n_harmonics; ++h) {
    std::vector<double> a(static_cast<std::size_t>(feature_dim), 0.0);
    std::vector<double> b(static_cast<std::size_t>(feature_dim), 0.0);
    for (std::size_t k = 0; k < half; ++k) a[k] = coeff(rng);
    for (std::size_t k = half; k < a.size(); ++k) b[k] = coeff(rng);
    spec.cos_coeffs.push_back(std::move(a));
    spec.sin_coeffs.push_back(std::move(b));
  }
  return spec;
}

std::vector<double> appearance(const ClassSpec& spec, AngleRad theta, std::mt19937_64& rng) {
  const auto dim = static_cast<std::size_t>(spec.feature_dim());
  std::vector<double> f(dim, 0.0);
  for (int h = 0; h < spec.n_harmonics; ++h) {
    const double phase = static_cast<double>((h + 1) * spec.symmetry_order) * theta.value();
    const double c = std::cos(phase);
    const double s = std::sin(phase);
    const auto& a = spec.cos_coeffs[static_cast<std::size_t>(h)];
    const auto& b = spec.sin_coeffs[static_cast<std::size_t>(h)];
    for (std::size_t k = 0; k < dim; ++k) f[k] += a[k] * c + b[k] * s;
  }
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : f) v += noise(rng);
  }
  return f;
}

std::vector<double> feature_flip_signs(int feature_dim) {
  std::vector<double> signs(static_cast<std::size_t>(feature_dim), 1.0);
  for (std::size_t k = signs.size() / 2; k < signs.size(); ++k) signs[k] = -1.0;
  return signs;
}

std::size_t Dataset::sample_count() const {
  std::size_t n = 0;
  for (const Scene& s : scenes) n += s.proposals.size();
  return n;
}

std::size_t Dataset::foreground_count() const {
  std::size_t n = 0;
  for (const Scene& s : scenes) {
    for (const Proposal& p : s.proposals) n += p.matched_gt.has_value() ? 1 : 0;
  }
  return n;
}

Dataset generate(const GeneratorConfig& cfg, const std::vector<ClassSpec>& classes) {
  validate(cfg, classes);
  Dataset ds;
  ds.class_specs = classes;
  ds.feature_dim = classes.front().feature_dim();
  ds.split = cfg.split;
  ds.scenes.reserve(static_cast<std::size_t>(cfg.n_scenes));

  std::vector<double> weights = cfg.class_weights;
  if (weights.empty()) weights.assign(classes.size(), 1.0);

  for (int index = 0; index < cfg.n_scenes; ++index) {
    std::mt19937_64 rng = scene_rng(cfg.seed, cfg.split, index);
    Scene scene;
    scene.image_id = image_name(cfg.split, index);

    std::uniform_int_distribution<int> n_objects(cfg.min_objects, cfg.max_objects);
    std::discrete_distribution<int> pick_class(weights.begin(), weights.end());
    std::uniform_real_distribution<double> azimuth(0.0, kTwoPi);
    const int n = n_objects(rng);
    for (int k = 0; k < n; ++k) {
      GroundTruthRecord g;
      g.image_id = scene.image_id;
      g.class_id = pick_class(rng) + 1;
      g.box = random_box(cfg.min_box_size, cfg.max_box_size, rng);
      g.azimuth = AngleRad(azimuth(rng));
      scene.gt.push_back(std::move(g));
    }

    for (std::size_t gi = 0; gi < scene.gt.size(); ++gi) {
      const GroundTruthRecord& g = scene.gt[gi];
      const ClassSpec& spec = classes[static_cast<std::size_t>(g.class_id - 1)];
      for (int p = 0; p < cfg.proposals_per_gt; ++p) {
        Proposal prop;
        int attempt = 0;
        for (;; ++attempt) {
          if (attempt >= cfg.max_retries) {
            throw Error(ErrorCode::kGeneration, "could not jitter a foreground proposal in " +
                                                    scene.image_id);
          }
          prop.box = jitter_box(g.box, cfg.jitter_scale, rng);
          if (!prop.box.valid()) continue;
          prop.iou = iou(prop.box, g.box);
          if (prop.iou >= cfg.fg_iou) break;
        }
        prop.matched_gt = gi;
        prop.noise_seed = rng();
        std::mt19937_64 noise(prop.noise_seed);
        prop.feature = appearance(spec, g.azimuth, noise);
        scene.proposals.push_back(std::move(prop));
      }
    }

    for (int p = 0; p < cfg.background_per_scene; ++p) {
      Proposal prop;
      int attempt = 0;
      for (;; ++attempt) {
        if (attempt >= cfg.max_retries) {
          throw Error(ErrorCode::kGeneration, "could not place a background proposal in " +
                                                  scene.image_id);
        }
        prop.box = random_box(cfg.min_box_size, cfg.max_box_size, rng);
        double worst = 0.0;
        for (const auto& g : scene.gt) worst = std::max(worst, iou(prop.box, g.box));
        prop.iou = worst;
        if (worst < cfg.bg_iou) break;
      }
      prop.noise_seed = rng();
      prop.feature = background_feature(ds.feature_dim, prop.noise_seed);
      scene.proposals.push_back(std::move(prop));
    }
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

SampleSet to_samples(const Dataset& dataset) {
  SampleSet set;
  set.flip_signs = feature_flip_signs(dataset.feature_dim);
  set.features.reserve(dataset.sample_count());
  set.targets.reserve(dataset.sample_count());
  for (const Scene& s : dataset.scenes) {
    for (const Proposal& p : s.proposals) {
      set.features.push_back(p.feature);
      if (p.matched_gt) {
        const GroundTruthRecord& g = s.gt[*p.matched_gt];
        set.targets.push_back(SampleTarget::foreground(g.class_id, g.azimuth));
      } else {
        set.targets.push_back(SampleTarget::background());
      }
    }
  }
  return set;
}

FeatureBatch proposal_features(const Dataset& dataset) {
  FeatureBatch features;
  features.reserve(dataset.sample_count());
  for (const Scene& s : dataset.scenes) {
    for (const Proposal& p : s.proposals) features.push_back(p.feature);
  }
  return features;
}

std::vector<GroundTruthRecord> ground_truth(const Dataset& dataset) {
  std::vector<GroundTruthRecord> gts;
  for (const Scene& s : dataset.scenes) gts.insert(gts.end(), s.gt.begin(), s.gt.end());
  return gts;
}

EvalReport oracle_eval(const Dataset& dataset, std::span<const int> bins) {
  const auto gts = ground_truth(dataset);
  if (gts.empty()) throw Error(ErrorCode::kInvalidParameter, "oracle evaluation of an empty dataset");
  std::vector<DetectionRecord> dets;
  dets.reserve(gts.size());
  for (const auto& g : gts) dets.push_back({g.image_id, g.class_id, g.box, 1.0, g.azimuth});
  EvalOptions options;
  options.bins.assign(bins.begin(), bins.end());
  return evaluate(gts, dets, options);
}

BenchmarkSuite default_suite(const SuiteOptions& options) {
  BenchmarkSuite suite;
  for (std::size_t c = 0; c < options.symmetry_orders.size(); ++c) {
    suite.classes.push_back(make_class_spec(static_cast<int>(c) + 1, options.feature_dim,
                                            options.symmetry_orders[c], options.noise_sigma,
                                            splitmix64(options.seed * 1000 + c + 1)));
  }
  suite.train.seed = splitmix64(options.seed ^ 0x7261696eULL);
  suite.train.n_scenes = options.train_scenes;
  suite.train.split = "train";
  suite.test = suite.train;
  suite.test.seed = splitmix64(options.seed ^ 0x74657374ULL);
  suite.test.n_scenes = options.test_scenes;
  suite.test.split = "test";
  suite.test.proposals_per_gt = 1;
  return suite;
}

}  // namespace viewbench
