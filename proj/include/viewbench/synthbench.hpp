#pragma once

// Seeded synthetic detection + viewpoint benchmark.
//
// Scenes live in the unit square. Each object's appearance is a truncated
// Fourier series in m * azimuth, so a class with symmetry order m cannot be
// told apart from its copies rotated by 2*pi/m. The even (cosine) harmonics
// occupy the first half of the feature vector and the odd (sine) harmonics
// the second half; mirroring an object therefore negates the second half.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "viewbench/evalmetrics.hpp"
#include "viewbench/tinynet.hpp"

namespace viewbench {

struct ClassSpec {
  int class_id = 1;
  int n_harmonics = 3;
  int symmetry_order = 1;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  // [harmonic][feature]; cosine terms are zero on the odd half and sine
  // terms are zero on the even half.
  std::vector<std::vector<double>> cos_coeffs;
  std::vector<std::vector<double>> sin_coeffs;

  int feature_dim() const noexcept {
    return cos_coeffs.empty() ? 0 : static_cast<int>(cos_coeffs.front().size());
  }
};

/// Draws the Fourier coefficients deterministically from `seed`.
ClassSpec make_class_spec(int class_id, int feature_dim, int symmetry_order, double noise_sigma,
                          std::uint64_t seed, int n_harmonics = 3);

/// g(theta) plus N(0, noise_sigma^2) noise per coordinate drawn from `rng`.
std::vector<double> appearance(const ClassSpec& spec, AngleRad theta, std::mt19937_64& rng);

/// Per-coordinate multipliers mapping a feature onto its mirror image.
std::vector<double> feature_flip_signs(int feature_dim);

struct Proposal {
  Box box;
  std::vector<double> feature;
  std::optional<std::size_t> matched_gt;  // index into Scene::gt
  double iou = 0.0;                       // with the matched gt, else max over all gt
  std::uint64_t noise_seed = 0;
};

struct Scene {
  std::string image_id;
  std::vector<GroundTruthRecord> gt;
  std::vector<Proposal> proposals;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  int n_scenes = 0;
  std::string split = "train";
  int min_objects = 1;
  int max_objects = 3;
  int proposals_per_gt = 4;
  int background_per_scene = 8;
  double jitter_scale = 0.1;
  double min_box_size = 0.15;
  double max_box_size = 0.4;
  double fg_iou = 0.5;
  double bg_iou = 0.3;
  int max_retries = 1000;
  // Relative class frequencies; empty means balanced.
  std::vector<double> class_weights;
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<ClassSpec> class_specs;
  int feature_dim = 0;
  std::string split;

  std::size_t sample_count() const;
  std::size_t foreground_count() const;
};

Dataset generate(const GeneratorConfig& config, const std::vector<ClassSpec>& classes);

/// Every proposal as a training sample (matched proposals carry their
/// ground truth's class and azimuth, the rest are background).
SampleSet to_samples(const Dataset& dataset);

/// All proposal features in scene order.
FeatureBatch proposal_features(const Dataset& dataset);

std::vector<GroundTruthRecord> ground_truth(const Dataset& dataset);

/// Ground truth replayed as perfect detections through evaluate().
EvalReport oracle_eval(const Dataset& dataset, std::span<const int> bins);

/// The default four-class suite: two asymmetric classes, one 2-fold and one
/// 4-fold symmetric class, 32-dimensional features, 200 train / 100 test
/// scenes.
struct BenchmarkSuite {
  std::vector<ClassSpec> classes;
  GeneratorConfig train;
  GeneratorConfig test;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  int feature_dim = 32;
  int train_scenes = 200;
  int test_scenes = 100;
  std::vector<int> symmetry_orders = {1, 1, 2, 4};
  double noise_sigma = 0.1;
};

BenchmarkSuite default_suite(const SuiteOptions& options = {});

}  // namespace viewbench
