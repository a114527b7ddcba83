#pragma once

// Central finite-difference verification of every loss gradient and of
// end-to-end backpropagation through a small network.

#include <cstdint>
#include <string>
#include <vector>

#include "viewbench/tinynet.hpp"

namespace viewbench {

struct GradCheckCase {
  std::string name;
  int instances = 0;
  std::size_t checked = 0;
  // Network components whose +/- epsilon probes straddle a rectifier kink.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_rel_error < tolerance; }
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  double epsilon = 1e-5;
  double loss_tolerance = 1e-5;
  double network_tolerance = 1e-4;
  bool losses = true;
  bool end_to_end = true;
  std::vector<LossKind> kinds = {LossKind::kRegression, LossKind::kClassification,
                                 LossKind::kGeometricClassification, LossKind::kJointRegression,
                                 LossKind::kJointClassification};
  // Negative control: perturbs one analytic component so the check must fail.
  bool corrupt = false;
};

/// |a - n| / max(|a|, |n|, 1e-3). The floor keeps components whose true
/// value is near zero from turning round-off into huge ratios.
double relative_error(double analytic, double numeric) noexcept;

std::vector<GradCheckCase> run_gradcheck(const GradCheckOptions& options = {});

std::string loss_name(LossKind kind);

}  // namespace viewbench
