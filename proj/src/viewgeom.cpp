#include "viewbench/viewgeom.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "viewbench/error.hpp"

namespace viewbench {

namespace {

constexpr double kDegenerateNorm = 1e-12;

// Orthogonal basis of the plane holding the 3D curve:
//   F(t) = cos(t) * u + sin(t) * v,  |u| = |v| = sqrt(3/2),  u . v = 0.
// The curve is therefore a circle centred at the origin and the nearest
// point to any e is at angle atan2(<e, v>, <e, u>).
constexpr std::array<double, 3> kPlaneU = {0.5, 1.0, 0.5};
const std::array<double, 3> kPlaneV = {std::sqrt(3.0) / 2.0, 0.0, -std::sqrt(3.0) / 2.0};

}  // namespace

AngleRad::AngleRad(double raw) : value_(0.0) {
  if (!std::isfinite(raw)) {
    throw Error(ErrorCode::kInvalidAngle, "angle is not finite");
  }
  double r = std::fmod(raw, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative value plus 2*pi can round up to 2*pi itself.
  if (r >= kTwoPi) r = 0.0;
  value_ = r;
}

AngleRad AngleRad::from_degrees(double degrees) {
  if (!std::isfinite(degrees)) {
    throw Error(ErrorCode::kInvalidAngle, "angle is not finite");
  }
  return AngleRad(degrees * (kPi / 180.0));
}

double AngleRad::degrees() const noexcept { return value_ * (180.0 / kPi); }

AngleRad canonicalize(double raw) { return AngleRad(raw); }

double circular_distance(AngleRad a, AngleRad b) noexcept {
  const double d = std::fabs(a.value() - b.value());
  return d > kPi ? kTwoPi - d : d;
}

BinIndex::BinIndex(int index, int n_bins) : index_(index), n_bins_(n_bins) {
  if (n_bins < 2) {
    throw Error(ErrorCode::kInvalidBinning,
                "bin count must be at least 2, got " + std::to_string(n_bins));
  }
  if (index < 1 || index > n_bins) {
    throw Error(ErrorCode::kInvalidBinning,
                "bin index " + std::to_string(index) + " outside 1.." + std::to_string(n_bins));
  }
}

BinIndex azimuth_to_bin(AngleRad theta, int n_bins) {
  if (n_bins < 2) {
    throw Error(ErrorCode::kInvalidBinning,
                "bin count must be at least 2, got " + std::to_string(n_bins));
  }
  const double width = kTwoPi / n_bins;
  const auto k = static_cast<long>(std::floor((theta.value() + 0.5 * width) / width));
  return BinIndex(static_cast<int>(k % n_bins) + 1, n_bins);
}

AngleRad bin_center(BinIndex bin) {
  return AngleRad(kTwoPi * bin.zero_based() / bin.n_bins());
}

int bin_distance(BinIndex a, BinIndex b) {
  if (a.n_bins() != b.n_bins()) {
    throw Error(ErrorCode::kBinningMismatch,
                "bins from different binnings: " + std::to_string(a.n_bins()) + " vs " +
                    std::to_string(b.n_bins()));
  }
  const int d = std::abs(a.index() - b.index());
  return std::min(d, a.n_bins() - d);
}

AngleRad flip_azimuth(AngleRad theta) { return AngleRad(kTwoPi - theta.value()); }

BinIndex mirror_bin(BinIndex bin) {
  const int n = bin.n_bins();
  return BinIndex((n - bin.zero_based()) % n + 1, n);
}

PoseEmbedding::PoseEmbedding(EmbeddingKind kind, std::span<const double> coords)
    : kind_(kind) {
  if (coords.size() != static_cast<std::size_t>(embedding_dim(kind))) {
    throw Error(ErrorCode::kLayoutError,
                "embedding expects " + std::to_string(embedding_dim(kind)) +
                    " coordinates, got " + std::to_string(coords.size()));
  }
  for (std::size_t k = 0; k < coords.size(); ++k) coords_[k] = coords[k];
}

PoseEmbedding encode(AngleRad theta, EmbeddingKind kind) {
  const double t = theta.value();
  if (kind == EmbeddingKind::kTwoD) {
    const std::array<double, 2> c = {std::cos(t), std::sin(t)};
    return PoseEmbedding(kind, c);
  }
  const std::array<double, 3> c = {std::cos(t - kPi / 3.0), std::cos(t), std::cos(t + kPi / 3.0)};
  return PoseEmbedding(kind, c);
}

AngleRad decode(std::span<const double> coords, EmbeddingKind kind) {
  if (coords.size() != static_cast<std::size_t>(embedding_dim(kind))) {
    throw Error(ErrorCode::kLayoutError, "embedding has wrong dimension");
  }
  double along_u = 0.0;
  double along_v = 0.0;
  double scale = 1.0;
  if (kind == EmbeddingKind::kTwoD) {
    along_u = coords[0];
    along_v = coords[1];
  } else {
    for (std::size_t k = 0; k < 3; ++k) {
      along_u += coords[k] * kPlaneU[k];
      along_v += coords[k] * kPlaneV[k];
    }
    // <e,u>/|u| is the in-plane coordinate; |u| = sqrt(3/2).
    scale = std::sqrt(1.5);
  }
  if (!std::isfinite(along_u) || !std::isfinite(along_v)) {
    throw Error(ErrorCode::kAmbiguousDecode, "embedding is not finite");
  }
  if (std::hypot(along_u, along_v) / scale < kDegenerateNorm) {
    throw Error(ErrorCode::kAmbiguousDecode, "embedding projects to the curve centre");
  }
  return AngleRad(std::atan2(along_v, along_u));
}

AngleRad decode(const PoseEmbedding& embedding) {
  return decode(embedding.coords(), embedding.kind());
}

}  // namespace viewbench
