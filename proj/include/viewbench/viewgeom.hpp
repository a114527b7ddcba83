#pragma once

// Azimuth arithmetic, viewpoint bins and the trigonometric pose codecs.
//
// All angles are radians internally. Bins are 1-based and centered: bin 1
// covers [-pi/N, pi/N), bin v is centered at 2*pi*(v-1)/N.

#include <array>
#include <numbers>
#include <span>

namespace viewbench {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Azimuth in [0, 2*pi). Every constructor canonicalizes.
class AngleRad {
 public:
  constexpr AngleRad() = default;

  /// Throws Error(kInvalidAngle) for non-finite input.
  explicit AngleRad(double raw);

  static AngleRad from_degrees(double degrees);

  double value() const noexcept { return value_; }
  double degrees() const noexcept;

  AngleRad operator+(AngleRad rhs) const { return AngleRad(value_ + rhs.value_); }
  AngleRad operator-(AngleRad rhs) const { return AngleRad(value_ - rhs.value_); }
  AngleRad operator-() const { return AngleRad(-value_); }

  friend bool operator==(AngleRad, AngleRad) = default;

 private:
  double value_ = 0.0;
};

AngleRad canonicalize(double raw);

/// Shortest angular separation, in [0, pi].
double circular_distance(AngleRad a, AngleRad b) noexcept;

class BinIndex {
 public:
  /// 1 <= index <= n_bins, n_bins >= 2; throws Error(kInvalidBinning).
  BinIndex(int index, int n_bins);

  int index() const noexcept { return index_; }
  int n_bins() const noexcept { return n_bins_; }
  int zero_based() const noexcept { return index_ - 1; }

  friend bool operator==(BinIndex, BinIndex) = default;

 private:
  int index_;
  int n_bins_;
};

BinIndex azimuth_to_bin(AngleRad theta, int n_bins);

/// The azimuth at the middle of the bin.
AngleRad bin_center(BinIndex bin);

/// Circular distance in bin steps, in [0, floor(N/2)].
int bin_distance(BinIndex a, BinIndex b);

/// Azimuth of the horizontally mirrored object: 2*pi - theta.
AngleRad flip_azimuth(AngleRad theta);

/// Bin containing the mirrored azimuth of any angle inside `bin`
/// (exact for angles away from bin edges).
BinIndex mirror_bin(BinIndex bin);

enum class EmbeddingKind { kTwoD, kThreeD };

constexpr int embedding_dim(EmbeddingKind kind) noexcept {
  return kind == EmbeddingKind::kTwoD ? 2 : 3;
}

/// A point in the regression target space: [cos, sin] or the three shifted
/// cosines.
class PoseEmbedding {
 public:
  PoseEmbedding(EmbeddingKind kind, std::span<const double> coords);

  EmbeddingKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return embedding_dim(kind_); }
  std::span<const double> coords() const noexcept {
    return {coords_.data(), static_cast<std::size_t>(dim())};
  }
  double operator[](int k) const { return coords_[static_cast<std::size_t>(k)]; }

 private:
  EmbeddingKind kind_;
  std::array<double, 3> coords_{};
};

PoseEmbedding encode(AngleRad theta, EmbeddingKind kind);

/// Closest point on the embedding curve. Throws Error(kAmbiguousDecode) when
/// the in-plane component is below 1e-12.
AngleRad decode(const PoseEmbedding& embedding);
AngleRad decode(std::span<const double> coords, EmbeddingKind kind);

}  // namespace viewbench
