#pragma once

#include <cstdint>
#include <vector>

#include "mcsplat/types.hpp"

namespace mcsplat {

// Liveness boundary on activated opacity; relocation re-seeds at a floor
// strictly above it so a relocated Gaussian is never born dead.
inline constexpr double kLiveThreshold = 0.005;
inline constexpr double kOpacityFloor = kLiveThreshold + 1e-4;
inline constexpr double kOpacityCeil = 1.0 - 1e-7;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) {
  MCSPLAT_CHECK(p > 0.0 && p < 1.0, "logit: argument must be in (0,1)");
  return std::log(p / (1.0 - p));
}

// Raw (unconstrained) storage; activations applied at use:
//   opacity = logistic(raw_opacity)   in (0,1)
//   scale   = exp(raw_scale)          > 0 per axis
// Quaternions are stored unnormalized (w,x,y,z) and normalized at use.
//
// Structure-of-arrays with preallocated capacity: relocation and growth are
// index-level copies, growth extends `count` into the unused tail. Slots in
// [count, capacity) are never rendered or optimized.
struct GaussianSet {
  int count = 0;
  int sh_degree = 0;
  bool planar = false;  // identity2D scenes: position z pinned to 0

  std::vector<Vec3> positions;
  std::vector<Vec3> raw_scales;
  std::vector<Vec4> rotations;  // (w,x,y,z)
  std::vector<double> raw_opacities;
  std::vector<double> colors;  // [i][channel][coeff], coeffs_per_channel() each

  GaussianSet() = default;
  GaussianSet(int capacity, int degree);

  int capacity() const { return static_cast<int>(positions.size()); }
  int coeffs_per_channel() const { return (sh_degree + 1) * (sh_degree + 1); }

  double opacity(int i) const { return logistic(raw_opacities[i]); }
  Vec3 scale(int i) const { return raw_scales[i].array().exp(); }

  double* color_ptr(int i) { return colors.data() + static_cast<size_t>(i) * 3 * coeffs_per_channel(); }
  const double* color_ptr(int i) const {
    return colors.data() + static_cast<size_t>(i) * 3 * coeffs_per_channel();
  }
};

// Gradient buffers mirror the raw parameter arrays (chain rule already applied
// through the activations). Sized to capacity so shapes stay aligned with
// optimizer moments across growth.
struct Gradients {
  std::vector<Vec3> positions;
  std::vector<Vec3> raw_scales;
  std::vector<Vec4> rotations;
  std::vector<double> raw_opacities;
  std::vector<double> colors;

  Gradients() = default;
  explicit Gradients(const GaussianSet& set);
  void set_zero();
  bool shapes_match(const GaussianSet& set) const;
};

Mat3 rotation_matrix(const Vec4& quat_unnormalized);

// Sigma = R * diag(exp(raw_scale))^2 * R^T. Symmetric PSD; eigenvalues are
// exactly the squared activated scales.
Mat3 assemble_covariance(const Vec3& raw_scale, const Vec4& quat);

struct LivenessMask {
  std::vector<uint8_t> live;  // size == set.count
  int live_count = 0;
  int dead_count = 0;
};

LivenessMask classify_liveness(const GaussianSet& set, double threshold = kLiveThreshold);

}  // namespace mcsplat
