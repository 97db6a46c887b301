#pragma once

#include <cstdint>
#include <vector>

#include "mcsplat/camera.hpp"
#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

inline constexpr double kSH0 = 0.28209479177387814;  // Y_0^0; DC color = 0.5 + kSH0*c0
inline constexpr double kAlphaClamp = 0.999;       // per-sample alpha ceiling
inline constexpr double kAlphaSkip = 1.0 / 255.0;  // below this a sample contributes nothing
inline constexpr double kTransmittanceMin = 1e-4;  // per-pixel early termination
inline constexpr double kBlurFloor = 0.3;          // px^2, pinhole3D diagonal floor
inline constexpr int kTileSize = 16;

struct Projected2DGaussian {
  int source = -1;  // index into the originating GaussianSet
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  double depth = 0.0;
  double opacity = 0.0;       // activated
  Vec3 color = Vec3::Zero();  // view-evaluated RGB, clamped at 0
  uint8_t color_clamped = 0;  // per-channel clamp bitmask, gates color gradients
  Vec3 view_dir = Vec3::UnitZ();
};

// Evaluate per-channel color from SH coefficients ([channel][coeff] layout,
// (degree+1)^2 per channel) at a view direction: 0.5 offset, clamped at 0.
// clamped_out, when given, receives the per-channel clamp bitmask.
Vec3 eval_color(const double* coeffs, int degree, const Vec3& dir, uint8_t* clamped_out = nullptr);

// Projects stored Gaussians; culls pinhole Gaussians with depth <= near.
// Pinhole covariances get the +kBlurFloor diagonal; identity2D is an exact
// pass-through of the leading 2x2 block.
std::vector<Projected2DGaussian> project(const GaussianSet& set, const Camera& cam);

// Strict composite order: increasing depth, ties by ascending source index.
void sort_by_depth(std::vector<Projected2DGaussian>& projected);

// alpha = min(opacity * exp(-0.5 * d^T cov^-1 d), kAlphaClamp); exactly 0
// below kAlphaSkip. Throws on singular covariance.
double alpha_at(const Projected2DGaussian& g, const Vec2& x);

// Inclusive pixel bounds of the support where alpha can reach kAlphaSkip
// (Mahalanobis radius^2 = 2*ln(opacity/kAlphaSkip)). Pixels outside would be
// skipped by alpha_at anyway, so the cutoff adds no approximation. Returns
// false when the support misses the image entirely.
bool pixel_bounds(const Projected2DGaussian& g, int width, int height, int* x0, int* x1, int* y0,
                  int* y1);

struct RenderOutput {
  int width = 0;
  int height = 0;
  Image image;
  std::vector<double> transmittance;  // per pixel, after early termination
  std::vector<int> contrib_count;     // tile-list entries walked per pixel
  std::vector<Projected2DGaussian> projected;  // composite order
  std::vector<std::vector<int>> tile_lists;    // per tile: indices into projected
  int tiles_x = 0;
  int tiles_y = 0;

  const std::vector<int>& tile_list_for_pixel(int px, int py) const {
    return tile_lists[(py / kTileSize) * tiles_x + px / kTileSize];
  }
};

// Tiled front-to-back compositor. Input must already be in composite order
// (throws on unsorted input). Early termination composites the crossing
// contributor, then stops, so the unrendered tail is bounded by
// kTransmittanceMin.
RenderOutput composite(std::vector<Projected2DGaussian> projected, const Camera& cam);

// Untiled reference walking every projected Gaussian per pixel with the same
// bounds test and arithmetic; bitwise-identical to composite() by design.
Image composite_sequential(const std::vector<Projected2DGaussian>& projected, const Camera& cam);

// project + eval_color + sort + composite.
RenderOutput render(const GaussianSet& set, const Camera& cam);

// Exact gradients of sum(dL_dC .* C) w.r.t. raw parameters, replaying the
// forward walk per pixel (same skip, clamp, and termination decisions).
Gradients render_backward(const GaussianSet& set, const Camera& cam, const RenderOutput& out,
                          const Image& dL_dC);

}  // namespace mcsplat
