#pragma once

#include <vector>

#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Mean absolute difference over pixels and channels.
double l1_loss(const Image& render, const Image& target);

// 10*log10(1/MSE) with peak 1; +inf sentinel on identical images.
double psnr(const Image& render, const Image& target);

// Mean SSIM over pixels and channels; 11x11 Gaussian window (sigma 1.5),
// same-size convolution with edge replication. Requires >= window extent.
double ssim(const Image& a, const Image& b);

struct LossWeights {
  double dssim = 0.2;    // image mix: (1-w)*L1 + w*(1-SSIM)
  double opacity = 0.01;  // on sum of activated opacities
  double scale = 0.01;    // on sum of activated scales (eigenvalue roots of Sigma)
};

struct ImageLoss {
  double total = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;  // 1 - SSIM
  Image d_render;      // d total / d render
};

ImageLoss loss_orig(const Image& render, const Image& target, double lambda_dssim);

struct TotalLoss {
  double total = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double reg_opacity = 0.0;  // weighted term: w.opacity * sum_i o_i
  double reg_scale = 0.0;    // weighted term: w.scale * sum_ij s_ij
  Image d_render;  // image-term gradient; regularizer gradients below
  std::vector<double> d_raw_opacity;
  std::vector<Vec3> d_raw_scale;
};

// total = (1-w.dssim)*L1 + w.dssim*(1-SSIM)
//         + w.opacity * sum_i o_i + w.scale * sum_ij s_ij
TotalLoss loss_total(const Image& render, const Image& target, const GaussianSet& set,
                     const LossWeights& weights);

}  // namespace mcsplat
