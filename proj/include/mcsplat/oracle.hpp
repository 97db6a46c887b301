#pragma once

#include <functional>
#include <utility>

#include "mcsplat/camera.hpp"
#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/types.hpp"

// Brute-force references used by tests and the `verify` command. Everything
// here is implemented independently of the engine (own projection, own
// compositing loop, own relocation series) in extended precision, so oracle
// error is negligible relative to the tolerances it arbitrates.
namespace mcsplat::oracle {

// Per-pixel back-to-front-free evaluation of the blending sum over every
// stored Gaussian in (depth, index) order: no tiles, no footprint cutoff, no
// early termination. The per-sample alpha definition (skip below 1/255,
// clamp at 0.999) is part of the blending contract and is applied here too.
Image naive_composite(const GaussianSet& set, const Camera& cam);

// Direct windowed SSIM: per-pixel 11x11 Gaussian-weighted moments computed
// by explicit double loops with edge replication, averaged over channels.
double windowed_ssim(const Image& a, const Image& b);

using LossFn = std::function<double(const GaussianSet&)>;

// Central differences (L(p+h) - L(p-h)) / 2h over every raw scalar parameter
// of the first set.count Gaussians.
Gradients finite_diff_grad(const GaussianSet& set, const LossFn& loss, double h);

// Closed form of the 1D slice integral of one rendered Gaussian:
// integral of o*exp(-x^2/(2 var)) = o*sqrt(2*pi*var).
double gauss_slice_integral(double opacity, double variance);

// Trapezoid integrals over +-8 sigma (1e5 intervals) of the 1D profile
// before (one Gaussian: o, var) and after (n identical copies: o_copy,
// var_copy, composed as 1 - (1 - o_copy*g)^n).
std::pair<double, double> slice_integral(double opacity, double variance, int n_copies,
                                         double o_copy, double var_copy);

// Opacity and variance factor of an N-way relocation, from the preserved
// blending series (factorial-table binomials in long double).
double relocation_opacity(double o_old, int n);
double relocation_var_factor(double o_old, int n);

struct CloningRmse {
  double naive = 0.0;             // copy opacity and shape unchanged
  double center_corrected = 0.0;  // corrected opacity, unchanged shape
  double ours = 0.0;              // corrected opacity and variance factor
};

// RMSE of the three N-copy cloning strategies' 1D profiles against the
// original single-Gaussian profile on a dense grid.
CloningRmse compare_cloning(double o_old, double variance, int n);

// Canonical Adam update, the independent reference for the training step's
// reduction when noise, regularizers, relocation, and growth are all off.
void adam_step(double* params, const double* grads, double* m, double* v, int count, long t,
               double lr, double beta1, double beta2, double eps);

}  // namespace mcsplat::oracle
