#include "mcsplat/optimizer.hpp"

#include <cmath>
#include <string>

namespace mcsplat {

double LrSchedule::position_rate(long step) const {
  MCSPLAT_CHECK(position_initial > 0 && position_final > 0, "LrSchedule: rates must be positive");
  if (total_steps <= 0) return position_initial * position_scale;
  if (step < 0) step = 0;
  if (step > total_steps) step = total_steps;
  const double u = static_cast<double>(step) / static_cast<double>(total_steps);
  return position_initial * std::pow(position_final / position_initial, u) * position_scale;
}

OptimizerState OptimizerState::for_set(const GaussianSet& set) {
  OptimizerState s;
  const size_t n = set.capacity();
  s.positions.m.assign(n * 3, 0.0);
  s.positions.v.assign(n * 3, 0.0);
  s.scales.m.assign(n * 3, 0.0);
  s.scales.v.assign(n * 3, 0.0);
  s.rotations.m.assign(n * 4, 0.0);
  s.rotations.v.assign(n * 4, 0.0);
  s.opacities.m.assign(n, 0.0);
  s.opacities.v.assign(n, 0.0);
  s.colors.m.assign(set.colors.size(), 0.0);
  s.colors.v.assign(set.colors.size(), 0.0);
  return s;
}

bool OptimizerState::shapes_match(const GaussianSet& set) const {
  const size_t n = set.capacity();
  return positions.m.size() == n * 3 && scales.m.size() == n * 3 && rotations.m.size() == n * 4 &&
         opacities.m.size() == n && colors.m.size() == set.colors.size() &&
         positions.v.size() == positions.m.size() && scales.v.size() == scales.m.size() &&
         rotations.v.size() == rotations.m.size() && opacities.v.size() == opacities.m.size() &&
         colors.v.size() == colors.m.size();
}

void OptimizerState::reset_moments(int index, const GaussianSet& set) {
  MCSPLAT_CHECK(index >= 0 && index < set.capacity(), "reset_moments: index out of range");
  auto zero_row = [index](AdamGroup& g, int dim) {
    for (int d = 0; d < dim; ++d) {
      g.m[static_cast<size_t>(index) * dim + d] = 0.0;
      g.v[static_cast<size_t>(index) * dim + d] = 0.0;
    }
  };
  zero_row(positions, 3);
  zero_row(scales, 3);
  zero_row(rotations, 4);
  zero_row(opacities, 1);
  zero_row(colors, 3 * set.coeffs_per_channel());
}

double noise_gate(double opacity, double k, double t) {
  return logistic(-k * (opacity - t));
}

std::vector<Vec3> position_noise(const GaussianSet& set, const NoiseParams& noise, double lr_now,
                                 SubStream& rng) {
  std::vector<Vec3> eps(set.count);
  for (int i = 0; i < set.count; ++i) {
    const Vec3 eta = rng.normal3();
    const double o = set.opacity(i);
    const double gate = noise.printed_sign ? logistic(-noise.k * (noise.t - o))
                                           : noise_gate(o, noise.k, noise.t);
    const Mat3 sigma = assemble_covariance(set.raw_scales[i], set.rotations[i]);
    eps[i] = lr_now * gate * (sigma * eta);
    if (set.planar) eps[i][2] = 0.0;
  }
  return eps;
}

namespace {

// Canonical textbook order; the independent oracle mirrors it so engine and
// reference agree bitwise.
void adam_group(double* params, const double* grads, AdamGroup& g, long step, double lr, int dim,
                int count) {
  const long t = step - g.step_offset;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
  for (size_t j = 0; j < static_cast<size_t>(count) * dim; ++j) {
    const double grad = grads[j];
    g.m[j] = kAdamBeta1 * g.m[j] + (1.0 - kAdamBeta1) * grad;
    g.v[j] = kAdamBeta2 * g.v[j] + (1.0 - kAdamBeta2) * grad * grad;
    const double mhat = g.m[j] / bc1;
    const double vhat = g.v[j] / bc2;
    params[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

void check_finite(const double* p, size_t n, const char* what) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw runtime_failure(std::string("sgld_step: non-finite gradient in ") + what +
                            " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

void sgld_step(GaussianSet& set, const Gradients& grads, OptimizerState& opt,
               const LrSchedule& sched, const NoiseParams& noise, SubStream& noise_rng) {
  MCSPLAT_CHECK(grads.shapes_match(set), "sgld_step: gradient shape mismatch");
  MCSPLAT_CHECK(opt.shapes_match(set), "sgld_step: optimizer shape mismatch");
  const int n = set.count;
  check_finite(reinterpret_cast<const double*>(grads.positions.data()), n * 3, "positions");
  check_finite(reinterpret_cast<const double*>(grads.raw_scales.data()), n * 3, "raw_scales");
  check_finite(reinterpret_cast<const double*>(grads.rotations.data()), n * 4, "rotations");
  check_finite(grads.raw_opacities.data(), n, "raw_opacities");
  check_finite(grads.colors.data(), static_cast<size_t>(n) * 3 * set.coeffs_per_channel(),
               "colors");

  // Noise from the pre-step state (simultaneous update semantics).
  const double pos_rate = sched.position_rate(opt.step);
  std::vector<Vec3> eps;
  if (noise.lambda != 0.0) {
    eps = position_noise(set, noise, pos_rate, noise_rng);
  }

  const long step = opt.step + 1;  // Adam t is 1-based
  // Eigen fixed-size vectors are contiguous doubles, so flat views are safe.
  adam_group(reinterpret_cast<double*>(set.positions.data()),
             reinterpret_cast<const double*>(grads.positions.data()), opt.positions, step,
             pos_rate, 3, n);
  adam_group(reinterpret_cast<double*>(set.raw_scales.data()),
             reinterpret_cast<const double*>(grads.raw_scales.data()), opt.scales, step,
             sched.scale_rate, 3, n);
  adam_group(reinterpret_cast<double*>(set.rotations.data()),
             reinterpret_cast<const double*>(grads.rotations.data()), opt.rotations, step,
             sched.rotation_rate, 4, n);
  adam_group(set.raw_opacities.data(), grads.raw_opacities.data(), opt.opacities, step,
             sched.opacity_rate, 1, n);
  adam_group(set.colors.data(), grads.colors.data(), opt.colors, step, sched.color_rate,
             3 * set.coeffs_per_channel(), n);

  if (noise.lambda != 0.0) {
    for (int i = 0; i < n; ++i) set.positions[i] += noise.lambda * eps[i];
  }
  opt.step = step;
}

}  // namespace mcsplat
