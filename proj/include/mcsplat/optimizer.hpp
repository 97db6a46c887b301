#pragma once

#include <vector>

#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

// Position rate interpolates geometrically from initial to final over
// total_steps; position_scale is the scene-extent multiplier (3DGS
// convention), 1 by default. Other groups use constant rates.
struct LrSchedule {
  double position_initial = 1.6e-4;
  double position_final = 1.6e-6;
  long total_steps = 30000;
  double position_scale = 1.0;
  double scale_rate = 5e-3;
  double rotation_rate = 1e-3;
  double opacity_rate = 5e-2;
  double color_rate = 2.5e-3;

  double position_rate(long step) const;
};

struct AdamGroup {
  std::vector<double> m;
  std::vector<double> v;
  long step_offset = 0;  // bias correction uses t = step - step_offset
};

struct OptimizerState {
  AdamGroup positions;  // 3 per Gaussian
  AdamGroup scales;     // 3
  AdamGroup rotations;  // 4
  AdamGroup opacities;  // 1
  AdamGroup colors;     // 3 * coeffs_per_channel
  long step = 0;        // completed sgld steps

  static OptimizerState for_set(const GaussianSet& set);
  bool shapes_match(const GaussianSet& set) const;
  // Zeroes both moments of one Gaussian across all groups (relocation targets).
  void reset_moments(int index, const GaussianSet& set);
};

struct NoiseParams {
  double lambda = 5e5;
  double k = 100.0;
  double t = kLiveThreshold;
  bool printed_sign = false;  // true selects the printed form logistic(-k*(t-o))
};

// logistic(-k*(opacity - t)): ~1 for dead Gaussians, ~0 for opaque ones.
double noise_gate(double opacity, double k, double t);

// eps_i = lr_now * gate(o_i) * Sigma_i * eta_i with eta ~ N(0, I3); the
// resulting covariance is (lr*gate)^2 * Sigma*Sigma^T. Draws 3 normals per
// stored Gaussian in index order regardless of gate value so the stream
// advances deterministically. Planar sets get a zeroed z component.
std::vector<Vec3> position_noise(const GaussianSet& set, const NoiseParams& noise, double lr_now,
                                 SubStream& rng);

// One SGLD step: per-group Adam (textbook order: m-hat = m/(1-b1^t),
// v-hat = v/(1-b2^t), p -= lr * m-hat/(sqrt(v-hat)+eps)), then positions
// receive + lambda * eps computed from the pre-step parameter state
// (simultaneous semantics). lambda == 0 skips noise draws entirely.
void sgld_step(GaussianSet& set, const Gradients& grads, OptimizerState& opt,
               const LrSchedule& sched, const NoiseParams& noise, SubStream& noise_rng);

}  // namespace mcsplat
