#pragma once

#include <vector>

#include "mcsplat/gaussian_set.hpp"
#include "mcsplat/optimizer.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {

// Binomial coefficients in the covariance-factor series overflow 64-bit float
// alternating sums near N=60; the table is held in long double and N capped.
inline constexpr int kRelocationNMax = 51;
inline constexpr int kRelocationMaxRedraws = 16;

// 1 - (1-o_old)^(1/N), before the floor/ceiling clamp. Exactness property:
// (1 - o_new)^N == 1 - o_old.
double relocated_opacity_unclamped(double o_old, int n);

// The applied value, clamped to [kOpacityFloor, kOpacityCeil] so a relocated
// Gaussian is live and logit() stays finite.
double relocated_opacity(double o_old, int n);

// Sigma_new = f * Sigma_old with
//   f = o_old^2 / (sum_{i=1..N} sum_{k=0..i-1} C(i-1,k) (-1)^k o_new^{k+1} / sqrt(k+1))^2
// evaluated in long double. Preserves the total compositing mass of N stacked
// copies against the original slice integral. f == 1 at N == 1.
double relocated_covariance_factor(double o_old, int n);

// One relocation round: every dead index is assigned a live target drawn
// with-replacement proportionally to live opacity. A target already holding
// kRelocationNMax - 1 sources rejects further assignments; after
// kRelocationMaxRedraws failed redraws the dead index is dropped this round.
struct RelocationPlan {
  std::vector<int> targets;                // unique live indices
  std::vector<std::vector<int>> sources;   // per target: assigned source slots
  bool no_live_targets = false;

  int total_sources() const {
    int n = 0;
    for (const auto& s : sources) n += static_cast<int>(s.size());
    return n;
  }
};

// Consumes one "relocate"-stream u01 per dead index in ascending order plus
// one per redraw.
RelocationPlan build_plan(const LivenessMask& mask, const GaussianSet& set, SubStream& rng);

// Applies mass-preserving moves with pre-move snapshot semantics: target and
// its sources all take the target's old position/rotation/color, opacity
// relocated_opacity(o_old, N), scales scaled by sqrt(f), where N = 1 + count
// of sources. Target Adam moments are zeroed; sources keep theirs; all other
// Gaussians stay bitwise untouched.
void apply_plan(GaussianSet& set, OptimizerState& opt, const RelocationPlan& plan);

// Activates min(ceil(rate * live), cap - live) non-live slots (stored dead
// slots first, then unused tail) as relocation sources onto live targets
// drawn multinomially by opacity; reuses apply_plan. Returns slots activated.
int grow_step(GaussianSet& set, OptimizerState& opt, int cap, double rate, SubStream& rng);

}  // namespace mcsplat
