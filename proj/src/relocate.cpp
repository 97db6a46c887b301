#include "mcsplat/relocate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mcsplat {

namespace {

void check_relocation_args(double o_old, int n) {
  MCSPLAT_CHECK(o_old > 0.0 && o_old < 1.0, "relocation: opacity must be in (0,1)");
  MCSPLAT_CHECK(n >= 1 && n <= kRelocationNMax, "relocation: N out of [1, N_max]");
}

}  // namespace

double relocated_opacity_unclamped(double o_old, int n) {
  check_relocation_args(o_old, n);
  return 1.0 - std::pow(1.0 - o_old, 1.0 / n);
}

double relocated_opacity(double o_old, int n) {
  double o = relocated_opacity_unclamped(o_old, n);
  return std::min(std::max(o, kOpacityFloor), kOpacityCeil);
}

double relocated_covariance_factor(double o_old, int n) {
  check_relocation_args(o_old, n);
  const long double o_new = 1.0L - powl(1.0L - static_cast<long double>(o_old), 1.0L / n);

  long double denom = 0.0L;
  std::vector<long double> binom(static_cast<size_t>(n) + 1, 0.0L);  // row C(i-1, k)
  binom[0] = 1.0L;
  for (int i = 1; i <= n; ++i) {
    long double opow = o_new;
    long double sign = 1.0L;
    for (int k = 0; k < i; ++k) {
      denom += binom[k] * sign * opow / sqrtl(static_cast<long double>(k + 1));
      opow *= o_new;
      sign = -sign;
    }
    // advance Pascal row to C(i, k)
    for (int k = i; k >= 1; --k) binom[k] = binom[k] + binom[k - 1];
  }
  if (!(denom > 0.0L)) throw runtime_failure("relocated_covariance_factor: degenerate denominator");
  const long double f =
      (static_cast<long double>(o_old) * o_old) / (denom * denom);
  return static_cast<double>(f);
}

RelocationPlan build_plan(const LivenessMask& mask, const GaussianSet& set, SubStream& rng) {
  MCSPLAT_CHECK(static_cast<int>(mask.live.size()) == set.count,
                "build_plan: mask/set size mismatch");
  RelocationPlan plan;
  if (mask.dead_count == 0) return plan;
  if (mask.live_count == 0) {
    plan.no_live_targets = true;
    return plan;
  }

  std::vector<int> live_idx;
  std::vector<double> cdf;
  live_idx.reserve(mask.live_count);
  cdf.reserve(mask.live_count);
  double total = 0.0;
  for (int i = 0; i < set.count; ++i) {
    if (!mask.live[i]) continue;
    live_idx.push_back(i);
    total += set.opacity(i);
    cdf.push_back(total);
  }

  std::map<int, std::vector<int>> assignment;  // target -> sources, index-ordered
  for (int i = 0; i < set.count; ++i) {
    if (mask.live[i]) continue;
    for (int attempt = 0; attempt <= kRelocationMaxRedraws; ++attempt) {
      const double u = rng.u01() * total;
      const size_t pick = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      const int target = live_idx[std::min(pick, cdf.size() - 1)];
      auto& sources = assignment[target];
      if (static_cast<int>(sources.size()) < kRelocationNMax - 1) {
        sources.push_back(i);
        break;
      }
      // else: target already at N_max-1 sources; redraw (bounded), then drop.
    }
  }
  for (auto& [target, sources] : assignment) {
    if (sources.empty()) continue;
    plan.targets.push_back(target);
    plan.sources.push_back(std::move(sources));
  }
  return plan;
}

void apply_plan(GaussianSet& set, OptimizerState& opt, const RelocationPlan& plan) {
  MCSPLAT_CHECK(plan.targets.size() == plan.sources.size(), "apply_plan: malformed plan");
  MCSPLAT_CHECK(opt.shapes_match(set), "apply_plan: optimizer shape mismatch");
  const int nb = 3 * set.coeffs_per_channel();

  struct Move {
    int target;
    Vec3 position;
    Vec4 rotation;
    Vec3 raw_scale_new;
    double raw_opacity_new;
    std::vector<double> color;
    const std::vector<int>* sources;
  };
  // Snapshot pass: all new values derive from pre-move target state.
  std::vector<Move> moves;
  moves.reserve(plan.targets.size());
  for (size_t t = 0; t < plan.targets.size(); ++t) {
    const int target = plan.targets[t];
    MCSPLAT_CHECK(target >= 0 && target < set.count, "apply_plan: target out of range");
    const int n = 1 + static_cast<int>(plan.sources[t].size());
    MCSPLAT_CHECK(n <= kRelocationNMax, "apply_plan: N exceeds N_max");
    const double o_old = set.opacity(target);
    Move mv;
    mv.target = target;
    mv.position = set.positions[target];
    mv.rotation = set.rotations[target];
    mv.raw_opacity_new = logit(relocated_opacity(o_old, n));
    const double f = relocated_covariance_factor(o_old, n);
    mv.raw_scale_new = set.raw_scales[target] + Vec3::Constant(0.5 * std::log(f));
    mv.color.assign(set.color_ptr(target), set.color_ptr(target) + nb);
    mv.sources = &plan.sources[t];
    moves.push_back(std::move(mv));
  }

  for (const Move& mv : moves) {
    auto write_slot = [&](int slot) {
      MCSPLAT_CHECK(slot >= 0 && slot < set.count, "apply_plan: slot out of range");
      set.positions[slot] = mv.position;
      set.rotations[slot] = mv.rotation;
      set.raw_scales[slot] = mv.raw_scale_new;
      set.raw_opacities[slot] = mv.raw_opacity_new;
      std::copy(mv.color.begin(), mv.color.end(), set.color_ptr(slot));
    };
    write_slot(mv.target);
    for (int src : *mv.sources) write_slot(src);
    opt.reset_moments(mv.target, set);  // sources keep their moments
  }
}

int grow_step(GaussianSet& set, OptimizerState& opt, int cap, double rate, SubStream& rng) {
  MCSPLAT_CHECK(cap <= set.capacity(), "grow_step: cap exceeds capacity");
  MCSPLAT_CHECK(rate >= 0.0, "grow_step: negative rate");
  const LivenessMask mask = classify_liveness(set);
  const int live = mask.live_count;
  if (live == 0) return 0;
  const int want = static_cast<int>(std::ceil(rate * live));
  const int delta = std::min(want, cap - live);
  if (delta <= 0) return 0;

  std::vector<int> live_idx;
  std::vector<double> cdf;
  double total = 0.0;
  for (int i = 0; i < set.count; ++i) {
    if (!mask.live[i]) continue;
    live_idx.push_back(i);
    total += set.opacity(i);
    cdf.push_back(total);
  }

  // Reusable slots: stored dead slots in ascending order, then the unused tail.
  std::vector<int> dead_slots;
  for (int i = 0; i < set.count; ++i) {
    if (!mask.live[i]) dead_slots.push_back(i);
  }

  std::map<int, std::vector<int>> assignment;
  size_t next_dead = 0;
  int new_count = set.count;
  int activated = 0;
  for (int j = 0; j < delta; ++j) {
    int target = -1;
    for (int attempt = 0; attempt <= kRelocationMaxRedraws; ++attempt) {
      const double u = rng.u01() * total;
      const size_t pick = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      const int cand = live_idx[std::min(pick, cdf.size() - 1)];
      if (static_cast<int>(assignment[cand].size()) < kRelocationNMax - 1) {
        target = cand;
        break;
      }
    }
    if (target < 0) continue;  // every drawn target was full; this copy is dropped
    // A slot is claimed only after its target draw succeeds, so dropped draws
    // never turn an unused tail slot into a live garbage entry.
    int slot;
    if (next_dead < dead_slots.size()) {
      slot = dead_slots[next_dead++];
    } else if (new_count < set.capacity()) {
      slot = new_count++;
    } else {
      break;
    }
    assignment[target].push_back(slot);
    ++activated;
  }
  set.count = new_count;

  RelocationPlan plan;
  for (auto& [target, sources] : assignment) {
    if (sources.empty()) continue;
    plan.targets.push_back(target);
    plan.sources.push_back(std::move(sources));
  }
  apply_plan(set, opt, plan);
  return activated;
}

}  // namespace mcsplat
