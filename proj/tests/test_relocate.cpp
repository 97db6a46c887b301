#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcsplat/camera.hpp"
#include "mcsplat/relocate.hpp"
#include "mcsplat/render.hpp"
#include "mcsplat/rng.hpp"

using namespace mcsplat;

TEST_CASE("relocated opacity: identities, figure value, clamps, errors") {
  CHECK(relocated_opacity_unclamped(0.5, 1) == 0.5);
  CHECK(relocated_opacity_unclamped(0.75, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(1.0 - std::pow(1.0 - relocated_opacity_unclamped(0.75, 2), 2) ==
        doctest::Approx(0.75).epsilon(1e-15));
  CHECK(relocated_opacity_unclamped(0.95, 4) == doctest::Approx(0.52712920).epsilon(1e-8));

  // Heavy splits drive the raw value under the live floor; the clamp keeps
  // the result in activation range.
  CHECK(relocated_opacity_unclamped(0.01, 51) < kOpacityFloor);
  CHECK(relocated_opacity(0.01, 51) == kOpacityFloor);
  CHECK(relocated_opacity(1.0 - 1e-12, 1) == kOpacityCeil);

  CHECK_THROWS_AS(relocated_opacity(0.5, 0), contract_error);
  CHECK_THROWS_AS(relocated_opacity(0.5, kRelocationNMax + 1), contract_error);
  CHECK_THROWS_AS(relocated_opacity(0.0, 2), contract_error);
  CHECK_THROWS_AS(relocated_opacity(1.0, 2), contract_error);
}

TEST_CASE("covariance factor: identity, frozen example, full-range sanity") {
  for (const double o : {0.05, 0.5, 0.95}) {
    CHECK(relocated_covariance_factor(o, 1) == doctest::Approx(1.0).epsilon(1e-14));
  }
  // N=2, o=0.75: denominator 0.5 + 0.5 - 0.25/sqrt(2), factor (0.75/denom)^2.
  const double denom = 1.0 - 0.25 / std::sqrt(2.0);
  CHECK(denom == doctest::Approx(0.8232233047033631).epsilon(1e-15));
  CHECK(relocated_covariance_factor(0.75, 2) ==
        doctest::Approx(0.5625 / (denom * denom)).epsilon(1e-12));
  CHECK(relocated_covariance_factor(0.75, 2) == doctest::Approx(0.830016).epsilon(1e-5));

  // The factor stays positive and below 1 for every admissible (o, N > 1):
  // copies always shrink.
  for (int n = 2; n <= kRelocationNMax; ++n) {
    for (const double o : {0.01, 0.3, 0.6, 0.9, 0.99}) {
      const double f = relocated_covariance_factor(o, n);
      CHECK(f > 0.0);
      CHECK(f < 1.0);
    }
  }
}

TEST_CASE("opacity recomposition is exact across the sweep") {
  for (const double o : {0.01, 0.37, 0.5, 0.75, 0.99}) {
    for (const int n : {1, 2, 7, 23, 51}) {
      const double on = relocated_opacity_unclamped(o, n);
      CHECK(std::fabs(1.0 - std::pow(1.0 - on, n) - o) <= 1e-12);
    }
  }
}

namespace {

GaussianSet make_set(const std::vector<double>& opacities) {
  GaussianSet set(static_cast<int>(opacities.size()), 0);
  set.count = static_cast<int>(opacities.size());
  for (size_t i = 0; i < opacities.size(); ++i) {
    set.raw_opacities[i] = logit(opacities[i]);
    set.positions[i] = Vec3(static_cast<double>(i), 0.0, 0.0);
  }
  return set;
}

}  // namespace

TEST_CASE("plan construction: trivial shapes") {
  RngPool pool(10);
  SubStream& rng = pool.stream("relocate");

  // No dead Gaussians: empty plan.
  GaussianSet all_live = make_set({0.5, 0.6});
  RelocationPlan p1 = build_plan(classify_liveness(all_live), all_live, rng);
  CHECK(p1.targets.empty());
  CHECK(!p1.no_live_targets);

  // No live Gaussians: flagged empty plan.
  GaussianSet all_dead = make_set({0.001, 0.002});
  RelocationPlan p2 = build_plan(classify_liveness(all_dead), all_dead, rng);
  CHECK(p2.targets.empty());
  CHECK(p2.no_live_targets);

  // One live, three dead: all map onto it (N = 4).
  GaussianSet one = make_set({0.001, 0.9, 0.001, 0.001});
  RelocationPlan p3 = build_plan(classify_liveness(one), one, rng);
  REQUIRE(p3.targets.size() == 1);
  CHECK(p3.targets[0] == 1);
  CHECK(p3.sources[0] == std::vector<int>{0, 2, 3});
}

TEST_CASE("plan targets follow the live-opacity multinomial") {
  // 10^4 draws against 2 live targets with opacities (0.2, 0.8). A target
  // holds at most 50 sources, so the draws are spread over 200 independent
  // rounds of 50 dead each — rejection never binds and every draw is an
  // unbiased sample of the multinomial law.
  const int rounds = 200, dead_per_round = 50;
  std::vector<double> ops = {0.2, 0.8};
  ops.resize(2 + dead_per_round, 0.001);
  RngPool pool(2024);
  SubStream& rng = pool.stream("relocate");
  int counts[2] = {0, 0};
  for (int r = 0; r < rounds; ++r) {
    GaussianSet set = make_set(ops);
    const RelocationPlan plan = build_plan(classify_liveness(set), set, rng);
    for (size_t t = 0; t < plan.targets.size(); ++t) {
      REQUIRE(plan.targets[t] <= 1);
      counts[plan.targets[t]] += static_cast<int>(plan.sources[t].size());
    }
  }
  const int dead_n = rounds * dead_per_round;
  CHECK(counts[0] + counts[1] == dead_n);
  const double e0 = dead_n * 0.2, e1 = dead_n * 0.8;
  const double chi2 = (counts[0] - e0) * (counts[0] - e0) / e0 +
                      (counts[1] - e1) * (counts[1] - e1) / e1;
  CHECK(chi2 < 10.828);  // 1 dof, p > 0.001
}

TEST_CASE("full targets reject extra sources; overflow is dropped this round") {
  std::vector<double> ops(61, 0.001);
  ops[0] = 0.9;  // the only live target
  GaussianSet set = make_set(ops);
  RngPool pool(5);
  const RelocationPlan plan = build_plan(classify_liveness(set), set, pool.stream("relocate"));
  REQUIRE(plan.targets.size() == 1);
  CHECK(plan.targets[0] == 0);
  // Cap: N = 51 means at most 50 assigned dead; the other 10 stay dead.
  CHECK(plan.total_sources() == kRelocationNMax - 1);
  std::vector<bool> seen(61, false);
  for (const int s : plan.sources[0]) {
    CHECK(!seen[s]);  // each dead index at most once
    seen[s] = true;
    CHECK(s >= 1);
  }
}

TEST_CASE("applying a plan: shared parameters, moment handling, mass") {
  GaussianSet set = make_set({0.95, 0.001, 0.002, 0.001});
  set.positions[0] = Vec3(4.5, 4.5, 0.0);
  set.raw_scales[0] = Vec3(std::log(1.5), std::log(0.7), 0.1);
  set.rotations[0] = Vec4(0.9, 0.1, -0.2, 0.4);
  set.color_ptr(0)[1] = 0.77;
  OptimizerState opt = OptimizerState::for_set(set);
  for (double& v : opt.positions.m) v = 1.0;
  for (double& v : opt.opacities.v) v = 2.0;

  RelocationPlan plan;
  plan.targets = {0};
  plan.sources = {{1, 2, 3}};
  const GaussianSet before = set;
  apply_plan(set, opt, plan);

  const double o_new = relocated_opacity(0.95, 4);
  const double f = relocated_covariance_factor(0.95, 4);
  for (const int i : {0, 1, 2, 3}) {
    CHECK(set.positions[i] == before.positions[0]);
    CHECK(set.rotations[i] == before.rotations[0]);
    CHECK(set.opacity(i) == doctest::Approx(o_new).epsilon(1e-12));
    CHECK((set.raw_scales[i] - (before.raw_scales[0] + Vec3::Constant(0.5 * std::log(f))))
              .norm() <= 1e-12);
    CHECK(set.color_ptr(i)[1] == 0.77);
  }
  // Center alpha recomposes: 1 - (1 - o_new)^4 = 0.95.
  CHECK(1.0 - std::pow(1.0 - set.opacity(0), 4) == doctest::Approx(0.95).epsilon(1e-9));
  // Target moments zeroed; relocated sources keep theirs.
  CHECK(opt.positions.m[0] == 0.0);
  CHECK(opt.opacities.v[0] == 0.0);
  CHECK(opt.positions.m[3] == 1.0);
  CHECK(opt.opacities.v[1] == 2.0);
}

TEST_CASE("empty plan leaves set and optimizer bitwise unchanged") {
  GaussianSet set = make_set({0.4, 0.001});
  OptimizerState opt = OptimizerState::for_set(set);
  for (double& v : opt.scales.m) v = 3.0;
  const GaussianSet before = set;
  apply_plan(set, opt, RelocationPlan{});
  CHECK(set.raw_opacities == before.raw_opacities);
  CHECK(set.colors == before.colors);
  for (int i = 0; i < set.count; ++i) CHECK(set.positions[i] == before.positions[i]);
  for (const double v : opt.scales.m) CHECK(v == 3.0);
}

TEST_CASE("relocation preserves the rendered image near the target") {
  // One bright Gaussian at a pixel sample point plus three far-away dead ones.
  GaussianSet set(4, 0);
  set.count = 4;
  set.planar = true;
  set.positions[0] = Vec3(8.5, 8.5, 0.0);
  set.raw_scales[0] = Vec3(std::log(1.8), std::log(1.8), 0.0);
  set.raw_opacities[0] = logit(0.95);
  set.color_ptr(0)[0] = 0.9;
  for (int i = 1; i < 4; ++i) {
    set.positions[i] = Vec3(1.0 + i, 14.0, 0.0);
    set.raw_scales[i] = Vec3::Zero();
    set.raw_opacities[i] = logit(0.001);
  }
  const Camera cam = Camera::identity2d(17, 17);
  const Image before = render(set, cam).image;

  OptimizerState opt = OptimizerState::for_set(set);
  RelocationPlan plan;
  plan.targets = {0};
  plan.sources = {{1, 2, 3}};
  apply_plan(set, opt, plan);
  const Image after = render(set, cam).image;

  // Center pixel (8,8) samples exactly the shared mean.
  for (int c = 0; c < 3; ++c) {
    CHECK(std::fabs(after.at(8, 8, c) - before.at(8, 8, c)) < 1e-6);
  }
}

TEST_CASE("growth activates multinomial copies up to the cap") {
  // 100 live at the front of a 128-capacity set, rate 5%.
  std::vector<double> ops(100, 0.5);
  GaussianSet set(128, 0);
  set.count = 100;
  for (int i = 0; i < 100; ++i) {
    set.raw_opacities[i] = logit(0.5);
    set.positions[i] = Vec3(i, 0, 0);
  }
  OptimizerState opt = OptimizerState::for_set(set);
  RngPool pool(33);
  const int grown = grow_step(set, opt, 128, 0.05, pool.stream("grow"));
  CHECK(grown == 5);
  CHECK(set.count == 105);
  CHECK(classify_liveness(set).live_count == 105);

  // Already at cap: no-op.
  const int again = grow_step(set, opt, 105, 0.05, pool.stream("grow"));
  CHECK(again == 0);
  CHECK(set.count == 105);

  // Cap clips the requested growth.
  const int clipped = grow_step(set, opt, 107, 0.05, pool.stream("grow"));
  CHECK(clipped == 2);
  CHECK(classify_liveness(set).live_count == 107);
}

TEST_CASE("growth reuses stored dead slots before extending the tail") {
  GaussianSet set = make_set({0.9, 0.001, 0.8});  // capacity 3, one dead slot
  OptimizerState opt = OptimizerState::for_set(set);
  RngPool pool(44);
  const int grown = grow_step(set, opt, 3, 0.5, pool.stream("grow"));
  CHECK(grown == 1);
  CHECK(set.count == 3);  // the dead slot was recycled, no tail extension
  CHECK(classify_liveness(set).live_count == 3);
  // The recycled slot shares its target's position (one of the live ones).
  const bool at0 = set.positions[1] == set.positions[0];
  const bool at2 = set.positions[1] == set.positions[2];
  CHECK((at0 || at2));
}

TEST_CASE("growth respects capacity when no dead slots remain") {
  GaussianSet set = make_set({0.9, 0.8});
  OptimizerState opt = OptimizerState::for_set(set);
  RngPool pool(55);
  // rate 1.0 wants 2 more but capacity is 2: nothing to activate.
  const int grown = grow_step(set, opt, 2, 1.0, pool.stream("grow"));
  CHECK(grown == 0);
  CHECK(set.count == 2);
}
