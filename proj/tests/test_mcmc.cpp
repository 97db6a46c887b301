#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mcsplat/optimizer.hpp"
#include "mcsplat/oracle.hpp"
#include "mcsplat/rng.hpp"
#include "mcsplat/synthetic.hpp"

using namespace mcsplat;

namespace {

Gradients random_gradients(const GaussianSet& set, SubStream& rng) {
  Gradients g(set);
  for (int i = 0; i < set.count; ++i) {
    g.positions[i] = rng.normal3();
    g.raw_scales[i] = rng.normal3();
    g.rotations[i] = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.raw_opacities[i] = rng.normal();
    for (int c = 0; c < 3 * set.coeffs_per_channel(); ++c) {
      g.colors[static_cast<size_t>(i) * 3 * set.coeffs_per_channel() + c] = rng.normal();
    }
  }
  return g;
}

}  // namespace

TEST_CASE("noise gate: frozen value, monotonicity, printed variant") {
  // Dead Gaussian (o -> 0): gate = logistic(0.5).
  CHECK(noise_gate(0.0, 100.0, 0.005) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-0.5))).epsilon(1e-15));
  CHECK(noise_gate(0.0, 100.0, 0.005) == doctest::Approx(0.6224593312).epsilon(1e-9));
  // Opaque Gaussian: gate collapses.
  CHECK(noise_gate(1.0, 100.0, 0.005) < 1e-40);
  // Monotonically decreasing in opacity; 1/2 exactly at the threshold.
  CHECK(noise_gate(0.004, 100.0, 0.005) > noise_gate(0.006, 100.0, 0.005));
  CHECK(noise_gate(0.005, 100.0, 0.005) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("learning-rate schedule interpolates geometrically") {
  LrSchedule s;
  s.total_steps = 1000;
  CHECK(s.position_rate(0) == doctest::Approx(1.6e-4).epsilon(1e-12));
  CHECK(s.position_rate(1000) == doctest::Approx(1.6e-6).epsilon(1e-12));
  CHECK(s.position_rate(500) == doctest::Approx(1.6e-5).epsilon(1e-12));  // geometric midpoint
  CHECK(s.position_rate(2000) == doctest::Approx(1.6e-6).epsilon(1e-12));  // clamped past the end
  s.position_scale = 2.5;
  CHECK(s.position_rate(0) == doctest::Approx(4e-4).epsilon(1e-12));
}

TEST_CASE("adam path equals the independent reference bitwise over many steps") {
  RngPool pool(1001);
  SubStream& rng = pool.stream("g");
  GaussianSet set = random_scene(6, 1, CameraMode::kPinhole3D, 16, 16, rng);
  GaussianSet ref = set;
  OptimizerState opt = OptimizerState::for_set(set);
  OptimizerState ref_opt = OptimizerState::for_set(ref);
  LrSchedule sched;
  sched.total_steps = 20;
  NoiseParams noise;
  noise.lambda = 0.0;
  SubStream& unused = pool.stream("noise");

  for (long step = 0; step < 20; ++step) {
    const Gradients g = random_gradients(set, rng);
    const double pos_rate = sched.position_rate(opt.step);
    sgld_step(set, g, opt, sched, noise, unused);

    const long t = step + 1;
    const int n = ref.count;
    oracle::adam_step(reinterpret_cast<double*>(ref.positions.data()),
                      reinterpret_cast<const double*>(g.positions.data()),
                      ref_opt.positions.m.data(), ref_opt.positions.v.data(), 3 * n, t, pos_rate,
                      kAdamBeta1, kAdamBeta2, kAdamEps);
    oracle::adam_step(reinterpret_cast<double*>(ref.raw_scales.data()),
                      reinterpret_cast<const double*>(g.raw_scales.data()),
                      ref_opt.scales.m.data(), ref_opt.scales.v.data(), 3 * n, t,
                      sched.scale_rate, kAdamBeta1, kAdamBeta2, kAdamEps);
    oracle::adam_step(reinterpret_cast<double*>(ref.rotations.data()),
                      reinterpret_cast<const double*>(g.rotations.data()),
                      ref_opt.rotations.m.data(), ref_opt.rotations.v.data(), 4 * n, t,
                      sched.rotation_rate, kAdamBeta1, kAdamBeta2, kAdamEps);
    oracle::adam_step(ref.raw_opacities.data(), g.raw_opacities.data(),
                      ref_opt.opacities.m.data(), ref_opt.opacities.v.data(), n, t,
                      sched.opacity_rate, kAdamBeta1, kAdamBeta2, kAdamEps);
    oracle::adam_step(ref.colors.data(), g.colors.data(), ref_opt.colors.m.data(),
                      ref_opt.colors.v.data(), 3 * set.coeffs_per_channel() * n, t,
                      sched.color_rate, kAdamBeta1, kAdamBeta2, kAdamEps);

    for (int i = 0; i < n; ++i) {
      REQUIRE(set.positions[i] == ref.positions[i]);
      REQUIRE(set.raw_scales[i] == ref.raw_scales[i]);
      REQUIRE(set.rotations[i] == ref.rotations[i]);
      REQUIRE(set.raw_opacities[i] == ref.raw_opacities[i]);
    }
    REQUIRE(set.colors == ref.colors);
  }
  CHECK(opt.step == 20);
}

TEST_CASE("bias correction restarts through step_offset") {
  GaussianSet set(1, 0);
  set.count = 1;
  OptimizerState opt = OptimizerState::for_set(set);
  opt.step = 500;
  opt.opacities.step_offset = 500;  // freshly relocated slot
  Gradients g(set);
  g.raw_opacities[0] = 0.5;
  LrSchedule sched;
  NoiseParams noise;
  noise.lambda = 0.0;
  RngPool pool(1);
  sgld_step(set, g, opt, sched, noise, pool.stream("x"));
  // t = 1 for this group: the update equals the full first-step Adam move.
  CHECK(set.raw_opacities[0] ==
        doctest::Approx(-sched.opacity_rate * 0.5 / (0.5 + kAdamEps)).epsilon(1e-12));
}

TEST_CASE("position noise scales as lr * gate * Sigma") {
  GaussianSet set(1, 0);
  set.count = 1;
  set.raw_scales[0] = Vec3(std::log(2.0), std::log(0.5), 0.0);
  set.raw_opacities[0] = logit(0.005);  // gate exactly 1/2
  NoiseParams noise;
  RngPool pool(42);
  SubStream& rng = pool.stream("n");
  const double lr = 0.1;
  // Sigma = diag(4, 0.25, 1); eps = lr*gate*Sigma*eta has per-axis std
  // lr*gate*diag(Sigma).
  const int trials = 60000;
  Vec3 sum = Vec3::Zero(), sum2 = Vec3::Zero();
  for (int i = 0; i < trials; ++i) {
    const auto eps = position_noise(set, noise, lr, rng);
    sum += eps[0];
    sum2 += eps[0].cwiseProduct(eps[0]);
  }
  const Vec3 mean = sum / trials;
  const Vec3 var = sum2 / trials - mean.cwiseProduct(mean);
  const double g = 0.5 * lr;
  CHECK(std::fabs(mean.x()) < 3e-3);
  CHECK(var.x() == doctest::Approx(g * g * 16.0).epsilon(0.03));
  CHECK(var.y() == doctest::Approx(g * g * 0.0625).epsilon(0.03));
  CHECK(var.z() == doctest::Approx(g * g * 1.0).epsilon(0.03));
}

TEST_CASE("planar sets receive no z noise but consume the same draws") {
  RngPool a(9), b(9);
  GaussianSet set(3, 0);
  set.count = 3;
  set.planar = true;
  for (int i = 0; i < 3; ++i) set.raw_opacities[i] = logit(0.01);
  NoiseParams noise;
  const auto eps = position_noise(set, noise, 0.1, a.stream("n"));
  for (const Vec3& e : eps) CHECK(e.z() == 0.0);
  // 3 normals x 2 engine draws each, per stored Gaussian.
  SubStream& twin = b.stream("n");
  for (int i = 0; i < 3 * 6; ++i) (void)twin.u64();
  CHECK(a.stream("n").u64() == twin.u64());
}

TEST_CASE("printed gate sign flips the transition direction") {
  NoiseParams printed;
  printed.printed_sign = true;
  GaussianSet set(1, 0);
  set.count = 1;
  set.raw_opacities[0] = logit(1e-4);  // nearly dead
  RngPool pool(3);
  const auto eps = position_noise(set, printed, 1.0, pool.stream("n"));
  // printed form: logistic(-k(t - o)) ~ logistic(-0.49) < 1/2 for dead ones.
  const double gate = logistic(-100.0 * (0.005 - 1e-4));
  CHECK(gate < 0.5);
  // magnitude carries the gate: |eps| = gate * |Sigma eta| with Sigma = I.
  RngPool twin(3);
  const Vec3 eta = twin.stream("n").normal3();
  CHECK(eps[0].x() == doctest::Approx(gate * eta.x()).epsilon(1e-12));
}

TEST_CASE("zero lambda skips noise draws entirely") {
  RngPool pool(17);
  SubStream& rng = pool.stream("noise");
  const std::string before = rng.serialize_state();
  GaussianSet set(2, 0);
  set.count = 2;
  Gradients g(set);
  OptimizerState opt = OptimizerState::for_set(set);
  LrSchedule sched;
  NoiseParams off;
  off.lambda = 0.0;
  sgld_step(set, g, opt, sched, off, rng);
  CHECK(rng.serialize_state() == before);

  NoiseParams on;
  sgld_step(set, g, opt, sched, on, rng);
  CHECK(rng.serialize_state() != before);
}

TEST_CASE("noise is added after adam from the pre-step state") {
  RngPool pool(77), twin_pool(77);
  SubStream& rng = pool.stream("noise");
  SubStream& twin = twin_pool.stream("noise");

  GaussianSet set = [] {
    GaussianSet s(2, 0);
    s.count = 2;
    s.positions[0] = Vec3(1, 2, 3);
    s.positions[1] = Vec3(-1, 0, 1);
    s.raw_opacities[0] = logit(0.01);
    s.raw_opacities[1] = logit(0.9);
    return s;
  }();
  GaussianSet adam_only = set;

  Gradients g(set);
  g.positions[0] = Vec3(0.3, -0.2, 0.1);
  g.positions[1] = Vec3(-0.5, 0.4, 0.0);

  LrSchedule sched;
  sched.total_steps = 100;
  NoiseParams noise;
  noise.lambda = 2.0;

  // Expected noise must use the PRE-step parameters and the PRE-step rate.
  const auto eps = position_noise(set, noise, sched.position_rate(0), twin);

  OptimizerState opt = OptimizerState::for_set(set);
  sgld_step(set, g, opt, sched, noise, rng);

  OptimizerState opt2 = OptimizerState::for_set(adam_only);
  NoiseParams off;
  off.lambda = 0.0;
  sgld_step(adam_only, g, opt2, sched, off, rng);

  for (int i = 0; i < 2; ++i) {
    CHECK((set.positions[i] - (adam_only.positions[i] + 2.0 * eps[i])).norm() == 0.0);
  }
}

TEST_CASE("non-finite gradients are rejected") {
  GaussianSet set(1, 0);
  set.count = 1;
  Gradients g(set);
  g.positions[0].x() = std::numeric_limits<double>::quiet_NaN();
  OptimizerState opt = OptimizerState::for_set(set);
  LrSchedule sched;
  NoiseParams noise;
  RngPool pool(5);
  CHECK_THROWS_AS(sgld_step(set, g, opt, sched, noise, pool.stream("n")), runtime_failure);
}

TEST_CASE("reset_moments zeroes a single row across groups") {
  GaussianSet set(3, 0);
  set.count = 3;
  OptimizerState opt = OptimizerState::for_set(set);
  for (auto* grp : {&opt.positions, &opt.scales, &opt.rotations, &opt.opacities, &opt.colors}) {
    for (double& v : grp->m) v = 1.0;
    for (double& v : grp->v) v = 2.0;
  }
  opt.reset_moments(1, set);
  CHECK(opt.positions.m[3 * 1] == 0.0);
  CHECK(opt.positions.m[3 * 0] == 1.0);
  CHECK(opt.positions.m[3 * 2] == 1.0);
  CHECK(opt.opacities.v[1] == 0.0);
  CHECK(opt.opacities.v[0] == 2.0);
  CHECK(opt.colors.m[3 * 1] == 0.0);
  CHECK_THROWS_AS(opt.reset_moments(5, set), contract_error);
}
