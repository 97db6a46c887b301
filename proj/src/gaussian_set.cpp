#include "mcsplat/gaussian_set.hpp"

namespace mcsplat {

GaussianSet::GaussianSet(int capacity, int degree) {
  MCSPLAT_CHECK(capacity >= 0, "GaussianSet: negative capacity");
  MCSPLAT_CHECK(degree >= 0 && degree <= 3, "GaussianSet: sh_degree must be in [0,3]");
  sh_degree = degree;
  positions.assign(capacity, Vec3::Zero());
  raw_scales.assign(capacity, Vec3::Zero());
  rotations.assign(capacity, Vec4(1, 0, 0, 0));
  raw_opacities.assign(capacity, 0.0);
  colors.assign(static_cast<size_t>(capacity) * 3 * coeffs_per_channel(), 0.0);
}

Gradients::Gradients(const GaussianSet& set) {
  positions.assign(set.capacity(), Vec3::Zero());
  raw_scales.assign(set.capacity(), Vec3::Zero());
  rotations.assign(set.capacity(), Vec4::Zero());
  raw_opacities.assign(set.capacity(), 0.0);
  colors.assign(set.colors.size(), 0.0);
}

void Gradients::set_zero() {
  std::fill(positions.begin(), positions.end(), Vec3::Zero());
  std::fill(raw_scales.begin(), raw_scales.end(), Vec3::Zero());
  std::fill(rotations.begin(), rotations.end(), Vec4::Zero());
  std::fill(raw_opacities.begin(), raw_opacities.end(), 0.0);
  std::fill(colors.begin(), colors.end(), 0.0);
}

bool Gradients::shapes_match(const GaussianSet& set) const {
  return static_cast<int>(positions.size()) == set.capacity() &&
         static_cast<int>(raw_scales.size()) == set.capacity() &&
         static_cast<int>(rotations.size()) == set.capacity() &&
         static_cast<int>(raw_opacities.size()) == set.capacity() &&
         colors.size() == set.colors.size();
}

Mat3 rotation_matrix(const Vec4& q) {
  double n = q.norm();
  MCSPLAT_CHECK(n > 0.0 && std::isfinite(n), "rotation_matrix: zero-norm quaternion");
  double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 assemble_covariance(const Vec3& raw_scale, const Vec4& quat) {
  Mat3 r = rotation_matrix(quat);
  Vec3 s2 = (2.0 * raw_scale).array().exp();  // squared scales
  return r * s2.asDiagonal() * r.transpose();
}

LivenessMask classify_liveness(const GaussianSet& set, double threshold) {
  LivenessMask mask;
  mask.live.resize(set.count);
  for (int i = 0; i < set.count; ++i) {
    bool is_live = set.opacity(i) >= threshold;
    mask.live[i] = is_live ? 1 : 0;
    (is_live ? mask.live_count : mask.dead_count)++;
  }
  return mask;
}

}  // namespace mcsplat
