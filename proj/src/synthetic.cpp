#include "mcsplat/synthetic.hpp"

#include <cmath>

#include "mcsplat/render.hpp"

namespace mcsplat {

GaussianSet random_scene(int count, int degree, CameraMode mode, int width, int height,
                         SubStream& rng) {
  MCSPLAT_CHECK(count >= 0, "random_scene: negative count");
  GaussianSet set(count, degree);
  set.count = count;
  set.planar = mode == CameraMode::kIdentity2D;
  const int cpc = set.coeffs_per_channel();
  for (int i = 0; i < count; ++i) {
    if (mode == CameraMode::kIdentity2D) {
      set.positions[i] = Vec3(rng.u01() * width, rng.u01() * height, 0.0);
      for (int a = 0; a < 3; ++a) {
        set.raw_scales[i][a] = std::log(0.5 + 3.5 * rng.u01());
      }
    } else {
      set.positions[i] = Vec3(2.0 * rng.u01() - 1.0, 2.0 * rng.u01() - 1.0,
                              2.0 * rng.u01() - 1.0);
      for (int a = 0; a < 3; ++a) {
        set.raw_scales[i][a] = std::log(0.05 + 0.25 * rng.u01());
      }
    }
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    if (q.norm() < 1e-6) q = Vec4(1, 0, 0, 0);
    set.rotations[i] = q / q.norm();
    set.raw_opacities[i] = logit(0.05 + 0.9 * rng.u01());
    double* col = set.color_ptr(i);
    for (int c = 0; c < 3; ++c) {
      // channel = 0.5 + kSH0*c0 stays in [0.05, 0.95] before directional terms
      col[c * cpc] = (0.05 + 0.9 * rng.u01() - 0.5) / kSH0;
      for (int b = 1; b < cpc; ++b) col[c * cpc + b] = 0.1 * (2.0 * rng.u01() - 1.0);
    }
  }
  return set;
}

Camera random_pinhole(int width, int height, SubStream& rng) {
  // Position on a jittered orbit; forward axis points at the origin.
  const double theta = 2.0 * M_PI * rng.u01();
  const double phi = std::acos(2.0 * rng.u01() - 1.0);
  const double radius = 3.5 + rng.u01();
  const Vec3 center(radius * std::sin(phi) * std::cos(theta),
                    radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi));
  const Vec3 fwd = (-center).normalized();  // +z looks at the origin
  Vec3 up_hint(0, 1, 0);
  if (std::abs(fwd.dot(up_hint)) > 0.99) up_hint = Vec3(1, 0, 0);
  const Vec3 right = up_hint.cross(fwd).normalized();
  const Vec3 down = fwd.cross(right);  // completes a right-handed frame
  Mat3 rot;
  rot.row(0) = right;
  rot.row(1) = down;
  rot.row(2) = fwd;
  const double f = 1.2 * width;
  return Camera::pinhole(width, height, f, f, 0.5 * width, 0.5 * height, rot, -rot * center);
}

Image test_image(int width, int height) {
  MCSPLAT_CHECK(width > 0 && height > 0, "test_image: empty size");
  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      const double cx = u - 0.5, cy = v - 0.5;
      const double r = std::sqrt(cx * cx + cy * cy);
      const double base = 0.5 + 0.28 * std::sin(2.0 * M_PI * (1.5 * u + 0.7)) *
                                    std::cos(2.0 * M_PI * (1.1 * v + 0.3));
      const double swirl = 0.18 * std::sin(2.0 * M_PI * (2.3 * u * v + 0.25));
      const double vignette = 0.22 * std::exp(-4.0 * r * r);
      double rgb[3];
      rgb[0] = base + swirl + vignette;
      rgb[1] = 0.5 + 0.30 * std::sin(2.0 * M_PI * (1.2 * v - 0.8 * u)) - 0.5 * swirl + vignette;
      rgb[2] = 0.45 + 0.25 * std::cos(2.0 * M_PI * (0.9 * u + 1.6 * v)) + 0.4 * vignette;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::min(1.0, std::max(0.0, rgb[c]));
      }
    }
  }
  return img;
}

}  // namespace mcsplat
