#include "mcsplat/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mcsplat::oracle {
namespace {

using ld = long double;

ld logistic_ld(ld x) { return 1.0L / (1.0L + std::exp(-x)); }

// R = (w^2 - v.v) I + 2 v v^T + 2 w [v]x, on the normalized quaternion.
void quat_rotation(const Vec4& q, ld r[3][3]) {
  const ld n = std::sqrt(static_cast<ld>(q[0]) * q[0] + static_cast<ld>(q[1]) * q[1] +
                         static_cast<ld>(q[2]) * q[2] + static_cast<ld>(q[3]) * q[3]);
  MCSPLAT_CHECK(n > 0.0L, "oracle: zero-norm quaternion");
  const ld w = q[0] / n;
  const ld v[3] = {q[1] / n, q[2] / n, q[3] / n};
  const ld s = w * w - (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r[i][j] = 2.0L * v[i] * v[j];
    r[i][i] += s;
  }
  r[0][1] -= 2.0L * w * v[2];
  r[0][2] += 2.0L * w * v[1];
  r[1][0] += 2.0L * w * v[2];
  r[1][2] -= 2.0L * w * v[0];
  r[2][0] -= 2.0L * w * v[1];
  r[2][1] += 2.0L * w * v[0];
}

// Sigma = R diag(exp(2*raw)) R^T by explicit accumulation.
void covariance3(const Vec3& raw_scale, const Vec4& quat, ld sig[3][3]) {
  ld r[3][3];
  quat_rotation(quat, r);
  const ld d[3] = {std::exp(2.0L * static_cast<ld>(raw_scale[0])),
                   std::exp(2.0L * static_cast<ld>(raw_scale[1])),
                   std::exp(2.0L * static_cast<ld>(raw_scale[2]))};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      ld acc = 0.0L;
      for (int k = 0; k < 3; ++k) acc += r[i][k] * d[k] * r[j][k];
      sig[i][j] = acc;
    }
  }
}

// Real SH basis values, same coefficient convention as the renderer but
// evaluated standalone in extended precision.
void sh_values(int degree, const ld dir[3], ld y[16]) {
  const ld c0 = 0.28209479177387814L;
  const ld c1 = 0.4886025119029199L;
  const ld c2[5] = {1.0925484305920792L, -1.0925484305920792L, 0.31539156525252005L,
                    -1.0925484305920792L, 0.5462742152960396L};
  const ld c3[7] = {-0.5900435899266435L, 2.890611442640554L,  -0.4570457994644658L,
                    0.3731763325901154L,  -0.4570457994644658L, 1.445305721320277L,
                    -0.5900435899266435L};
  const ld x = dir[0], v = dir[1], z = dir[2];
  y[0] = c0;
  if (degree < 1) return;
  y[1] = -c1 * v;
  y[2] = c1 * z;
  y[3] = -c1 * x;
  if (degree < 2) return;
  const ld xx = x * x, vv = v * v, zz = z * z;
  y[4] = c2[0] * x * v;
  y[5] = c2[1] * v * z;
  y[6] = c2[2] * (2.0L * zz - xx - vv);
  y[7] = c2[3] * x * z;
  y[8] = c2[4] * (xx - vv);
  if (degree < 3) return;
  y[9] = c3[0] * v * (3.0L * xx - vv);
  y[10] = c3[1] * x * v * z;
  y[11] = c3[2] * v * (4.0L * zz - xx - vv);
  y[12] = c3[3] * z * (2.0L * zz - 3.0L * xx - 3.0L * vv);
  y[13] = c3[4] * x * (4.0L * zz - xx - vv);
  y[14] = c3[5] * z * (xx - vv);
  y[15] = c3[6] * x * (xx - vv);
}

struct OracleSplat {
  ld mean[2];
  ld cov_a, cov_b, cov_c;
  ld depth;
  ld opacity;
  ld color[3];
  int index;
};

}  // namespace

Image naive_composite(const GaussianSet& set, const Camera& cam) {
  cam.validate();
  std::vector<OracleSplat> splats;
  splats.reserve(set.count);

  ld cam_center[3] = {0.0L, 0.0L, 0.0L};
  if (cam.mode == CameraMode::kPinhole3D) {
    const Vec3 c = cam.center();
    for (int a = 0; a < 3; ++a) cam_center[a] = c[a];
  }

  const int n_coeffs = set.coeffs_per_channel();
  for (int i = 0; i < set.count; ++i) {
    OracleSplat s;
    s.index = i;
    s.opacity = logistic_ld(set.raw_opacities[i]);
    ld sig[3][3];
    covariance3(set.raw_scales[i], set.rotations[i], sig);

    ld dir[3] = {0.0L, 0.0L, 1.0L};
    if (cam.mode == CameraMode::kIdentity2D) {
      s.mean[0] = set.positions[i][0];
      s.mean[1] = set.positions[i][1];
      s.cov_a = sig[0][0];
      s.cov_b = sig[0][1];
      s.cov_c = sig[1][1];
      s.depth = static_cast<ld>(i);
    } else {
      ld pc[3];
      for (int r = 0; r < 3; ++r) {
        ld acc = cam.translation[r];
        for (int c = 0; c < 3; ++c) acc += static_cast<ld>(cam.rotation(r, c)) * set.positions[i][c];
        pc[r] = acc;
      }
      if (!(pc[2] > static_cast<ld>(cam.near))) continue;
      const ld z = pc[2];
      s.mean[0] = static_cast<ld>(cam.fx) * pc[0] / z + cam.cx;
      s.mean[1] = static_cast<ld>(cam.fy) * pc[1] / z + cam.cy;
      s.depth = z;
      // T = J * W (2x3), then cov2 = T Sigma T^T.
      const ld j[2][3] = {{cam.fx / z, 0.0L, -cam.fx * pc[0] / (z * z)},
                          {0.0L, cam.fy / z, -cam.fy * pc[1] / (z * z)}};
      ld t[2][3];
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
          ld acc = 0.0L;
          for (int k = 0; k < 3; ++k) acc += j[r][k] * static_cast<ld>(cam.rotation(k, c));
          t[r][c] = acc;
        }
      }
      ld cov2[2][2];
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
          ld acc = 0.0L;
          for (int p = 0; p < 3; ++p) {
            for (int q = 0; q < 3; ++q) acc += t[r][p] * sig[p][q] * t[c][q];
          }
          cov2[r][c] = acc;
        }
      }
      s.cov_a = cov2[0][0] + 0.3L;
      s.cov_b = cov2[0][1];
      s.cov_c = cov2[1][1] + 0.3L;
      ld dn = 0.0L;
      for (int a = 0; a < 3; ++a) {
        dir[a] = set.positions[i][a] - cam_center[a];
        dn += dir[a] * dir[a];
      }
      dn = std::sqrt(dn);
      MCSPLAT_CHECK(dn > 0.0L, "oracle: camera coincides with a Gaussian center");
      for (int a = 0; a < 3; ++a) dir[a] /= dn;
    }

    ld y[16];
    sh_values(set.sh_degree, dir, y);
    const double* coeffs = set.color_ptr(i);
    for (int ch = 0; ch < 3; ++ch) {
      ld v = 0.5L;
      for (int b = 0; b < n_coeffs; ++b) v += y[b] * static_cast<ld>(coeffs[ch * n_coeffs + b]);
      s.color[ch] = v < 0.0L ? 0.0L : v;
    }
    splats.push_back(s);
  }

  std::stable_sort(splats.begin(), splats.end(), [](const OracleSplat& a, const OracleSplat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });

  const ld skip = 1.0L / 255.0L;
  Image img(cam.width, cam.height);
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const ld sx = px + 0.5L, sy = py + 0.5L;
      ld acc[3] = {0.0L, 0.0L, 0.0L};
      ld trans = 1.0L;
      for (const OracleSplat& s : splats) {
        const ld det = s.cov_a * s.cov_c - s.cov_b * s.cov_b;
        if (!(det > 0.0L)) throw runtime_failure("oracle: degenerate 2x2 covariance");
        const ld dx = sx - s.mean[0];
        const ld dy = sy - s.mean[1];
        const ld q = (s.cov_c * dx * dx - 2.0L * s.cov_b * dx * dy + s.cov_a * dy * dy) / det;
        ld alpha = s.opacity * std::exp(-0.5L * q);
        if (alpha < skip) continue;
        if (alpha > 0.999L) alpha = 0.999L;
        for (int ch = 0; ch < 3; ++ch) acc[ch] += s.color[ch] * alpha * trans;
        trans *= 1.0L - alpha;
      }
      for (int ch = 0; ch < 3; ++ch) img.at(py, px, ch) = static_cast<double>(acc[ch]);
    }
  }
  return img;
}

double windowed_ssim(const Image& a, const Image& b) {
  MCSPLAT_CHECK(a.same_shape(b), "oracle ssim: shape mismatch");
  MCSPLAT_CHECK(a.width >= 11 && a.height >= 11, "oracle ssim: image below window size");
  ld w[11][11];
  ld wsum = 0.0L;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      const ld di = i - 5, dj = j - 5;
      w[i][j] = std::exp(-(di * di + dj * dj) / (2.0L * 1.5L * 1.5L));
      wsum += w[i][j];
    }
  }
  for (auto& row : w) {
    for (ld& v : row) v /= wsum;
  }

  const ld c1 = 0.01L * 0.01L, c2 = 0.03L * 0.03L;
  ld total = 0.0L;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        ld mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int i = 0; i < 11; ++i) {
          const int yy = std::clamp(y + i - 5, 0, a.height - 1);
          for (int j = 0; j < 11; ++j) {
            const int xx = std::clamp(x + j - 5, 0, a.width - 1);
            const ld va = a.at(yy, xx, ch);
            const ld vb = b.at(yy, xx, ch);
            mx += w[i][j] * va;
            my += w[i][j] * vb;
            mxx += w[i][j] * va * va;
            myy += w[i][j] * vb * vb;
            mxy += w[i][j] * va * vb;
          }
        }
        const ld sxx = mxx - mx * mx;
        const ld syy = myy - my * my;
        const ld sxy = mxy - mx * my;
        total += ((2.0L * mx * my + c1) * (2.0L * sxy + c2)) /
                 ((mx * mx + my * my + c1) * (sxx + syy + c2));
      }
    }
  }
  return static_cast<double>(total / (static_cast<ld>(a.pixels()) * 3.0L));
}

Gradients finite_diff_grad(const GaussianSet& set, const LossFn& loss, double h) {
  MCSPLAT_CHECK(h > 0.0, "finite_diff_grad: h must be positive");
  GaussianSet work = set;
  Gradients g(set);
  auto probe = [&](double* slot) {
    const double orig = *slot;
    *slot = orig + h;
    const double up = loss(work);
    *slot = orig - h;
    const double dn = loss(work);
    *slot = orig;
    return (up - dn) / (2.0 * h);
  };
  const int cpc = set.coeffs_per_channel();
  for (int i = 0; i < set.count; ++i) {
    for (int a = 0; a < 3; ++a) g.positions[i][a] = probe(&work.positions[i][a]);
    for (int a = 0; a < 3; ++a) g.raw_scales[i][a] = probe(&work.raw_scales[i][a]);
    for (int a = 0; a < 4; ++a) g.rotations[i][a] = probe(&work.rotations[i][a]);
    g.raw_opacities[i] = probe(&work.raw_opacities[i]);
    double* col = work.color_ptr(i);
    for (int a = 0; a < 3 * cpc; ++a) {
      g.colors[static_cast<size_t>(i) * 3 * cpc + a] = probe(&col[a]);
    }
  }
  return g;
}

double gauss_slice_integral(double opacity, double variance) {
  MCSPLAT_CHECK(variance > 0.0, "gauss_slice_integral: variance must be positive");
  return opacity * std::sqrt(2.0 * M_PI * variance);
}

std::pair<double, double> slice_integral(double opacity, double variance, int n_copies,
                                         double o_copy, double var_copy) {
  MCSPLAT_CHECK(variance > 0.0 && var_copy > 0.0, "slice_integral: variances must be positive");
  MCSPLAT_CHECK(n_copies >= 1, "slice_integral: need at least one copy");
  MCSPLAT_CHECK(opacity > 0.0 && opacity < 1.0 && o_copy > 0.0 && o_copy <= 1.0,
                "slice_integral: opacities out of range");
  const ld sig = std::max(std::sqrt(static_cast<ld>(variance)),
                          std::sqrt(static_cast<ld>(var_copy)));
  const ld lo = -8.0L * sig;
  const int m = 100000;  // trapezoid intervals
  const ld dx = (16.0L * sig) / m;
  ld sum_old = 0.0L, sum_new = 0.0L;
  for (int k = 0; k <= m; ++k) {
    const ld x = lo + dx * k;
    const ld f_old = static_cast<ld>(opacity) * std::exp(-x * x / (2.0L * variance));
    const ld g = std::exp(-x * x / (2.0L * var_copy));
    const ld f_new = 1.0L - std::pow(1.0L - static_cast<ld>(o_copy) * g, static_cast<ld>(n_copies));
    const ld wt = (k == 0 || k == m) ? 0.5L : 1.0L;
    sum_old += wt * f_old;
    sum_new += wt * f_new;
  }
  return {static_cast<double>(sum_old * dx), static_cast<double>(sum_new * dx)};
}

namespace {

// fact[k] = k! in long double, enough for the 51-way relocation ceiling.
const ld* factorials() {
  static ld f[52];
  static bool ready = false;
  if (!ready) {
    f[0] = 1.0L;
    for (int k = 1; k < 52; ++k) f[k] = f[k - 1] * k;
    ready = true;
  }
  return f;
}

}  // namespace

double relocation_opacity(double o_old, int n) {
  MCSPLAT_CHECK(o_old > 0.0 && o_old < 1.0, "relocation_opacity: opacity out of range");
  MCSPLAT_CHECK(n >= 1 && n <= 51, "relocation_opacity: bad copy count");
  return static_cast<double>(1.0L -
                             std::pow(1.0L - static_cast<ld>(o_old), 1.0L / static_cast<ld>(n)));
}

double relocation_var_factor(double o_old, int n) {
  MCSPLAT_CHECK(o_old > 0.0 && o_old < 1.0, "relocation_var_factor: opacity out of range");
  MCSPLAT_CHECK(n >= 1 && n <= 51, "relocation_var_factor: bad copy count");
  const ld o_new = 1.0L - std::pow(1.0L - static_cast<ld>(o_old), 1.0L / static_cast<ld>(n));
  const ld* fact = factorials();
  ld denom = 0.0L;
  for (int i = 1; i <= n; ++i) {
    for (int k = 0; k < i; ++k) {
      const ld binom = fact[i - 1] / (fact[k] * fact[i - 1 - k]);
      const ld sign = (k % 2 == 0) ? 1.0L : -1.0L;
      denom += binom * sign * std::pow(o_new, static_cast<ld>(k + 1)) /
               std::sqrt(static_cast<ld>(k + 1));
    }
  }
  MCSPLAT_CHECK(denom > 0.0L, "relocation_var_factor: non-positive series sum");
  const ld o = o_old;
  return static_cast<double>((o * o) / (denom * denom));
}

CloningRmse compare_cloning(double o_old, double variance, int n) {
  MCSPLAT_CHECK(variance > 0.0, "compare_cloning: variance must be positive");
  MCSPLAT_CHECK(n >= 1, "compare_cloning: n must be >= 1");
  const ld o_new = relocation_opacity(o_old, n);
  const ld f = relocation_var_factor(o_old, n);
  const ld var = variance;
  const ld var_ours = f * var;
  const ld sig = std::sqrt(std::max(var, var_ours));
  const int m = 4000;
  const ld lo = -8.0L * sig;
  const ld dx = 16.0L * sig / m;
  ld e_naive = 0.0L, e_center = 0.0L, e_ours = 0.0L;
  for (int k = 0; k <= m; ++k) {
    const ld x = lo + dx * k;
    const ld g = std::exp(-x * x / (2.0L * var));
    const ld g_ours = std::exp(-x * x / (2.0L * var_ours));
    const ld orig = static_cast<ld>(o_old) * g;
    const ld p = static_cast<ld>(n);
    const ld naive = 1.0L - std::pow(1.0L - static_cast<ld>(o_old) * g, p);
    const ld center = 1.0L - std::pow(1.0L - o_new * g, p);
    const ld ours = 1.0L - std::pow(1.0L - o_new * g_ours, p);
    e_naive += (naive - orig) * (naive - orig);
    e_center += (center - orig) * (center - orig);
    e_ours += (ours - orig) * (ours - orig);
  }
  const ld cnt = m + 1;
  CloningRmse out;
  out.naive = static_cast<double>(std::sqrt(e_naive / cnt));
  out.center_corrected = static_cast<double>(std::sqrt(e_center / cnt));
  out.ours = static_cast<double>(std::sqrt(e_ours / cnt));
  return out;
}

void adam_step(double* params, const double* grads, double* m, double* v, int count, long t,
               double lr, double beta1, double beta2, double eps) {
  MCSPLAT_CHECK(t >= 1, "adam_step: t is 1-based");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (int i = 0; i < count; ++i) {
    const double grad = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace mcsplat::oracle
