#include "mcsplat/render.hpp"

#include <algorithm>
#include <cmath>

namespace mcsplat {

namespace {

// Real SH basis, 3DGS coefficient ordering and signs.
// kSH0 comes from the header (shared with initialization's inverse DC map).
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

// Basis values and (optionally) their direction partials for degree <= 3.
void sh_basis(int degree, const Vec3& d, double* y, Vec3* dy) {
  const double x = d[0], yy = d[1], z = d[2];
  y[0] = kSH0;
  if (dy) dy[0] = Vec3::Zero();
  if (degree < 1) return;
  y[1] = -kSH1 * yy;
  y[2] = kSH1 * z;
  y[3] = -kSH1 * x;
  if (dy) {
    dy[1] = Vec3(0, -kSH1, 0);
    dy[2] = Vec3(0, 0, kSH1);
    dy[3] = Vec3(-kSH1, 0, 0);
  }
  if (degree < 2) return;
  const double xx = x * x, yy2 = yy * yy, zz = z * z;
  y[4] = kSH2[0] * x * yy;
  y[5] = kSH2[1] * yy * z;
  y[6] = kSH2[2] * (2 * zz - xx - yy2);
  y[7] = kSH2[3] * x * z;
  y[8] = kSH2[4] * (xx - yy2);
  if (dy) {
    dy[4] = kSH2[0] * Vec3(yy, x, 0);
    dy[5] = kSH2[1] * Vec3(0, z, yy);
    dy[6] = kSH2[2] * Vec3(-2 * x, -2 * yy, 4 * z);
    dy[7] = kSH2[3] * Vec3(z, 0, x);
    dy[8] = kSH2[4] * Vec3(2 * x, -2 * yy, 0);
  }
  if (degree < 3) return;
  y[9] = kSH3[0] * yy * (3 * xx - yy2);
  y[10] = kSH3[1] * x * yy * z;
  y[11] = kSH3[2] * yy * (4 * zz - xx - yy2);
  y[12] = kSH3[3] * z * (2 * zz - 3 * xx - 3 * yy2);
  y[13] = kSH3[4] * x * (4 * zz - xx - yy2);
  y[14] = kSH3[5] * z * (xx - yy2);
  y[15] = kSH3[6] * x * (xx - yy2);
  if (dy) {
    dy[9] = kSH3[0] * Vec3(6 * x * yy, 3 * xx - 3 * yy2, 0);
    dy[10] = kSH3[1] * Vec3(yy * z, x * z, x * yy);
    dy[11] = kSH3[2] * Vec3(-2 * x * yy, 4 * zz - xx - 3 * yy2, 8 * yy * z);
    dy[12] = kSH3[3] * Vec3(-6 * x * z, -6 * yy * z, 6 * zz - 3 * xx - 3 * yy2);
    dy[13] = kSH3[4] * Vec3(4 * zz - 3 * xx - yy2, -2 * x * yy, 8 * x * z);
    dy[14] = kSH3[5] * Vec3(2 * x * z, -2 * yy * z, xx - yy2);
    dy[15] = kSH3[6] * Vec3(3 * xx - yy2, -2 * x * yy, 0);
  }
}

// Shared per-sample evaluation: composite, its sequential reference, and the
// backward replay must all run the exact same arithmetic.
struct AlphaEval {
  double mx, my;
  double ia, ib, ic;  // inverse 2x2 covariance
  double opacity;

  // Returns the Gaussian falloff too so backward can reuse it.
  double alpha(double px, double py, double* falloff) const {
    double dx = px - mx, dy = py - my;
    double q = dx * (dx * ia + dy * ib) + dy * (dx * ib + dy * ic);
    double g = std::exp(-0.5 * q);
    double a = opacity * g;
    if (falloff) *falloff = g;
    if (a < kAlphaSkip) return 0.0;
    return std::min(a, kAlphaClamp);
  }
};

AlphaEval make_alpha_eval(const Projected2DGaussian& g) {
  const double a = g.cov(0, 0), b = g.cov(0, 1), c = g.cov(1, 1);
  const double det = a * c - b * b;
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw runtime_failure("alpha_at: degenerate 2x2 covariance");
  }
  return AlphaEval{g.mean[0], g.mean[1], c / det, -b / det, a / det, g.opacity};
}

struct IntRect {
  int x0, x1, y0, y1;  // inclusive; x0 > x1 encodes empty
  bool empty() const { return x0 > x1 || y0 > y1; }
};

IntRect support_rect(const Projected2DGaussian& g, int width, int height) {
  IntRect r{1, 0, 1, 0};
  if (!(g.opacity > kAlphaSkip)) return r;
  const double a = g.cov(0, 0), b = g.cov(0, 1), c = g.cov(1, 1);
  const double mid = 0.5 * (a + c);
  const double lam_max = mid + std::sqrt(std::max(0.0, mid * mid - (a * c - b * b)));
  const double radius = std::sqrt(std::max(0.0, lam_max * 2.0 * std::log(g.opacity / kAlphaSkip)));
  r.x0 = std::max(0, static_cast<int>(std::ceil(g.mean[0] - radius - 0.5)));
  r.x1 = std::min(width - 1, static_cast<int>(std::floor(g.mean[0] + radius - 0.5)));
  r.y0 = std::max(0, static_cast<int>(std::ceil(g.mean[1] - radius - 0.5)));
  r.y1 = std::min(height - 1, static_cast<int>(std::floor(g.mean[1] + radius - 0.5)));
  return r;
}

struct Prepared {
  std::vector<AlphaEval> eval;
  std::vector<IntRect> rect;
};

Prepared prepare(const std::vector<Projected2DGaussian>& projected, int width, int height) {
  Prepared p;
  p.eval.reserve(projected.size());
  p.rect.reserve(projected.size());
  for (const auto& g : projected) {
    p.eval.push_back(make_alpha_eval(g));
    p.rect.push_back(support_rect(g, width, height));
  }
  return p;
}

void check_composite_order(const std::vector<Projected2DGaussian>& projected) {
  for (size_t j = 1; j < projected.size(); ++j) {
    const auto& a = projected[j - 1];
    const auto& b = projected[j];
    bool ordered = a.depth < b.depth || (a.depth == b.depth && a.source < b.source);
    MCSPLAT_CHECK(ordered, "composite: input not in (depth, source) order");
  }
}

// One pixel, front to back over `list`. Returns entries walked.
template <typename ListT>
int walk_pixel(const ListT& list, const Prepared& prep,
               const std::vector<Projected2DGaussian>& projected, int px, int py, Vec3* color,
               double* transmittance) {
  const double sx = px + 0.5, sy = py + 0.5;
  Vec3 c = Vec3::Zero();
  double t = 1.0;
  int walked = 0;
  for (int idx : list) {
    ++walked;
    const IntRect& r = prep.rect[idx];
    if (px < r.x0 || px > r.x1 || py < r.y0 || py > r.y1) continue;
    double a = prep.eval[idx].alpha(sx, sy, nullptr);
    if (a == 0.0) continue;
    double w = a * t;
    c += projected[idx].color * w;
    t *= 1.0 - a;
    if (t < kTransmittanceMin) break;
  }
  *color = c;
  *transmittance = t;
  return walked;
}

struct AllIndices {
  int n;
  struct Iter {
    int v;
    int operator*() const { return v; }
    Iter& operator++() {
      ++v;
      return *this;
    }
    bool operator!=(const Iter& o) const { return v != o.v; }
  };
  Iter begin() const { return {0}; }
  Iter end() const { return {n}; }
};

}  // namespace

Vec3 eval_color(const double* coeffs, int degree, const Vec3& dir, uint8_t* clamped_out) {
  MCSPLAT_CHECK(degree >= 0 && degree <= 3, "eval_color: degree must be in [0,3]");
  MCSPLAT_CHECK(dir.squaredNorm() > 0.0, "eval_color: zero view direction");
  const int n = (degree + 1) * (degree + 1);
  double y[16];
  sh_basis(degree, dir.normalized(), y, nullptr);
  Vec3 rgb;
  uint8_t clamped = 0;
  for (int ch = 0; ch < 3; ++ch) {
    double v = 0.5;
    for (int b = 0; b < n; ++b) v += y[b] * coeffs[ch * n + b];
    if (v < 0.0) {
      v = 0.0;
      clamped |= uint8_t(1 << ch);
    }
    rgb[ch] = v;
  }
  if (clamped_out) *clamped_out = clamped;
  return rgb;
}

std::vector<Projected2DGaussian> project(const GaussianSet& set, const Camera& cam) {
  cam.validate();
  std::vector<Projected2DGaussian> out;
  out.reserve(set.count);
  const Vec3 cam_center = cam.center();
  for (int i = 0; i < set.count; ++i) {
    Projected2DGaussian pg;
    pg.source = i;
    pg.opacity = set.opacity(i);
    const Mat3 sigma = assemble_covariance(set.raw_scales[i], set.rotations[i]);
    if (cam.mode == CameraMode::kIdentity2D) {
      pg.mean = set.positions[i].head<2>();
      pg.cov = sigma.topLeftCorner<2, 2>();
      pg.depth = static_cast<double>(i);
      pg.view_dir = Vec3::UnitZ();
    } else {
      const Vec3 pc = cam.rotation * set.positions[i] + cam.translation;
      if (!(pc[2] > cam.near)) continue;
      const double z = pc[2];
      pg.mean = Vec2(cam.fx * pc[0] / z + cam.cx, cam.fy * pc[1] / z + cam.cy);
      pg.depth = z;
      Eigen::Matrix<double, 2, 3> j;
      j << cam.fx / z, 0, -cam.fx * pc[0] / (z * z), 0, cam.fy / z, -cam.fy * pc[1] / (z * z);
      const Mat3 v = cam.rotation * sigma * cam.rotation.transpose();
      pg.cov = j * v * j.transpose() + Mat2::Identity() * kBlurFloor;
      pg.view_dir = (set.positions[i] - cam_center).normalized();
    }
    pg.color = eval_color(set.color_ptr(i), set.sh_degree, pg.view_dir, &pg.color_clamped);
    out.push_back(pg);
  }
  return out;
}

void sort_by_depth(std::vector<Projected2DGaussian>& projected) {
  std::sort(projected.begin(), projected.end(),
            [](const Projected2DGaussian& a, const Projected2DGaussian& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.source < b.source;
            });
}

double alpha_at(const Projected2DGaussian& g, const Vec2& x) {
  return make_alpha_eval(g).alpha(x[0], x[1], nullptr);
}

bool pixel_bounds(const Projected2DGaussian& g, int width, int height, int* x0, int* x1, int* y0,
                  int* y1) {
  IntRect r = support_rect(g, width, height);
  *x0 = r.x0;
  *x1 = r.x1;
  *y0 = r.y0;
  *y1 = r.y1;
  return !r.empty();
}

RenderOutput composite(std::vector<Projected2DGaussian> projected, const Camera& cam) {
  cam.validate();
  check_composite_order(projected);
  RenderOutput out;
  out.width = cam.width;
  out.height = cam.height;
  out.image = Image(cam.width, cam.height);
  out.transmittance.assign(out.image.pixels(), 1.0);
  out.contrib_count.assign(out.image.pixels(), 0);
  out.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  out.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  out.tile_lists.assign(static_cast<size_t>(out.tiles_x) * out.tiles_y, {});

  Prepared prep = prepare(projected, cam.width, cam.height);
  for (size_t j = 0; j < projected.size(); ++j) {
    const IntRect& r = prep.rect[j];
    if (r.empty()) continue;
    for (int ty = r.y0 / kTileSize; ty <= r.y1 / kTileSize; ++ty) {
      for (int tx = r.x0 / kTileSize; tx <= r.x1 / kTileSize; ++tx) {
        out.tile_lists[static_cast<size_t>(ty) * out.tiles_x + tx].push_back(static_cast<int>(j));
      }
    }
  }

  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      const auto& list = out.tile_lists[(py / kTileSize) * static_cast<size_t>(out.tiles_x) +
                                        px / kTileSize];
      Vec3 c;
      double t;
      int walked = walk_pixel(list, prep, projected, px, py, &c, &t);
      size_t pix = static_cast<size_t>(py) * cam.width + px;
      out.image.at(py, px, 0) = c[0];
      out.image.at(py, px, 1) = c[1];
      out.image.at(py, px, 2) = c[2];
      out.transmittance[pix] = t;
      out.contrib_count[pix] = walked;
    }
  }
  out.projected = std::move(projected);
  return out;
}

Image composite_sequential(const std::vector<Projected2DGaussian>& projected, const Camera& cam) {
  cam.validate();
  check_composite_order(projected);
  Prepared prep = prepare(projected, cam.width, cam.height);
  Image img(cam.width, cam.height);
  AllIndices all{static_cast<int>(projected.size())};
  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      Vec3 c;
      double t;
      walk_pixel(all, prep, projected, px, py, &c, &t);
      img.at(py, px, 0) = c[0];
      img.at(py, px, 1) = c[1];
      img.at(py, px, 2) = c[2];
    }
  }
  return img;
}

RenderOutput render(const GaussianSet& set, const Camera& cam) {
  auto projected = project(set, cam);
  sort_by_depth(projected);
  return composite(std::move(projected), cam);
}

Gradients render_backward(const GaussianSet& set, const Camera& cam, const RenderOutput& out,
                          const Image& dL_dC) {
  MCSPLAT_CHECK(out.width == cam.width && out.height == cam.height,
                "render_backward: output/camera shape mismatch");
  MCSPLAT_CHECK(dL_dC.width == out.width && dL_dC.height == out.height,
                "render_backward: gradient image shape mismatch");
  Gradients grads(set);
  MCSPLAT_CHECK(grads.shapes_match(set), "render_backward: buffer shape mismatch");

  const size_t n = out.projected.size();
  Prepared prep = prepare(out.projected, out.width, out.height);
  std::vector<Vec2> d_mean(n, Vec2::Zero());
  std::vector<Mat2> d_cov(n, Mat2::Zero());
  std::vector<Vec3> d_color(n, Vec3::Zero());
  std::vector<double> d_opacity(n, 0.0);

  // Per-pixel reverse replay of the forward walk.
  for (int py = 0; py < out.height; ++py) {
    for (int px = 0; px < out.width; ++px) {
      const size_t pix = static_cast<size_t>(py) * out.width + px;
      const auto& list = out.tile_list_for_pixel(px, py);
      const int walked = out.contrib_count[pix];
      if (walked == 0) continue;
      const Vec3 gpix(dL_dC.at(py, px, 0), dL_dC.at(py, px, 1), dL_dC.at(py, px, 2));
      const double sx = px + 0.5, sy = py + 0.5;
      double t_running = out.transmittance[pix];
      Vec3 suffix = Vec3::Zero();
      for (int k = walked - 1; k >= 0; --k) {
        const int idx = list[k];
        const IntRect& r = prep.rect[idx];
        if (px < r.x0 || px > r.x1 || py < r.y0 || py > r.y1) continue;
        double falloff;
        const double a = prep.eval[idx].alpha(sx, sy, &falloff);
        if (a == 0.0) continue;
        const double t_before = t_running / (1.0 - a);
        const double w = a * t_before;
        const Vec3& col = out.projected[idx].color;
        d_color[idx] += gpix * w;
        const double da = gpix.dot(col * t_before - suffix / (1.0 - a));
        if (out.projected[idx].opacity * falloff < kAlphaClamp) {
          d_opacity[idx] += da * falloff;
          const double dq = da * out.projected[idx].opacity * (-0.5 * falloff);
          const AlphaEval& e = prep.eval[idx];
          const double dx = sx - e.mx, dy = sy - e.my;
          const Vec2 u(dx * e.ia + dy * e.ib, dx * e.ib + dy * e.ic);  // cov^-1 * d
          d_mean[idx] += -2.0 * dq * u;  // dq/dmean = -2 u
          d_cov[idx] += -dq * u * u.transpose();
        }
        suffix += col * w;
        t_running = t_before;
      }
    }
  }

  // Chain projected-space gradients back to raw parameters.
  const Vec3 cam_center = cam.center();
  const int degree = set.sh_degree;
  const int nb = set.coeffs_per_channel();
  for (size_t jdx = 0; jdx < n; ++jdx) {
    const Projected2DGaussian& pg = out.projected[jdx];
    const int i = pg.source;

    // Color: clamped channels pass no gradient.
    double y[16];
    Vec3 dy[16];
    sh_basis(degree, pg.view_dir, y, degree > 0 ? dy : nullptr);
    Vec3 ddir = Vec3::Zero();
    const double* coeffs = set.color_ptr(i);
    for (int ch = 0; ch < 3; ++ch) {
      if (pg.color_clamped & (1 << ch)) continue;
      const double gch = d_color[jdx][ch];
      for (int b = 0; b < nb; ++b) {
        grads.colors[static_cast<size_t>(i) * 3 * nb + ch * nb + b] += y[b] * gch;
        if (degree > 0) ddir += gch * coeffs[ch * nb + b] * dy[b];
      }
    }

    const double o = pg.opacity;
    grads.raw_opacities[i] += d_opacity[jdx] * o * (1.0 - o);

    Vec3 d_pos = Vec3::Zero();
    Mat3 d_sigma = Mat3::Zero();
    if (cam.mode == CameraMode::kIdentity2D) {
      d_pos.head<2>() = d_mean[jdx];
      d_sigma.topLeftCorner<2, 2>() = d_cov[jdx];
    } else {
      const Vec3 pc = cam.rotation * set.positions[i] + cam.translation;
      const double z = pc[2];
      Eigen::Matrix<double, 2, 3> j;
      j << cam.fx / z, 0, -cam.fx * pc[0] / (z * z), 0, cam.fy / z, -cam.fy * pc[1] / (z * z);
      const Mat3 sigma = assemble_covariance(set.raw_scales[i], set.rotations[i]);
      const Mat3 v = cam.rotation * sigma * cam.rotation.transpose();

      Vec3 d_pc = j.transpose() * d_mean[jdx];
      // cov2d depends on the Jacobian's linearization point as well.
      const Eigen::Matrix<double, 2, 3> dj = 2.0 * d_cov[jdx] * j * v;
      const double fz2x = -cam.fx / (z * z), fz2y = -cam.fy / (z * z);
      d_pc[0] += dj(0, 2) * fz2x;
      d_pc[1] += dj(1, 2) * fz2y;
      d_pc[2] += dj(0, 0) * fz2x + dj(1, 1) * fz2y + dj(0, 2) * (2 * cam.fx * pc[0] / (z * z * z)) +
                 dj(1, 2) * (2 * cam.fy * pc[1] / (z * z * z));
      d_pos = cam.rotation.transpose() * d_pc;
      d_sigma = cam.rotation.transpose() * (j.transpose() * d_cov[jdx] * j) * cam.rotation;

      if (degree > 0 && ddir.squaredNorm() > 0.0) {
        const Vec3 vdir = set.positions[i] - cam_center;
        const double vn = vdir.norm();
        d_pos += (ddir - pg.view_dir * pg.view_dir.dot(ddir)) / vn;
      }
    }

    // Sigma = M M^T with M = R diag(s).
    const Vec4& q = set.rotations[i];
    const double qn = q.norm();
    const Vec4 qh = q / qn;
    const Mat3 rot = rotation_matrix(set.rotations[i]);
    const Vec3 s = set.scale(i);
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 dm = (d_sigma + d_sigma.transpose()) * m;
    Mat3 d_rot;
    for (int kk = 0; kk < 3; ++kk) {
      double dsk = dm.col(kk).dot(rot.col(kk));
      grads.raw_scales[i][kk] += dsk * s[kk];
      d_rot.col(kk) = dm.col(kk) * s[kk];
    }
    const double w = qh[0], x = qh[1], yq = qh[2], zq = qh[3];
    Mat3 drw, drx, dry, drz;
    drw << 0, -zq, yq, zq, 0, -x, -yq, x, 0;
    drx << 0, yq, zq, yq, -2 * x, -w, zq, w, -2 * x;
    dry << -2 * yq, x, w, x, 0, zq, -w, zq, -2 * yq;
    drz << -2 * zq, -w, x, w, -2 * zq, yq, x, yq, 0;
    Vec4 d_qh(2.0 * (d_rot.array() * drw.array()).sum(), 2.0 * (d_rot.array() * drx.array()).sum(),
              2.0 * (d_rot.array() * dry.array()).sum(), 2.0 * (d_rot.array() * drz.array()).sum());
    grads.rotations[i] += (d_qh - qh * qh.dot(d_qh)) / qn;

    if (set.planar) d_pos[2] = 0.0;
    grads.positions[i] += d_pos;
  }
  return grads;
}

}  // namespace mcsplat
