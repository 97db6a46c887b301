#include "mcsplat/loss.hpp"

#include <cmath>
#include <limits>

namespace mcsplat {

namespace {

constexpr int kHalf = kSsimWindow / 2;

const double* window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kSsimWindow);
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      double d = i - kHalf;
      v[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w.data();
}

using Map = std::vector<double>;  // one channel, h*w

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Same-size Gaussian blur with edge replication, separable.
Map blur(const Map& in, int w, int h) {
  const double* k = window();
  Map tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -kHalf; t <= kHalf; ++t) acc += k[t + kHalf] * in[y * w + clampi(x + t, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int t = -kHalf; t <= kHalf; ++t) acc += k[t + kHalf] * tmp[clampi(y + t, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

// Exact adjoint of blur(): scatter with the same replication clamping,
// passes applied in reverse order.
Map blur_adjoint(const Map& g, int w, int h) {
  const double* k = window();
  Map tmp(g.size(), 0.0), out(g.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = g[y * w + x];
      for (int t = -kHalf; t <= kHalf; ++t) tmp[clampi(y + t, 0, h - 1) * w + x] += k[t + kHalf] * v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = tmp[y * w + x];
      for (int t = -kHalf; t <= kHalf; ++t) out[y * w + clampi(x + t, 0, w - 1)] += k[t + kHalf] * v;
    }
  }
  return out;
}

Map channel(const Image& img, int c) {
  Map m(img.pixels());
  for (size_t p = 0; p < img.pixels(); ++p) m[p] = img.data[p * 3 + c];
  return m;
}

// Mean SSIM of one channel; when d_x is non-null, adds d(mean ssim)/dx there.
double ssim_channel(const Map& x, const Map& y, int w, int h, Map* d_x) {
  Map mx = blur(x, w, h), my = blur(y, w, h);
  Map x2(x.size()), y2(y.size()), xy(x.size());
  for (size_t p = 0; p < x.size(); ++p) {
    x2[p] = x[p] * x[p];
    y2[p] = y[p] * y[p];
    xy[p] = x[p] * y[p];
  }
  Map mxx = blur(x2, w, h), myy = blur(y2, w, h), mxy = blur(xy, w, h);

  const double npix = static_cast<double>(x.size());
  double total = 0.0;
  Map g_mx, g_mxx, g_mxy;
  if (d_x) {
    g_mx.assign(x.size(), 0.0);
    g_mxx.assign(x.size(), 0.0);
    g_mxy.assign(x.size(), 0.0);
  }
  for (size_t p = 0; p < x.size(); ++p) {
    const double sx2 = mxx[p] - mx[p] * mx[p];
    const double sy2 = myy[p] - my[p] * my[p];
    const double sxy = mxy[p] - mx[p] * my[p];
    const double a = 2.0 * mx[p] * my[p] + kSsimC1;
    const double b = 2.0 * sxy + kSsimC2;
    const double c = mx[p] * mx[p] + my[p] * my[p] + kSsimC1;
    const double d = sx2 + sy2 + kSsimC2;
    const double cd = c * d;
    const double s = a * b / cd;
    total += s;
    if (d_x) {
      // d(ab)/dmx = 2my*b - 2my*a; d(cd)/dmx = 2mx*d - 2mx*c
      const double ds_dmx =
          ((2.0 * my[p] * b - 2.0 * my[p] * a) - s * (2.0 * mx[p] * d - 2.0 * mx[p] * c)) / cd;
      g_mx[p] = ds_dmx / npix;
      g_mxx[p] = (-s / d) / npix;
      g_mxy[p] = (2.0 * a / cd) / npix;
    }
  }
  if (d_x) {
    Map u1 = blur_adjoint(g_mx, w, h);
    Map u2 = blur_adjoint(g_mxx, w, h);
    Map u3 = blur_adjoint(g_mxy, w, h);
    for (size_t p = 0; p < x.size(); ++p) (*d_x)[p] += u1[p] + 2.0 * x[p] * u2[p] + y[p] * u3[p];
  }
  return total / npix;
}

void check_pair(const Image& a, const Image& b) {
  MCSPLAT_CHECK(a.same_shape(b), "loss: image shape mismatch");
  MCSPLAT_CHECK(a.width > 0 && a.height > 0, "loss: empty image");
}

// Mean SSIM over channels; optional per-pixel gradient w.r.t. the first image.
double ssim_impl(const Image& a, const Image& b, Image* d_a) {
  check_pair(a, b);
  MCSPLAT_CHECK(a.width >= kSsimWindow && a.height >= kSsimWindow,
                "ssim: image smaller than filter window");
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    Map x = channel(a, c), y = channel(b, c);
    Map dx;
    if (d_a) dx.assign(x.size(), 0.0);
    total += ssim_channel(x, y, a.width, a.height, d_a ? &dx : nullptr);
    if (d_a) {
      for (size_t p = 0; p < x.size(); ++p) d_a->data[p * 3 + c] += dx[p] / 3.0;
    }
  }
  return total / 3.0;
}

}  // namespace

double l1_loss(const Image& render, const Image& target) {
  check_pair(render, target);
  double acc = 0.0;
  for (size_t i = 0; i < render.data.size(); ++i) acc += std::abs(render.data[i] - target.data[i]);
  return acc / static_cast<double>(render.data.size());
}

double psnr(const Image& render, const Image& target) {
  check_pair(render, target);
  double acc = 0.0;
  for (size_t i = 0; i < render.data.size(); ++i) {
    double d = render.data[i] - target.data[i];
    acc += d * d;
  }
  double mse = acc / static_cast<double>(render.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

ImageLoss loss_orig(const Image& render, const Image& target, double lambda_dssim) {
  check_pair(render, target);
  ImageLoss out;
  out.d_render = Image(render.width, render.height);
  out.l1 = l1_loss(render, target);

  Image d_ssim_map(render.width, render.height);
  double s = ssim_impl(render, target, &d_ssim_map);
  out.dssim = 1.0 - s;
  out.total = (1.0 - lambda_dssim) * out.l1 + lambda_dssim * out.dssim;

  const double n = static_cast<double>(render.data.size());
  for (size_t i = 0; i < render.data.size(); ++i) {
    double diff = render.data[i] - target.data[i];
    double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.d_render.data[i] = (1.0 - lambda_dssim) * sign / n - lambda_dssim * d_ssim_map.data[i];
  }
  return out;
}

TotalLoss loss_total(const Image& render, const Image& target, const GaussianSet& set,
                     const LossWeights& weights) {
  ImageLoss img = loss_orig(render, target, weights.dssim);
  TotalLoss out;
  out.l1 = img.l1;
  out.dssim = img.dssim;
  out.d_render = std::move(img.d_render);
  out.d_raw_opacity.assign(set.capacity(), 0.0);
  out.d_raw_scale.assign(set.capacity(), Vec3::Zero());
  double sum_o = 0.0, sum_s = 0.0;
  for (int i = 0; i < set.count; ++i) {
    const double o = set.opacity(i);
    sum_o += o;
    out.d_raw_opacity[i] = weights.opacity * o * (1.0 - o);
    const Vec3 s = set.scale(i);
    sum_s += s.sum();
    out.d_raw_scale[i] = weights.scale * s;
  }
  out.reg_opacity = weights.opacity * sum_o;
  out.reg_scale = weights.scale * sum_s;
  out.total = img.total + out.reg_opacity + out.reg_scale;
  return out;
}

}  // namespace mcsplat
