#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "advpatch/geometry.hpp"
#include "advpatch/image.hpp"
#include "advpatch/rng.hpp"

namespace advpatch {

// Differentiable patch placement. Output-driven inverse warp: each output
// pixel maps back through the transform; pixels landing inside the patch
// square take a bilinear sample, everything else keeps the base image.
// Align-corners convention with clamp-to-edge neighbors, chosen explicitly
// because the convention changes the gradients.

using Patch = Image;  // grayscale, gradient-enabled by construction

inline double bilinear_sample(const Patch& p, double u, double v) {
  const double x = (u + 1.0) * 0.5 * (p.width - 1);
  const double y = (v + 1.0) * 0.5 * (p.height - 1);
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double wx = x - x0, wy = y - y0;
  auto cx = [&](int i) { return i < 0 ? 0 : (i >= p.width ? p.width - 1 : i); };
  auto cy = [&](int i) { return i < 0 ? 0 : (i >= p.height ? p.height - 1 : i); };
  const double p00 = p.at(cy(y0), cx(x0)), p01 = p.at(cy(y0), cx(x0 + 1));
  const double p10 = p.at(cy(y0 + 1), cx(x0)), p11 = p.at(cy(y0 + 1), cx(x0 + 1));
  return (1 - wy) * ((1 - wx) * p00 + wx * p01) +
         wy * ((1 - wx) * p10 + wx * p11);
}

namespace detail {

struct SampleGrad {
  double value;
  double du, dv;  // d value / d normalized coords
};

inline SampleGrad bilinear_sample_grad(const Patch& p, double u, double v) {
  const double x = (u + 1.0) * 0.5 * (p.width - 1);
  const double y = (v + 1.0) * 0.5 * (p.height - 1);
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double wx = x - x0, wy = y - y0;
  auto cx = [&](int i) { return i < 0 ? 0 : (i >= p.width ? p.width - 1 : i); };
  auto cy = [&](int i) { return i < 0 ? 0 : (i >= p.height ? p.height - 1 : i); };
  const double p00 = p.at(cy(y0), cx(x0)), p01 = p.at(cy(y0), cx(x0 + 1));
  const double p10 = p.at(cy(y0 + 1), cx(x0)), p11 = p.at(cy(y0 + 1), cx(x0 + 1));
  SampleGrad g;
  g.value = (1 - wy) * ((1 - wx) * p00 + wx * p01) +
            wy * ((1 - wx) * p10 + wx * p11);
  const double dvdx = (1 - wy) * (p01 - p00) + wy * (p11 - p10);
  const double dvdy = (1 - wx) * (p10 - p00) + wx * (p11 - p01);
  g.du = dvdx * 0.5 * (p.width - 1);
  g.dv = dvdy * 0.5 * (p.height - 1);
  return g;
}

// scatter g into the four neighbors used by the sample
inline void bilinear_scatter(Patch& dpatch, double u, double v, double g) {
  const double x = (u + 1.0) * 0.5 * (dpatch.width - 1);
  const double y = (v + 1.0) * 0.5 * (dpatch.height - 1);
  const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  const double wx = x - x0, wy = y - y0;
  auto cx = [&](int i) {
    return i < 0 ? 0 : (i >= dpatch.width ? dpatch.width - 1 : i);
  };
  auto cy = [&](int i) {
    return i < 0 ? 0 : (i >= dpatch.height ? dpatch.height - 1 : i);
  };
  dpatch.at(cy(y0), cx(x0)) += g * (1 - wy) * (1 - wx);
  dpatch.at(cy(y0), cx(x0 + 1)) += g * (1 - wy) * wx;
  dpatch.at(cy(y0 + 1), cx(x0)) += g * wy * (1 - wx);
  dpatch.at(cy(y0 + 1), cx(x0 + 1)) += g * wy * wx;
}

}  // namespace detail

// Composites patch into base through transform m (affine or projective).
inline Image place(const Image& base, const Patch& patch, const Mat3& m) {
  const Mat3 minv = m.inverse();
  Image out(base.height, base.width);
  const double su = 2.0 / (base.width - 1), sv = 2.0 / (base.height - 1);
  for (int y = 0; y < base.height; ++y) {
    const double v = y * sv - 1.0;
    for (int x = 0; x < base.width; ++x) {
      const double u = x * su - 1.0;
      const double pu = minv.m[0] * u + minv.m[1] * v + minv.m[2];
      const double pv = minv.m[3] * u + minv.m[4] * v + minv.m[5];
      const double pw = minv.m[6] * u + minv.m[7] * v + minv.m[8];
      const double uu = pu / pw, vv = pv / pw;
      out.at(y, x) = (std::abs(uu) <= 1.0 && std::abs(vv) <= 1.0)
                         ? bilinear_sample(patch, uu, vv)
                         : base.at(y, x);
    }
  }
  return out;
}

// Reverse-mode companion of place(). Accumulates into dpatch the gradient
// w.r.t. patch pixels and into dminv the gradient w.r.t. the entries of
// m^-1 (chain to transform parameters with dmat_from_dinv below). Either
// output may be null to skip it.
inline void place_vjp(const Image& dout, const Image& base, const Patch& patch,
                      const Mat3& m, Patch* dpatch, Mat3* dminv) {
  const Mat3 minv = m.inverse();
  const double su = 2.0 / (base.width - 1), sv = 2.0 / (base.height - 1);
  for (int y = 0; y < base.height; ++y) {
    const double v = y * sv - 1.0;
    for (int x = 0; x < base.width; ++x) {
      const double g = dout.at(y, x);
      if (g == 0.0) continue;
      const double u = x * su - 1.0;
      const double pu = minv.m[0] * u + minv.m[1] * v + minv.m[2];
      const double pv = minv.m[3] * u + minv.m[4] * v + minv.m[5];
      const double pw = minv.m[6] * u + minv.m[7] * v + minv.m[8];
      const double uu = pu / pw, vv = pv / pw;
      if (!(std::abs(uu) <= 1.0 && std::abs(vv) <= 1.0)) continue;
      if (dpatch) detail::bilinear_scatter(*dpatch, uu, vv, g);
      if (!dminv) continue;
      const auto sg = detail::bilinear_sample_grad(patch, uu, vv);
      const double gu = g * sg.du, gv = g * sg.dv;
      const double q[3] = {u, v, 1.0};
      const double inv_w = 1.0 / pw;
      const double gw = -(gu * pu + gv * pv) * inv_w * inv_w;
      for (int j = 0; j < 3; ++j) {
        dminv->m[0 * 3 + j] += gu * q[j] * inv_w;
        dminv->m[1 * 3 + j] += gv * q[j] * inv_w;
        dminv->m[2 * 3 + j] += gw * q[j];
      }
    }
  }
}

// dL/dM from dL/dM^-1: dM^-1 = -M^-1 dM M^-1.
inline Mat3 dmat_from_dinv(const Mat3& m, const Mat3& dminv) {
  const Mat3 minv_t = m.inverse().transposed();
  Mat3 r = minv_t * dminv * minv_t;
  for (auto& v : r.m) v = -v;
  return r;
}

inline double mat_dot(const Mat3& a, const Mat3& b) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += a.m[i] * b.m[i];
  return s;
}

// Gradient of a scalar w.r.t. (s, alpha, tx, ty) given its gradient w.r.t.
// the affine matrix entries.
struct TransformGrads {
  double ds = 0.0, dalpha = 0.0, dtx = 0.0, dty = 0.0;
};

inline TransformGrads transform_param_grads(const TransformParams& p,
                                            const Mat3& daffine) {
  TransformGrads g;
  g.ds = mat_dot(daffine, make_affine_ds(p));
  g.dalpha = mat_dot(daffine, make_affine_dalpha(p));
  g.dtx = mat_dot(daffine, make_affine_dtx());
  g.dty = mat_dot(daffine, make_affine_dty());
  return g;
}

// --- transform clamping and augmentation -----------------------------------

inline TransformParams clamp_transform(const TransformParams& p) {
  TransformParams r = p;
  r.s = std::min(std::max(r.s, kScaleMin), kScaleMax);
  r.tx = std::min(std::max(r.tx, -kTranslationLimit), kTranslationLimit);
  r.ty = std::min(std::max(r.ty, -kTranslationLimit), kTranslationLimit);
  return r;
}

// Gaussian jitter on (s, tx, ty), re-clamped. alpha stays 0.
inline TransformParams perturb_transform(const TransformParams& p, Rng& rng,
                                         double sigma = 0.1) {
  TransformParams r = p;
  r.s += rng.normal(0.0, sigma);
  r.tx += rng.normal(0.0, sigma);
  r.ty += rng.normal(0.0, sigma);
  return clamp_transform(r);
}

inline Image add_image_noise(const Image& img, Rng& rng, double sigma = 10.0) {
  Image out = img;
  if (sigma > 0.0)
    for (auto& v : out.px) v += rng.normal(0.0, sigma);
  return out;
}

// --- perspective jitter -----------------------------------------------------

// Homography mapping the four source points to the four destination points
// (normalized coordinates). 8x8 Gaussian elimination with partial pivoting.
inline Mat3 homography_from_points(const std::array<Vec2, 4>& src,
                                   const std::array<Vec2, 4>& dst) {
  double a[8][9] = {};
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x, y = src[i].y;
    const double X = dst[i].x, Y = dst[i].y;
    double* r0 = a[2 * i];
    double* r1 = a[2 * i + 1];
    r0[0] = x; r0[1] = y; r0[2] = 1; r0[6] = -X * x; r0[7] = -X * y; r0[8] = X;
    r1[3] = x; r1[4] = y; r1[5] = 1; r1[6] = -Y * x; r1[7] = -Y * y; r1[8] = Y;
  }
  for (int col = 0; col < 8; ++col) {
    int piv = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-12)
      throw std::runtime_error("degenerate perspective corners");
    if (piv != col)
      for (int c = 0; c < 9; ++c) std::swap(a[piv][c], a[col][c]);
    for (int r = 0; r < 8; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 9; ++c) a[r][c] -= f * a[col][c];
    }
  }
  Mat3 h;
  for (int i = 0; i < 8; ++i) h.m[i] = a[i][8] / a[i][i];
  h.m[8] = 1.0;
  return h;
}

// With probability prob, a homography displacing each corner of the
// normalized square by independent uniform offsets up to distortion_scale
// (of the unit half-extent); identity otherwise.
inline Mat3 random_perspective_homography(Rng& rng, double distortion_scale = 0.2,
                                          double prob = 0.9) {
  if (rng.uniform01() >= prob || distortion_scale <= 0.0)
    return Mat3::identity();
  const std::array<Vec2, 4> src = {Vec2{-1, -1}, Vec2{1, -1}, Vec2{1, 1},
                                   Vec2{-1, 1}};
  std::array<Vec2, 4> dst;
  for (int i = 0; i < 4; ++i) {
    const double dx = rng.uniform(-distortion_scale, distortion_scale);
    const double dy = rng.uniform(-distortion_scale, distortion_scale);
    dst[i] = {src[i].x + dx, src[i].y + dy};
  }
  return homography_from_points(src, dst);
}

// Whole-image perspective warp with clamp-to-edge sampling, so constant
// images are preserved.
inline Image random_perspective(const Image& img, Rng& rng,
                                double distortion_scale = 0.2,
                                double prob = 0.9) {
  const Mat3 h = random_perspective_homography(rng, distortion_scale, prob);
  bool ident = true;
  const Mat3 id = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (h.m[i] != id.m[i]) ident = false;
  if (ident) return img;
  const Mat3 hinv = h.inverse();
  Image out(img.height, img.width);
  const double su = 2.0 / (img.width - 1), sv = 2.0 / (img.height - 1);
  for (int y = 0; y < img.height; ++y) {
    const double v = y * sv - 1.0;
    for (int x = 0; x < img.width; ++x) {
      const double u = x * su - 1.0;
      Vec2 p = hinv.apply({u, v});
      // clamp to the source square, then bilinear with edge clamping
      p.x = std::min(std::max(p.x, -1.0), 1.0);
      p.y = std::min(std::max(p.y, -1.0), 1.0);
      out.at(y, x) = bilinear_sample(img, p.x, p.y);
    }
  }
  return out;
}

// Training-time augmentation knobs; eval mode turns everything off.
struct AugmentConfig {
  double transform_sigma = 0.1;
  double perspective_scale = 0.2;
  double perspective_prob = 0.9;
  double noise_sigma = 10.0;
};

// Bilinear image resize (align corners), used for patch initialization from
// an arbitrary PGM.
inline Image resize_bilinear(const Image& src, int height, int width) {
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    const double v = height > 1 ? 2.0 * y / (height - 1) - 1.0 : 0.0;
    for (int x = 0; x < width; ++x) {
      const double u = width > 1 ? 2.0 * x / (width - 1) - 1.0 : 0.0;
      out.at(y, x) = bilinear_sample(src, u, v);
    }
  }
  return out;
}

}  // namespace advpatch
