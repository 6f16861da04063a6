#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace advpatch {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// 3x3 row-major matrix; doubles as affine transform and homography.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    const auto& a = m;
    return a[0] * (a[4] * a[8] - a[5] * a[7]) -
           a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
  }

  // General inverse via adjugate; throws on near-zero determinant.
  Mat3 inverse() const {
    const double d = det();
    if (std::abs(d) < 1e-12) throw std::runtime_error("singular transform");
    const auto& a = m;
    Mat3 r;
    r.m = {(a[4] * a[8] - a[5] * a[7]) / d, (a[2] * a[7] - a[1] * a[8]) / d,
           (a[1] * a[5] - a[2] * a[4]) / d, (a[5] * a[6] - a[3] * a[8]) / d,
           (a[0] * a[8] - a[2] * a[6]) / d, (a[2] * a[3] - a[0] * a[5]) / d,
           (a[3] * a[7] - a[4] * a[6]) / d, (a[1] * a[6] - a[0] * a[7]) / d,
           (a[0] * a[4] - a[1] * a[3]) / d};
    return r;
  }

  // Applies the homography to (x, y, 1) and renormalizes.
  Vec2 apply(const Vec2& p) const {
    const double u = m[0] * p.x + m[1] * p.y + m[2];
    const double v = m[3] * p.x + m[4] * p.y + m[5];
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {u / w, v / w};
  }
};

using AffineMatrix = Mat3;

// Transform parameter clamp bounds: keeps the patch visible in frame.
inline constexpr double kScaleMin = 0.2;
inline constexpr double kScaleMax = 0.4;
inline constexpr double kTranslationEps = 1e-6;
inline constexpr double kTranslationLimit = 1.0 - kTranslationEps;

// Scale + rotation + translation of a patch in normalized image
// coordinates. Attack-optimized transforms always keep alpha = 0; rotating
// a patch would demand a roll/pitch setpoint the attacker cannot hold.
struct TransformParams {
  double s = 0.3;
  double alpha = 0.0;
  double tx = 0.0;
  double ty = 0.0;
};

inline AffineMatrix make_affine(const TransformParams& p) {
  const double c = std::cos(p.alpha), sn = std::sin(p.alpha);
  AffineMatrix a;
  a.m = {p.s * c, -p.s * sn, p.tx, p.s * sn, p.s * c, p.ty, 0, 0, 1};
  return a;
}

// Partial derivatives of make_affine w.r.t. (s, alpha, tx, ty).
inline AffineMatrix make_affine_ds(const TransformParams& p) {
  const double c = std::cos(p.alpha), sn = std::sin(p.alpha);
  AffineMatrix a;
  a.m = {c, -sn, 0, sn, c, 0, 0, 0, 0};
  return a;
}
inline AffineMatrix make_affine_dalpha(const TransformParams& p) {
  const double c = std::cos(p.alpha), sn = std::sin(p.alpha);
  AffineMatrix a;
  a.m = {-p.s * sn, -p.s * c, 0, p.s * c, -p.s * sn, 0, 0, 0, 0};
  return a;
}
inline AffineMatrix make_affine_dtx() {
  AffineMatrix a;
  a.m = {0, 0, 1, 0, 0, 0, 0, 0, 0};
  return a;
}
inline AffineMatrix make_affine_dty() {
  AffineMatrix a;
  a.m = {0, 0, 0, 0, 0, 1, 0, 0, 0};
  return a;
}

// Analytic inverse of a scaled-rotation + translation matrix.
inline AffineMatrix invert_affine(const AffineMatrix& m) {
  // recover s^2 from the upper-left block
  const double s2 = m(0, 0) * m(0, 0) + m(1, 0) * m(1, 0);
  if (std::sqrt(s2) < 1e-9) throw std::runtime_error("singular transform");
  AffineMatrix r;
  const double a = m(0, 0) / s2, b = m(1, 0) / s2;
  // R(alpha)^T / s applied to -(t)
  r.m = {a,  b,  -(a * m(0, 2) + b * m(1, 2)),
         -b, a,  b * m(0, 2) - a * m(1, 2),
         0,  0,  1};
  return r;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

// Position + yaw pose. Convention: x forward, y left, z up; yaw about z,
// wrapped to (-pi, pi].
struct Pose {
  Vec3 position;
  double yaw = 0.0;
};

inline Pose compose_pose(const Pose& a, const Pose& b) {
  const double c = std::cos(a.yaw), sn = std::sin(a.yaw);
  Pose r;
  r.position = {a.position.x + c * b.position.x - sn * b.position.y,
                a.position.y + sn * b.position.x + c * b.position.y,
                a.position.z + b.position.z};
  r.yaw = wrap_angle(a.yaw + b.yaw);
  return r;
}

// Pose of b expressed in a's body frame: compose_pose(a, result) == b.
inline Pose relative_pose(const Pose& a, const Pose& b) {
  const double c = std::cos(a.yaw), sn = std::sin(a.yaw);
  const Vec3 d = b.position - a.position;
  Pose r;
  r.position = {c * d.x + sn * d.y, -sn * d.x + c * d.y, d.z};
  r.yaw = wrap_angle(b.yaw - a.yaw);
  return r;
}

// Pinhole intrinsics for the victim camera. Image v-axis points down.
struct CameraModel {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 80.0;
  double cy = 48.0;
  int width = 160;
  int height = 96;
};

// p_cam in camera frame (x depth, y left, z up) -> pixel (u, v).
inline Vec2 project_point(const CameraModel& cam, const Vec3& p_cam) {
  if (!(p_cam.x > 0.0)) throw std::runtime_error("behind camera");
  return {cam.cx - cam.fx * (p_cam.y / p_cam.x),
          cam.cy - cam.fy * (p_cam.z / p_cam.x)};
}

// Attacker pose relative to the victim camera at which a planar patch of
// physical width patch_width_m, filling scale/translation p of the image,
// would appear. patch_index selects which cuboid face (yaw offsets of
// pi/2) must look back at the camera.
inline Pose patch_transform_to_relative_pose(const CameraModel& cam,
                                             const TransformParams& p,
                                             double patch_width_m,
                                             int patch_index) {
  if (p.s < kScaleMin - 1e-12)
    throw std::runtime_error("patch too small to resolve depth");
  const double d = (cam.fx * patch_width_m) / (p.s * cam.width);
  Pose r;
  r.position = {d, -(p.tx * cam.width / 2.0) * d / cam.fx,
                -(p.ty * cam.height / 2.0) * d / cam.fy};
  r.yaw = wrap_angle(M_PI + patch_index * (M_PI / 2.0));
  return r;
}

// Physical patch height implied by the anisotropic normalized-coordinate
// stretch: a patch spans 2s of both normalized axes, so its height obeys
// s*H = fy*h_m/d.
inline double patch_height_m(const CameraModel& cam, double patch_width_m) {
  return patch_width_m * (double(cam.height) / cam.width) * (cam.fx / cam.fy);
}

}  // namespace advpatch
