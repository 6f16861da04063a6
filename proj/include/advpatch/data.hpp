#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpatch/geometry.hpp"
#include "advpatch/image.hpp"
#include "advpatch/rng.hpp"

namespace advpatch {

// Synthetic scenes: a bright subject glyph (ellipse torso + head disk, plus
// a dark orientation dot encoding phi) over textured background noise.
// Rendering is plain per-pixel rasterization with fixed rounding so a given
// (pose, seed) always produces the identical image.

struct Scene {
  Image image;
  std::array<double, 4> pose{};  // x, y, z, phi in the camera frame
};

struct Dataset {
  std::vector<Scene> scenes;
  std::uint64_t seed = 0;

  std::size_t size() const { return scenes.size(); }
  bool empty() const { return scenes.empty(); }
};

namespace glyph {
// physical subject dimensions, meters
inline constexpr double kTorsoHalfY = 0.25;
inline constexpr double kTorsoHalfZ = 0.40;
inline constexpr double kHeadRadius = 0.14;
inline constexpr double kHeadOffsetZ = 0.55;
inline constexpr double kMarkerRadius = 0.07;
inline constexpr double kMarkerOrbit = 0.16;
}  // namespace glyph

struct GlyphStyle {
  double torso_brightness = 235.0;
  double head_brightness = 215.0;
  double marker_brightness = 45.0;
};

// Rasterizes the subject glyph at the given camera-frame pose into img.
// The glyph is positioned so that the centroid of its bright silhouette
// (torso minus the marker hole, plus head) lands on the projected pose.
// Throws if the silhouette misses the frame entirely.
inline void draw_subject_glyph(Image& img, const std::array<double, 4>& pose,
                               const CameraModel& cam,
                               const GlyphStyle& style = {}) {
  const double x = pose[0];
  if (!(x > 0.0)) throw std::runtime_error("unlabelable scene");
  const Vec2 proj = project_point(cam, {x, pose[1], pose[2]});
  const double ppm_u = cam.fx / x;  // pixels per meter, horizontal
  const double ppm_v = cam.fy / x;

  // ellipse semi-axes and feature offsets in pixels (v axis points down)
  const double at = glyph::kTorsoHalfY * ppm_u, bt = glyph::kTorsoHalfZ * ppm_v;
  const double rh_u = glyph::kHeadRadius * ppm_u, rh_v = glyph::kHeadRadius * ppm_v;
  const double rm_u = glyph::kMarkerRadius * ppm_u, rm_v = glyph::kMarkerRadius * ppm_v;
  const double head_dv = -glyph::kHeadOffsetZ * ppm_v;
  const double phi = pose[3];
  const double marker_du = -glyph::kMarkerOrbit * std::cos(phi) * ppm_u;
  const double marker_dv = -glyph::kMarkerOrbit * std::sin(phi) * ppm_v;

  // silhouette centroid offset from torso center
  const double area_t = M_PI * at * bt;
  const double area_h = M_PI * rh_u * rh_v;
  const double area_m = M_PI * rm_u * rm_v;
  const double area = area_t - area_m + area_h;
  const double cdu = (-area_m * marker_du + area_h * 0.0) / area;
  const double cdv = (-area_m * marker_dv + area_h * head_dv) / area;
  const double tu = proj.x - cdu;  // torso center in pixels
  const double tv = proj.y - cdv;

  // silhouette bounding box must touch the frame
  const double lo_u = std::min(tu - at, tu + head_dv * 0 - rh_u);
  const double hi_u = std::max(tu + at, tu + rh_u);
  const double lo_v = std::min(tv - bt, tv + head_dv - rh_v);
  const double hi_v = std::max(tv + bt, tv + head_dv + rh_v);
  if (hi_u < 0 || lo_u > img.width - 1 || hi_v < 0 || lo_v > img.height - 1)
    throw std::runtime_error("unlabelable scene");

  const int y0 = std::max(0, int(std::floor(lo_v)));
  const int y1 = std::min(img.height - 1, int(std::ceil(hi_v)));
  const int x0 = std::max(0, int(std::floor(lo_u)));
  const int x1 = std::min(img.width - 1, int(std::ceil(hi_u)));
  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      const double du = px - tu, dv = py - tv;
      const double et = (du / at) * (du / at) + (dv / bt) * (dv / bt);
      const double hu = (du - 0.0) / rh_u, hv = (dv - head_dv) / rh_v;
      const double mu = (du - marker_du) / rm_u, mv = (dv - marker_dv) / rm_v;
      if (mu * mu + mv * mv <= 1.0)
        img.at(py, px) = style.marker_brightness;
      else if (et <= 1.0)
        img.at(py, px) = style.torso_brightness;
      else if (hu * hu + hv * hv <= 1.0)
        img.at(py, px) = style.head_brightness;
    }
  }
}

// Value-noise background: coarse random grid, bilinearly upsampled, plus
// fine per-pixel jitter.
inline Image textured_background(int height, int width, Rng& rng) {
  const int gh = 7, gw = 11;
  std::vector<double> grid(gh * gw);
  for (auto& v : grid) v = rng.uniform(20.0, 80.0);
  Image img(height, width);
  for (int y = 0; y < height; ++y) {
    const double gy = double(y) / (height - 1) * (gh - 1);
    const int iy = std::min(int(gy), gh - 2);
    const double fy = gy - iy;
    for (int x = 0; x < width; ++x) {
      const double gx = double(x) / (width - 1) * (gw - 1);
      const int ix = std::min(int(gx), gw - 2);
      const double fx = gx - ix;
      const double v00 = grid[iy * gw + ix], v01 = grid[iy * gw + ix + 1];
      const double v10 = grid[(iy + 1) * gw + ix], v11 = grid[(iy + 1) * gw + ix + 1];
      img.at(y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                     fy * ((1 - fx) * v10 + fx * v11);
    }
  }
  for (auto& v : img.px) v += rng.uniform(-6.0, 6.0);
  return img;
}

inline Scene render_scene(const std::array<double, 4>& pose,
                          const CameraModel& cam, Rng& rng) {
  Scene sc;
  sc.pose = pose;
  sc.image = textured_background(cam.height, cam.width, rng);
  GlyphStyle style;
  style.torso_brightness += rng.uniform(-10.0, 10.0);
  style.head_brightness += rng.uniform(-10.0, 10.0);
  draw_subject_glyph(sc.image, pose, cam, style);
  return sc;
}

struct PoseSampling {
  double x_min = 0.5, x_max = 3.0;
  double y_abs = 1.0;
  double z_abs = 0.5;
  double positive_y_bias = 0.7;  // fraction of subjects at y > 0
};

// n scenes with per-scene RNG streams derived from (seed, index);
// unlabelable draws are rejected and redrawn.
inline Dataset sample_dataset(int n, const CameraModel& cam, std::uint64_t seed,
                              const PoseSampling& ps = {}) {
  if (n <= 0) throw std::invalid_argument("dataset size must be positive");
  Dataset ds;
  ds.seed = seed;
  ds.scenes.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, stream_tag::kScene, std::uint64_t(i));
    for (;;) {
      std::array<double, 4> pose;
      pose[0] = rng.uniform(ps.x_min, ps.x_max);
      const bool pos = rng.uniform01() < ps.positive_y_bias;
      pose[1] = pos ? rng.uniform(0.0, ps.y_abs) : rng.uniform(-ps.y_abs, 0.0);
      pose[2] = rng.uniform(-ps.z_abs, ps.z_abs);
      pose[3] = rng.uniform(-M_PI, M_PI);
      try {
        ds.scenes.push_back(render_scene(pose, cam, rng));
        break;
      } catch (const std::runtime_error&) {
        continue;  // subject missed the frame; redraw
      }
    }
  }
  return ds;
}

// Deterministic shuffle split into train/test; |train| = round(f * |c|).
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& c,
                                                 double train_fraction,
                                                 std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must be in (0, 1)");
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = Rng::stream(seed, stream_tag::kSplit);
  rng.shuffle(idx);
  const std::size_t n_train =
      std::size_t(std::llround(train_fraction * double(c.size())));
  Dataset s, e;
  s.seed = e.seed = seed;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? s : e).scenes.push_back(c.scenes[idx[i]]);
  return {std::move(s), std::move(e)};
}

// Random permutation of [0, n) chunked into batches; one pass covers every
// index exactly once.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                                     std::size_t batch_size,
                                                     Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(idx.begin() + i,
                     idx.begin() + std::min(n, i + batch_size));
  }
  return out;
}

// --- directory layout: scenes/NNNNN.pgm + labels.csv -----------------------

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  std::ofstream labels(fs::path(dir) / "labels.csv");
  if (!labels) throw std::runtime_error("cannot write labels.csv in " + dir);
  labels << "index,x,y,z,phi\n";
  char buf[256];
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%05zu", i);
    save_pgm(ds.scenes[i].image,
             (fs::path(dir) / "scenes" / (std::string(buf) + ".pgm")).string());
    const auto& p = ds.scenes[i].pose;
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g\n", i, p[0],
                  p[1], p[2], p[3]);
    labels << buf;
  }
}

// Ingests any directory in the layout above; images may come from external
// sources as long as each row of labels.csv has a matching PGM.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream labels(fs::path(dir) / "labels.csv");
  if (!labels)
    throw std::runtime_error("missing labels.csv in dataset dir: " + dir);
  std::string line;
  std::getline(labels, line);  // header
  Dataset ds;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    Scene sc;
    std::size_t index = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &index, &sc.pose[0],
                    &sc.pose[1], &sc.pose[2], &sc.pose[3]) != 5)
      throw std::runtime_error("malformed labels.csv row: " + line);
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.pgm", index);
    sc.image = load_pgm((fs::path(dir) / "scenes" / name).string());
    ds.scenes.push_back(std::move(sc));
  }
  return ds;
}

}  // namespace advpatch
