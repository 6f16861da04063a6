#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "advpatch/attack.hpp"
#include "advpatch/image.hpp"

namespace advpatch {

// On-disk attack artifacts: one PGM per patch, transforms.csv with the
// assignment flags, and per-iteration metrics as JSON lines.

inline std::string patch_filename(int m) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "patch_%03d.pgm", m);
  return buf;
}

inline void save_transforms_csv(const PatchSet& ps, const AssignmentMatrix& A,
                                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "m,k,s,tx,ty,active\n";
  char buf[256];
  for (int m = 0; m < ps.M(); ++m) {
    for (int k = 0; k < ps.K(); ++k) {
      const auto& t = ps.transforms[m][k];
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%d\n", m, k, t.s,
                    t.tx, t.ty, A.active(m, k) ? 1 : 0);
      f << buf;
    }
  }
}

inline void load_transforms_csv(const std::string& path, PatchSet& ps,
                                AssignmentMatrix& A) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(f, line);  // header
  struct Row {
    int m, k, active;
    TransformParams t;
  };
  std::vector<Row> rows;
  int max_m = -1, max_k = -1;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    Row r{};
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%d", &r.m, &r.k, &r.t.s,
                    &r.t.tx, &r.t.ty, &r.active) != 6)
      throw std::runtime_error("malformed transforms.csv row: " + line);
    max_m = std::max(max_m, r.m);
    max_k = std::max(max_k, r.k);
    rows.push_back(r);
  }
  const int M = max_m + 1, K = max_k + 1;
  ps.transforms.assign(M, std::vector<TransformParams>(K));
  A = AssignmentMatrix::all_true(M, K);
  std::fill(A.a.begin(), A.a.end(), 0);
  for (const auto& r : rows) {
    ps.transforms[r.m][r.k] = r.t;
    A.a[std::size_t(r.m) * K + r.k] = r.active ? 1 : 0;
  }
}

inline void save_metrics_jsonl(const std::vector<IterMetrics>& metrics,
                               const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& im : metrics) {
    nlohmann::json j;
    j["iter"] = im.iter;
    j["phase"] = im.phase;
    j["loss_train"] = im.loss_train;
    j["loss_test"] = im.loss_test;
    j["per_target"] = im.per_target;
    j["assignment"] = im.assignment;
    f << j.dump() << "\n";
  }
}

inline void save_attack_artifacts(const AttackResult& res,
                                  const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int m = 0; m < res.ps.M(); ++m)
    save_pgm(res.ps.patches[m], (fs::path(dir) / patch_filename(m)).string());
  save_transforms_csv(res.ps, res.A, (fs::path(dir) / "transforms.csv").string());
  save_metrics_jsonl(res.metrics, (fs::path(dir) / "metrics.jsonl").string());
}

// Loads patches + transforms + assignment back; metrics are not needed to
// resume evaluation or simulation.
inline void load_attack_artifacts(const std::string& dir, PatchSet& ps,
                                  AssignmentMatrix& A) {
  namespace fs = std::filesystem;
  load_transforms_csv((fs::path(dir) / "transforms.csv").string(), ps, A);
  ps.patches.clear();
  for (int m = 0; m < A.M; ++m)
    ps.patches.push_back(load_pgm((fs::path(dir) / patch_filename(m)).string()));
}

}  // namespace advpatch
