#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpatch/data.hpp"
#include "advpatch/geometry.hpp"
#include "advpatch/nn.hpp"
#include "advpatch/placement.hpp"
#include "advpatch/rng.hpp"
#include "advpatch/train.hpp"

namespace advpatch {

// Multi-patch / multi-target attack optimization. The loss couples every
// patch to every target through a softmin-weighted expectation, which makes
// the patch-to-target assignment differentiable; four strategies share the
// same machinery:
//   fixed  - patches only, transforms frozen at their random initialization
//   joint  - gradient steps on patches and transforms together
//   split  - alternates patch epochs, random-restart transform search, and
//            sampled assignment updates
//   hybrid - joint warm start, then the split fine-tuning phases with
//            patches frozen

struct TargetSet {
  std::vector<Vec3> targets;

  int K() const { return int(targets.size()); }
};

struct PatchSet {
  std::vector<Patch> patches;                            // M entries
  std::vector<std::vector<TransformParams>> transforms;  // M x K

  int M() const { return int(patches.size()); }
  int K() const { return patches.empty() ? 0 : int(transforms[0].size()); }
};

struct AssignmentMatrix {
  int M = 0, K = 0;
  std::vector<std::uint8_t> a;  // row-major [m][k]

  static AssignmentMatrix all_true(int m, int k) {
    AssignmentMatrix r;
    r.M = m;
    r.K = k;
    r.a.assign(std::size_t(m) * k, 1);
    return r;
  }
  bool active(int m, int k) const { return a[std::size_t(m) * K + k] != 0; }
  void set_column_onehot(int k, int m_star) {
    for (int m = 0; m < M; ++m) a[std::size_t(m) * K + k] = (m == m_star);
  }
  bool column_onehot(int k) const {
    int n = 0;
    for (int m = 0; m < M; ++m) n += active(m, k);
    return n == 1;
  }
  int column_active_count(int k) const {
    int n = 0;
    for (int m = 0; m < M; ++m) n += active(m, k);
    return n;
  }
};

// --- softmin expectation ----------------------------------------------------

inline std::vector<double> softmin_weights(const std::vector<double>& losses) {
  if (losses.empty()) throw std::invalid_argument("softmin over empty set");
  const double lo = *std::min_element(losses.begin(), losses.end());
  std::vector<double> w(losses.size());
  double z = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    w[i] = std::exp(-(losses[i] - lo));
    z += w[i];
  }
  for (auto& v : w) v /= z;
  return w;
}

// E = sum_m softmin(L)_m * L_m, shifted by min(L) for stability.
inline double softmin_expectation(const std::vector<double>& losses) {
  const auto w = softmin_weights(losses);
  double e = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) e += w[i] * losses[i];
  return e;
}

// --- per-pair loss ----------------------------------------------------------

namespace detail_attack {

inline constexpr std::uint64_t kPhaseMain = 1;
inline constexpr std::uint64_t kPhaseRestart = 2;

struct PairRecord {
  double loss = 0.0;
  std::array<double, 4> pose{};
  Mat3 m_total;            // homography * affine actually used
  Mat3 hom;                // perspective component
  TransformParams used;    // post-perturbation, post-clamp parameters
  bool free_s = true, free_tx = true, free_ty = true;
};

// Training mode (rng != nullptr): transform jitter + perspective on the
// patch placement + pixel noise on the composite. Eval mode leaves the
// stored transform untouched.
inline PairRecord forward_pair(const VictimModel& model, ForwardWorkspace& ws,
                               const Image& base, const Patch& patch,
                               const TransformParams& t, const Vec3& target,
                               Rng* rng, const AugmentConfig& aug) {
  PairRecord rec;
  rec.used = t;
  rec.hom = Mat3::identity();
  if (rng) {
    rec.used = perturb_transform(t, *rng, aug.transform_sigma);
    rec.free_s = rec.used.s > kScaleMin && rec.used.s < kScaleMax;
    rec.free_tx = std::abs(rec.used.tx) < kTranslationLimit;
    rec.free_ty = std::abs(rec.used.ty) < kTranslationLimit;
    rec.hom = random_perspective_homography(*rng, aug.perspective_scale,
                                            aug.perspective_prob);
  }
  rec.m_total = rec.hom * make_affine(rec.used);
  Image composite = place(base, patch, rec.m_total);
  if (rng && aug.noise_sigma > 0.0)
    composite = add_image_noise(composite, *rng, aug.noise_sigma);
  rec.pose = forward(model, composite, ws);
  const Vec3 err{rec.pose[0] - target.x, rec.pose[1] - target.y,
                 rec.pose[2] - target.z};
  rec.loss = err.norm();
  return rec;
}

// Backpropagates weight * dloss through the network and placement recorded
// by forward_pair. dpatch and tgrad accumulate; either may be null.
inline void backward_pair(const VictimModel& model, ForwardWorkspace& ws,
                          const PairRecord& rec, const Image& base,
                          const Patch& patch, const Vec3& target, double weight,
                          Patch* dpatch, TransformGrads* tgrad, Image& dimg) {
  if (rec.loss <= 0.0) return;
  const double f = weight / rec.loss;
  const std::array<double, 4> dout = {f * (rec.pose[0] - target.x),
                                      f * (rec.pose[1] - target.y),
                                      f * (rec.pose[2] - target.z), 0.0};
  backward(model, ws, dout, nullptr);
  image_gradient(model, ws, dimg);  // additive pixel noise passes through
  Mat3 dminv;
  dminv.m.fill(0.0);
  place_vjp(dimg, base, patch, rec.m_total, dpatch, tgrad ? &dminv : nullptr);
  if (tgrad) {
    const Mat3 dm = dmat_from_dinv(rec.m_total, dminv);
    const Mat3 daffine = rec.hom.transposed() * dm;
    TransformGrads g = transform_param_grads(rec.used, daffine);
    tgrad->ds += rec.free_s ? g.ds : 0.0;
    tgrad->dtx += rec.free_tx ? g.dtx : 0.0;
    tgrad->dty += rec.free_ty ? g.dty : 0.0;
    tgrad->dalpha += g.dalpha;  // recorded but never stepped
  }
}

}  // namespace detail_attack

// L2 distance between the target and the predicted position for one
// (image, patch, transform) triple. Training augmentations apply when an
// RNG is supplied.
inline double per_target_loss(const VictimModel& model, const Image& img,
                              const Patch& patch, const TransformParams& t,
                              const Vec3& target, Rng* rng = nullptr,
                              const AugmentConfig& aug = {}) {
  ForwardWorkspace ws;
  return detail_attack::forward_pair(model, ws, img, patch, t, target, rng, aug)
      .loss;
}

// Mean over images of the summed per-target softmin expectations over the
// active pairs (columns with no active pair contribute zero). Evaluation
// mode: no augmentations.
inline double total_loss(const VictimModel& model, const Dataset& images,
                         const PatchSet& ps, const AssignmentMatrix& A,
                         const TargetSet& targets) {
  if (images.empty()) return 0.0;
  ForwardWorkspace ws;
  double acc = 0.0;
  std::vector<double> col;
  for (const auto& sc : images.scenes) {
    for (int k = 0; k < targets.K(); ++k) {
      col.clear();
      for (int m = 0; m < ps.M(); ++m) {
        if (!A.active(m, k)) continue;
        col.push_back(detail_attack::forward_pair(model, ws, sc.image,
                                                  ps.patches[m],
                                                  ps.transforms[m][k],
                                                  targets.targets[k], nullptr, {})
                          .loss);
      }
      if (!col.empty()) acc += softmin_expectation(col);
    }
  }
  return acc / double(images.size());
}

// --- evaluation -------------------------------------------------------------

struct EvalReport {
  double total_loss = 0.0;              // Eq-style sum over targets
  std::vector<double> per_target;       // mean expectation per target
  std::vector<std::vector<double>> cost;  // full M x K testset cost matrix
  std::vector<int> argmin_assignment;   // per-column argmin of cost
};

// Deterministic testset evaluation: augmentations off. per_target uses the
// active pairs of A; the cost matrix always covers all pairs.
inline EvalReport evaluate(const VictimModel& model, const Dataset& testset,
                           const PatchSet& ps, const AssignmentMatrix& A,
                           const TargetSet& targets) {
  const int M = ps.M(), K = targets.K();
  EvalReport rep;
  rep.per_target.assign(K, 0.0);
  rep.cost.assign(M, std::vector<double>(K, 0.0));
  rep.argmin_assignment.assign(K, 0);
  if (testset.empty()) return rep;
  ForwardWorkspace ws;
  std::vector<double> col;
  const double inv_n = 1.0 / double(testset.size());
  for (const auto& sc : testset.scenes) {
    for (int k = 0; k < K; ++k) {
      col.clear();
      for (int m = 0; m < M; ++m) {
        const double L =
            detail_attack::forward_pair(model, ws, sc.image, ps.patches[m],
                                        ps.transforms[m][k],
                                        targets.targets[k], nullptr, {})
                .loss;
        rep.cost[m][k] += L * inv_n;
        if (A.active(m, k)) col.push_back(L);
      }
      if (!col.empty()) rep.per_target[k] += softmin_expectation(col) * inv_n;
    }
  }
  for (int k = 0; k < K; ++k) {
    rep.total_loss += rep.per_target[k];
    int best = 0;
    for (int m = 1; m < M; ++m)
      if (rep.cost[m][k] < rep.cost[best][k]) best = m;
    rep.argmin_assignment[k] = best;
  }
  return rep;
}

// --- optimization strategies -------------------------------------------------

struct AttackConfig {
  int M = 2;
  int iterations = 100;  // each is one epoch over the trainset
  int restarts = 20;     // transform candidates per pair in the search phase
  double lr = 1e-3;
  int batch_size = 32;
  int patch_size = 64;
  std::uint64_t seed = 0;
  AugmentConfig aug;
  bool init_from_image = false;
  Image init_image;
  double hybrid_joint_fraction = 0.5;
};

struct IterMetrics {
  int iter = 0;
  std::string phase;
  double loss_train = 0.0;
  double loss_test = 0.0;
  std::vector<double> per_target;
  std::vector<int> assignment;
};

struct AttackResult {
  PatchSet ps;
  AssignmentMatrix A;
  std::vector<IterMetrics> metrics;
  EvalReport final_eval;
};

inline PatchSet init_patchset(const AttackConfig& cfg, int K) {
  PatchSet ps;
  for (int m = 0; m < cfg.M; ++m) {
    Patch p(cfg.patch_size, cfg.patch_size);
    if (cfg.init_from_image) {
      p = resize_bilinear(cfg.init_image, cfg.patch_size, cfg.patch_size);
    } else {
      Rng rng = Rng::stream(cfg.seed, stream_tag::kPatchInit, std::uint64_t(m));
      for (auto& v : p.px) v = rng.uniform(0.0, 255.0);
    }
    ps.patches.push_back(std::move(p));
    std::vector<TransformParams> row;
    for (int k = 0; k < K; ++k) {
      Rng rng = Rng::stream(cfg.seed, stream_tag::kTransformInit,
                            std::uint64_t(m), std::uint64_t(k));
      TransformParams t;
      t.s = rng.uniform(kScaleMin, kScaleMax);
      t.tx = rng.uniform(-kTranslationLimit, kTranslationLimit);
      t.ty = rng.uniform(-kTranslationLimit, kTranslationLimit);
      row.push_back(t);
    }
    ps.transforms.push_back(std::move(row));
  }
  return ps;
}

namespace detail_attack {

class Optimizer {
 public:
  Optimizer(const VictimModel& model, const Dataset& trainset,
            const Dataset& testset, const TargetSet& targets,
            const AttackConfig& cfg)
      : model_(model),
        S_(trainset),
        E_(testset),
        targets_(targets),
        cfg_(cfg),
        A_(AssignmentMatrix::all_true(cfg.M, targets.K())) {
    ps_ = init_patchset(cfg, targets.K());
    // Patches are optimized in a normalized [0, 1] parameterization (the
    // convention the stated learning rate assumes); stored pixels stay in
    // [0, 255].
    for (int m = 0; m < cfg_.M; ++m) {
      patch_states_.emplace_back(ps_.patches[m].px.size(), cfg_.lr);
      std::vector<double> norm(ps_.patches[m].px.size());
      for (std::size_t i = 0; i < norm.size(); ++i)
        norm[i] = ps_.patches[m].px[i] / 255.0;
      patch_norm_.push_back(std::move(norm));
    }
    transform_states_.assign(
        std::size_t(cfg_.M) * targets.K(), AdamState(3, cfg_.lr));
    workspaces_.resize(std::size_t(cfg_.M));
  }

  // One epoch of batched gradient steps on the softmin loss over active
  // pairs. Returns the epoch mean training loss.
  double gradient_epoch(int iter, bool update_patches, bool update_transforms) {
    const int K = targets_.K();
    Rng shuffle = Rng::stream(cfg_.seed, stream_tag::kBatchShuffle, kPhaseMain,
                              std::uint64_t(iter));
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    std::vector<Patch> dP(cfg_.M);
    std::vector<TransformGrads> dT(std::size_t(cfg_.M) * K);
    for (const auto& batch : batches(S_.size(), cfg_.batch_size, shuffle)) {
      for (int m = 0; m < cfg_.M; ++m)
        dP[m] = Patch(cfg_.patch_size, cfg_.patch_size, 0.0);
      std::fill(dT.begin(), dT.end(), TransformGrads{});
      const double inv_b = 1.0 / double(batch.size());
      double batch_loss = 0.0;
      std::vector<PairRecord> recs;
      std::vector<int> rec_m;
      std::vector<double> losses;
      for (std::size_t si : batch) {
        const Image& base = S_.scenes[si].image;
        for (int k = 0; k < K; ++k) {
          recs.clear();
          rec_m.clear();
          losses.clear();
          for (int m = 0; m < cfg_.M; ++m) {
            if (!A_.active(m, k)) continue;
            Rng rng = Rng::stream(cfg_.seed, stream_tag::kAugment, kPhaseMain,
                                  std::uint64_t(iter), std::uint64_t(si),
                                  std::uint64_t(m), std::uint64_t(k));
            recs.push_back(forward_pair(model_, workspaces_[rec_m.size()], base,
                                        ps_.patches[m], ps_.transforms[m][k],
                                        targets_.targets[k], &rng, cfg_.aug));
            rec_m.push_back(m);
            losses.push_back(recs.back().loss);
          }
          if (recs.empty()) continue;
          const auto w = softmin_weights(losses);
          const double ek = softmin_expectation(losses);
          batch_loss += ek * inv_b;
          for (std::size_t i = 0; i < recs.size(); ++i) {
            // d(softmin expectation)/dL_i = p_i (1 - L_i + E)
            const double gw = inv_b * w[i] * (1.0 - losses[i] + ek);
            const int m = rec_m[i];
            backward_pair(model_, workspaces_[i], recs[i], base, ps_.patches[m],
                          targets_.targets[k], gw,
                          update_patches ? &dP[m] : nullptr,
                          update_transforms ? &dT[std::size_t(m) * K + k]
                                            : nullptr,
                          dimg_);
          }
        }
      }
      if (update_patches) {
        for (int m = 0; m < cfg_.M; ++m) {
          auto& norm = patch_norm_[m];
          auto& raw = ps_.patches[m].px;
          for (auto& g : dP[m].px) g *= 255.0;  // d loss / d normalized value
          adam_step(norm.data(), dP[m].px.data(), norm.size(),
                    patch_states_[m]);
          for (std::size_t i = 0; i < norm.size(); ++i) {
            norm[i] = std::min(std::max(norm[i], 0.0), 1.0);
            raw[i] = norm[i] * 255.0;
          }
        }
      }
      if (update_transforms) {
        for (int m = 0; m < cfg_.M; ++m) {
          for (int k = 0; k < K; ++k) {
            auto& t = ps_.transforms[m][k];
            double p[3] = {t.s, t.tx, t.ty};
            const auto& g = dT[std::size_t(m) * K + k];
            const double gr[3] = {g.ds, g.dtx, g.dty};
            adam_step(p, gr, 3, transform_states_[std::size_t(m) * K + k]);
            t.s = p[0];
            t.tx = p[1];
            t.ty = p[2];
            t = clamp_transform(t);
          }
        }
      }
      epoch_loss += batch_loss;
      ++n_batches;
    }
    return n_batches ? epoch_loss / double(n_batches) : 0.0;
  }

  // Random-restart transform search: each active pair trains R candidates
  // (the incumbent plus R-1 uniform draws) for one epoch of transform-only
  // Adam and keeps the one with the lowest epoch loss. Patches stay fixed.
  // Returns the mean chosen candidate loss.
  double restart_phase(int iter) {
    const int K = targets_.K();
    double chosen_acc = 0.0;
    int chosen_n = 0;
    for (int m = 0; m < cfg_.M; ++m) {
      for (int k = 0; k < K; ++k) {
        if (!A_.active(m, k)) continue;
        double best_loss = std::numeric_limits<double>::infinity();
        TransformParams best = ps_.transforms[m][k];
        for (int r = 1; r <= cfg_.restarts; ++r) {
          TransformParams cand;
          if (r == 1) {
            cand = ps_.transforms[m][k];
          } else {
            Rng rng = Rng::stream(cfg_.seed, stream_tag::kRestart,
                                  std::uint64_t(iter), std::uint64_t(m),
                                  std::uint64_t(k), std::uint64_t(r));
            cand.s = rng.uniform(kScaleMin, kScaleMax);
            cand.tx = rng.uniform(-kTranslationLimit, kTranslationLimit);
            cand.ty = rng.uniform(-kTranslationLimit, kTranslationLimit);
          }
          AdamState st(3, cfg_.lr);
          Rng shuffle = Rng::stream(cfg_.seed, stream_tag::kBatchShuffle,
                                    kPhaseRestart, std::uint64_t(iter),
                                    std::uint64_t(m), std::uint64_t(k),
                                    std::uint64_t(r));
          double cand_loss = 0.0;
          std::size_t n_batches = 0;
          for (const auto& batch :
               batches(S_.size(), cfg_.batch_size, shuffle)) {
            TransformGrads tg;
            const double inv_b = 1.0 / double(batch.size());
            double batch_loss = 0.0;
            for (std::size_t si : batch) {
              const Image& base = S_.scenes[si].image;
              Rng rng = Rng::stream(cfg_.seed, stream_tag::kAugment,
                                    kPhaseRestart, std::uint64_t(iter),
                                    std::uint64_t(si), std::uint64_t(m),
                                    std::uint64_t(k), std::uint64_t(r));
              const auto rec =
                  forward_pair(model_, workspaces_[0], base, ps_.patches[m],
                               cand, targets_.targets[k], &rng, cfg_.aug);
              batch_loss += rec.loss * inv_b;
              backward_pair(model_, workspaces_[0], rec, base, ps_.patches[m],
                            targets_.targets[k], inv_b, nullptr, &tg, dimg_);
            }
            double p[3] = {cand.s, cand.tx, cand.ty};
            const double gr[3] = {tg.ds, tg.dtx, tg.dty};
            adam_step(p, gr, 3, st);
            cand.s = p[0];
            cand.tx = p[1];
            cand.ty = p[2];
            cand = clamp_transform(cand);
            cand_loss += batch_loss;
            ++n_batches;
          }
          cand_loss /= double(n_batches);
          if (cand_loss < best_loss) {
            best_loss = cand_loss;
            best = cand;
          }
        }
        ps_.transforms[m][k] = best;
        chosen_acc += best_loss;
        ++chosen_n;
      }
    }
    return chosen_n ? chosen_acc / double(chosen_n) : 0.0;
  }

  // Samples one patch per target from the softmin distribution over the
  // testset cost column and one-hots the assignment matrix.
  void assignment_phase(int iter) {
    const auto rep = evaluate(model_, E_, ps_, A_, targets_);
    const int K = targets_.K();
    for (int k = 0; k < K; ++k) {
      std::vector<double> c(cfg_.M);
      for (int m = 0; m < cfg_.M; ++m) c[m] = rep.cost[m][k];
      const double lo = *std::min_element(c.begin(), c.end());
      std::vector<double> w(cfg_.M);
      for (int m = 0; m < cfg_.M; ++m) w[m] = std::exp(-(c[m] - lo));
      Rng rng = Rng::stream(cfg_.seed, stream_tag::kAssignment,
                            std::uint64_t(iter), std::uint64_t(k));
      A_.set_column_onehot(k, int(rng.categorical(w)));
    }
  }

  void record(int iter, const char* phase, double loss_train) {
    const auto rep = evaluate(model_, E_, ps_, A_, targets_);
    IterMetrics im;
    im.iter = iter;
    im.phase = phase;
    im.loss_train = loss_train;
    im.loss_test = rep.total_loss;
    im.per_target = rep.per_target;
    im.assignment.assign(targets_.K(), 0);
    for (int k = 0; k < targets_.K(); ++k) {
      if (A_.column_onehot(k)) {
        for (int m = 0; m < cfg_.M; ++m)
          if (A_.active(m, k)) im.assignment[k] = m;
      } else {
        im.assignment[k] = rep.argmin_assignment[k];
      }
    }
    metrics_.push_back(std::move(im));
  }

  AttackResult finish(bool onehot_from_argmin) {
    AttackResult res;
    res.final_eval = evaluate(model_, E_, ps_, A_, targets_);
    if (onehot_from_argmin)
      for (int k = 0; k < targets_.K(); ++k)
        A_.set_column_onehot(k, res.final_eval.argmin_assignment[k]);
    res.ps = std::move(ps_);
    res.A = A_;
    res.metrics = std::move(metrics_);
    return res;
  }

  AssignmentMatrix& assignment() { return A_; }

 private:
  const VictimModel& model_;
  const Dataset& S_;
  const Dataset& E_;
  const TargetSet& targets_;
  AttackConfig cfg_;
  PatchSet ps_;
  AssignmentMatrix A_;
  std::vector<std::vector<double>> patch_norm_;
  std::vector<AdamState> patch_states_;
  std::vector<AdamState> transform_states_;
  std::vector<ForwardWorkspace> workspaces_;
  std::vector<IterMetrics> metrics_;
  Image dimg_;
};

}  // namespace detail_attack

// Patches only; transforms frozen at their random initialization.
inline AttackResult optimize_fixed(const VictimModel& model, const Dataset& S,
                                   const Dataset& E, const TargetSet& targets,
                                   const AttackConfig& cfg) {
  detail_attack::Optimizer opt(model, S, E, targets, cfg);
  for (int n = 0; n < cfg.iterations; ++n)
    opt.record(n, "fixed", opt.gradient_epoch(n, true, false));
  return opt.finish(true);
}

// Simultaneous gradient descent on patches and transforms; the final
// assignment is the per-target argmin of the testset cost.
inline AttackResult optimize_joint(const VictimModel& model, const Dataset& S,
                                   const Dataset& E, const TargetSet& targets,
                                   const AttackConfig& cfg) {
  detail_attack::Optimizer opt(model, S, E, targets, cfg);
  for (int n = 0; n < cfg.iterations; ++n)
    opt.record(n, "joint", opt.gradient_epoch(n, true, true));
  return opt.finish(true);
}

// Alternating patch epochs, random-restart transform search, and sampled
// assignment updates.
inline AttackResult optimize_split(const VictimModel& model, const Dataset& S,
                                   const Dataset& E, const TargetSet& targets,
                                   const AttackConfig& cfg) {
  if (cfg.restarts < 1) throw std::invalid_argument("split requires R >= 1");
  detail_attack::Optimizer opt(model, S, E, targets, cfg);
  for (int n = 0; n < cfg.iterations; ++n) {
    const double lt = opt.gradient_epoch(n, true, false);
    opt.restart_phase(n);
    opt.assignment_phase(n);
    opt.record(n, "split", lt);
  }
  return opt.finish(false);
}

// Joint warm start, then transform fine-tuning with frozen patches.
inline AttackResult optimize_hybrid(const VictimModel& model, const Dataset& S,
                                    const Dataset& E, const TargetSet& targets,
                                    const AttackConfig& cfg) {
  if (cfg.restarts < 1) throw std::invalid_argument("hybrid requires R >= 1");
  detail_attack::Optimizer opt(model, S, E, targets, cfg);
  const int n_joint = std::min(
      cfg.iterations,
      int(std::llround(cfg.hybrid_joint_fraction * cfg.iterations)));
  for (int n = 0; n < n_joint; ++n)
    opt.record(n, "joint", opt.gradient_epoch(n, true, true));
  for (int n = n_joint; n < cfg.iterations; ++n) {
    const double lt = opt.restart_phase(n);
    opt.assignment_phase(n);
    opt.record(n, "finetune", lt);
  }
  // with no fine-tuning iterations this is exactly the joint optimizer
  return opt.finish(n_joint == cfg.iterations);
}

}  // namespace advpatch
