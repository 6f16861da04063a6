#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpatch/attack.hpp"
#include "advpatch/data.hpp"
#include "advpatch/geometry.hpp"
#include "advpatch/nn.hpp"
#include "advpatch/placement.hpp"

namespace advpatch {

// Closed-loop kidnapping demo: the attacker carries the optimized patches on
// cuboid faces and positions itself so the victim's pose regressor predicts
// an attacker-chosen target, steering the victim along a desired trajectory.
// First-order kinematics; speed caps stand in for drag and attitude limits.

struct WorldState {
  Pose victim;
  Pose attacker;
  Pose human;
  bool has_human = false;
  double time = 0.0;
};

struct SimConfig {
  double dt = 0.1;
  double victim_speed = 0.5;    // m/s
  double attacker_speed = 1.5;  // m/s
  double human_speed = 0.4;
  double yaw_rate = M_PI / 2.0;  // rad/s, both agents
  double standoff = 1.0;         // victim follow distance, m
  double duration = 60.0;
  double patch_width_m = 0.4;
  CameraModel cam;
  std::uint64_t seed = 0;
};

// Victim setpoint law: the pose from which the predicted subject would sit
// centered in view at the standoff distance.
inline Pose frontnet_controller(const Pose& victim, const Vec3& predicted,
                                double standoff) {
  if (!(predicted.x > 0.0))
    throw std::runtime_error("predicted subject behind camera");
  Pose offset;
  offset.position = {predicted.x - standoff, predicted.y, predicted.z};
  offset.yaw = std::atan2(predicted.y, predicted.x);
  return compose_pose(victim, offset);
}

struct PolicyChoice {
  Pose attacker_setpoint;
  int m_star = -1;
  int k_star = -1;
};

// Assuming each active (patch, target) pair would achieve zero loss,
// evaluates the victim setpoint every pair would induce, picks the pair
// whose setpoint lands closest to the desired victim position, and places
// the attacker where that patch realizes its optimized transform.
inline PolicyChoice attacker_policy(const PatchSet& ps,
                                    const AssignmentMatrix& A,
                                    const TargetSet& targets,
                                    const Pose& victim,
                                    const Pose& desired_victim,
                                    const CameraModel& cam,
                                    double patch_width_m, double standoff) {
  PolicyChoice best;
  double best_d = std::numeric_limits<double>::infinity();
  for (int m = 0; m < A.M; ++m) {
    for (int k = 0; k < A.K; ++k) {
      if (!A.active(m, k)) continue;
      const Pose induced =
          frontnet_controller(victim, targets.targets[k], standoff);
      const double d = (desired_victim.position - induced.position).norm();
      if (d < best_d) {
        best_d = d;
        best.m_star = m;
        best.k_star = k;
      }
    }
  }
  if (best.m_star < 0)
    throw std::runtime_error("no active patch-target pairs");
  const Pose rel = patch_transform_to_relative_pose(
      cam, ps.transforms[best.m_star][best.k_star], patch_width_m,
      best.m_star);
  best.attacker_setpoint = compose_pose(victim, rel);
  return best;
}

namespace detail_sim {
inline Pose step_toward(const Pose& cur, const Pose& setpoint,
                        double max_speed, double max_yaw_rate, double dt) {
  Pose next = cur;
  const Vec3 d = setpoint.position - cur.position;
  const double dist = d.norm();
  if (dist > 1e-12) {
    const double step = std::min(dist, max_speed * dt);
    next.position = cur.position + d * (step / dist);
  }
  double dyaw = wrap_angle(setpoint.yaw - cur.yaw);
  const double max_dyaw = max_yaw_rate * dt;
  dyaw = std::min(std::max(dyaw, -max_dyaw), max_dyaw);
  next.yaw = wrap_angle(cur.yaw + dyaw);
  return next;
}
}  // namespace detail_sim

// Both agents move straight toward their setpoints, step length capped at
// max_speed * dt, yaw slewing at the configured rate.
inline WorldState step_simulation(const WorldState& state,
                                  const Pose& victim_setpoint,
                                  const Pose& attacker_setpoint,
                                  const SimConfig& cfg) {
  WorldState next = state;
  next.victim = detail_sim::step_toward(state.victim, victim_setpoint,
                                        cfg.victim_speed, cfg.yaw_rate, cfg.dt);
  next.attacker =
      detail_sim::step_toward(state.attacker, attacker_setpoint,
                              cfg.attacker_speed, cfg.yaw_rate, cfg.dt);
  next.time = state.time + cfg.dt;
  return next;
}

// --- victim camera view synthesis -------------------------------------------

struct ViewTransform {
  bool visible = false;
  int face = -1;
  TransformParams t;
};

// Scale/translation at which the attacker's facing patch projects into the
// victim camera, derived from the true relative geometry; inverse of
// patch_transform_to_relative_pose.
inline ViewTransform attacker_view_transform(const Pose& victim,
                                             const Pose& attacker,
                                             const CameraModel& cam,
                                             double patch_width_m,
                                             int num_faces) {
  ViewTransform vt;
  const Pose rel = relative_pose(victim, attacker);
  const double d = rel.position.x;
  if (d < 0.05) return vt;
  // face f looks at the camera when the relative yaw is pi + f*pi/2
  double best = std::numeric_limits<double>::infinity();
  for (int f = 0; f < num_faces; ++f) {
    const double diff =
        std::abs(wrap_angle(rel.yaw - (M_PI + f * (M_PI / 2.0))));
    if (diff < best) {
      best = diff;
      vt.face = f;
    }
  }
  if (best > M_PI / 2.0) return vt;  // carried faces all turned away
  vt.t.s = cam.fx * patch_width_m / (d * cam.width);
  vt.t.tx = -2.0 * cam.fx * rel.position.y / (d * cam.width);
  vt.t.ty = -2.0 * cam.fy * rel.position.z / (d * cam.height);
  vt.visible = std::abs(vt.t.tx) <= 1.0 + vt.t.s &&
               std::abs(vt.t.ty) <= 1.0 + vt.t.s;
  return vt;
}

// --- episodes ----------------------------------------------------------------

struct Waypoint {
  Pose pose;
  double hold_s = 1.0;
};

// Piecewise-constant desired pose; holds the final waypoint forever.
inline Pose desired_at(const std::vector<Waypoint>& wps, double t) {
  if (wps.empty()) throw std::invalid_argument("empty waypoint list");
  double acc = 0.0;
  for (const auto& w : wps) {
    acc += w.hold_s;
    if (t < acc) return w.pose;
  }
  return wps.back().pose;
}

enum class Scenario { kHumanOnly, kAttackOnly, kHumanAndAttack };

struct EpisodeOptions {
  Scenario scenario = Scenario::kAttackOnly;
  bool idealized = false;      // force predictions to the chosen target
  bool baseline_hold = false;  // victim ignores predictions and holds start
  Pose victim_start;
  Pose attacker_start{{1.5, 0.0, 0.0}, 0.0};
  Pose human_start{{2.0, 0.5, 0.0}, 0.0};
  std::vector<Waypoint> human_waypoints;  // empty: human stands still
};

struct TickLog {
  double t = 0.0;
  Pose victim, attacker;
  int m_star = -1, k_star = -1;
  double err = 0.0;
};

struct EpisodeResult {
  std::vector<TickLog> log;
  double integrated_error = 0.0;  // trapezoidal integral of tracking error
  double mean_error = 0.0;
};

// Closed loop per tick: the attacker policy posts its setpoint, the victim
// camera view is synthesized from true geometry (patch composited through
// the same placement pipeline used in training), the victim model predicts,
// the victim controller reacts, both agents step.
inline EpisodeResult run_kidnap_episode(const VictimModel& model,
                                        const PatchSet& ps,
                                        const AssignmentMatrix& A,
                                        const TargetSet& targets,
                                        const std::vector<Waypoint>& desired,
                                        const SimConfig& cfg,
                                        const EpisodeOptions& opt) {
  const bool attack = opt.scenario != Scenario::kHumanOnly;
  const bool human = opt.scenario != Scenario::kAttackOnly;
  Rng bg_rng = Rng::stream(cfg.seed, stream_tag::kSim);
  const Image background = textured_background(cfg.cam.height, cfg.cam.width, bg_rng);

  WorldState st;
  st.victim = opt.victim_start;
  st.attacker = opt.attacker_start;
  st.human = opt.human_start;
  st.has_human = human;

  EpisodeResult res;
  const int ticks = int(std::llround(cfg.duration / cfg.dt));
  ForwardWorkspace ws;
  double prev_err = 0.0;
  for (int i = 0; i < ticks; ++i) {
    const Pose want = desired_at(desired, st.time);
    const double err = (want.position - st.victim.position).norm();

    PolicyChoice choice;
    Pose attacker_setpoint = st.attacker;
    if (attack) {
      choice = attacker_policy(ps, A, targets, st.victim, want, cfg.cam,
                               cfg.patch_width_m, cfg.standoff);
      attacker_setpoint = choice.attacker_setpoint;
    }

    // victim's view of the world
    Vec3 predicted{0, 0, 0};
    bool have_prediction = false;
    if (opt.idealized && attack) {
      predicted = targets.targets[choice.k_star];
      have_prediction = true;
    } else {
      Image view = background;
      if (human) {
        const Pose rel = relative_pose(st.victim, st.human);
        try {
          draw_subject_glyph(view, {rel.position.x, rel.position.y,
                                    rel.position.z, rel.yaw},
                             cfg.cam);
        } catch (const std::runtime_error&) {
          // human outside the frame this tick
        }
      }
      if (attack) {
        const auto vt = attacker_view_transform(st.victim, st.attacker,
                                                cfg.cam, cfg.patch_width_m,
                                                ps.M());
        if (vt.visible)
          view = place(view, ps.patches[vt.face], make_affine(vt.t));
      }
      const auto out = forward(model, view, ws);
      predicted = {out[0], out[1], out[2]};
      have_prediction = predicted.x > 0.05;
    }

    Pose victim_setpoint = st.victim;
    if (opt.baseline_hold)
      victim_setpoint = opt.victim_start;
    else if (have_prediction)
      victim_setpoint = frontnet_controller(st.victim, predicted, cfg.standoff);

    res.log.push_back({st.time, st.victim, st.attacker, choice.m_star,
                       choice.k_star, err});
    if (i > 0) res.integrated_error += 0.5 * (prev_err + err) * cfg.dt;
    prev_err = err;

    st = step_simulation(st, victim_setpoint, attacker_setpoint, cfg);
    if (human && !opt.human_waypoints.empty())
      st.human = detail_sim::step_toward(st.human,
                                         desired_at(opt.human_waypoints,
                                                    st.time),
                                         cfg.human_speed, cfg.yaw_rate, cfg.dt);
  }
  res.mean_error =
      ticks > 1 ? res.integrated_error / (cfg.dt * double(ticks - 1)) : 0.0;
  return res;
}

inline void save_trajectory_csv(const EpisodeResult& res,
                                const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "t,vx,vy,vz,vyaw,ax,ay,az,ayaw,m_star,k_star,err\n";
  char buf[512];
  for (const auto& r : res.log) {
    std::snprintf(buf, sizeof(buf),
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g\n",
                  r.t, r.victim.position.x, r.victim.position.y,
                  r.victim.position.z, r.victim.yaw, r.attacker.position.x,
                  r.attacker.position.y, r.attacker.position.z, r.attacker.yaw,
                  r.m_star, r.k_star, r.err);
    f << buf;
  }
}

}  // namespace advpatch
