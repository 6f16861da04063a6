// Command-line driver: dataset generation, victim training, patch attacks,
// evaluation (incl. quantized cross-evaluation), and the closed-loop
// kidnapping simulation. A single JSON config feeds every subcommand; flags
// override config values.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advpatch/artifacts.hpp"
#include "advpatch/attack.hpp"
#include "advpatch/data.hpp"
#include "advpatch/nn.hpp"
#include "advpatch/policy.hpp"
#include "advpatch/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace advpatch;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return j;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (j.contains(key)) return j.at(key).get<T>();
  return fallback;
}

json section(const json& j, const std::string& key) {
  return j.contains(key) ? j.at(key) : json::object();
}

CameraModel camera_from(const json& cfg) {
  const json c = section(cfg, "camera");
  CameraModel cam;
  cam.fx = get_or(c, "fx", cam.fx);
  cam.fy = get_or(c, "fy", cam.fy);
  cam.cx = get_or(c, "cx", cam.cx);
  cam.cy = get_or(c, "cy", cam.cy);
  cam.width = get_or(c, "width", cam.width);
  cam.height = get_or(c, "height", cam.height);
  return cam;
}

AugmentConfig augment_from(const json& cfg) {
  const json a = section(cfg, "augment");
  AugmentConfig ac;
  ac.transform_sigma = get_or(a, "transform_sigma", ac.transform_sigma);
  ac.perspective_scale = get_or(a, "perspective_scale", ac.perspective_scale);
  ac.perspective_prob = get_or(a, "perspective_prob", ac.perspective_prob);
  ac.noise_sigma = get_or(a, "noise_sigma", ac.noise_sigma);
  return ac;
}

TargetSet targets_from(const json& cfg) {
  const json a = section(cfg, "attack");
  if (!a.contains("targets") || !a.at("targets").is_array() ||
      a.at("targets").empty())
    throw ConfigError("attack.targets must be a nonempty array of [x,y,z]");
  TargetSet ts;
  for (const auto& t : a.at("targets")) {
    if (!t.is_array() || t.size() != 3)
      throw ConfigError("each target must be [x,y,z]");
    ts.targets.push_back(
        {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
  }
  return ts;
}

Dataset load_dataset_checked(const std::string& dir) {
  if (dir.empty() || !fs::exists(fs::path(dir) / "labels.csv"))
    throw ConfigError("dataset directory missing or incomplete: " +
                      (dir.empty() ? std::string("<unset>") : dir));
  return load_dataset(dir);
}

VictimModel load_model_checked(const std::string& path) {
  if (path.empty() || !fs::exists(path))
    throw ConfigError("model file missing: " +
                      (path.empty() ? std::string("<unset>") : path));
  return load_model(path);
}

// run.json is the only artifact carrying a timestamp
void write_run_sidecar(const std::string& out_dir, const std::string& command,
                       const json& cfg) {
  json j;
  j["command"] = command;
  j["config"] = cfg;
  j["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  std::ofstream f(fs::path(out_dir) / "run.json");
  f << j.dump(2) << "\n";
}

std::string trial_dir(const std::string& out, int trial) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trial_%03d", trial);
  return (fs::path(out) / buf).string();
}

int cmd_gen_data(const json& cfg, std::uint64_t seed, std::string out,
                 bool force) {
  const json d = section(cfg, "data");
  if (out.empty()) out = get_or<std::string>(d, "dir", "");
  if (out.empty()) throw ConfigError("no output dir (data.dir or --out)");
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw ConfigError("output dir exists and is not empty (use --force): " +
                      out);
  const int n = get_or(d, "size", 2000);
  PoseSampling ps;
  ps.positive_y_bias = get_or(d, "positive_y_bias", ps.positive_y_bias);
  const Dataset ds = sample_dataset(n, camera_from(cfg), seed, ps);
  save_dataset(ds, out);
  write_run_sidecar(out, "gen-data", cfg);
  std::cout << "wrote " << ds.size() << " scenes to " << out << "\n";
  return 0;
}

int cmd_train_victim(const json& cfg, std::uint64_t seed, std::string out) {
  const json v = section(cfg, "victim");
  if (out.empty()) out = get_or<std::string>(v, "model", "");
  if (out.empty()) throw ConfigError("no model path (victim.model or --out)");
  const Dataset ds = load_dataset_checked(
      get_or<std::string>(section(cfg, "data"), "dir", ""));
  SurrogateTrainConfig tc;
  if (v.contains("channels")) {
    const auto ch = v.at("channels").get<std::vector<int>>();
    if (ch.size() != 3) throw ConfigError("victim.channels must have 3 entries");
    tc.channels = {ch[0], ch[1], ch[2]};
  }
  tc.hidden = get_or(v, "hidden", tc.hidden);
  tc.lr = get_or(v, "lr", tc.lr);
  tc.batch_size = get_or(v, "batch_size", tc.batch_size);
  tc.phi_weight = get_or(v, "phi_weight", tc.phi_weight);
  const CameraModel cam = camera_from(cfg);
  tc.input_h = cam.height;
  tc.input_w = cam.width;
  const int epochs = get_or(v, "epochs", 30);
  const auto res = train_surrogate(ds, seed, epochs, tc);
  save_model(res.model, out);
  std::cout << "validation position MSE: " << res.val_mse << "\n"
            << "model written to " << out << "\n";
  return 0;
}

AttackConfig attack_config_from(const json& cfg, std::uint64_t seed,
                                const std::string& method) {
  const json a = section(cfg, "attack");
  AttackConfig ac;
  ac.M = get_or(a, "M", ac.M);
  ac.iterations = get_or(a, "iterations", ac.iterations);
  ac.lr = get_or(a, "lr", ac.lr);
  ac.batch_size = get_or(a, "batch_size", ac.batch_size);
  ac.patch_size = get_or(section(cfg, "patch"), "size", ac.patch_size);
  ac.hybrid_joint_fraction =
      get_or(a, "hybrid_joint_fraction", ac.hybrid_joint_fraction);
  ac.seed = seed;
  ac.aug = augment_from(cfg);
  if (method == "split" || method == "hybrid") {
    if (!a.contains("restarts"))
      throw ConfigError("attack.restarts (R) is required for method " + method);
    ac.restarts = a.at("restarts").get<int>();
  } else {
    ac.restarts = get_or(a, "restarts", ac.restarts);
  }
  const json p = section(cfg, "patch");
  const std::string init = get_or<std::string>(p, "init", "random");
  if (init == "pgm") {
    const std::string path = get_or<std::string>(p, "init_pgm", "");
    if (path.empty()) throw ConfigError("patch.init=pgm needs patch.init_pgm");
    ac.init_from_image = true;
    ac.init_image = load_pgm(path);
  } else if (init != "random") {
    throw ConfigError("patch.init must be 'random' or 'pgm'");
  }
  return ac;
}

int cmd_attack(const json& cfg, std::uint64_t seed, std::string out,
               std::string method, int trials, int jobs) {
  const json a = section(cfg, "attack");
  if (method.empty()) method = get_or<std::string>(a, "method", "joint");
  if (method != "fixed" && method != "joint" && method != "split" &&
      method != "hybrid")
    throw ConfigError("unknown attack method: " + method);
  if (trials <= 0) trials = get_or(a, "trials", 1);
  if (out.empty()) out = get_or<std::string>(a, "out", "");
  if (out.empty()) throw ConfigError("no output dir (attack.out or --out)");

  const Dataset full = load_dataset_checked(
      get_or<std::string>(section(cfg, "data"), "dir", ""));
  const double frac = get_or(section(cfg, "data"), "train_fraction", 0.9);
  auto [S, E] = split_dataset(full, frac, seed);
  VictimModel model = load_model_checked(
      get_or<std::string>(section(cfg, "victim"), "model", ""));
  if (get_or(a, "quantized", false)) model = quantize_model(model);
  const TargetSet targets = targets_from(cfg);

  fs::create_directories(out);
  auto run_trial = [&](int t) {
    AttackConfig ac = attack_config_from(cfg, seed + std::uint64_t(t), method);
    AttackResult r;
    if (method == "fixed") r = optimize_fixed(model, S, E, targets, ac);
    if (method == "joint") r = optimize_joint(model, S, E, targets, ac);
    if (method == "split") r = optimize_split(model, S, E, targets, ac);
    if (method == "hybrid") r = optimize_hybrid(model, S, E, targets, ac);
    save_attack_artifacts(r, trial_dir(out, t));
    return r.final_eval.total_loss;
  };
  std::vector<double> finals(trials, 0.0);
  if (jobs <= 1) {
    for (int t = 0; t < trials; ++t) finals[t] = run_trial(t);
  } else {
    // trials are independent; one worker per seed
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < std::min(jobs, trials); ++w)
      pool.emplace_back([&] {
        for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1))
          finals[t] = run_trial(t);
      });
    for (auto& th : pool) th.join();
  }
  write_run_sidecar(out, "attack", cfg);
  for (int t = 0; t < trials; ++t)
    std::cout << "trial " << t << " final test loss " << finals[t] << "\n";
  return 0;
}

struct CellStats {
  double mean = 0.0, stdev = 0.0;
  std::vector<double> trial_losses;
};

CellStats eval_artifacts_on(const std::string& artifacts_dir,
                            const VictimModel& model, const Dataset& E,
                            const TargetSet& targets, int expected_patch_size) {
  CellStats st;
  std::vector<std::string> trial_dirs;
  if (fs::exists(fs::path(artifacts_dir) / "transforms.csv")) {
    trial_dirs.push_back(artifacts_dir);
  } else if (fs::exists(artifacts_dir)) {
    for (const auto& de : fs::directory_iterator(artifacts_dir))
      if (de.is_directory() &&
          de.path().filename().string().rfind("trial_", 0) == 0)
        trial_dirs.push_back(de.path().string());
    std::sort(trial_dirs.begin(), trial_dirs.end());
  }
  if (trial_dirs.empty())
    throw ConfigError("no attack artifacts under: " + artifacts_dir);
  for (const auto& td : trial_dirs) {
    PatchSet ps;
    AssignmentMatrix A;
    load_attack_artifacts(td, ps, A);
    if (expected_patch_size > 0 &&
        (ps.patches[0].width != expected_patch_size ||
         ps.patches[0].height != expected_patch_size))
      throw ConfigError("artifact/model mismatch: patch size in " + td +
                        " differs from config patch.size");
    if (A.K != targets.K())
      throw ConfigError("artifact/model mismatch: target count in " + td +
                        " differs from config attack.targets");
    const auto rep = evaluate(model, E, ps, A, targets);
    st.trial_losses.push_back(rep.total_loss);
  }
  for (double v : st.trial_losses) st.mean += v;
  st.mean /= double(st.trial_losses.size());
  if (st.trial_losses.size() > 1) {
    double acc = 0.0;
    for (double v : st.trial_losses) acc += (v - st.mean) * (v - st.mean);
    st.stdev = std::sqrt(acc / double(st.trial_losses.size() - 1));
  }
  return st;
}

int cmd_eval(const json& cfg, std::uint64_t seed, std::string out) {
  const json e = section(cfg, "eval");
  const Dataset full = load_dataset_checked(
      get_or<std::string>(section(cfg, "data"), "dir", ""));
  const double frac = get_or(section(cfg, "data"), "train_fraction", 0.9);
  auto [S, E] = split_dataset(full, frac, seed);
  (void)S;
  const TargetSet targets = targets_from(cfg);
  const int patch_size = get_or(section(cfg, "patch"), "size", 64);

  const std::string model_path = get_or<std::string>(
      e, "model", get_or<std::string>(section(cfg, "victim"), "model", ""));
  const VictimModel fp = load_model_checked(model_path);
  const std::string qpath = get_or<std::string>(e, "quantized_model", "");
  std::optional<VictimModel> q;
  if (!qpath.empty()) q = load_model_checked(qpath);

  json report;
  auto put = [&](const std::string& cell, const CellStats& st) {
    report[cell] = {{"mean_test_loss", st.mean},
                    {"std_across_trials", st.stdev},
                    {"trial_losses", st.trial_losses}};
    std::cout << cell << ": mean " << st.mean << " std " << st.stdev << "\n";
  };

  const std::string afp = get_or<std::string>(e, "artifacts_fp", "");
  const std::string aq = get_or<std::string>(e, "artifacts_q", "");
  if (!afp.empty() && !aq.empty()) {
    // Table-shaped cross-evaluation: patches trained on the full-precision
    // and quantized models, each validated on both.
    if (!q) throw ConfigError("cross-evaluation needs eval.quantized_model");
    put("trained_fp_eval_fp", eval_artifacts_on(afp, fp, E, targets, patch_size));
    put("trained_fp_eval_q", eval_artifacts_on(afp, *q, E, targets, patch_size));
    put("trained_q_eval_fp", eval_artifacts_on(aq, fp, E, targets, patch_size));
    put("trained_q_eval_q", eval_artifacts_on(aq, *q, E, targets, patch_size));
  } else {
    const std::string art = get_or<std::string>(e, "artifacts", afp);
    if (art.empty()) throw ConfigError("eval.artifacts not set");
    put("eval_fp", eval_artifacts_on(art, fp, E, targets, patch_size));
    if (q) put("eval_q", eval_artifacts_on(art, *q, E, targets, patch_size));
  }
  if (!out.empty()) {
    std::ofstream f(out);
    f << report.dump(2) << "\n";
    std::cout << "report written to " << out << "\n";
  }
  return 0;
}

std::vector<Waypoint> waypoints_from(const json& arr) {
  std::vector<Waypoint> wps;
  for (const auto& w : arr) {
    Waypoint wp;
    const auto pos = w.at("pos").get<std::vector<double>>();
    if (pos.size() != 3) throw ConfigError("waypoint pos must be [x,y,z]");
    wp.pose.position = {pos[0], pos[1], pos[2]};
    wp.pose.yaw = get_or(w, "yaw", 0.0);
    wp.hold_s = get_or(w, "hold", 1.0);
    wps.push_back(wp);
  }
  return wps;
}

int cmd_simulate(const json& cfg, std::uint64_t seed, std::string out,
                 std::string scenario) {
  const json s = section(cfg, "simulate");
  if (scenario.empty()) scenario = get_or<std::string>(s, "scenario", "ii");
  EpisodeOptions opt;
  if (scenario == "i")
    opt.scenario = Scenario::kHumanOnly;
  else if (scenario == "ii")
    opt.scenario = Scenario::kAttackOnly;
  else if (scenario == "iii")
    opt.scenario = Scenario::kHumanAndAttack;
  else
    throw ConfigError("simulate.scenario must be i, ii, or iii");
  opt.idealized = get_or(s, "idealized", false);
  opt.baseline_hold = get_or(s, "baseline_hold", false);

  SimConfig sc;
  sc.cam = camera_from(cfg);
  sc.dt = get_or(s, "dt", sc.dt);
  sc.duration = get_or(s, "duration", sc.duration);
  sc.victim_speed = get_or(s, "victim_speed", sc.victim_speed);
  sc.attacker_speed = get_or(s, "attacker_speed", sc.attacker_speed);
  sc.human_speed = get_or(s, "human_speed", sc.human_speed);
  sc.standoff = get_or(s, "standoff", sc.standoff);
  sc.patch_width_m = get_or(section(cfg, "patch"), "width_m", sc.patch_width_m);
  sc.seed = seed;

  const VictimModel model = load_model_checked(get_or<std::string>(
      s, "model", get_or<std::string>(section(cfg, "victim"), "model", "")));

  PatchSet ps;
  AssignmentMatrix A;
  TargetSet targets;
  if (opt.scenario != Scenario::kHumanOnly) {
    const std::string art = get_or<std::string>(s, "artifacts", "");
    if (art.empty() || !fs::exists(art))
      throw ConfigError("simulate.artifacts required for scenario " + scenario);
    const std::string dir = fs::exists(fs::path(art) / "transforms.csv")
                                ? art
                                : trial_dir(art, 0);
    load_attack_artifacts(dir, ps, A);
    targets = targets_from(cfg);
    if (A.K != targets.K())
      throw ConfigError("artifact/model mismatch: target count");
  }

  if (!s.contains("waypoints") || s.at("waypoints").empty())
    throw ConfigError("simulate.waypoints required");
  const auto desired = waypoints_from(s.at("waypoints"));
  if (s.contains("human_waypoints"))
    opt.human_waypoints = waypoints_from(s.at("human_waypoints"));
  auto read_pose = [&](const char* key, Pose& into) {
    if (!s.contains(key)) return;
    const auto p = s.at(key).get<std::vector<double>>();
    if (p.size() != 3) throw ConfigError(std::string(key) + " must be [x,y,z]");
    into.position = {p[0], p[1], p[2]};
  };
  read_pose("victim_start", opt.victim_start);
  read_pose("attacker_start", opt.attacker_start);
  read_pose("human_start", opt.human_start);

  const auto res = run_kidnap_episode(model, ps, A, targets, desired, sc, opt);
  if (!out.empty()) {
    fs::create_directories(out);
    save_trajectory_csv(res, (fs::path(out) / "trajectory.csv").string());
    json summary;
    summary["scenario"] = scenario;
    summary["mean_tracking_error"] = res.mean_error;
    summary["integrated_error"] = res.integrated_error;
    std::ofstream f(fs::path(out) / "summary.json");
    f << summary.dump(2) << "\n";
    write_run_sidecar(out, "simulate", cfg);
  }
  std::cout << "mean tracking error: " << res.mean_error << "\n";
  return 0;
}

int cmd_quantize(const std::string& in, const std::string& out) {
  if (in.empty() || out.empty())
    throw ConfigError("quantize needs --in and --out");
  const VictimModel m = load_model_checked(in);
  save_model(quantize_model(m), out);
  std::cout << "quantized model written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial patch toolkit for pose-regression victims"};
  app.require_subcommand(1);

  std::string config_path, out, method, scenario, qin, qout;
  std::uint64_t seed = 0;
  bool seed_set = false, force = false;
  int trials = 0, jobs = 1;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "JSON config file");
    c->add_option_function<std::uint64_t>(
        "--seed",
        [&](std::uint64_t v) {
          seed = v;
          seed_set = true;
        },
        "master seed (overrides config)");
    c->add_option("--out", out, "output path (overrides config)");
    c->add_flag("--force", force, "overwrite existing outputs");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen);
  CLI::App* train =
      app.add_subcommand("train-victim", "train the surrogate victim");
  add_common(train);
  CLI::App* attack =
      app.add_subcommand("attack", "optimize adversarial patches");
  add_common(attack);
  attack->add_option("--method", method, "fixed|joint|split|hybrid");
  attack->add_option("--trials", trials, "number of independent trials");
  attack->add_option("--jobs", jobs, "parallel trial workers");
  CLI::App* ev = app.add_subcommand("eval", "evaluate patch artifacts");
  add_common(ev);
  CLI::App* sim = app.add_subcommand("simulate", "closed-loop kidnapping demo");
  add_common(sim);
  sim->add_option("--scenario", scenario, "i|ii|iii");
  CLI::App* quant = app.add_subcommand("quantize", "emulate int8 quantization");
  quant->add_option("--in", qin, "input model")->required();
  quant->add_option("--out", qout, "output model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json cfg = load_config(config_path);
    if (!seed_set) seed = get_or<std::uint64_t>(cfg, "seed", 0);
    if (gen->parsed()) return cmd_gen_data(cfg, seed, out, force);
    if (train->parsed()) return cmd_train_victim(cfg, seed, out);
    if (attack->parsed()) return cmd_attack(cfg, seed, out, method, trials, jobs);
    if (ev->parsed()) return cmd_eval(cfg, seed, out);
    if (sim->parsed()) return cmd_simulate(cfg, seed, out, scenario);
    if (quant->parsed()) return cmd_quantize(qin, qout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
