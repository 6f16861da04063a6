// Scratch bring-up benchmark (not installed): forward/backward timing,
// surrogate training to the MSE gate, and a short attack run.
#include <chrono>
#include <cstdio>
#include <string>

#include "advpatch/attack.hpp"
#include "advpatch/data.hpp"
#include "advpatch/nn.hpp"
#include "advpatch/train.hpp"

using namespace advpatch;
using Clock = std::chrono::steady_clock;

static double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "speed";
  CameraModel cam;

  if (mode == "speed") {
    auto model = make_victim_model(1);
    Dataset ds = sample_dataset(8, cam, 7);
    ForwardWorkspace ws;
    Image dimg;
    // warmup + forward timing
    auto t0 = Clock::now();
    int n = 0;
    for (int rep = 0; rep < 50; ++rep)
      for (auto& sc : ds.scenes) {
        forward(model, sc.image, ws);
        ++n;
      }
    std::printf("forward: %.3f ms/img\n", ms_since(t0) / n);
    // forward+backward(input)
    t0 = Clock::now();
    n = 0;
    for (int rep = 0; rep < 50; ++rep)
      for (auto& sc : ds.scenes) {
        forward(model, sc.image, ws);
        backward(model, ws, {1, 0.5, 0.2, 0}, nullptr);
        image_gradient(model, ws, dimg);
        ++n;
      }
    std::printf("fwd+bwd(input): %.3f ms/img\n", ms_since(t0) / n);
    // full pair eval with placement
    Patch patch(64, 64, 128.0);
    TransformParams tp{0.3, 0, 0.2, -0.1};
    TargetSet ts{{{1, -1, 0}}};
    t0 = Clock::now();
    n = 0;
    Patch dpatch(64, 64, 0.0);
    for (int rep = 0; rep < 50; ++rep)
      for (auto& sc : ds.scenes) {
        auto rec = detail_attack::forward_pair(model, ws, sc.image, patch, tp,
                                               ts.targets[0], nullptr, {});
        TransformGrads tg;
        detail_attack::backward_pair(model, ws, rec, sc.image, patch,
                                     ts.targets[0], 1.0, &dpatch, &tg, dimg);
        ++n;
      }
    std::printf("pair fwd+bwd incl place: %.3f ms\n", ms_since(t0) / n);
    // param-grad backward (training cost)
    auto g = ParamGrads::zeros_like(model);
    t0 = Clock::now();
    n = 0;
    for (int rep = 0; rep < 50; ++rep)
      for (auto& sc : ds.scenes) {
        forward(model, sc.image, ws);
        backward(model, ws, {1, 0.5, 0.2, 0}, &g);
        ++n;
      }
    std::printf("fwd+bwd(params): %.3f ms/img\n", ms_since(t0) / n);
  } else if (mode == "train") {
    const int n_scenes = argc > 2 ? std::atoi(argv[2]) : 2000;
    const int epochs = argc > 3 ? std::atoi(argv[3]) : 30;
    auto t0 = Clock::now();
    Dataset ds = sample_dataset(n_scenes, cam, 42);
    std::printf("dataset %d scenes: %.1f ms\n", n_scenes, ms_since(t0));
    t0 = Clock::now();
    SurrogateTrainConfig cfg;
    try {
      auto res = train_surrogate(ds, 42, epochs, cfg);
      std::printf("train %d epochs: %.1f s, val position MSE %.4f\n", epochs,
                  ms_since(t0) / 1000.0, res.val_mse);
      for (std::size_t e = 0; e < res.epoch_train_loss.size(); e += 5)
        std::printf("  epoch %zu loss %.4f\n", e, res.epoch_train_loss[e]);
    } catch (const std::exception& ex) {
      std::printf("FAILED after %.1f s: %s\n", ms_since(t0) / 1000.0, ex.what());
      return 1;
    }
  } else if (mode == "gradcheck") {
    auto model = make_victim_model(3);
    Dataset ds = sample_dataset(2, cam, 11);
    Patch patch(64, 64);
    {
      Rng r(1);
      Image coarse(8, 8);
      for (auto& v : coarse.px) v = r.uniform(0, 255);
      patch = resize_bilinear(coarse, 64, 64);
    }
    TransformParams tp{0.31, 0, 0.17, -0.23};
    Vec3 target{1, -1, 0};
    ForwardWorkspace ws;
    Image dimg;
    Patch dpatch(64, 64, 0.0);
    TransformGrads tg;
    auto rec = detail_attack::forward_pair(model, ws, ds.scenes[0].image, patch,
                                           tp, target, nullptr, {});
    detail_attack::backward_pair(model, ws, rec, ds.scenes[0].image, patch,
                                 target, 1.0, &dpatch, &tg, dimg);
    auto loss_at = [&](const TransformParams& t, const Patch& p) {
      return per_target_loss(model, ds.scenes[0].image, p, t, target);
    };
    auto fd = [&](auto setter, double h) {
      TransformParams a = tp, b = tp;
      setter(a, h);
      setter(b, -h);
      return (loss_at(a, patch) - loss_at(b, patch)) / (2 * h);
    };
    const double h = 1e-6;
    std::printf("ds analytic %.8g fd %.8g\n", tg.ds,
                fd([](TransformParams& t, double d) { t.s += d; }, h));
    std::printf("dtx analytic %.8g fd %.8g\n", tg.dtx,
                fd([](TransformParams& t, double d) { t.tx += d; }, h));
    std::printf("dty analytic %.8g fd %.8g\n", tg.dty,
                fd([](TransformParams& t, double d) { t.ty += d; }, h));
    for (int i : {2080, 2113, 1500}) {
      Patch p2 = patch;
      p2.px[i] += 0.25;
      Patch p3 = patch;
      p3.px[i] -= 0.25;
      std::printf("dpatch[%d] analytic %.8g fd %.8g\n", i, dpatch.px[i],
                  (loss_at(tp, p2) - loss_at(tp, p3)) / 0.5);
    }
  } else if (mode == "attack") {
    const int n_scenes = argc > 2 ? std::atoi(argv[2]) : 60;
    const int iters = argc > 3 ? std::atoi(argv[3]) : 20;
    Dataset ds = sample_dataset(2000, cam, 42);
    auto res = train_surrogate(ds, 42, 30);
    Dataset desk = sample_dataset(n_scenes, cam, 1);
    auto [S, E] = split_dataset(desk, 0.9, 1);
    TargetSet targets{{{1, -1, 0}, {1, 1, 0}}};
    {
      // no-patch reference: how far the clean predictions sit from targets
      ForwardWorkspace ws;
      double acc = 0.0;
      for (auto& sc : E.scenes) {
        auto out = forward(res.model, sc.image, ws);
        for (auto& t : targets.targets)
          acc += (Vec3{out[0], out[1], out[2]} - t).norm();
      }
      std::printf("clean testset loss (sum over K): %.4f\n",
                  acc / double(E.size()));
    }
    AttackConfig cfg;
    cfg.M = 2;
    cfg.iterations = iters;
    cfg.seed = 5;
    cfg.batch_size = argc > 4 ? std::atoi(argv[4]) : 32;
    cfg.lr = argc > 5 ? std::atof(argv[5]) : 1e-3;
    auto t0 = Clock::now();
    auto r = optimize_joint(res.model, S, E, targets, cfg);
    std::printf("joint %d iters on |S|=%zu: %.1f s\n", iters, S.size(),
                ms_since(t0) / 1000.0);
    std::printf("loss_test: first %.4f last %.4f\n", r.metrics.front().loss_test,
                r.metrics.back().loss_test);
    for (const auto& im : r.metrics)
      if (im.iter % 5 == 0)
        std::printf("  iter %d train %.4f test %.4f\n", im.iter, im.loss_train,
                    im.loss_test);
  } else if (mode == "quant") {
    const int seeds = argc > 2 ? std::atoi(argv[2]) : 2;
    const int iters = argc > 3 ? std::atoi(argv[3]) : 60;
    Dataset ds = sample_dataset(2000, cam, 42);
    auto res = train_surrogate(ds, 42, 30);
    auto qmodel = quantize_model(res.model);
    Dataset desk = sample_dataset(60, cam, 1);
    auto [S, E] = split_dataset(desk, 0.9, 1);
    TargetSet targets{{{1, -1, 0}, {1, 1, 0}}};
    for (int sd = 0; sd < seeds; ++sd) {
      AttackConfig cfg;
      cfg.M = 1;
      cfg.iterations = iters;
      cfg.seed = 100 + sd;
      cfg.batch_size = 4;
      cfg.init_from_image = true;
      cfg.init_image = desk.scenes[0].image;
      auto r_fp = optimize_joint(res.model, S, E, targets, cfg);
      auto r_q = optimize_joint(qmodel, S, E, targets, cfg);
      const double fp_on_q = evaluate(qmodel, E, r_fp.ps, r_fp.A, targets).total_loss;
      const double q_on_q = evaluate(qmodel, E, r_q.ps, r_q.A, targets).total_loss;
      std::printf("seed %d: fp-trained on Q %.4f | q-trained on Q %.4f  %s\n",
                  sd, fp_on_q, q_on_q, q_on_q <= fp_on_q ? "OK" : "MISS");
    }
  } else if (mode == "scale") {
    const int iters = argc > 2 ? std::atoi(argv[2]) : 20;
    Dataset ds = sample_dataset(2000, cam, 42);
    auto res = train_surrogate(ds, 42, 30);
    Dataset desk = sample_dataset(60, cam, 1);
    auto [S, E] = split_dataset(desk, 0.9, 1);
    TargetSet targets;
    for (double y : {-1.0, 0.0, 1.0})
      for (double z : {-1.0, 0.0, 1.0}) targets.targets.push_back({1, y, z});
    targets.targets.push_back({2, 0, 0});
    for (int M : {1, 3, 5}) {
      AttackConfig cfg;
      cfg.M = M;
      cfg.iterations = iters;
      cfg.seed = 7;
      cfg.batch_size = 4;
      auto t0 = Clock::now();
      auto r = optimize_joint(res.model, S, E, targets, cfg);
      std::vector<double> pt = r.final_eval.per_target;
      std::sort(pt.begin(), pt.end());
      std::printf("M=%d (%.0fs): median per-target %.4f  total %.4f\n", M,
                  ms_since(t0) / 1000.0, pt[pt.size() / 2],
                  r.final_eval.total_loss);
    }
  } else if (mode == "compare") {
    const int n_scenes = argc > 2 ? std::atoi(argv[2]) : 100;
    const int iters = argc > 3 ? std::atoi(argv[3]) : 100;
    const int batch = argc > 4 ? std::atoi(argv[4]) : 4;
    const int R = argc > 5 ? std::atoi(argv[5]) : 3;
    Dataset ds = sample_dataset(2000, cam, 42);
    auto res = train_surrogate(ds, 42, 30);
    Dataset desk = sample_dataset(n_scenes, cam, 1);
    auto [S, E] = split_dataset(desk, 0.9, 1);
    TargetSet targets{{{1, -1, 0}, {1, 1, 0}}};
    AttackConfig cfg;
    cfg.M = 2;
    cfg.iterations = iters;
    cfg.seed = 5;
    cfg.batch_size = batch;
    cfg.restarts = R;
    for (const std::string method : {"fixed", "joint", "split", "hybrid"}) {
      auto t0 = Clock::now();
      AttackResult r;
      if (method == "fixed") r = optimize_fixed(res.model, S, E, targets, cfg);
      if (method == "joint") r = optimize_joint(res.model, S, E, targets, cfg);
      if (method == "split") r = optimize_split(res.model, S, E, targets, cfg);
      if (method == "hybrid") r = optimize_hybrid(res.model, S, E, targets, cfg);
      std::printf("%-6s %6.1f s  final test %.4f  per-target", method.c_str(),
                  ms_since(t0) / 1000.0, r.final_eval.total_loss);
      for (double v : r.final_eval.per_target) std::printf(" %.4f", v);
      std::printf("\n");
    }
  }
  return 0;
}
