#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "advpatch/data.hpp"
#include "advpatch/nn.hpp"
#include "advpatch/rng.hpp"

namespace advpatch {

// Bias-corrected Adam. One state per parameter tensor.
struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0, double lr_ = 1e-3) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

inline void adam_step(double* params, const double* grads, std::size_t n,
                      AdamState& st) {
  if (st.m.size() != n) throw std::invalid_argument("adam state shape mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    if (std::isnan(g)) throw std::runtime_error("diverged");
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

struct SurrogateTrainConfig {
  std::array<int, 3> channels = {4, 8, 16};
  int hidden = 32;
  double lr = 1e-3;
  int batch_size = 32;
  double phi_weight = 0.1;   // yaw is kept in the loss at low weight
  double mse_gate = 0.05;    // required validation position MSE, m^2
  double val_fraction = 0.1;
  int input_h = 96;
  int input_w = 160;
};

struct SurrogateTrainResult {
  VictimModel model;
  double val_mse = 0.0;  // per-component position MSE on the held-out slice
  std::vector<double> epoch_train_loss;
};

// Position MSE per component (m^2), yaw excluded.
inline double validation_mse(const VictimModel& m, const Dataset& val) {
  ForwardWorkspace ws;
  double acc = 0.0;
  for (const auto& sc : val.scenes) {
    const auto out = forward(m, sc.image, ws);
    for (int c = 0; c < 3; ++c) {
      const double r = out[c] - sc.pose[c];
      acc += r * r;
    }
  }
  return acc / (3.0 * double(val.size()));
}

// Trains the surrogate victim on synthetic scenes with Adam. A validation
// slice is carved from the input deterministically; the returned model must
// reach the MSE gate on it or the call fails (raise epochs and retry).
inline SurrogateTrainResult train_surrogate(const Dataset& train,
                                            std::uint64_t seed, int epochs,
                                            const SurrogateTrainConfig& cfg = {}) {
  if (train.empty()) throw std::invalid_argument("empty dataset");
  auto [fit, val] = split_dataset(train, 1.0 - cfg.val_fraction, seed);
  if (fit.empty() || val.empty())
    throw std::invalid_argument("dataset too small to carve validation slice");

  SurrogateTrainResult res;
  res.model = make_victim_model(seed, cfg.channels, cfg.hidden, cfg.input_h,
                                cfg.input_w);
  // normalization constants from the fit slice
  {
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& sc : fit.scenes) {
      for (double v : sc.image.px) {
        s += v;
        s2 += v * v;
      }
      n += sc.image.px.size();
    }
    const double mean = s / double(n);
    const double var = std::max(1.0, s2 / double(n) - mean * mean);
    res.model.norm_mean = mean;
    res.model.norm_std = std::sqrt(var);
  }

  auto params = res.model.param_tensors();
  std::vector<AdamState> states;
  for (Tensor* t : params) states.emplace_back(t->numel(), cfg.lr);

  ForwardWorkspace ws;
  ParamGrads grads = ParamGrads::zeros_like(res.model);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(seed, stream_tag::kTrainShuffle,
                                  std::uint64_t(epoch));
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (const auto& batch : batches(fit.size(), cfg.batch_size, shuffle_rng)) {
      auto gts = grads.tensors();
      for (Tensor* g : gts) g->zero();
      double batch_loss = 0.0;
      const double inv_b = 1.0 / double(batch.size());
      for (std::size_t si : batch) {
        const Scene& sc = fit.scenes[si];
        const auto out = forward(res.model, sc.image, ws);
        std::array<double, 4> dout{};
        for (int c = 0; c < 3; ++c) {
          const double r = out[c] - sc.pose[c];
          batch_loss += r * r / 3.0 * inv_b;
          dout[c] = 2.0 * r / 3.0 * inv_b;
        }
        const double rphi = out[3] - sc.pose[3];
        batch_loss += cfg.phi_weight * rphi * rphi * inv_b;
        dout[3] = 2.0 * cfg.phi_weight * rphi * inv_b;
        backward(res.model, ws, dout, &grads);
      }
      for (std::size_t i = 0; i < params.size(); ++i)
        adam_step(params[i]->data.data(), gts[i]->data.data(),
                  params[i]->numel(), states[i]);
      epoch_loss += batch_loss;
      ++n_batches;
    }
    res.epoch_train_loss.push_back(epoch_loss / double(n_batches));
  }

  res.val_mse = validation_mse(res.model, val);
  if (!(res.val_mse <= cfg.mse_gate))
    throw std::runtime_error("surrogate under-trained: validation MSE " +
                             std::to_string(res.val_mse) + " above gate " +
                             std::to_string(cfg.mse_gate));
  return res;
}

}  // namespace advpatch
