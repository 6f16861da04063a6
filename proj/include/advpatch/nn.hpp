#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "advpatch/image.hpp"
#include "advpatch/rng.hpp"
#include "advpatch/tensor.hpp"

namespace advpatch {

// Victim pose-regression CNN: three stride-2 3x3 convolutions with ReLU,
// global average pooling, and a small fully-connected head emitting
// (x, y, z, phi). The grayscale input is normalized and extended with two
// fixed coordinate-ramp channels so pooled features retain position
// information.
//
// Parameters are doubles so that saved models round-trip bit-exactly and
// input gradients can be validated against finite differences.

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian");

namespace nn {

// out[oc] plane = b[oc] + sum_ic conv(in[ic], w[oc][ic]); kernel 3, stride 2,
// pad 1. Input height/width must be even, which makes iy/ix = -1 the only
// out-of-range taps.
inline void conv3x3s2_forward(const double* in, int ic_n, int ih, int iw,
                              const double* w, const double* b, double* out,
                              int oc_n) {
  const int oh = ih / 2, ow = iw / 2;
  const std::size_t in_plane = std::size_t(ih) * iw;
  const std::size_t out_plane = std::size_t(oh) * ow;
  for (int oc = 0; oc < oc_n; ++oc) {
    double* op = out + oc * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) op[i] = b[oc];
    for (int ic = 0; ic < ic_n; ++ic) {
      const double* ip = in + ic * in_plane;
      const double* wp = w + ((oc * ic_n) + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const double w0 = wp[ky * 3 + 0], w1 = wp[ky * 3 + 1], w2 = wp[ky * 3 + 2];
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0) continue;
          const double* row = ip + std::size_t(iy) * iw;
          double* orow = op + std::size_t(oy) * ow;
          // ox = 0: the kx = 0 tap reads ix = -1, skip it
          orow[0] += w1 * row[0] + w2 * row[1];
          for (int ox = 1; ox < ow; ++ox) {
            const int ix = 2 * ox;
            orow[ox] += w0 * row[ix - 1] + w1 * row[ix] + w2 * row[ix + 1];
          }
        }
      }
    }
  }
}

// din += conv-transpose of dout; din must be zeroed by the caller.
inline void conv3x3s2_backward_input(const double* dout, int oc_n, int oh,
                                     int ow, const double* w, double* din,
                                     int ic_n) {
  const int ih = oh * 2, iw = ow * 2;
  const std::size_t in_plane = std::size_t(ih) * iw;
  const std::size_t out_plane = std::size_t(oh) * ow;
  for (int oc = 0; oc < oc_n; ++oc) {
    const double* gp = dout + oc * out_plane;
    for (int ic = 0; ic < ic_n; ++ic) {
      double* dp = din + ic * in_plane;
      const double* wp = w + ((oc * ic_n) + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const double w0 = wp[ky * 3 + 0], w1 = wp[ky * 3 + 1], w2 = wp[ky * 3 + 2];
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0) continue;
          double* drow = dp + std::size_t(iy) * iw;
          const double* grow = gp + std::size_t(oy) * ow;
          drow[0] += w1 * grow[0];
          drow[1] += w2 * grow[0];
          for (int ox = 1; ox < ow; ++ox) {
            const double g = grow[ox];
            const int ix = 2 * ox;
            drow[ix - 1] += w0 * g;
            drow[ix] += w1 * g;
            drow[ix + 1] += w2 * g;
          }
        }
      }
    }
  }
}

// gw/gb accumulate; caller zeroes them once per batch.
inline void conv3x3s2_backward_params(const double* dout, int oc_n, int oh,
                                      int ow, const double* in, int ic_n,
                                      double* gw, double* gb) {
  const int ih = oh * 2, iw = ow * 2;
  const std::size_t in_plane = std::size_t(ih) * iw;
  const std::size_t out_plane = std::size_t(oh) * ow;
  for (int oc = 0; oc < oc_n; ++oc) {
    const double* gp = dout + oc * out_plane;
    double gbs = 0.0;
    for (std::size_t i = 0; i < out_plane; ++i) gbs += gp[i];
    gb[oc] += gbs;
    for (int ic = 0; ic < ic_n; ++ic) {
      const double* ip = in + ic * in_plane;
      double* wp = gw + ((oc * ic_n) + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        double a0 = 0.0, a1 = 0.0, a2 = 0.0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0) continue;
          const double* row = ip + std::size_t(iy) * iw;
          const double* grow = gp + std::size_t(oy) * ow;
          a1 += grow[0] * row[0];
          a2 += grow[0] * row[1];
          for (int ox = 1; ox < ow; ++ox) {
            const double g = grow[ox];
            const int ix = 2 * ox;
            a0 += g * row[ix - 1];
            a1 += g * row[ix];
            a2 += g * row[ix + 1];
          }
        }
        wp[ky * 3 + 0] += a0;
        wp[ky * 3 + 1] += a1;
        wp[ky * 3 + 2] += a2;
      }
    }
  }
}

inline void relu_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] < 0.0) x[i] = 0.0;
}

// masks gradient where the stored post-ReLU activation is zero
inline void relu_backward_inplace(double* g, const double* act, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (act[i] <= 0.0) g[i] = 0.0;
}

}  // namespace nn

struct VictimModel {
  int input_h = 96;
  int input_w = 160;
  // conv stack: tensors [oc, ic, 3, 3] + biases; head: fc1 [hidden, c3],
  // fc2 [4, hidden]
  std::vector<Tensor> conv_w, conv_b;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
  double norm_mean = 127.5;
  double norm_std = 74.0;
  bool quantized = false;

  int in_channels() const { return conv_w.empty() ? 0 : conv_w[0].shape[1]; }
  int features() const { return fc1_w.shape[1]; }
  int hidden() const { return fc1_w.shape[0]; }

  std::vector<Tensor*> param_tensors() {
    std::vector<Tensor*> p;
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
      p.push_back(&conv_w[i]);
      p.push_back(&conv_b[i]);
    }
    p.push_back(&fc1_w);
    p.push_back(&fc1_b);
    p.push_back(&fc2_w);
    p.push_back(&fc2_b);
    return p;
  }
  std::vector<const Tensor*> param_tensors() const {
    auto p = const_cast<VictimModel*>(this)->param_tensors();
    return {p.begin(), p.end()};
  }
};

// He-initialized model. channels are the three conv output widths.
inline VictimModel make_victim_model(std::uint64_t seed,
                                     std::array<int, 3> channels = {4, 8, 16},
                                     int hidden = 32, int input_h = 96,
                                     int input_w = 160) {
  VictimModel m;
  m.input_h = input_h;
  m.input_w = input_w;
  Rng rng = Rng::stream(seed, stream_tag::kModelInit);
  int ic = 3;  // gray + 2 coordinate ramps
  for (int l = 0; l < 3; ++l) {
    const int oc = channels[l];
    Tensor w({oc, ic, 3, 3});
    const double std_he = std::sqrt(2.0 / (ic * 9.0));
    for (auto& v : w.data) v = rng.normal(0.0, std_he);
    m.conv_w.push_back(std::move(w));
    m.conv_b.emplace_back(std::vector<int>{oc}, 0.0);
    ic = oc;
  }
  m.fc1_w = Tensor({hidden, channels[2]});
  {
    const double std_he = std::sqrt(2.0 / channels[2]);
    for (auto& v : m.fc1_w.data) v = rng.normal(0.0, std_he);
  }
  m.fc1_b = Tensor({hidden}, 0.0);
  m.fc2_w = Tensor({4, hidden});
  {
    const double std_he = std::sqrt(1.0 / hidden);
    for (auto& v : m.fc2_w.data) v = rng.normal(0.0, std_he);
  }
  m.fc2_b = Tensor({4}, 0.0);
  return m;
}

// Per-image activation storage, reused across forward passes.
struct ForwardWorkspace {
  Tensor input;              // [3, H, W]
  std::array<Tensor, 3> a;   // post-ReLU conv activations
  std::vector<double> gap;   // pooled features
  std::vector<double> h;     // post-ReLU hidden
  std::array<double, 4> out{};
  // backward scratch
  std::array<Tensor, 3> da;
  Tensor dinput;
};

inline void build_input(const VictimModel& m, const Image& img, Tensor& input) {
  const int H = m.input_h, W = m.input_w;
  if (img.height != H || img.width != W)
    throw std::runtime_error("input image dimensions mismatch");
  if (input.shape != std::vector<int>{3, H, W}) input = Tensor({3, H, W});
  double* ch0 = input.data.data();
  double* ch1 = ch0 + std::size_t(H) * W;
  double* ch2 = ch1 + std::size_t(H) * W;
  const double inv_std = 1.0 / m.norm_std;
  for (int y = 0; y < H; ++y) {
    const double v = 2.0 * y / (H - 1) - 1.0;
    for (int x = 0; x < W; ++x) {
      const std::size_t i = std::size_t(y) * W + x;
      ch0[i] = (img.px[i] - m.norm_mean) * inv_std;
      ch1[i] = 2.0 * x / (W - 1) - 1.0;
      ch2[i] = v;
    }
  }
}

inline std::array<double, 4> forward(const VictimModel& m, const Image& img,
                                     ForwardWorkspace& ws) {
  build_input(m, img, ws.input);
  int h = m.input_h, w = m.input_w;
  const Tensor* src = &ws.input;
  int ic = 3;
  for (int l = 0; l < 3; ++l) {
    const int oc = m.conv_w[l].shape[0];
    const int oh = h / 2, ow = w / 2;
    if (ws.a[l].shape != std::vector<int>{oc, oh, ow})
      ws.a[l] = Tensor({oc, oh, ow});
    nn::conv3x3s2_forward(src->data.data(), ic, h, w, m.conv_w[l].data.data(),
                          m.conv_b[l].data.data(), ws.a[l].data.data(), oc);
    nn::relu_inplace(ws.a[l].data.data(), ws.a[l].numel());
    src = &ws.a[l];
    ic = oc;
    h = oh;
    w = ow;
  }
  // global average pool
  const int feat = ic;
  const std::size_t plane = std::size_t(h) * w;
  ws.gap.assign(feat, 0.0);
  for (int c = 0; c < feat; ++c) {
    const double* p = ws.a[2].data.data() + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    ws.gap[c] = s / double(plane);
  }
  // head
  const int hid = m.hidden();
  ws.h.assign(hid, 0.0);
  for (int i = 0; i < hid; ++i) {
    double s = m.fc1_b.data[i];
    const double* wr = m.fc1_w.data.data() + std::size_t(i) * feat;
    for (int j = 0; j < feat; ++j) s += wr[j] * ws.gap[j];
    ws.h[i] = s > 0.0 ? s : 0.0;
  }
  for (int o = 0; o < 4; ++o) {
    double s = m.fc2_b.data[o];
    const double* wr = m.fc2_w.data.data() + std::size_t(o) * hid;
    for (int i = 0; i < hid; ++i) s += wr[i] * ws.h[i];
    ws.out[o] = s;
  }
  return ws.out;
}

inline std::array<double, 4> forward(const VictimModel& m, const Image& img) {
  ForwardWorkspace ws;
  return forward(m, img, ws);
}

struct ParamGrads {
  std::vector<Tensor> conv_w, conv_b;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;

  static ParamGrads zeros_like(const VictimModel& m) {
    ParamGrads g;
    for (std::size_t i = 0; i < m.conv_w.size(); ++i) {
      g.conv_w.emplace_back(m.conv_w[i].shape, 0.0);
      g.conv_b.emplace_back(m.conv_b[i].shape, 0.0);
    }
    g.fc1_w = Tensor(m.fc1_w.shape, 0.0);
    g.fc1_b = Tensor(m.fc1_b.shape, 0.0);
    g.fc2_w = Tensor(m.fc2_w.shape, 0.0);
    g.fc2_b = Tensor(m.fc2_b.shape, 0.0);
    return g;
  }
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> p;
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
      p.push_back(&conv_w[i]);
      p.push_back(&conv_b[i]);
    }
    p.push_back(&fc1_w);
    p.push_back(&fc1_b);
    p.push_back(&fc2_w);
    p.push_back(&fc2_b);
    return p;
  }
};

// Backpropagates dout through the network recorded in ws. Returns the
// gradient w.r.t. the raw image pixels in ws.dinput channel 0 scaled by the
// normalization. If pgrads is nonnull, parameter gradients are accumulated.
inline void backward(const VictimModel& m, ForwardWorkspace& ws,
                     const std::array<double, 4>& dout,
                     ParamGrads* pgrads = nullptr) {
  const int feat = m.features();
  const int hid = m.hidden();
  // fc2
  std::vector<double> dh(hid, 0.0);
  for (int o = 0; o < 4; ++o) {
    const double g = dout[o];
    const double* wr = m.fc2_w.data.data() + std::size_t(o) * hid;
    for (int i = 0; i < hid; ++i) dh[i] += wr[i] * g;
    if (pgrads) {
      double* gw = pgrads->fc2_w.data.data() + std::size_t(o) * hid;
      for (int i = 0; i < hid; ++i) gw[i] += g * ws.h[i];
      pgrads->fc2_b.data[o] += g;
    }
  }
  for (int i = 0; i < hid; ++i)
    if (ws.h[i] <= 0.0) dh[i] = 0.0;
  // fc1
  std::vector<double> dgap(feat, 0.0);
  for (int i = 0; i < hid; ++i) {
    const double g = dh[i];
    if (g == 0.0 && !pgrads) continue;
    const double* wr = m.fc1_w.data.data() + std::size_t(i) * feat;
    for (int j = 0; j < feat; ++j) dgap[j] += wr[j] * g;
    if (pgrads) {
      double* gw = pgrads->fc1_w.data.data() + std::size_t(i) * feat;
      for (int j = 0; j < feat; ++j) gw[j] += g * ws.gap[j];
      pgrads->fc1_b.data[i] += g;
    }
  }
  // GAP spreads gradient uniformly over the last conv plane
  const int h3 = ws.a[2].shape[1], w3 = ws.a[2].shape[2];
  const std::size_t plane3 = std::size_t(h3) * w3;
  if (ws.da[2].shape != ws.a[2].shape) ws.da[2] = Tensor(ws.a[2].shape);
  for (int c = 0; c < feat; ++c) {
    const double g = dgap[c] / double(plane3);
    double* p = ws.da[2].data.data() + c * plane3;
    for (std::size_t i = 0; i < plane3; ++i) p[i] = g;
  }
  // conv stack
  for (int l = 2; l >= 0; --l) {
    nn::relu_backward_inplace(ws.da[l].data.data(), ws.a[l].data.data(),
                              ws.a[l].numel());
    const Tensor& in = (l == 0) ? ws.input : ws.a[l - 1];
    Tensor& din = (l == 0) ? ws.dinput : ws.da[l - 1];
    if (din.shape != in.shape) din = Tensor(in.shape);
    din.zero();
    const int oc = m.conv_w[l].shape[0];
    const int icn = m.conv_w[l].shape[1];
    const int oh = ws.a[l].shape[1], ow = ws.a[l].shape[2];
    nn::conv3x3s2_backward_input(ws.da[l].data.data(), oc, oh, ow,
                                 m.conv_w[l].data.data(), din.data.data(), icn);
    if (pgrads)
      nn::conv3x3s2_backward_params(ws.da[l].data.data(), oc, oh, ow,
                                    in.data.data(), icn,
                                    pgrads->conv_w[l].data.data(),
                                    pgrads->conv_b[l].data.data());
  }
}

// Extracts gradient w.r.t. raw image pixels from ws.dinput (channel 0).
inline void image_gradient(const VictimModel& m, const ForwardWorkspace& ws,
                           Image& dimg) {
  const int H = m.input_h, W = m.input_w;
  if (dimg.height != H || dimg.width != W) dimg = Image(H, W);
  const double inv_std = 1.0 / m.norm_std;
  const double* ch0 = ws.dinput.data.data();
  for (std::size_t i = 0; i < std::size_t(H) * W; ++i)
    dimg.px[i] = ch0[i] * inv_std;
}

// --- int8 emulation -------------------------------------------------------

// Symmetric per-tensor weight quantization: every value snaps to q * scale
// with integer q in [-127, 127] and scale = max|w| / 127. Ties round half
// away from zero. Activations stay real.
inline void quantize_tensor(Tensor& t) {
  double amax = 0.0;
  for (double v : t.data) amax = std::max(amax, std::abs(v));
  const double scale = amax > 0.0 ? amax / 127.0 : 1.0;
  for (auto& v : t.data) {
    double q = std::round(v / scale);
    if (q > 127.0) q = 127.0;
    if (q < -127.0) q = -127.0;
    v = q * scale;
  }
}

inline VictimModel quantize_model(const VictimModel& model) {
  VictimModel q = model;
  for (Tensor* t : q.param_tensors()) quantize_tensor(*t);
  q.quantized = true;
  return q;
}

// --- serialization --------------------------------------------------------
//
// Layout: magic "PFVM", u32 version (1), u32 tensor count, then per tensor
// u32 ndims, u32 dims[], f64 data[], all little-endian. Tensor order:
// norm_mean, norm_std, conv{1..3} weight/bias, fc1 w/b, fc2 w/b.

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

struct Reader {
  std::ifstream f;
  std::size_t offset = 0;
  explicit Reader(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw std::runtime_error("cannot open model file: " + path);
  }
  void read(void* dst, std::size_t n, const char* what) {
    f.read(reinterpret_cast<char*>(dst), std::streamsize(n));
    if (std::size_t(f.gcount()) != n)
      throw std::runtime_error("model parse error at byte offset " +
                               std::to_string(offset) + ": truncated " + what);
    offset += n;
  }
  std::uint32_t read_u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
};

inline void write_tensor(std::ofstream& f, const Tensor& t) {
  const std::uint32_t nd = std::uint32_t(t.shape.size());
  f.write(reinterpret_cast<const char*>(&nd), 4);
  for (int d : t.shape) {
    const std::uint32_t u = std::uint32_t(d);
    f.write(reinterpret_cast<const char*>(&u), 4);
  }
  f.write(reinterpret_cast<const char*>(t.data.data()),
          std::streamsize(t.data.size() * sizeof(double)));
}

inline Tensor read_tensor(Reader& r) {
  const std::uint32_t nd = r.read_u32("tensor rank");
  if (nd > 8)
    throw std::runtime_error("model parse error at byte offset " +
                             std::to_string(r.offset - 4) +
                             ": implausible tensor rank");
  std::vector<int> shape(nd);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = int(r.read_u32("tensor dim"));
    n *= std::size_t(d);
  }
  if (n > (1u << 26))
    throw std::runtime_error("model parse error at byte offset " +
                             std::to_string(r.offset) +
                             ": implausible tensor size");
  Tensor t(shape);
  r.read(t.data.data(), n * sizeof(double), "tensor data");
  return t;
}

}  // namespace detail

inline void save_model(const VictimModel& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write("PFVM", 4);
  const std::uint32_t ver = kModelVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  std::vector<const Tensor*> tensors;
  Tensor mean({1}), std_({1}), geom({2});
  mean.data[0] = m.norm_mean;
  std_.data[0] = m.norm_std;
  geom.data = {double(m.input_h), double(m.input_w)};
  tensors.push_back(&geom);
  tensors.push_back(&mean);
  tensors.push_back(&std_);
  for (const Tensor* t : m.param_tensors()) tensors.push_back(t);
  const std::uint32_t count = std::uint32_t(tensors.size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (const Tensor* t : tensors) detail::write_tensor(f, *t);
  if (!f) throw std::runtime_error("short write: " + path);
}

inline VictimModel load_model(const std::string& path) {
  detail::Reader r(path);
  char magic[4];
  r.read(magic, 4, "magic");
  if (std::memcmp(magic, "PFVM", 4) != 0)
    throw std::runtime_error("model parse error at byte offset 0: bad magic");
  const std::uint32_t ver = r.read_u32("version");
  if (ver != kModelVersion)
    throw std::runtime_error("unsupported model version " +
                             std::to_string(ver));
  const std::uint32_t count = r.read_u32("tensor count");
  if (count != 13)
    throw std::runtime_error("model parse error at byte offset 8: expected 13 tensors");
  std::vector<Tensor> ts;
  ts.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i)
    ts.push_back(detail::read_tensor(r));
  VictimModel m;
  m.input_h = int(ts[0].data.at(0));
  m.input_w = int(ts[0].data.at(1));
  m.norm_mean = ts[1].data.at(0);
  m.norm_std = ts[2].data.at(0);
  for (int l = 0; l < 3; ++l) {
    m.conv_w.push_back(std::move(ts[3 + 2 * l]));
    m.conv_b.push_back(std::move(ts[4 + 2 * l]));
  }
  m.fc1_w = std::move(ts[9]);
  m.fc1_b = std::move(ts[10]);
  m.fc2_w = std::move(ts[11]);
  m.fc2_b = std::move(ts[12]);
  for (int l = 0; l < 3; ++l)
    if (m.conv_w[l].shape.size() != 4 || m.conv_b[l].shape.size() != 1)
      throw std::runtime_error("model parse error: bad conv tensor shapes");
  return m;
}

}  // namespace advpatch
