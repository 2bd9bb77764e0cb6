#ifndef WEAKPARK_PAIRNET_HPP_
#define WEAKPARK_PAIRNET_HPP_

// Weight-shared pairwise comparison network.
//
//   image -> [conv3x3/s2 + SiLU] x N -> global mean pool -> affine -> e (128)
//   p(a beats b) = sigmoid(w2 . tanh(W1 (e_a - e_b) + b1) + b2)
//
// Both branches read the one encoder parameter block, so weight sharing is a
// property of the storage layout rather than a synchronisation step.
// Everything is templated on the scalar type: float for training, double
// for finite-difference verification.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "weakpark/error.hpp"
#include "weakpark/imaging.hpp"
#include "weakpark/rng.hpp"

namespace weakpark {

inline constexpr int kEmbeddingDim = 128;
inline constexpr double kLogitClamp = 30.0;
inline constexpr double kDefaultScoreThreshold = 0.5;

struct EncoderConfig {
  int bands = 4;
  int side = 64;
  std::vector<int> channels{16, 32, 64, 128};
  int embedding_dim = kEmbeddingDim;
  int head_hidden = 64;

  void validate() const;
  std::size_t input_size() const {
    return static_cast<std::size_t>(bands) * side * side;
  }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // in elements
  std::size_t size = 0;

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

/// Manifest order: encoder.conv{i}.weight/bias, encoder.proj.weight/bias,
/// head.fc1.weight/bias, head.fc2.weight/bias.
std::vector<TensorSpec> parameter_layout(const EncoderConfig& config);

template <typename T>
class PairNetParams {
 public:
  explicit PairNetParams(EncoderConfig config = {})
      : config_(std::move(config)), layout_(parameter_layout(config_)) {
    values_.assign(layout_.back().offset + layout_.back().size, T(0));
  }

  const EncoderConfig& config() const { return config_; }
  const std::vector<TensorSpec>& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  std::span<T> tensor(std::string_view name) {
    const TensorSpec& s = spec(name);
    return std::span<T>(values_).subspan(s.offset, s.size);
  }
  std::span<const T> tensor(std::string_view name) const {
    const TensorSpec& s = spec(name);
    return std::span<const T>(values_).subspan(s.offset, s.size);
  }

  const TensorSpec& spec(std::string_view name) const {
    for (const auto& s : layout_) {
      if (s.name == name) return s;
    }
    throw Error(ErrorKind::kShape, "no parameter tensor named '" + std::string(name) + "'");
  }

  template <typename U>
  PairNetParams<U> cast() const {
    PairNetParams<U> out(config_);
    std::transform(values_.begin(), values_.end(), out.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const PairNetParams&, const PairNetParams&) = default;

 private:
  EncoderConfig config_;
  std::vector<TensorSpec> layout_;
  std::vector<T> values_;
};

/// Kaiming fan-in normal weights (std = sqrt(2 / fan_in)) from a splitmix64
/// stream in manifest order; biases zero.
template <typename T>
void init_kaiming(PairNetParams<T>& params, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (const auto& s : params.layout()) {
    auto t = params.tensor(s.name);
    if (s.shape.size() == 1) {
      std::fill(t.begin(), t.end(), T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < s.shape.size(); ++i) fan_in *= static_cast<std::size_t>(s.shape[i]);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t) v = static_cast<T>(std * rng.normal());
  }
}

// ---------------------------------------------------------------------------
// Scalar helpers

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double clamp_logit(double z) { return std::clamp(z, -kLogitClamp, kLogitClamp); }

/// Binary cross-entropy of a logit, log-sum-exp form; the logit is clamped
/// to [-30, 30] first.
inline double bce_from_logit(double z, int label) {
  z = clamp_logit(z);
  return std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
}

/// BCE of a probability, routed through its logit.
inline double bce_loss(double p, int label) {
  require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
  require(label == 0 || label == 1, "label must be 0 or 1");
  return bce_from_logit(std::log(p) - std::log1p(-p), label);
}

inline int predict_label(double p, double threshold = kDefaultScoreThreshold) {
  return p > threshold ? 1 : 0;
}

namespace detail {

struct LayerIndex {
  int cin, cout, hin, win, hout, wout;
  std::size_t w_off, b_off;
};

struct NetIndex {
  std::vector<LayerIndex> convs;
  std::size_t proj_w, proj_b, fc1_w, fc1_b, fc2_w, fc2_b;
  int last_channels, emb, hidden;
};

inline NetIndex index_of(const EncoderConfig& cfg, const std::vector<TensorSpec>& layout) {
  NetIndex ix{};
  int h = cfg.side, w = cfg.side, cin = cfg.bands;
  std::size_t li = 0;
  for (int cout : cfg.channels) {
    LayerIndex l{cin, cout, h, w, (h - 1) / 2 + 1, (w - 1) / 2 + 1, layout[li].offset,
                 layout[li + 1].offset};
    ix.convs.push_back(l);
    li += 2;
    h = l.hout;
    w = l.wout;
    cin = cout;
  }
  ix.proj_w = layout[li].offset;
  ix.proj_b = layout[li + 1].offset;
  ix.fc1_w = layout[li + 2].offset;
  ix.fc1_b = layout[li + 3].offset;
  ix.fc2_w = layout[li + 4].offset;
  ix.fc2_b = layout[li + 5].offset;
  ix.last_channels = cin;
  ix.emb = cfg.embedding_dim;
  ix.hidden = cfg.head_hidden;
  return ix;
}

template <typename T>
inline void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// 3x3 kernel, stride 2, zero padding 1. col is (cin*9) x (hout*wout).
template <typename T>
void im2col(const LayerIndex& l, const T* x, T* col) {
  const std::size_t P = static_cast<std::size_t>(l.hout) * l.wout;
  for (int ci = 0; ci < l.cin; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * l.hin * l.win;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * P;
        for (int oy = 0; oy < l.hout; ++oy) {
          const int iy = oy * 2 + ky - 1;
          T* out = row + static_cast<std::size_t>(oy) * l.wout;
          if (iy < 0 || iy >= l.hin) {
            std::fill(out, out + l.wout, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * l.win;
          for (int ox = 0; ox < l.wout; ++ox) {
            const int ix = ox * 2 + kx - 1;
            out[ox] = (ix < 0 || ix >= l.win) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const LayerIndex& l, const T* col, T* dx) {
  const std::size_t P = static_cast<std::size_t>(l.hout) * l.wout;
  std::fill(dx, dx + static_cast<std::size_t>(l.cin) * l.hin * l.win, T(0));
  for (int ci = 0; ci < l.cin; ++ci) {
    T* plane = dx + static_cast<std::size_t>(ci) * l.hin * l.win;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * P;
        for (int oy = 0; oy < l.hout; ++oy) {
          const int iy = oy * 2 + ky - 1;
          if (iy < 0 || iy >= l.hin) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * l.win;
          const T* in = row + static_cast<std::size_t>(oy) * l.wout;
          for (int ox = 0; ox < l.wout; ++ox) {
            const int ix = ox * 2 + kx - 1;
            if (ix >= 0 && ix < l.win) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

template <typename T>
inline T silu(T z) {
  return z / (T(1) + std::exp(-z));
}

template <typename T>
inline T silu_grad(T z) {
  const T s = T(1) / (T(1) + std::exp(-z));
  return s * (T(1) + z * (T(1) - s));
}

}  // namespace detail

/// Activations kept from a forward pass for the backward pass.
template <typename T>
struct EncoderTrace {
  std::vector<std::vector<T>> cols;
  std::vector<std::vector<T>> pre;
  std::vector<std::vector<T>> act;
  std::vector<T> pooled;
  std::vector<T> embedding;
};

template <typename T>
struct HeadTrace {
  std::vector<T> diff;
  std::vector<T> hidden;
  double raw_logit = 0.0;
};

/// Forward pass of the shared encoder. `input` is bands x side x side.
template <typename T>
void encode_into(const PairNetParams<T>& params, std::span<const T> input,
                 EncoderTrace<T>& tr) {
  const EncoderConfig& cfg = params.config();
  require(input.size() == cfg.input_size(), "encoder input has the wrong size",
          ErrorKind::kShape);
  const auto ix = detail::index_of(cfg, params.layout());
  const T* theta = params.values().data();
  const std::size_t n_layers = ix.convs.size();
  tr.cols.resize(n_layers);
  tr.pre.resize(n_layers);
  tr.act.resize(n_layers);
  const T* x = input.data();
  for (std::size_t li = 0; li < n_layers; ++li) {
    const auto& l = ix.convs[li];
    const std::size_t P = static_cast<std::size_t>(l.hout) * l.wout;
    const std::size_t K = static_cast<std::size_t>(l.cin) * 9;
    tr.cols[li].resize(K * P);
    tr.pre[li].resize(static_cast<std::size_t>(l.cout) * P);
    tr.act[li].resize(static_cast<std::size_t>(l.cout) * P);
    detail::im2col(l, x, tr.cols[li].data());
    const T* W = theta + l.w_off;
    const T* b = theta + l.b_off;
    const T* col = tr.cols[li].data();
    for (int co = 0; co < l.cout; ++co) {
      T* z = tr.pre[li].data() + static_cast<std::size_t>(co) * P;
      std::fill(z, z + P, b[co]);
      const T* wrow = W + static_cast<std::size_t>(co) * K;
      for (std::size_t k = 0; k < K; ++k) detail::axpy(wrow[k], col + k * P, z, P);
    }
    for (std::size_t i = 0; i < tr.pre[li].size(); ++i) tr.act[li][i] = detail::silu(tr.pre[li][i]);
    x = tr.act[li].data();
  }
  const auto& last = ix.convs.back();
  const std::size_t P = static_cast<std::size_t>(last.hout) * last.wout;
  tr.pooled.assign(static_cast<std::size_t>(ix.last_channels), T(0));
  for (int c = 0; c < ix.last_channels; ++c) {
    T acc = 0;
    const T* a = tr.act.back().data() + static_cast<std::size_t>(c) * P;
    for (std::size_t p = 0; p < P; ++p) acc += a[p];
    tr.pooled[c] = acc / static_cast<T>(P);
  }
  tr.embedding.assign(theta + ix.proj_b, theta + ix.proj_b + ix.emb);
  for (int e = 0; e < ix.emb; ++e) {
    const T* wrow = theta + ix.proj_w + static_cast<std::size_t>(e) * ix.last_channels;
    T acc = 0;
    for (int c = 0; c < ix.last_channels; ++c) acc += wrow[c] * tr.pooled[c];
    tr.embedding[e] += acc;
  }
}

template <typename T>
std::vector<T> encode(const PairNetParams<T>& params, std::span<const T> input) {
  EncoderTrace<T> tr;
  encode_into(params, input, tr);
  return tr.embedding;
}

/// Head on a precomputed embedding difference; returns the unclamped logit.
template <typename T>
double head_logit(const PairNetParams<T>& params, std::span<const T> diff, HeadTrace<T>& tr) {
  const EncoderConfig& cfg = params.config();
  const auto ix = detail::index_of(cfg, params.layout());
  const T* theta = params.values().data();
  tr.diff.assign(diff.begin(), diff.end());
  tr.hidden.resize(static_cast<std::size_t>(ix.hidden));
  for (int h = 0; h < ix.hidden; ++h) {
    const T* wrow = theta + ix.fc1_w + static_cast<std::size_t>(h) * ix.emb;
    T acc = theta[ix.fc1_b + h];
    for (int e = 0; e < ix.emb; ++e) acc += wrow[e] * diff[e];
    tr.hidden[h] = std::tanh(acc);
  }
  T z = theta[ix.fc2_b];
  for (int h = 0; h < ix.hidden; ++h) z += theta[ix.fc2_w + h] * tr.hidden[h];
  tr.raw_logit = static_cast<double>(z);
  return tr.raw_logit;
}

template <typename T>
double pair_logit(const PairNetParams<T>& params, std::span<const T> a, std::span<const T> b) {
  const auto ea = encode(params, a);
  const auto eb = encode(params, b);
  std::vector<T> diff(ea.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ea[i] - eb[i];
  HeadTrace<T> ht;
  return head_logit(params, std::span<const T>(diff), ht);
}

/// Probability that `a` shows the higher occupancy.
template <typename T>
double score_pair(const PairNetParams<T>& params, std::span<const T> a, std::span<const T> b) {
  return sigmoid(clamp_logit(pair_logit(params, a, b)));
}

/// Order-symmetrised score: (s(a,b) + 1 - s(b,a)) / 2.
template <typename T>
double symmetrized_score(const PairNetParams<T>& params, std::span<const T> a,
                         std::span<const T> b) {
  return 0.5 * (score_pair(params, a, b) + 1.0 - score_pair(params, b, a));
}

/// Score from cached embeddings (avoids re-encoding in all-pairs loops).
template <typename T>
double score_embeddings(const PairNetParams<T>& params, std::span<const T> ea,
                        std::span<const T> eb) {
  std::vector<T> diff(ea.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ea[i] - eb[i];
  HeadTrace<T> ht;
  return sigmoid(clamp_logit(head_logit(params, std::span<const T>(diff), ht)));
}

/// Backward through one encoder branch; accumulates into grad.
template <typename T>
void encoder_backward(const PairNetParams<T>& params, const EncoderTrace<T>& tr,
                      std::span<const T> d_embedding, std::span<T> grad,
                      std::vector<T>& scratch_a, std::vector<T>& scratch_b) {
  const auto ix = detail::index_of(params.config(), params.layout());
  const T* theta = params.values().data();
  T* g = grad.data();
  // projection
  std::vector<T>& d_pooled = scratch_a;
  d_pooled.assign(static_cast<std::size_t>(ix.last_channels), T(0));
  for (int e = 0; e < ix.emb; ++e) {
    const T de = d_embedding[e];
    g[ix.proj_b + e] += de;
    detail::axpy(de, tr.pooled.data(), g + ix.proj_w + static_cast<std::size_t>(e) * ix.last_channels,
                 static_cast<std::size_t>(ix.last_channels));
    detail::axpy(de, theta + ix.proj_w + static_cast<std::size_t>(e) * ix.last_channels,
                 d_pooled.data(), static_cast<std::size_t>(ix.last_channels));
  }
  // mean pool
  const auto& last = ix.convs.back();
  std::size_t P = static_cast<std::size_t>(last.hout) * last.wout;
  std::vector<T> d_act(static_cast<std::size_t>(last.cout) * P);
  for (int c = 0; c < last.cout; ++c) {
    std::fill_n(d_act.begin() + static_cast<std::ptrdiff_t>(c * P), P,
                d_pooled[c] / static_cast<T>(P));
  }
  std::vector<T> col_t;
  std::vector<T>& d_col = scratch_b;
  for (std::size_t li = ix.convs.size(); li-- > 0;) {
    const auto& l = ix.convs[li];
    P = static_cast<std::size_t>(l.hout) * l.wout;
    const std::size_t K = static_cast<std::size_t>(l.cin) * 9;
    const auto& pre = tr.pre[li];
    for (std::size_t i = 0; i < d_act.size(); ++i) d_act[i] *= detail::silu_grad(pre[i]);
    const std::vector<T>& dz = d_act;
    const std::vector<T>& col = tr.cols[li];
    col_t.resize(P * K);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t p = 0; p < P; ++p) col_t[p * K + k] = col[k * P + p];
    }
    for (int co = 0; co < l.cout; ++co) {
      const T* dzr = dz.data() + static_cast<std::size_t>(co) * P;
      T* gw = g + l.w_off + static_cast<std::size_t>(co) * K;
      T bsum = 0;
      for (std::size_t p = 0; p < P; ++p) {
        bsum += dzr[p];
        detail::axpy(dzr[p], col_t.data() + p * K, gw, K);
      }
      g[l.b_off + co] += bsum;
    }
    if (li == 0) break;
    d_col.assign(K * P, T(0));
    const T* W = theta + l.w_off;
    for (int co = 0; co < l.cout; ++co) {
      const T* dzr = dz.data() + static_cast<std::size_t>(co) * P;
      const T* wrow = W + static_cast<std::size_t>(co) * K;
      for (std::size_t k = 0; k < K; ++k) detail::axpy(wrow[k], dzr, d_col.data() + k * P, P);
    }
    std::vector<T> d_prev(static_cast<std::size_t>(l.cin) * l.hin * l.win);
    detail::col2im(l, d_col.data(), d_prev.data());
    d_act = std::move(d_prev);
  }
}

/// Workspace for one pair's forward + backward.
template <typename T>
struct PairWorkspace {
  EncoderTrace<T> ta, tb;
  HeadTrace<T> head;
  std::vector<T> d_emb, scratch_a, scratch_b;
};

/// Adds d(loss)/d(theta) * dloss_dlogit-chain for one pair into grad and
/// returns the pair's BCE loss. grad receives (p - y) * dz/dtheta.
template <typename T>
double pair_loss_and_grad(const PairNetParams<T>& params, std::span<const T> a,
                          std::span<const T> b, int label, std::span<T> grad,
                          PairWorkspace<T>& ws) {
  encode_into(params, a, ws.ta);
  encode_into(params, b, ws.tb);
  const std::size_t E = ws.ta.embedding.size();
  std::vector<T> diff(E);
  for (std::size_t i = 0; i < E; ++i) diff[i] = ws.ta.embedding[i] - ws.tb.embedding[i];
  const double z_raw = head_logit(params, std::span<const T>(diff), ws.head);
  const double z = clamp_logit(z_raw);
  const double loss = bce_from_logit(z, label);
  const bool saturated = z_raw < -kLogitClamp || z_raw > kLogitClamp;
  const T dz = saturated ? T(0) : static_cast<T>(sigmoid(z) - label);

  const auto ix = detail::index_of(params.config(), params.layout());
  const T* theta = params.values().data();
  T* g = grad.data();
  g[ix.fc2_b] += dz;
  ws.d_emb.assign(E, T(0));
  for (int h = 0; h < ix.hidden; ++h) {
    const T hv = ws.head.hidden[h];
    g[ix.fc2_w + h] += dz * hv;
    const T dpre = dz * theta[ix.fc2_w + h] * (T(1) - hv * hv);
    g[ix.fc1_b + h] += dpre;
    detail::axpy(dpre, diff.data(), g + ix.fc1_w + static_cast<std::size_t>(h) * ix.emb, E);
    detail::axpy(dpre, theta + ix.fc1_w + static_cast<std::size_t>(h) * ix.emb, ws.d_emb.data(),
                 E);
  }
  encoder_backward(params, ws.ta, std::span<const T>(ws.d_emb), grad, ws.scratch_a,
                   ws.scratch_b);
  for (auto& v : ws.d_emb) v = -v;
  encoder_backward(params, ws.tb, std::span<const T>(ws.d_emb), grad, ws.scratch_a,
                   ws.scratch_b);
  return loss;
}

/// A prepared training pair; inputs are borrowed.
template <typename T>
struct PairExample {
  std::span<const T> a;
  std::span<const T> b;
  int label = 0;
};

template <typename T>
struct LossAndGrad {
  double loss = 0.0;  // mean BCE
  std::vector<T> grad;
};

/// Exact gradient of the mean BCE over a batch. Per-pair gradients are
/// reduced in ascending pair index, so results do not depend on `threads`.
template <typename T>
LossAndGrad<T> batch_loss_and_grad(const PairNetParams<T>& params,
                                   std::span<const PairExample<T>> batch, int threads = 1) {
  require(!batch.empty(), "gradient of an empty batch");
  const std::size_t n = batch.size();
  const std::size_t P = params.size();
  std::vector<std::vector<T>> per_pair(n, std::vector<T>(P, T(0)));
  std::vector<double> losses(n, 0.0);
  auto work = [&](std::size_t begin, std::size_t step) {
    PairWorkspace<T> ws;
    for (std::size_t i = begin; i < n; i += step) {
      losses[i] = pair_loss_and_grad(params, batch[i].a, batch[i].b, batch[i].label,
                                     std::span<T>(per_pair[i]), ws);
    }
  };
  const std::size_t t = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, n);
  if (t == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(work, k, t);
    for (auto& th : pool) th.join();
  }
  LossAndGrad<T> out;
  out.grad.assign(P, T(0));
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    for (std::size_t j = 0; j < P; ++j) out.grad[j] += per_pair[i][j];
  }
  const T inv = T(1) / static_cast<T>(n);
  for (auto& v : out.grad) v *= inv;
  out.loss = loss / static_cast<double>(n);
  return out;
}

/// Mean BCE over a dataset without gradients.
template <typename T>
double mean_loss(const PairNetParams<T>& params, std::span<const PairExample<T>> data) {
  require(!data.empty(), "loss of an empty dataset");
  double acc = 0.0;
  for (const auto& ex : data) acc += bce_from_logit(pair_logit(params, ex.a, ex.b), ex.label);
  return acc / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 2;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int threads = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

template <typename T>
class AdamState {
 public:
  AdamState(std::size_t n, const TrainConfig& cfg) : m_(n, T(0)), v_(n, T(0)), cfg_(cfg) {}

  void step(std::span<T> theta, std::span<const T> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.epsilon);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const T g = grad[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
      theta[i] -= lr * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
    }
  }

 private:
  std::vector<T> m_, v_;
  TrainConfig cfg_;
  int t_ = 0;
};

/// Adam over seeded-shuffled mini-batches. Epoch e shuffles with
/// splitmix64(mix_seed(seed, e)). Deterministic for a fixed seed.
template <typename T>
TrainHistory train(PairNetParams<T>& params, std::span<const PairExample<T>> data,
                   const TrainConfig& cfg,
                   const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  require(!data.empty(), "training set is empty");
  TrainHistory history;
  AdamState<T> adam(params.size(), cfg);
  std::vector<std::size_t> order(data.size());
  std::vector<PairExample<T>> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    fisher_yates(order, rng);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = s; i < e; ++i) batch.push_back(data[order[i]]);
      auto lg = batch_loss_and_grad(params, std::span<const PairExample<T>>(batch), cfg.threads);
      loss_sum += lg.loss * static_cast<double>(batch.size());
      adam.step(params.values(), std::span<const T>(lg.grad));
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochRecord rec{epoch + 1, loss_sum / static_cast<double>(data.size()),
                    std::chrono::duration<double, std::milli>(t1 - t0).count()};
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

std::string epoch_record_json(const EpochRecord& r);

// ---------------------------------------------------------------------------
// Input preparation

/// Zeroes pixels outside the footprint, crops to the footprint bounding box,
/// centres it in a zero-padded square and resamples to side x side with
/// bilinear interpolation (pixel-centre aligned, edge-clamped).
std::vector<float> prepare_input(std::span<const float> normalized, int bands,
                                 const Footprint& footprint, int side);

// ---------------------------------------------------------------------------
// Checkpoints: model.bin (raw LE f32, manifest order) + model.json

struct CheckpointMeta {
  std::uint64_t seed = 0;
  BandStats normalization;
};

void save_checkpoint(const PairNetParams<float>& params, const CheckpointMeta& meta,
                     const std::filesystem::path& dir);

struct Checkpoint {
  PairNetParams<float> params;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace weakpark

#endif  // WEAKPARK_PAIRNET_HPP_
