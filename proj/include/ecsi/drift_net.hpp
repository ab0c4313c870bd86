#pragma once

// Residual periodic-conv drift network b(x_tau, history, tau) with a sinusoidal
// tau embedding injected as per-channel bias in every block, and hand-written
// reverse-mode gradients.
//
//   input  = concat(x_tau, history[0..l])            2(l+2) channels
//   h0     = conv_k(input) + b
//   e      = gelu(W_t sin/cos(w_j tau) + b_t)
//   block: a = conv_k(gelu(h)) + b_a + W_e e + b_e;  h += W_c gelu(a) + b_c   (W_c is 1x1)
//   out    = conv_k(gelu(h_D)) + b_head                zero-initialized

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/detail/conv.hpp"

namespace ecsi {

struct DriftArch {
  int channels = 32;
  int depth = 4;
  int kernel = 3;
  int embed_dim = 32;
  /// Number of past states conditioned on besides the current one (l).
  int history = 1;

  int in_channels() const { return 2 * (history + 2); }
  int history_states() const { return history + 1; }

  void validate() const {
    if (channels < 1) throw ConfigError("drift.channels must be >= 1");
    if (depth < 0) throw ConfigError("drift.depth must be >= 0");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("drift.kernel must be odd and >= 1");
    if (embed_dim < 2 || embed_dim % 2) throw ConfigError("drift.embed_dim must be even and >= 2");
    if (history < 0) throw ConfigError("drift.history must be >= 0");
  }
  friend bool operator==(const DriftArch&, const DriftArch&) = default;
};

/// Named slice of the flat parameter vector.
struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class DriftNet {
 public:
  DriftNet() = default;
  DriftNet(DriftArch arch, StateShape shape) : arch_(arch), shape_(shape) {
    arch_.validate();
    if (shape_.ny < 1 || shape_.nx < 1) throw ConfigError("drift net needs a non-empty state shape");
    layout();
    params_.assign(total_, 0.0);
  }

  /// He-scaled random weights, zero biases, zero head.
  static DriftNet initialized(DriftArch arch, StateShape shape, std::uint64_t seed) {
    DriftNet net(arch, shape);
    Rng rng = make_rng(seed, "init");
    std::normal_distribution<double> normal(0.0, 1.0);
    const int k2 = arch.kernel * arch.kernel;
    auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
      const double s = std::sqrt(2.0 / fan_in);
      for (std::size_t q = 0; q < n; ++q) net.params_[off + q] = s * normal(rng);
    };
    fill(net.stem_w_, net.stem_w_size(), arch.in_channels() * k2);
    fill(net.t_w_, static_cast<std::size_t>(arch.embed_dim) * arch.embed_dim, arch.embed_dim);
    for (int b = 0; b < arch.depth; ++b) {
      const Block& blk = net.blocks_[b];
      fill(blk.a_w, net.block_conv_size(), arch.channels * k2);
      fill(blk.e_w, static_cast<std::size_t>(arch.channels) * arch.embed_dim, 2.0 * arch.embed_dim);
      fill(blk.c_w, static_cast<std::size_t>(arch.channels) * arch.channels, 2.0 * arch.channels * (b + 1));
    }
    return net;
  }

  const DriftArch& arch() const { return arch_; }
  const StateShape& shape() const { return shape_; }
  std::size_t n_params() const { return total_; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  void set_params(Vector p) {
    if (p.size() != total_)
      throw ConfigError("parameter vector has " + std::to_string(p.size()) + " entries, arch needs " +
                        std::to_string(total_));
    params_ = std::move(p);
  }

  std::vector<ParamGroup> param_groups() const {
    const std::size_t c = arch_.channels;
    std::vector<ParamGroup> g{{"stem", stem_w_, stem_w_size() + c}, {"time_mlp", t_w_, t_size()}};
    for (int b = 0; b < arch_.depth; ++b) {
      const Block& blk = blocks_[b];
      const std::string tag = "block" + std::to_string(b) + ".";
      g.push_back({tag + "conv", blk.a_w, block_conv_size() + c});
      g.push_back({tag + "embed", blk.e_w, c * arch_.embed_dim + c});
      g.push_back({tag + "mix", blk.c_w, c * c + c});
    }
    g.push_back({"head", head_w_, head_w_size() + 2});
    return g;
  }

  /// Sinusoidal features of tau on a geometric frequency ladder from 1 to 100.
  Vector time_features(double tau) const {
    const int half = arch_.embed_dim / 2;
    Vector f(arch_.embed_dim);
    for (int j = 0; j < half; ++j) {
      const double w = half > 1 ? std::pow(100.0, static_cast<double>(j) / (half - 1)) : 1.0;
      f[j] = std::sin(w * tau);
      f[half + j] = std::cos(w * tau);
    }
    return f;
  }

  State forward(const State& x_tau, const std::vector<State>& history, double tau) const {
    Trace t;
    run(x_tau, history, tau, t);
    return t.out;
  }

  /// Mean squared error |b - target|^2 / d. Adds weight * d(loss)/d(params) into grad_accum.
  double loss_and_grad(const State& x_tau, const std::vector<State>& history, double tau, const State& target,
                       Vector& grad_accum, double weight = 1.0) const {
    if (target.size() != shape_.size()) throw ConfigError("drift target has the wrong size");
    if (grad_accum.size() != total_) grad_accum.assign(total_, 0.0);
    Trace t;
    run(x_tau, history, tau, t);
    const double inv_d = 1.0 / static_cast<double>(shape_.size());
    double loss = 0.0;
    Vector g_out(t.out.size());
    for (std::size_t q = 0; q < g_out.size(); ++q) {
      const double r = t.out[q] - target[q];
      loss += r * r;
      g_out[q] = 2.0 * r * inv_d * weight;
    }
    backward(t, g_out, grad_accum);
    return loss * inv_d;
  }

  double loss(const State& x_tau, const std::vector<State>& history, double tau, const State& target) const {
    const State out = forward(x_tau, history, tau);
    double s = 0.0;
    for (std::size_t q = 0; q < out.size(); ++q) s += (out[q] - target[q]) * (out[q] - target[q]);
    return s / static_cast<double>(out.size());
  }

 private:
  struct Block {
    std::size_t a_w, a_b, e_w, e_b, c_w, c_b;
  };

  struct Trace {
    Vector in_pad;
    Vector feats, t_pre, emb;
    std::vector<Vector> h;       // h[b] enters block b; h[depth] enters the head
    std::vector<Vector> gh_pad;  // padded gelu(h[b])
    std::vector<Vector> a_pre;   // pre-activation of each block's conv branch
    std::vector<Vector> ga;      // gelu(a_pre)
    State out;
  };

  std::size_t stem_w_size() const {
    return static_cast<std::size_t>(arch_.channels) * arch_.in_channels() * arch_.kernel * arch_.kernel;
  }
  std::size_t block_conv_size() const {
    return static_cast<std::size_t>(arch_.channels) * arch_.channels * arch_.kernel * arch_.kernel;
  }
  std::size_t head_w_size() const {
    return static_cast<std::size_t>(2) * arch_.channels * arch_.kernel * arch_.kernel;
  }
  std::size_t t_size() const { return static_cast<std::size_t>(arch_.embed_dim) * arch_.embed_dim + arch_.embed_dim; }

  void layout() {
    const std::size_t c = arch_.channels, e = arch_.embed_dim;
    std::size_t off = 0;
    stem_w_ = off;
    off += stem_w_size();
    stem_b_ = off;
    off += c;
    t_w_ = off;
    off += e * e;
    t_b_ = off;
    off += e;
    blocks_.clear();
    for (int b = 0; b < arch_.depth; ++b) {
      Block blk{};
      blk.a_w = off;
      off += block_conv_size();
      blk.a_b = off;
      off += c;
      blk.e_w = off;
      off += c * e;
      blk.e_b = off;
      off += c;
      blk.c_w = off;
      off += c * c;
      blk.c_b = off;
      off += c;
      blocks_.push_back(blk);
    }
    head_w_ = off;
    off += head_w_size();
    head_b_ = off;
    off += 2;
    total_ = off;
  }

  detail::PlaneDims dims() const { return {shape_.ny, shape_.nx, arch_.kernel / 2}; }

  void run(const State& x_tau, const std::vector<State>& history, double tau, Trace& t) const {
    const std::size_t sz = shape_.size();
    if (x_tau.size() != sz) throw ConfigError("drift input has the wrong size");
    if (static_cast<int>(history.size()) != arch_.history_states())
      throw ConfigError("drift net expects " + std::to_string(arch_.history_states()) + " history states, got " +
                        std::to_string(history.size()));
    for (const auto& hst : history)
      if (hst.size() != sz) throw ConfigError("history state has the wrong size");

    const detail::PlaneDims d = dims();
    const std::size_t plane = d.plane(), pplane = d.padded_plane();
    const int C = arch_.channels, E = arch_.embed_dim, K = arch_.kernel;
    const double* p = params_.data();

    Vector input;
    input.reserve(sz * arch_.history_states() + sz);
    input.insert(input.end(), x_tau.begin(), x_tau.end());
    for (const auto& hst : history) input.insert(input.end(), hst.begin(), hst.end());
    t.in_pad.assign(pplane * arch_.in_channels(), 0.0);
    detail::pad_periodic(input.data(), arch_.in_channels(), d, t.in_pad.data());

    t.feats = time_features(tau);
    t.t_pre.assign(E, 0.0);
    t.emb.assign(E, 0.0);
    for (int r = 0; r < E; ++r) {
      double s = p[t_b_ + r];
      for (int j = 0; j < E; ++j) s += p[t_w_ + static_cast<std::size_t>(r) * E + j] * t.feats[j];
      t.t_pre[r] = s;
      t.emb[r] = detail::gelu(s);
    }

    t.h.assign(arch_.depth + 1, Vector());
    t.gh_pad.assign(arch_.depth + 1, Vector());
    t.a_pre.assign(arch_.depth, Vector());
    t.ga.assign(arch_.depth, Vector());

    Vector& h0 = t.h[0];
    h0.assign(plane * C, 0.0);
    for (int c = 0; c < C; ++c)
      for (std::size_t q = 0; q < plane; ++q) h0[c * plane + q] = p[stem_b_ + c];
    detail::conv_forward(t.in_pad.data(), arch_.in_channels(), p + stem_w_, C, K, d, h0.data());

    Vector act(plane * C);
    for (int b = 0; b <= arch_.depth; ++b) {
      const Vector& h = t.h[b];
      for (std::size_t q = 0; q < act.size(); ++q) act[q] = detail::gelu(h[q]);
      t.gh_pad[b].assign(pplane * C, 0.0);
      detail::pad_periodic(act.data(), C, d, t.gh_pad[b].data());
      if (b == arch_.depth) break;

      const Block& blk = blocks_[b];
      Vector& a = t.a_pre[b];
      a.assign(plane * C, 0.0);
      for (int c = 0; c < C; ++c) {
        double bias = p[blk.a_b + c] + p[blk.e_b + c];
        for (int j = 0; j < E; ++j) bias += p[blk.e_w + static_cast<std::size_t>(c) * E + j] * t.emb[j];
        for (std::size_t q = 0; q < plane; ++q) a[c * plane + q] = bias;
      }
      detail::conv_forward(t.gh_pad[b].data(), C, p + blk.a_w, C, K, d, a.data());
      Vector& ga = t.ga[b];
      ga.resize(a.size());
      for (std::size_t q = 0; q < a.size(); ++q) ga[q] = detail::gelu(a[q]);

      Vector next = h;
      for (int o = 0; o < C; ++o) {
        double* dst = next.data() + o * plane;
        const double bias = p[blk.c_b + o];
        for (std::size_t q = 0; q < plane; ++q) dst[q] += bias;
        for (int i = 0; i < C; ++i) {
          const double w = p[blk.c_w + static_cast<std::size_t>(o) * C + i];
          const double* src = ga.data() + i * plane;
          for (std::size_t q = 0; q < plane; ++q) dst[q] += w * src[q];
        }
      }
      t.h[b + 1] = std::move(next);
    }

    t.out.assign(sz, 0.0);
    for (int c = 0; c < 2; ++c)
      for (std::size_t q = 0; q < plane; ++q) t.out[c * plane + q] = p[head_b_ + c];
    detail::conv_forward(t.gh_pad[arch_.depth].data(), C, p + head_w_, 2, K, d, t.out.data());
  }

  void backward(const Trace& t, const Vector& g_out, Vector& grad) const {
    const detail::PlaneDims d = dims();
    const std::size_t plane = d.plane(), pplane = d.padded_plane();
    const int C = arch_.channels, E = arch_.embed_dim, K = arch_.kernel;
    const double* p = params_.data();
    double* g = grad.data();

    for (int c = 0; c < 2; ++c)
      for (std::size_t q = 0; q < plane; ++q) g[head_b_ + c] += g_out[c * plane + q];
    Vector g_pad(pplane * C, 0.0);
    detail::conv_backward(t.gh_pad[arch_.depth].data(), C, p + head_w_, 2, K, d, g_out.data(), g + head_w_,
                          g_pad.data());
    Vector g_act(plane * C, 0.0);
    detail::fold_periodic_add(g_pad.data(), C, d, g_act.data());
    Vector g_h(plane * C);
    for (std::size_t q = 0; q < g_h.size(); ++q) g_h[q] = g_act[q] * detail::gelu_grad(t.h[arch_.depth][q]);

    Vector g_emb(E, 0.0);
    Vector g_ga(plane * C), g_a(plane * C);
    for (int b = arch_.depth - 1; b >= 0; --b) {
      const Block& blk = blocks_[b];
      const Vector& ga = t.ga[b];
      // Mixing layer h_{b+1} = h_b + W_c ga + b_c.
      std::fill(g_ga.begin(), g_ga.end(), 0.0);
      for (int o = 0; o < C; ++o) {
        const double* go = g_h.data() + o * plane;
        double sb = 0.0;
        for (std::size_t q = 0; q < plane; ++q) sb += go[q];
        g[blk.c_b + o] += sb;
        for (int i = 0; i < C; ++i) {
          const double* src = ga.data() + i * plane;
          double acc = 0.0;
          for (std::size_t q = 0; q < plane; ++q) acc += go[q] * src[q];
          g[blk.c_w + static_cast<std::size_t>(o) * C + i] += acc;
          const double w = p[blk.c_w + static_cast<std::size_t>(o) * C + i];
          double* gi = g_ga.data() + i * plane;
          for (std::size_t q = 0; q < plane; ++q) gi[q] += w * go[q];
        }
      }
      const Vector& a = t.a_pre[b];
      for (std::size_t q = 0; q < g_a.size(); ++q) g_a[q] = g_ga[q] * detail::gelu_grad(a[q]);
      // Per-channel bias from the conv bias and the tau embedding.
      for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t q = 0; q < plane; ++q) s += g_a[c * plane + q];
        g[blk.a_b + c] += s;
        g[blk.e_b + c] += s;
        for (int j = 0; j < E; ++j) {
          g[blk.e_w + static_cast<std::size_t>(c) * E + j] += s * t.emb[j];
          g_emb[j] += s * p[blk.e_w + static_cast<std::size_t>(c) * E + j];
        }
      }
      std::fill(g_pad.begin(), g_pad.end(), 0.0);
      detail::conv_backward(t.gh_pad[b].data(), C, p + blk.a_w, C, K, d, g_a.data(), g + blk.a_w, g_pad.data());
      std::fill(g_act.begin(), g_act.end(), 0.0);
      detail::fold_periodic_add(g_pad.data(), C, d, g_act.data());
      // Residual path plus the conv branch through gelu(h_b).
      for (std::size_t q = 0; q < g_h.size(); ++q) g_h[q] += g_act[q] * detail::gelu_grad(t.h[b][q]);
    }

    for (int c = 0; c < C; ++c)
      for (std::size_t q = 0; q < plane; ++q) g[stem_b_ + c] += g_h[c * plane + q];
    detail::conv_backward(t.in_pad.data(), arch_.in_channels(), p + stem_w_, C, K, d, g_h.data(), g + stem_w_,
                          nullptr);

    for (int r = 0; r < E; ++r) {
      const double gp = g_emb[r] * detail::gelu_grad(t.t_pre[r]);
      g[t_b_ + r] += gp;
      for (int j = 0; j < E; ++j) g[t_w_ + static_cast<std::size_t>(r) * E + j] += gp * t.feats[j];
    }
  }

  DriftArch arch_;
  StateShape shape_;
  Vector params_;
  std::size_t stem_w_ = 0, stem_b_ = 0, t_w_ = 0, t_b_ = 0, head_w_ = 0, head_b_ = 0, total_ = 0;
  std::vector<Block> blocks_;
};

}  // namespace ecsi
