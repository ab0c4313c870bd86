#pragma once

// Stochastic interpolant I = a x0 + b x1 + g sqrt(tau) z between consecutive
// states, its drift target, the expected energy rate H and the two coefficient
// losses (energy consistency, transport cost) with analytic coefficient gradients.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "ecsi/core.hpp"

namespace ecsi {

/// Base schedule the sine series is added to.
enum class Schedule {
  /// a = cos(pi tau / 2), b = sin(pi tau / 2)
  trigonometric,
  /// a = 1 - tau, b = tau^2 (the usual non-optimized baseline)
  quadratic,
};

struct InterpolantCoeffs {
  Vector alpha_hat;
  Vector beta_hat;
  double gamma_scale = 0.1;
  Schedule schedule = Schedule::trigonometric;

  static InterpolantCoeffs zeros(int n, double gamma_scale = 0.1) {
    return {Vector(n, 0.0), Vector(n, 0.0), gamma_scale, Schedule::trigonometric};
  }
  static InterpolantCoeffs quadratic(double gamma_scale = 0.1) {
    return {{}, {}, gamma_scale, Schedule::quadratic};
  }

  std::size_t n_params() const { return alpha_hat.size() + beta_hat.size(); }
  Vector flat() const {
    Vector p = alpha_hat;
    p.insert(p.end(), beta_hat.begin(), beta_hat.end());
    return p;
  }
  InterpolantCoeffs with_flat(const Vector& p) const {
    InterpolantCoeffs c = *this;
    const auto na = static_cast<std::ptrdiff_t>(alpha_hat.size());
    c.alpha_hat.assign(p.begin(), p.begin() + na);
    c.beta_hat.assign(p.begin() + na, p.end());
    return c;
  }
};

struct CoeffEval {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double alpha_dot = 0.0, beta_dot = 0.0, gamma_dot = 0.0;
};

inline CoeffEval eval_coeffs(const InterpolantCoeffs& c, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1], got " + std::to_string(tau));
  constexpr double pi = std::numbers::pi;
  CoeffEval e;
  if (c.schedule == Schedule::trigonometric) {
    e.alpha = std::cos(0.5 * pi * tau);
    e.beta = std::sin(0.5 * pi * tau);
    e.alpha_dot = -0.5 * pi * e.beta;
    e.beta_dot = 0.5 * pi * e.alpha;
  } else {
    e.alpha = 1.0 - tau;
    e.beta = tau * tau;
    e.alpha_dot = -1.0;
    e.beta_dot = 2.0 * tau;
  }
  for (std::size_t i = 0; i < c.alpha_hat.size(); ++i) {
    const double w = static_cast<double>(i + 1) * pi;
    e.alpha += c.alpha_hat[i] * std::sin(w * tau);
    e.alpha_dot += c.alpha_hat[i] * w * std::cos(w * tau);
  }
  for (std::size_t i = 0; i < c.beta_hat.size(); ++i) {
    const double w = static_cast<double>(i + 1) * pi;
    e.beta += c.beta_hat[i] * std::sin(w * tau);
    e.beta_dot += c.beta_hat[i] * w * std::cos(w * tau);
  }
  e.gamma = c.gamma_scale * (1.0 - tau);
  e.gamma_dot = -c.gamma_scale;
  return e;
}

/// a x0 + b x1 + g sqrt(tau) z, where z is a standard-normal draw.
inline Vector interpolate(const InterpolantCoeffs& c, double tau, const Vector& x0, const Vector& x1,
                          const Vector& z) {
  const CoeffEval e = eval_coeffs(c, tau);
  const double s = e.gamma * std::sqrt(tau);
  Vector out(x0.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = e.alpha * x0[k] + e.beta * x1[k] + s * z[k];
  return out;
}

/// a' x0 + b' x1 + g' sqrt(tau) z with the same z as the paired interpolate call.
inline Vector drift_target(const InterpolantCoeffs& c, double tau, const Vector& x0, const Vector& x1,
                           const Vector& z) {
  const CoeffEval e = eval_coeffs(c, tau);
  const double s = e.gamma_dot * std::sqrt(tau);
  Vector out(x0.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = e.alpha_dot * x0[k] + e.beta_dot * x1[k] + s * z[k];
  return out;
}

/// Expected rate of change of 0.5 |I|^2 for one pair, given its inner products.
inline double energy_rate_H(const CoeffEval& e, double tau, double n00, double n11, double n01, double d) {
  return e.alpha_dot * e.alpha * n00 + e.beta_dot * e.beta * n11 +
         (e.beta_dot * e.alpha + e.alpha_dot * e.beta) * n01 + e.gamma_dot * e.gamma * tau * d +
         0.5 * d * e.gamma * e.gamma;
}

inline double energy_rate_H(const InterpolantCoeffs& c, double tau, double n00, double n11, double n01,
                            double d) {
  return energy_rate_H(eval_coeffs(c, tau), tau, n00, n11, n01, d);
}

/// Pairs (x0, x1) with their inner products precomputed.
struct PairBatch {
  std::vector<Vector> x0, x1;
  Vector n00, n11, n01;
  std::size_t dim = 0;

  PairBatch() = default;
  PairBatch(std::vector<Vector> a, std::vector<Vector> b) : x0(std::move(a)), x1(std::move(b)) {
    if (x0.size() != x1.size()) throw ConfigError("pair batch: x0/x1 counts differ");
    if (!x0.empty()) dim = x0.front().size();
    for (std::size_t p = 0; p < x0.size(); ++p) {
      if (x0[p].size() != dim || x1[p].size() != dim) throw ConfigError("pair batch: state sizes differ");
      n00.push_back(dot(x0[p], x0[p]));
      n11.push_back(dot(x1[p], x1[p]));
      n01.push_back(dot(x0[p], x1[p]));
    }
  }

  std::size_t size() const { return n00.size(); }
  bool empty() const { return n00.empty(); }
};

/// Batch means of the three inner products; everything the losses depend on.
struct PairMoments {
  double m00 = 0.0, m11 = 0.0, m01 = 0.0, d = 0.0;
};

inline PairMoments moments(const PairBatch& b) {
  if (b.empty()) throw ConfigError("empty pair batch");
  PairMoments m;
  for (std::size_t p = 0; p < b.size(); ++p) {
    m.m00 += b.n00[p];
    m.m11 += b.n11[p];
    m.m01 += b.n01[p];
  }
  const double inv = 1.0 / static_cast<double>(b.size());
  m.m00 *= inv;
  m.m11 *= inv;
  m.m01 *= inv;
  m.d = static_cast<double>(b.dim);
  return m;
}

inline double mean_energy_rate(const InterpolantCoeffs& c, double tau, const PairMoments& m) {
  return energy_rate_H(c, tau, m.m00, m.m11, m.m01, m.d);
}

struct Quadrature {
  Vector nodes;
  Vector weights;

  static Quadrature midpoint(int n) {
    if (n < 1) throw ConfigError("quadrature needs at least one node");
    Quadrature q;
    for (int i = 0; i < n; ++i) {
      q.nodes.push_back((i + 0.5) / n);
      q.weights.push_back(1.0 / n);
    }
    return q;
  }
};

/// Target energy rate k(tau), already averaged over the batch. Empty means k = 0.
using RateTarget = std::function<double(double)>;

namespace detail {

/// Value and coefficient gradient of either loss, evaluated on batch moments.
struct LossTerms {
  double energy = 0.0;
  double transport = 0.0;
  Vector grad_energy;
  Vector grad_transport;
};

inline LossTerms loss_terms(const InterpolantCoeffs& c, const PairMoments& m, const Quadrature& quad,
                            const RateTarget& k, bool want_grad) {
  constexpr double pi = std::numbers::pi;
  const std::size_t na = c.alpha_hat.size();
  const std::size_t np = c.n_params();
  LossTerms t;
  if (want_grad) {
    t.grad_energy.assign(np, 0.0);
    t.grad_transport.assign(np, 0.0);
  }
  for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
    const double tau = quad.nodes[q];
    const double w = quad.weights[q];
    const CoeffEval e = eval_coeffs(c, tau);
    const double resid = energy_rate_H(e, tau, m.m00, m.m11, m.m01, m.d) - (k ? k(tau) : 0.0);
    t.energy += w * resid * resid;
    t.transport += w * (e.alpha_dot * e.alpha_dot * m.m00 + e.beta_dot * e.beta_dot * m.m11 +
                        2.0 * e.alpha_dot * e.beta_dot * m.m01 + e.gamma_dot * e.gamma_dot * tau * m.d);
    if (!want_grad) continue;
    for (std::size_t i = 0; i < np; ++i) {
      const bool is_alpha = i < na;
      const double freq = static_cast<double>((is_alpha ? i : i - na) + 1) * pi;
      const double s = std::sin(freq * tau);
      const double cdot = freq * std::cos(freq * tau);
      double dh, dt;
      if (is_alpha) {
        dh = (cdot * e.alpha + e.alpha_dot * s) * m.m00 + (e.beta_dot * s + cdot * e.beta) * m.m01;
        dt = 2.0 * e.alpha_dot * cdot * m.m00 + 2.0 * e.beta_dot * cdot * m.m01;
      } else {
        dh = (cdot * e.beta + e.beta_dot * s) * m.m11 + (cdot * e.alpha + e.alpha_dot * s) * m.m01;
        dt = 2.0 * e.beta_dot * cdot * m.m11 + 2.0 * e.alpha_dot * cdot * m.m01;
      }
      t.grad_energy[i] += w * 2.0 * resid * dh;
      t.grad_transport[i] += w * dt;
    }
  }
  return t;
}

}  // namespace detail

/// Quadrature of the squared batch-mean discrepancy (mean H - k)^2.
inline double energy_loss(const InterpolantCoeffs& c, const PairBatch& batch, const Quadrature& quad,
                          const RateTarget& k = {}) {
  return detail::loss_terms(c, moments(batch), quad, k, false).energy;
}

/// Quadrature of E|a' x0 + b' x1 + g' sqrt(tau) z|^2, noise term taken analytically.
inline double transport_loss(const InterpolantCoeffs& c, const PairBatch& batch, const Quadrature& quad) {
  return detail::loss_terms(c, moments(batch), quad, {}, false).transport;
}

/// Sampled variant of transport_loss drawing n_noise standard-normal z per pair and node.
inline double transport_loss_sampled(const InterpolantCoeffs& c, const PairBatch& batch, const Quadrature& quad,
                                     int n_noise, Rng& rng) {
  if (batch.empty()) throw ConfigError("empty pair batch");
  if (n_noise < 1) throw ConfigError("n_noise must be >= 1");
  Vector z(batch.dim);
  double total = 0.0;
  for (std::size_t q = 0; q < quad.nodes.size(); ++q) {
    double acc = 0.0;
    for (std::size_t p = 0; p < batch.size(); ++p)
      for (int s = 0; s < n_noise; ++s) {
        fill_normal(rng, z);
        const Vector r = drift_target(c, quad.nodes[q], batch.x0[p], batch.x1[p], z);
        acc += dot(r, r);
      }
    total += quad.weights[q] * acc / static_cast<double>(batch.size() * n_noise);
  }
  return total;
}

struct LossWeights {
  double energy = 1.0;
  double transport = 1.0;
};

/// Weighted objective and its gradient with respect to the flat (alpha_hat, beta_hat) vector.
inline double interpolant_objective(const InterpolantCoeffs& c, const PairMoments& m, const Quadrature& quad,
                                    const LossWeights& w, Vector* grad = nullptr, const RateTarget& k = {}) {
  const detail::LossTerms t = detail::loss_terms(c, m, quad, k, grad != nullptr);
  if (grad) {
    grad->assign(c.n_params(), 0.0);
    for (std::size_t i = 0; i < grad->size(); ++i)
      (*grad)[i] = w.energy * t.grad_energy[i] + w.transport * t.grad_transport[i];
  }
  return w.energy * t.energy + w.transport * t.transport;
}

}  // namespace ecsi
