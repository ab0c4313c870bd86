#pragma once

// Damped Newton minimization of the interpolant objective over the sine-series
// coefficients. The Hessian is a central difference of the analytic gradient.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/interpolant.hpp"

namespace ecsi {

struct OptimizeOptions {
  int max_iterations = 200;
  double grad_tol = 1e-8;
  int quadrature_points = 64;
  LossWeights weights;
  /// Relative step of the finite-difference Hessian.
  double fd_step = 1e-5;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
};

enum class OptimizeStatus {
  converged,
  /// No descent possible beyond rounding and the predicted decrease is at rounding level.
  stalled_at_precision,
  max_iterations,
  failed,
};

inline std::string to_string(OptimizeStatus s) {
  switch (s) {
    case OptimizeStatus::converged: return "converged";
    case OptimizeStatus::stalled_at_precision: return "stalled_at_precision";
    case OptimizeStatus::max_iterations: return "max_iterations";
    case OptimizeStatus::failed: return "failed";
  }
  return "unknown";
}

struct OptimizeResult {
  InterpolantCoeffs coeffs;
  OptimizeStatus status = OptimizeStatus::failed;
  int iterations = 0;
  double objective = 0.0;
  double grad_inf = 0.0;
  /// Set when the result is a best-effort iterate rather than a stationary point.
  bool warning = false;
};

namespace detail {

/// In-place Cholesky of a dense symmetric n x n matrix (row-major); false if not positive definite.
inline bool cholesky(std::vector<double>& a, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (int i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  return true;
}

inline Vector cholesky_solve(const std::vector<double>& l, int n, const Vector& b) {
  Vector y(b);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) y[i] -= l[i * n + k] * y[k];
    y[i] /= l[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k) y[i] -= l[k * n + i] * y[k];
    y[i] /= l[i * n + i];
  }
  return y;
}

inline double inf_norm(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

/// Minimizes w_e * energy_loss + w_t * transport_loss over (alpha_hat, beta_hat); gamma stays fixed.
inline OptimizeResult optimize_coeffs(const InterpolantCoeffs& init, const PairBatch& batch,
                                      const OptimizeOptions& opts = {}, const RateTarget& k = {}) {
  if (init.schedule != Schedule::trigonometric) throw ConfigError("only the trigonometric schedule is optimized");
  if (init.alpha_hat.size() != init.beta_hat.size())
    throw ConfigError("alpha_hat and beta_hat must have equal length");
  const PairMoments m = moments(batch);
  const Quadrature quad = Quadrature::midpoint(opts.quadrature_points);
  const int n = static_cast<int>(init.n_params());

  auto f = [&](const Vector& p, Vector* g) {
    return interpolant_objective(init.with_flat(p), m, quad, opts.weights, g, k);
  };

  Vector x = init.flat();
  Vector g;
  double fx = f(x, &g);
  OptimizeResult res;
  if (!std::isfinite(fx)) {
    res.coeffs = init;
    res.objective = fx;
    res.warning = true;
    return res;
  }
  double mu = 0.0;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (detail::inf_norm(g) < opts.grad_tol) {
      res.status = OptimizeStatus::converged;
      break;
    }
    // Hessian by central differences of the gradient, symmetrized.
    std::vector<double> hess(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j) {
      const double eps = opts.fd_step * std::max(1.0, std::abs(x[j]));
      Vector xp = x, xm = x, gp, gm;
      xp[j] += eps;
      xm[j] -= eps;
      f(xp, &gp);
      f(xm, &gm);
      for (int i = 0; i < n; ++i) hess[i * n + j] = (gp[i] - gm[i]) / (2.0 * eps);
    }
    double diag_scale = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) hess[i * n + j] = hess[j * n + i] = 0.5 * (hess[i * n + j] + hess[j * n + i]);
      diag_scale = std::max(diag_scale, std::abs(hess[i * n + i]));
    }
    diag_scale = std::max(diag_scale, 1e-300);

    bool accepted = false;
    double predicted = 0.0;
    mu = mu * 0.1;
    while (!accepted) {
      std::vector<double> a = hess;
      for (int i = 0; i < n; ++i) a[i * n + i] += mu;
      if (!detail::cholesky(a, n)) {
        mu = std::max(2.0 * mu, 1e-10 * diag_scale);
        if (mu > 1e16 * diag_scale) break;
        continue;
      }
      Vector neg_g(g);
      for (double& v : neg_g) v = -v;
      const Vector p = detail::cholesky_solve(a, n, neg_g);
      const double slope = dot(g, p);
      predicted = -slope;
      if (!(slope < 0.0)) {
        mu = std::max(10.0 * mu, 1e-10 * diag_scale);
        if (mu > 1e16 * diag_scale) break;
        continue;
      }
      // Near the rounding floor f cannot rank steps (Armijo would accept no-op moves), so a full
      // Newton step is judged by whether it shrinks the gradient instead.
      if (predicted <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx))) {
        Vector xn(x);
        for (int i = 0; i < n; ++i) xn[i] += p[i];
        Vector gn;
        const double fn = f(xn, &gn);
        if (std::isfinite(fn) && detail::inf_norm(gn) < detail::inf_norm(g)) {
          x = std::move(xn);
          fx = fn;
          g = std::move(gn);
          accepted = true;
        }
        break;
      }
      double t = 1.0;
      for (int b = 0; b < opts.max_backtracks; ++b, t *= opts.backtrack) {
        Vector xn(x);
        for (int i = 0; i < n; ++i) xn[i] += t * p[i];
        Vector gn;
        const double fn = f(xn, &gn);
        if (!std::isfinite(fn)) continue;
        if (fn <= fx + opts.armijo_c * t * slope) {
          x = std::move(xn);
          fx = fn;
          g = std::move(gn);
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // Predicted decrease indistinguishable from rounding in the objective: nothing left to gain.
        if (predicted <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx))) break;
        mu = std::max(10.0 * mu, 1e-10 * diag_scale);
        if (mu > 1e16 * diag_scale) break;
      }
    }
    if (!accepted) {
      const bool at_precision =
          predicted <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx));
      res.status = at_precision ? OptimizeStatus::stalled_at_precision : OptimizeStatus::failed;
      break;
    }
  }
  if (it == opts.max_iterations) res.status = detail::inf_norm(g) < opts.grad_tol ? OptimizeStatus::converged
                                                                                  : OptimizeStatus::max_iterations;
  res.coeffs = init.with_flat(x);
  res.iterations = it;
  res.objective = fx;
  res.grad_inf = detail::inf_norm(g);
  res.warning = res.status == OptimizeStatus::max_iterations || res.status == OptimizeStatus::failed;
  return res;
}

}  // namespace ecsi
