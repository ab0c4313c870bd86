#pragma once

// Linear-Gaussian toy shared by the train, sample and acceptance suites:
// x1 = a*x0 + sigma*z on a 1x2 grid (d = 4), with closed-form conditional moments.

#include <cmath>
#include <random>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/interpolant.hpp"
#include "ecsi/sample.hpp"

namespace toy {

using namespace ecsi;

inline constexpr double kA = 0.9;
inline constexpr double kSigma = 0.1;
inline const StateShape kShape{1, 2};

/// Stationary AR(1) trajectories.
inline TrajectoryDataset ar1_dataset(int n_traj, int length, std::uint64_t seed) {
  TrajectoryDataset ds;
  ds.shape = kShape;
  ds.dt = 1.0;
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double s_stat = kSigma / std::sqrt(1.0 - kA * kA);
  for (int t = 0; t < n_traj; ++t) {
    Trajectory tr;
    State x(kShape.size());
    for (double& v : x) v = s_stat * nd(rng);
    for (int n = 0; n < length; ++n) {
      tr.push_back(x);
      for (double& v : x) v = kA * v + kSigma * nd(rng);
    }
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

/// E[R | x_tau = x, x0] for a Gaussian x1 ~ N(m, s2 I) given x0.
inline State exact_drift(const InterpolantCoeffs& c, const State& x0, const State& m, double s2, const State& x,
                         double tau) {
  const CoeffEval e = eval_coeffs(c, std::min(tau, 1.0));
  const double var = e.beta * e.beta * s2 + e.gamma * e.gamma * tau;
  const double cov = e.beta_dot * e.beta * s2 + e.gamma_dot * e.gamma * tau;
  // At tau = 0 both vanish; the ratio tends to (b'^2 s2 + g' g) / g^2.
  const double k = var > 0.0 ? cov / var : (e.beta_dot * e.beta_dot * s2 + e.gamma_dot * e.gamma) / (e.gamma * e.gamma);
  State out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = e.alpha_dot * x0[i] + e.beta_dot * m[i] + k * (x[i] - e.alpha * x0[i] - e.beta * m[i]);
  return out;
}

struct Moments {
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;
  std::size_t n = 0;
};

inline Moments moments(const std::vector<State>& xs) {
  Moments m;
  m.n = xs.size();
  const std::size_t d = xs.front().size();
  m.mean.assign(d, 0.0);
  m.cov.assign(d, std::vector<double>(d, 0.0));
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += x[i] / static_cast<double>(m.n);
  for (const auto& x : xs)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        m.cov[i][j] += (x[i] - m.mean[i]) * (x[j] - m.mean[j]) / static_cast<double>(m.n - 1);
  return m;
}

}  // namespace toy
