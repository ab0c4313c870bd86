#pragma once

// Heun integration of the learned pseudo-time SDE dX = b(X, tau) dtau + g(tau) dW
// and autoregressive physical-time rollouts with optional divergence-free projection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/drift_net.hpp"
#include "ecsi/fields.hpp"
#include "ecsi/interpolant.hpp"

namespace ecsi {

struct SdeConfig {
  int n_pseudo_steps = 25;
  std::uint64_t seed = 0;
  /// Project every emitted physical state onto the divergence-free space.
  bool project = true;

  void validate() const {
    if (n_pseudo_steps < 1) throw ConfigError("sde.n_pseudo_steps must be >= 1");
  }
};

using DriftFn = std::function<State(const State&, double)>;

/// One predictor-corrector step with additive noise g * sqrt(dtau) * z shared by both stages.
inline State heun_step(const DriftFn& drift, const State& x, double tau, double dtau, double gamma,
                       const Vector& z) {
  if (!(dtau > 0.0)) throw ConfigError("heun_step: dtau must be > 0");
  const double noise = gamma * std::sqrt(dtau);
  const State b0 = drift(x, tau);
  State pred(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) pred[k] = x[k] + b0[k] * dtau + noise * z[k];
  const State b1 = drift(pred, tau + dtau);
  State out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + 0.5 * (b0[k] + b1[k]) * dtau + noise * z[k];
  return out;
}

/// Integrates from tau = 0 to 1 on a uniform grid; the diffusion is evaluated at the left end of each step.
inline State integrate_sde(const DriftFn& drift, const std::function<double(double)>& gamma, State x, int n_steps,
                           Rng& rng) {
  if (n_steps < 1) throw ConfigError("integrate_sde: need at least one step");
  const double dtau = 1.0 / n_steps;
  Vector z(x.size());
  for (int k = 0; k < n_steps; ++k) {
    const double tau = static_cast<double>(k) / n_steps;
    fill_normal(rng, z);
    x = heun_step(drift, x, tau, dtau, gamma(tau), z);
    if (!all_finite(x)) throw NonFiniteError("non-finite SDE state at pseudo-step " + std::to_string(k));
  }
  return x;
}

struct StepResult {
  /// Next state in physical units (projected if requested).
  State physical;
  /// The same state standardized, ready to enter the conditioning history.
  State standardized;
};

/// Samples the next physical state given a standardized history (oldest first; last entry is the current state).
inline StepResult generate_step(const DriftNet& net, const InterpolantCoeffs& coeffs, const ChannelStats& stats,
                                const std::vector<State>& history, const SdeConfig& cfg, Rng& rng) {
  cfg.validate();
  if (history.empty()) throw ConfigError("generate_step needs a non-empty history");
  const DriftFn drift = [&](const State& x, double tau) { return net.forward(x, history, std::min(tau, 1.0)); };
  const auto gamma = [&](double tau) { return eval_coeffs(coeffs, tau).gamma; };
  StepResult r;
  r.standardized = integrate_sde(drift, gamma, history.back(), cfg.n_pseudo_steps, rng);
  r.physical = r.standardized;
  destandardize_state(r.physical, stats);
  if (cfg.project) {
    const StateShape& s = net.shape();
    if (!s.square()) throw ConfigError("projection needs a square grid");
    r.physical = project(VelocityField(Grid(s.nx), r.physical)).data();
    r.standardized = r.physical;
    standardize_state(r.standardized, stats);
  }
  return r;
}

struct RolloutEnsemble {
  /// realizations[r][k] is the k-th generated state (physical units).
  std::vector<Trajectory> realizations;
  /// Reference states aligned with the generated ones (may be shorter or empty).
  Trajectory reference;
  /// The l+1 physical states every realization was conditioned on initially.
  Trajectory initial_history;
  double dt = 0.0;
};

/// Autoregressive rollout from a physical initial history of l+1 states. Realization r draws
/// from substream ("sample", stream_base + r).
inline RolloutEnsemble rollout(const DriftNet& net, const InterpolantCoeffs& coeffs, const ChannelStats& stats,
                               const std::vector<State>& init_history, int n_steps, int n_realizations,
                               const SdeConfig& cfg, std::uint64_t stream_base = 0) {
  if (n_steps < 0 || n_realizations < 0) throw ConfigError("rollout counts must be non-negative");
  if (static_cast<int>(init_history.size()) != net.arch().history_states())
    throw ConfigError("rollout needs " + std::to_string(net.arch().history_states()) + " initial states");
  RolloutEnsemble ens;
  ens.initial_history = init_history;
  for (int r = 0; r < n_realizations; ++r) {
    Rng rng = make_rng(cfg.seed, "sample", stream_base + static_cast<std::uint64_t>(r));
    std::vector<State> hist = init_history;
    for (auto& s : hist) standardize_state(s, stats);
    Trajectory traj;
    traj.reserve(n_steps);
    for (int k = 0; k < n_steps; ++k) {
      StepResult step;
      try {
        step = generate_step(net, coeffs, stats, hist, cfg, rng);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError(std::string(e.what()) + " (physical step " + std::to_string(k) + ", realization " +
                             std::to_string(r) + ")");
      }
      traj.push_back(std::move(step.physical));
      hist.erase(hist.begin());
      hist.push_back(std::move(step.standardized));
    }
    ens.realizations.push_back(std::move(traj));
  }
  return ens;
}

/// Rollout started from the first l+1 states of a reference trajectory, with the reference aligned.
inline RolloutEnsemble rollout_from_reference(const DriftNet& net, const InterpolantCoeffs& coeffs,
                                              const ChannelStats& stats, const Trajectory& reference, int n_steps,
                                              int n_realizations, const SdeConfig& cfg, double dt,
                                              std::uint64_t stream_base = 0) {
  const int l1 = net.arch().history_states();
  if (static_cast<int>(reference.size()) < l1) throw ConfigError("reference trajectory shorter than the history");
  const std::vector<State> init(reference.begin(), reference.begin() + l1);
  RolloutEnsemble ens = rollout(net, coeffs, stats, init, n_steps, n_realizations, cfg, stream_base);
  const auto avail = std::min<std::size_t>(n_steps, reference.size() - l1);
  ens.reference.assign(reference.begin() + l1, reference.begin() + l1 + static_cast<std::ptrdiff_t>(avail));
  ens.dt = dt;
  return ens;
}

}  // namespace ecsi
