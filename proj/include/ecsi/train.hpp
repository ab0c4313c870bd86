#pragma once

// Drift training: single-tau regression onto the interpolant drift target with
// AdamW, linear warmup + cosine decay, and early stopping on short SDE rollouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/drift_net.hpp"
#include "ecsi/interpolant.hpp"
#include "ecsi/sample.hpp"

namespace ecsi {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  double lr_max = 3e-4;
  int warmup_steps = 100;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  int early_stop_patience = 10;
  int val_rollout_steps = 5;
  /// Optimizer steps per epoch; 0 means one pass over the training pairs.
  int steps_per_epoch = 0;
  /// Rollout start points drawn evenly from the validation trajectory.
  int val_windows = 4;
  /// Return the best-validation checkpoint; otherwise the parameters after the last epoch. Rollout
  /// MSE rewards under-dispersed samplers, so selection can favour an under-trained net.
  bool keep_best = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("train.epochs and train.batch_size must be >= 1");
    if (!(lr_max > 0.0)) throw ConfigError("train.lr_max must be > 0");
    if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be >= 1");
    if (val_rollout_steps < 1 || val_windows < 1) throw ConfigError("train.val_rollout_steps/val_windows must be >= 1");
    if (steps_per_epoch < 0) throw ConfigError("train.steps_per_epoch must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train betas must lie in [0,1)");
  }
};

/// Learning rate of optimizer step `step` (1-based) out of `total`: linear ramp to lr_max over the
/// warmup, then half-cosine decay reaching 0 at the final step.
inline double lr_schedule(long step, const TrainConfig& cfg, long total) {
  if (step <= 0) return 0.0;
  const long warm = std::min<long>(cfg.warmup_steps, std::max<long>(total - 1, 0));
  if (step <= warm) return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warm);
  if (total <= warm) return 0.0;
  const double progress = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(total - warm));
  return cfg.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Decoupled-weight-decay Adam.
struct AdamW {
  Vector m, v;
  long t = 0;

  void step(Vector& params, const Vector& grad, double lr, const TrainConfig& cfg) {
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] = params[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
};

/// One regression example: predict `target` from (x_tau, history, tau).
struct TrainingSample {
  std::vector<State> history;
  State x_tau;
  double tau = 0.0;
  State target;
};

/// Mean loss over the samples; grad receives the mean gradient.
inline double batch_loss_and_grad(const DriftNet& net, const std::vector<TrainingSample>& batch, Vector& grad) {
  grad.assign(net.n_params(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& s : batch) loss += w * net.loss_and_grad(s.x_tau, s.history, s.tau, s.target, grad, w);
  return loss;
}

/// Location of one training pair inside a dataset: history states[n-l..n], x0 = states[n], x1 = states[n+1].
struct PairIndex {
  std::size_t traj = 0;
  std::size_t n = 0;
};

inline std::vector<PairIndex> pair_indices(const TrajectoryDataset& ds, int history) {
  std::vector<PairIndex> out;
  for (std::size_t t = 0; t < ds.trajectories.size(); ++t) {
    const std::size_t len = ds.trajectories[t].size();
    for (std::size_t n = history; n + 1 < len; ++n) out.push_back({t, n});
  }
  return out;
}

/// Draws tau ~ U[0,1] and z ~ N(0,I) and builds (I_tau, R_tau) with the same z.
inline TrainingSample make_sample(const TrajectoryDataset& ds, const PairIndex& p, int history,
                                  const InterpolantCoeffs& coeffs, Rng& rng) {
  const Trajectory& tr = ds.trajectories[p.traj];
  TrainingSample s;
  s.history.assign(tr.begin() + static_cast<std::ptrdiff_t>(p.n - history),
                   tr.begin() + static_cast<std::ptrdiff_t>(p.n + 1));
  s.tau = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  Vector z(tr[p.n].size());
  fill_normal(rng, z);
  s.x_tau = interpolate(coeffs, s.tau, tr[p.n], tr[p.n + 1], z);
  s.target = drift_target(coeffs, s.tau, tr[p.n], tr[p.n + 1], z);
  return s;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rollout_mse = 0.0;
  double lr = 0.0;
};

/// Everything needed to continue training exactly where it stopped.
struct TrainState {
  int epochs_done = 0;
  AdamW adam;
  Vector params;
  Vector best_params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improvement = 0;
  bool stopped = false;
  std::vector<EpochRecord> report;
};

struct TrainResult {
  DriftNet best;
  TrainState state;
};

/// Splits off a validation trajectory: the last trajectory when there are several, otherwise
/// the tail of the only one (at least l+1+val_rollout_steps states, about a tenth of it).
inline std::pair<TrajectoryDataset, TrajectoryDataset> split_validation(const TrajectoryDataset& ds, int history,
                                                                        int val_steps) {
  TrajectoryDataset train = ds, val;
  val.shape = ds.shape;
  val.dt = ds.dt;
  train.trajectories.clear();
  for (const auto& t : ds.trajectories)
    if (!t.empty()) train.trajectories.push_back(t);
  if (train.trajectories.size() >= 2) {
    val.trajectories.push_back(train.trajectories.back());
    train.trajectories.pop_back();
    return {train, val};
  }
  if (train.trajectories.empty()) throw ConfigError("training dataset is empty");
  const Trajectory whole = train.trajectories.front();
  const std::size_t need = static_cast<std::size_t>(history + 1 + val_steps);
  const std::size_t tail = std::max(need, whole.size() / 10);
  if (whole.size() < tail + static_cast<std::size_t>(history) + 2)
    throw ConfigError("trajectory too short to split off a validation segment");
  train.trajectories.front().assign(whole.begin(), whole.end() - static_cast<std::ptrdiff_t>(tail));
  val.trajectories.push_back(Trajectory(whole.end() - static_cast<std::ptrdiff_t>(tail), whole.end()));
  return {train, val};
}

/// Mean squared error (standardized units) of short rollouts against validation data.
inline double validation_rollout_mse(const DriftNet& net, const InterpolantCoeffs& coeffs, const ChannelStats& stats,
                                     const TrajectoryDataset& val_std, const TrainConfig& cfg, SdeConfig sde) {
  const int l1 = net.arch().history_states();
  const int steps = cfg.val_rollout_steps;
  std::vector<std::pair<std::size_t, std::size_t>> starts;
  for (std::size_t t = 0; t < val_std.trajectories.size(); ++t) {
    const auto len = static_cast<long>(val_std.trajectories[t].size());
    const long last = len - l1 - steps;
    if (last < 0) continue;
    for (int w = 0; w < cfg.val_windows; ++w) {
      const long s = cfg.val_windows == 1 ? 0 : last * w / (cfg.val_windows - 1);
      starts.emplace_back(t, static_cast<std::size_t>(s));
    }
  }
  if (starts.empty()) throw ConfigError("validation trajectory shorter than history + val_rollout_steps");
  sde.seed = substream_seed(cfg.seed, "val");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    const Trajectory& tr = val_std.trajectories[starts[w].first];
    const std::size_t s0 = starts[w].second;
    std::vector<State> init(tr.begin() + static_cast<std::ptrdiff_t>(s0),
                            tr.begin() + static_cast<std::ptrdiff_t>(s0 + l1));
    for (auto& x : init) destandardize_state(x, stats);
    const RolloutEnsemble ens = rollout(net, coeffs, stats, init, steps, 1, sde, w);
    for (int k = 0; k < steps; ++k) {
      State gen = ens.realizations[0][k];
      standardize_state(gen, stats);
      const State& ref = tr[s0 + l1 + k];
      for (std::size_t q = 0; q < gen.size(); ++q) total += (gen[q] - ref[q]) * (gen[q] - ref[q]);
      count += gen.size();
    }
  }
  return total / static_cast<double>(count);
}

using EpochCallback = std::function<void(const TrainState&, const DriftNet&)>;

/// Trains `net` on a standardized dataset. Epoch e shuffles with substream ("train", e), so
/// continuing from a saved TrainState reproduces an uninterrupted run exactly. A positive
/// `epoch_budget` caps the epochs run by this call without changing the schedule.
inline TrainResult train(const TrajectoryDataset& train_std, const TrajectoryDataset& val_std,
                         const ChannelStats& stats, const InterpolantCoeffs& coeffs, DriftNet net,
                         const TrainConfig& cfg, const SdeConfig& sde, std::optional<TrainState> resume = {},
                         const EpochCallback& on_epoch = {}, int epoch_budget = 0) {
  cfg.validate();
  sde.validate();
  const int l = net.arch().history;
  const std::vector<PairIndex> pairs = pair_indices(train_std, l);
  if (pairs.empty()) throw ConfigError("training dataset has no (history, x0, x1) windows for history " +
                                       std::to_string(l));
  const int per_epoch = cfg.steps_per_epoch > 0
                            ? cfg.steps_per_epoch
                            : static_cast<int>((pairs.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long total_steps = static_cast<long>(per_epoch) * cfg.epochs;

  TrainState st;
  if (resume) {
    st = std::move(*resume);
    net.set_params(st.params);
  } else {
    st.params = net.params();
  }

  Vector grad;
  std::vector<TrainingSample> batch;
  const int first_epoch = st.epochs_done;
  for (int epoch = first_epoch; epoch < cfg.epochs && !st.stopped; ++epoch) {
    if (epoch_budget > 0 && epoch - first_epoch >= epoch_budget) break;
    Rng rng = make_rng(cfg.seed, "train", static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    double loss_sum = 0.0;
    double lr = 0.0;
    for (int s = 0; s < per_epoch; ++s) {
      batch.clear();
      for (int b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        batch.push_back(make_sample(train_std, pairs[order[cursor++]], l, coeffs, rng));
      }
      const double loss = batch_loss_and_grad(net, batch, grad);
      const long global_step = st.adam.t + 1;
      lr = lr_schedule(global_step, cfg, total_steps);
      if (!std::isfinite(loss) || !all_finite(grad))
        throw NonFiniteError("non-finite training loss at step " + std::to_string(global_step) + " (epoch " +
                             std::to_string(epoch) + ", lr " + std::to_string(lr) + ")");
      st.adam.step(net.params(), grad, lr, cfg);
      loss_sum += loss;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / per_epoch;
    rec.lr = lr;
    try {
      rec.val_rollout_mse = validation_rollout_mse(net, coeffs, stats, val_std, cfg, sde);
    } catch (const NonFiniteError&) {
      // A diverging rollout is a bad validation score, not a training failure.
      rec.val_rollout_mse = std::numeric_limits<double>::infinity();
    }
    st.report.push_back(rec);
    st.params = net.params();
    st.epochs_done = epoch + 1;
    if (rec.val_rollout_mse < st.best_val) {
      st.best_val = rec.val_rollout_mse;
      st.best_epoch = epoch;
      st.best_params = net.params();
      st.epochs_since_improvement = 0;
    } else if (++st.epochs_since_improvement >= cfg.early_stop_patience) {
      st.stopped = true;
    }
    if (on_epoch) on_epoch(st, net);
  }
  TrainResult res;
  res.best = net;
  if (cfg.keep_best && !st.best_params.empty()) res.best.set_params(st.best_params);
  res.state = std::move(st);
  return res;
}

}  // namespace ecsi
