#pragma once

// The five pipeline stages behind the command-line tool: DNS data generation,
// interpolant optimization, drift training, sampling and evaluation.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecsi/coeff_optimizer.hpp"
#include "ecsi/config.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/drift_net.hpp"
#include "ecsi/io.hpp"
#include "ecsi/metrics.hpp"
#include "ecsi/nsolve.hpp"
#include "ecsi/sample.hpp"
#include "ecsi/train.hpp"

namespace ecsi {

/// DNS on the fine grid, face-averaged to the coarse grid, as a physical-units dataset file.
inline TrajectoryFile cmd_dns(const PipelineConfig& cfg, Split split) {
  const TrajectoryDataset ds = generate_dataset(cfg.ns, cfg.data, split);
  Json meta;
  meta["re"] = cfg.ns.re;
  meta["seed"] = cfg.seed;
  meta["split"] = split == Split::train ? "train" : "test";
  if (!ds.empty()) meta["stats"] = stats_to_json(channel_stats(ds));
  meta["provenance"] = {{"generator", "ecsi dns"},
                        {"fine_n", cfg.ns_n},
                        {"solver_dt", cfg.ns.dt},
                        {"stride", cfg.data.stride},
                        {"coarsen_factor", cfg.data.coarsen_factor},
                        {"burn_in", cfg.data.burn_in}};
  TrajectoryFile f = to_file(ds, meta);
  f.dtype = cfg.dtype;
  return f;
}

/// Consecutive (q^n, q^{n+1}) pairs of the standardized data, thinned evenly to at most max_pairs.
inline PairBatch training_pairs(const TrajectoryDataset& std_ds, int max_pairs) {
  const std::vector<PairIndex> all = pair_indices(std_ds, 0);
  std::size_t take = all.size();
  if (max_pairs > 0) take = std::min<std::size_t>(take, static_cast<std::size_t>(max_pairs));
  std::vector<Vector> x0, x1;
  for (std::size_t i = 0; i < take; ++i) {
    const PairIndex& p = all[i * all.size() / take];
    x0.push_back(std_ds.trajectories[p.traj][p.n]);
    x1.push_back(std_ds.trajectories[p.traj][p.n + 1]);
  }
  return PairBatch(std::move(x0), std::move(x1));
}

inline OptimizeResult cmd_optimize_interpolant(const PipelineConfig& cfg, const TrajectoryDataset& train_phys) {
  const auto& o = cfg.interpolant;
  if (train_phys.n_states() < 2) throw ConfigError("optimize-interpolant needs a dataset with at least one pair");
  InterpolantCoeffs init = o.schedule == Schedule::trigonometric ? InterpolantCoeffs::zeros(o.n_coeffs, o.gamma_scale)
                                                                 : InterpolantCoeffs::quadratic(o.gamma_scale);
  if (!o.optimize) {
    OptimizeResult r;
    r.coeffs = init;
    r.status = OptimizeStatus::converged;
    return r;
  }
  const auto [std_ds, stats] = standardize(train_phys);
  const PairBatch batch = training_pairs(std_ds, o.max_pairs);
  if (batch.empty()) throw ConfigError("optimize-interpolant: dataset has no consecutive pairs");
  OptimizeOptions opts;
  opts.max_iterations = o.max_iterations;
  opts.grad_tol = o.grad_tol;
  opts.quadrature_points = o.quadrature_points;
  opts.weights = {o.w_energy, o.w_transport};
  return optimize_coeffs(init, batch, opts);
}

/// Trains (or resumes) and returns the final checkpoint. When `checkpoint_path` is set the
/// checkpoint is rewritten after every epoch; `epoch_budget` > 0 stops early for a later resume.
inline Checkpoint cmd_train(const PipelineConfig& cfg, const TrajectoryDataset& train_phys,
                            const InterpolantCoeffs& coeffs, const std::optional<Checkpoint>& resume = {},
                            const std::optional<std::filesystem::path>& checkpoint_path = {}, int epoch_budget = 0) {
  if (train_phys.empty()) throw ConfigError("train: empty dataset");
  Checkpoint ck;
  ck.arch = cfg.net;
  ck.shape = train_phys.shape;
  ck.keep_best = cfg.train.keep_best;
  ck.extra = {{"coeffs", coeffs_to_json(coeffs)}, {"config", config_to_json(cfg)}, {"dt", train_phys.dt}};
  std::optional<TrainState> state;
  if (resume) {
    if (!(resume->arch == cfg.net) || !(resume->shape == train_phys.shape))
      throw ConfigError("resume checkpoint architecture or grid does not match the config/dataset");
    ck.stats = resume->stats;
    state = resume->state;
  } else {
    ck.stats = channel_stats(train_phys);
  }
  const TrajectoryDataset std_ds = apply_stats(train_phys, ck.stats, true);
  const auto [tr, va] = split_validation(std_ds, cfg.net.history, cfg.train.val_rollout_steps);
  const DriftNet net = DriftNet::initialized(cfg.net, train_phys.shape, cfg.seed);
  auto save = [&](const TrainState& st, const DriftNet&) {
    if (!checkpoint_path) return;
    Checkpoint snap = ck;
    snap.state = st;
    write_checkpoint(*checkpoint_path, snap);
  };
  TrainResult res = train(tr, va, ck.stats, coeffs, net, cfg.train, cfg.sde, state, save, epoch_budget);
  ck.state = std::move(res.state);
  if (checkpoint_path) write_checkpoint(*checkpoint_path, ck);
  return ck;
}

/// Rollouts from the first l+1 states of every reference trajectory. Realization r of trajectory t
/// uses sample substream t * n_realizations + r.
inline TrajectoryFile cmd_sample(const PipelineConfig& cfg, const Checkpoint& ck, const InterpolantCoeffs& coeffs,
                                 const TrajectoryDataset& reference) {
  if (reference.empty()) throw ConfigError("sample: reference dataset is empty");
  if (!(reference.shape == ck.shape)) throw ConfigError("sample: dataset grid does not match the checkpoint");
  const DriftNet net = ck.model();
  const int l1 = ck.arch.history_states();
  const int n_real = cfg.sample.n_realizations;
  TrajectoryFile out;
  out.shape = reference.shape;
  out.dtype = DType::f64;
  int n_steps = cfg.sample.n_steps;
  for (const Trajectory& t : reference.trajectories) {
    if (static_cast<int>(t.size()) < l1) throw ConfigError("sample: reference trajectory shorter than the history");
    if (cfg.sample.n_steps == 0) {
      const int avail = static_cast<int>(t.size()) - l1;
      if (n_steps == 0 || avail < n_steps) n_steps = avail;
    }
  }
  for (std::size_t t = 0; t < reference.trajectories.size(); ++t) {
    const RolloutEnsemble ens =
        rollout_from_reference(net, coeffs, ck.stats, reference.trajectories[t], n_steps, n_real, cfg.sde,
                               reference.dt, static_cast<std::uint64_t>(t) * n_real);
    out.data.push_back(ens.realizations);
  }
  out.meta = {{"dt", reference.dt},
              {"history_states", l1},
              {"n_pseudo_steps", cfg.sde.n_pseudo_steps},
              {"project", cfg.sde.project},
              {"seed", cfg.seed},
              {"coeffs", coeffs_to_json(coeffs)}};
  return out;
}

/// Pairs every ensemble trajectory with the reference states it should reproduce.
inline std::vector<RolloutEnsemble> align_ensembles(const TrajectoryFile& ensemble, const TrajectoryDataset& reference) {
  if (!ensemble.meta.contains("history_states")) throw ConfigError("evaluate: not an ensemble file (no history_states)");
  const auto l1 = ensemble.meta.at("history_states").get<std::size_t>();
  if (ensemble.n_traj() != reference.trajectories.size())
    throw ConfigError("evaluate: ensemble has " + std::to_string(ensemble.n_traj()) + " trajectories, reference has " +
                      std::to_string(reference.trajectories.size()));
  if (!(ensemble.shape == reference.shape)) throw ConfigError("evaluate: grids differ");
  const std::size_t n_steps = ensemble.n_steps();
  std::vector<RolloutEnsemble> out;
  for (std::size_t t = 0; t < ensemble.n_traj(); ++t) {
    const Trajectory& ref = reference.trajectories[t];
    if (ref.size() < l1 + n_steps) throw ConfigError("evaluate: reference trajectory too short for the rollout horizon");
    RolloutEnsemble ens;
    ens.realizations = ensemble.data[t];
    ens.initial_history.assign(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(l1));
    ens.reference.assign(ref.begin() + static_cast<std::ptrdiff_t>(l1),
                         ref.begin() + static_cast<std::ptrdiff_t>(l1 + n_steps));
    ens.dt = ensemble.meta.value("dt", reference.dt);
    out.push_back(std::move(ens));
  }
  return out;
}

inline MetricReport cmd_evaluate(const PipelineConfig& cfg, const TrajectoryFile& ensemble,
                                 const TrajectoryDataset& reference) {
  const std::vector<RolloutEnsemble> ens = align_ensembles(ensemble, reference);
  return evaluate(ens, cfg.metrics);
}

/// Writes `csv_path` plus .json, .series.csv and .spectra.csv siblings.
inline void write_metric_report(const std::filesystem::path& csv_path, const MetricReport& r) {
  auto sibling = [&](const std::string& suffix) {
    std::filesystem::path p = csv_path;
    p.replace_extension(suffix);
    return p;
  };
  detail::write_atomic(csv_path, metric_report_csv(r));
  detail::write_atomic(sibling(".json"), metric_report_json(r).dump(2) + "\n");
  detail::write_atomic(sibling(".series.csv"), metric_series_csv(r));
  detail::write_atomic(sibling(".spectra.csv"), spectra_csv(r));
}

}  // namespace ecsi
