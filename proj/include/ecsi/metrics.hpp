#pragma once

// Rollout evaluation: MSE, rate of change, Wasserstein-1 between pooled kinetic
// energies, correlation time, and radially binned energy spectra.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/detail/fft.hpp"
#include "ecsi/fields.hpp"
#include "ecsi/sample.hpp"

namespace ecsi {

/// Mean over the first `horizon` steps and all entries of the squared difference.
inline double mse(const Trajectory& gen, const Trajectory& ref, std::size_t horizon) {
  if (gen.size() != ref.size()) throw ConfigError("mse: trajectories differ in length");
  if (horizon == 0 || horizon > gen.size()) throw ConfigError("mse: horizon must lie in [1, length]");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < horizon; ++n) {
    if (gen[n].size() != ref[n].size()) throw ConfigError("mse: state sizes differ");
    for (std::size_t k = 0; k < gen[n].size(); ++k) total += (gen[n][k] - ref[n][k]) * (gen[n][k] - ref[n][k]);
    count += gen[n].size();
  }
  return total / static_cast<double>(count);
}

inline double mse(const Trajectory& gen, const Trajectory& ref) { return mse(gen, ref, gen.size()); }

/// l1 norm of (q^n - q^{n-1}) / dt for n = 1..N-1.
inline std::vector<double> rate_of_change(const Trajectory& traj, double dt) {
  if (traj.size() < 2) throw ConfigError("rate_of_change needs at least two states");
  if (!(dt > 0.0)) throw ConfigError("rate_of_change: dt must be > 0");
  std::vector<double> out;
  out.reserve(traj.size() - 1);
  for (std::size_t n = 1; n < traj.size(); ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < traj[n].size(); ++k) s += std::abs(traj[n][k] - traj[n - 1][k]);
    out.push_back(s / dt);
  }
  return out;
}

/// Empirical W-1 distance: integral of |F_a^-1 - F_b^-1| over the merged quantile grid.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ConfigError("wasserstein1: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / na;
  }
  // Walk the breakpoints i/na and j/nb; both quantile functions are constant in between.
  std::size_t i = 0, j = 0;
  double p = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double pa = static_cast<double>(i + 1) / na, pb = static_cast<double>(j + 1) / nb;
    const double next = std::min(pa, pb);
    total += (next - p) * std::abs(a[i] - b[j]);
    p = next;
    // Compare in integers to step past coincident breakpoints together.
    const auto ia = (i + 1) * b.size(), jb = (j + 1) * a.size();
    if (ia <= jb) ++i;
    if (jb <= ia) ++j;
  }
  return total;
}

/// Pearson correlation over all entries; NaN when either side has zero variance.
inline double pearson(const State& a, const State& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

/// First step whose correlation with the reference falls below `threshold`, as a fraction of the
/// horizon; 1 if it never does. An undefined correlation counts as a crossing.
inline double correlation_time(const Trajectory& gen, const Trajectory& ref, double threshold = 0.8) {
  if (gen.size() != ref.size()) throw ConfigError("correlation_time: trajectories differ in length");
  if (gen.empty()) throw ConfigError("correlation_time: empty trajectories");
  for (std::size_t n = 0; n < gen.size(); ++n) {
    const double c = pearson(gen[n], ref[n]);
    if (!(c >= threshold)) return static_cast<double>(n) / static_cast<double>(gen.size());
  }
  return 1.0;
}

inline int spectrum_shells(int n) { return static_cast<int>(std::floor(std::sqrt(0.5) * n)) + 1; }

/// E(k) = sum over k <= |kappa| < k+1 of (|u_hat|^2 + |v_hat|^2) / 2 with u_hat = FFT(u) / n^2, so
/// the shells sum to the mean of (u^2 + v^2) / 2. Shells run up to the corner modes |kappa| = n/sqrt(2).
inline std::vector<double> energy_spectrum(const VelocityField& q) {
  const int n = q.n();
  std::vector<double> shells(spectrum_shells(n), 0.0);
  detail::FftHandle fft(n);
  const int nc = fft->half_cols();
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n) * nc);
  const double norm = 1.0 / (static_cast<double>(n) * n);
  for (const auto comp : {q.u_span(), q.v_span()}) {
    fft->forward(comp, spec);
    for (int ky = 0; ky < n; ++ky) {
      const int sy = ky <= n / 2 ? ky : ky - n;
      for (int kx = 0; kx < nc; ++kx) {
        // Columns 1..n/2-1 stand for themselves and their conjugate mirror.
        const double weight = (kx == 0 || 2 * kx == n) ? 1.0 : 2.0;
        const auto k = static_cast<int>(std::floor(std::sqrt(static_cast<double>(kx * kx + sy * sy))));
        shells[k] += 0.5 * weight * std::norm(spec[static_cast<std::size_t>(ky) * nc + kx] * norm);
      }
    }
  }
  return shells;
}

inline int grid_size_of(const State& x) {
  const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(x.size()) / 2.0)));
  if (static_cast<std::size_t>(2) * n * n != x.size()) throw ConfigError("state is not a square velocity field");
  return n;
}

inline std::vector<double> energy_series(const Trajectory& traj) {
  std::vector<double> out;
  out.reserve(traj.size());
  for (const auto& x : traj) out.push_back(kinetic_energy(VelocityField(Grid(grid_size_of(x)), x)));
  return out;
}

struct EvaluateOptions {
  std::size_t short_horizon = 50;
  /// Steps (0-based) at which mean spectra are reported; out-of-range steps are skipped.
  std::vector<std::size_t> spectrum_steps;
  double corr_threshold = 0.8;
};

struct SpectrumAtStep {
  std::size_t step = 0;
  std::vector<double> generated;
  std::vector<double> reference;
};

struct MetricReport {
  double mse_short = 0.0;
  std::size_t short_horizon = 0;
  double mse_full = 0.0;
  double energy_w1 = 0.0;
  double corr_time = 0.0;
  /// energy_series[r] for realization r; reference_energy aligned with it.
  std::vector<std::vector<double>> energy_series;
  std::vector<std::vector<double>> reference_energy;
  /// Rate of change averaged over realizations, and of the reference.
  std::vector<double> roc_series;
  std::vector<double> reference_roc;
  std::vector<SpectrumAtStep> spectra;
  std::size_t n_realizations = 0;
};

/// Aggregates over every realization of every ensemble: MSE and correlation time are averaged per
/// realization; W-1 compares all generated energies against all reference energies.
inline MetricReport evaluate(std::span<const RolloutEnsemble> ensembles, const EvaluateOptions& opt = {}) {
  MetricReport rep;
  std::vector<double> gen_energy, ref_energy;
  std::size_t length = 0;
  for (const RolloutEnsemble& ens : ensembles) {
    for (const Trajectory& r : ens.realizations) {
      if (r.size() != ens.reference.size()) throw ConfigError("evaluate: realization and reference lengths differ");
      if (r.empty()) throw ConfigError("evaluate: empty trajectories");
      if (length == 0) length = r.size();
      if (r.size() != length) throw ConfigError("evaluate: ensembles differ in horizon");
    }
  }
  if (length == 0) throw ConfigError("evaluate: no realizations");
  rep.short_horizon = std::min(opt.short_horizon, length);
  const bool with_roc = length >= 2;
  if (with_roc) {
    rep.roc_series.assign(length - 1, 0.0);
    rep.reference_roc.assign(length - 1, 0.0);
  }
  for (std::size_t s : opt.spectrum_steps)
    if (s < length) rep.spectra.push_back({s, {}, {}});

  std::size_t n_ref = 0;
  for (const RolloutEnsemble& ens : ensembles) {
    if (ens.realizations.empty()) continue;
    if (with_roc && !(ens.dt > 0.0)) throw ConfigError("evaluate: ensemble dt must be > 0");
    const std::vector<double> e_ref = energy_series(ens.reference);
    for (std::size_t r = 0; r < ens.realizations.size(); ++r) {
      // Every realization pools alongside one copy of its reference.
      ref_energy.insert(ref_energy.end(), e_ref.begin(), e_ref.end());
      rep.reference_energy.push_back(e_ref);
    }
    if (with_roc) {
      const auto roc = rate_of_change(ens.reference, ens.dt);
      for (std::size_t k = 0; k < roc.size(); ++k) rep.reference_roc[k] += roc[k];
    }
    for (auto& sp : rep.spectra) {
      const auto e = energy_spectrum(VelocityField(Grid(grid_size_of(ens.reference[sp.step])), ens.reference[sp.step]));
      if (sp.reference.empty()) sp.reference.assign(e.size(), 0.0);
      for (std::size_t k = 0; k < e.size(); ++k) sp.reference[k] += e[k];
    }
    ++n_ref;
    for (const Trajectory& r : ens.realizations) {
      rep.mse_short += mse(r, ens.reference, rep.short_horizon);
      rep.mse_full += mse(r, ens.reference);
      rep.corr_time += correlation_time(r, ens.reference, opt.corr_threshold);
      rep.energy_series.push_back(energy_series(r));
      gen_energy.insert(gen_energy.end(), rep.energy_series.back().begin(), rep.energy_series.back().end());
      if (with_roc) {
        const auto roc = rate_of_change(r, ens.dt);
        for (std::size_t k = 0; k < roc.size(); ++k) rep.roc_series[k] += roc[k];
      }
      for (auto& sp : rep.spectra) {
        const auto e = energy_spectrum(VelocityField(Grid(grid_size_of(r[sp.step])), r[sp.step]));
        if (sp.generated.empty()) sp.generated.assign(e.size(), 0.0);
        for (std::size_t k = 0; k < e.size(); ++k) sp.generated[k] += e[k];
      }
      ++rep.n_realizations;
    }
  }
  const double nr = static_cast<double>(rep.n_realizations);
  rep.mse_short /= nr;
  rep.mse_full /= nr;
  rep.corr_time /= nr;
  for (double& v : rep.roc_series) v /= nr;
  for (double& v : rep.reference_roc) v /= static_cast<double>(n_ref);
  for (auto& sp : rep.spectra) {
    for (double& v : sp.generated) v /= nr;
    for (double& v : sp.reference) v /= static_cast<double>(n_ref);
  }
  rep.energy_w1 = wasserstein1(gen_energy, ref_energy);
  return rep;
}

inline MetricReport evaluate(const RolloutEnsemble& ensemble, const EvaluateOptions& opt = {}) {
  return evaluate(std::span<const RolloutEnsemble>(&ensemble, 1), opt);
}

}  // namespace ecsi
