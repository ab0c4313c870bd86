#pragma once

// Desk-scale DNS of 2D incompressible Navier-Stokes on the periodic MAC grid:
// energy-conserving divergence-form convection, 5-point diffusion, Kolmogorov
// forcing sin(4y) e_x - 0.1 q, and classical RK4 with a projection per stage.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/dataset.hpp"
#include "ecsi/fields.hpp"

namespace ecsi {

struct NsConfig {
  Grid grid{256};
  double re = 1000.0;
  double dt = 2e-3;
  bool forcing_on = true;
  std::uint64_t seed = 0;
  /// Forcing wavenumber and linear drag of the Kolmogorov body force.
  int forcing_wavenumber = 4;
  double drag = 0.1;

  void validate() const {
    if (!(re > 0.0)) throw ConfigError("ns.re must be > 0");
    if (!(dt > 0.0)) throw ConfigError("ns.dt must be > 0");
  }
};

struct DataGenConfig {
  double burn_in = 25.0;
  int stride = 25;
  int n_train_traj = 1;
  int n_test_traj = 1;
  int n_train_steps = 250;
  int n_test_steps = 750;
  int coarsen_factor = 8;
  /// Peak wavenumber and rms velocity of the random initial condition.
  double ic_peak_wavenumber = 4.0;
  double ic_rms = 1.0;

  void validate(const Grid& fine) const {
    if (burn_in < 0.0) throw ConfigError("datagen.burn_in must be >= 0");
    if (stride < 1) throw ConfigError("datagen.stride must be >= 1");
    if (n_train_traj < 0 || n_test_traj < 0 || n_train_steps < 0 || n_test_steps < 0)
      throw ConfigError("datagen counts must be non-negative");
    if (coarsen_factor < 1 || fine.n() % coarsen_factor != 0 || fine.n() / coarsen_factor < 4)
      throw ConfigError("datagen.coarsen_factor " + std::to_string(coarsen_factor) +
                        " must divide the fine grid n=" + std::to_string(fine.n()) + " leaving >= 4 cells");
  }
};

/// Momentum right-hand side without pressure: -div(q (x) q) + (1/Re) lap q + f(q).
inline VelocityField rhs(const VelocityField& q, const NsConfig& cfg) {
  const Grid& g = q.grid();
  const int n = g.n();
  const double h = g.h();
  const double inv_h = 1.0 / h;
  const double nu_h2 = (1.0 / cfg.re) / (h * h);
  std::vector<int> ip(n), im(n);
  for (int i = 0; i < n; ++i) {
    ip[i] = (i + 1) % n;
    im[i] = (i + n - 1) % n;
  }
  const auto u = q.u_span();
  const auto v = q.v_span();
  auto at = [n](std::span<const double> a, int i, int j) { return a[static_cast<std::size_t>(j) * n + i]; };

  VelocityField out(g);
  auto ou = out.u_span();
  auto ov = out.v_span();
  for (int j = 0; j < n; ++j) {
    const int jp = ip[j], jm = im[j];
    for (int i = 0; i < n; ++i) {
      const int ipx = ip[i], imx = im[i];
      const double uc = at(u, i, j);
      const double vc = at(v, i, j);

      // u-momentum at the right face of cell (i,j).
      const double u_east = 0.5 * (uc + at(u, ipx, j));
      const double u_west = 0.5 * (at(u, imx, j) + uc);
      const double v_top = 0.5 * (vc + at(v, ipx, j));
      const double u_top = 0.5 * (uc + at(u, i, jp));
      const double v_bot = 0.5 * (at(v, i, jm) + at(v, ipx, jm));
      const double u_bot = 0.5 * (at(u, i, jm) + uc);
      const double conv_u = (u_east * u_east - u_west * u_west + v_top * u_top - v_bot * u_bot) * inv_h;
      const double lap_u = at(u, ipx, j) + at(u, imx, j) + at(u, i, jp) + at(u, i, jm) - 4.0 * uc;

      // v-momentum at the top face of cell (i,j).
      const double adv_e = 0.5 * (uc + at(u, i, jp));
      const double v_e = 0.5 * (vc + at(v, ipx, j));
      const double adv_w = 0.5 * (at(u, imx, j) + at(u, imx, jp));
      const double v_w = 0.5 * (at(v, imx, j) + vc);
      const double v_n = 0.5 * (vc + at(v, i, jp));
      const double v_s = 0.5 * (at(v, i, jm) + vc);
      const double conv_v = (adv_e * v_e - adv_w * v_w + v_n * v_n - v_s * v_s) * inv_h;
      const double lap_v = at(v, ipx, j) + at(v, imx, j) + at(v, i, jp) + at(v, i, jm) - 4.0 * vc;

      double fu = 0.0, fv = 0.0;
      if (cfg.forcing_on) {
        const double y = (j + 0.5) * h;
        fu = std::sin(cfg.forcing_wavenumber * y) - cfg.drag * uc;
        fv = -cfg.drag * vc;
      }
      const std::size_t k = static_cast<std::size_t>(j) * n + i;
      ou[k] = -conv_u + nu_h2 * lap_u + fu;
      ov[k] = -conv_v + nu_h2 * lap_v + fv;
    }
  }
  return out;
}

/// Largest stable step under the advective limit dt <= 0.5 h / max|q|.
inline double cfl_limit(const VelocityField& q) {
  const double vmax = q.max_abs();
  return vmax > 0.0 ? 0.5 * q.grid().h() / vmax : std::numeric_limits<double>::infinity();
}

/// One RK4 step; every stage velocity is projected onto the divergence-free space.
inline VelocityField step(const VelocityField& q, const NsConfig& cfg) {
  const double limit = cfl_limit(q);
  if (cfg.dt > limit)
    throw CflError("dt=" + std::to_string(cfg.dt) + " exceeds CFL limit " + std::to_string(limit) +
                   " (max |q| = " + std::to_string(q.max_abs()) + ")");
  const double dt = cfg.dt;
  const VelocityField k1 = rhs(q, cfg);
  VelocityField s = q;
  s.axpy(0.5 * dt, k1);
  const VelocityField k2 = rhs(project(s), cfg);
  s = q;
  s.axpy(0.5 * dt, k2);
  const VelocityField k3 = rhs(project(s), cfg);
  s = q;
  s.axpy(dt, k3);
  const VelocityField k4 = rhs(project(s), cfg);
  s = q;
  s.axpy(dt / 6.0, k1);
  s.axpy(dt / 3.0, k2);
  s.axpy(dt / 3.0, k3);
  s.axpy(dt / 6.0, k4);
  VelocityField next = project(s);
  if (!all_finite(next.data())) throw NonFiniteError("non-finite velocity after RK4 step");
  return next;
}

/// Random solenoidal field with energy spectrum ~ k^4 exp(-k^2/k0^2), scaled to the given rms.
inline VelocityField random_initial_condition(const Grid& g, Rng& rng, double k0, double rms) {
  const int n = g.n();
  const int nc = n / 2 + 1;
  VelocityField q(g);
  Vector noise(g.cells());
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n) * nc);
  for (int c = 0; c < 2; ++c) {
    detail::FftHandle fft(n);
    fill_normal(rng, noise);
    fft->forward(noise, spec);
    for (int ky = 0; ky < n; ++ky)
      for (int kx = 0; kx < nc; ++kx) {
        const double kyw = ky <= n / 2 ? ky : ky - n;
        const double k = std::sqrt(static_cast<double>(kx) * kx + kyw * kyw);
        // Amplitude per mode ~ sqrt(E(k) / k) for a 2D shell of circumference ~ k.
        const double amp = k > 0.0 ? std::pow(k, 1.5) * std::exp(-0.5 * k * k / (k0 * k0)) : 0.0;
        spec[static_cast<std::size_t>(ky) * nc + kx] *= amp;
      }
    Vector field(g.cells());
    fft->inverse(spec, field);
    auto dst = c == 0 ? q.u_span() : q.v_span();
    std::copy(field.begin(), field.end(), dst.begin());
  }
  q = project(q);
  const double cur = std::sqrt(dot(q.data(), q.data()) / static_cast<double>(q.data().size()));
  if (cur > 0.0) q *= rms / cur;
  return q;
}

/// Integrates one trajectory: random IC, burn-in, then `n_steps` saved states
/// `stride` solver steps apart, each face-averaged to the coarse grid.
inline Trajectory simulate_trajectory(const NsConfig& ns, const DataGenConfig& gen, int n_steps,
                                      std::uint64_t traj_seed) {
  Rng rng(traj_seed);
  VelocityField q = random_initial_condition(ns.grid, rng, gen.ic_peak_wavenumber, gen.ic_rms);
  const auto burn_steps = static_cast<long>(std::llround(gen.burn_in / ns.dt));
  for (long s = 0; s < burn_steps; ++s) q = step(q, ns);
  Trajectory traj;
  traj.reserve(n_steps);
  auto coarse = [&](const VelocityField& f) {
    return gen.coarsen_factor == 1 ? f.data() : face_average(f, gen.coarsen_factor).data();
  };
  for (int k = 0; k < n_steps; ++k) {
    if (k > 0)
      for (int s = 0; s < gen.stride; ++s) q = step(q, ns);
    traj.push_back(coarse(q));
  }
  return traj;
}

enum class Split { train, test };

/// Generates the train or test split. Trajectory t uses RNG substream ("dns", global index),
/// with test trajectories indexed after the training ones, so splits never share an IC.
inline TrajectoryDataset generate_dataset(const NsConfig& ns, const DataGenConfig& gen, Split split) {
  ns.validate();
  gen.validate(ns.grid);
  TrajectoryDataset ds;
  const int nc = ns.grid.n() / gen.coarsen_factor;
  ds.shape = {nc, nc};
  ds.dt = gen.stride * ns.dt;
  const int n_traj = split == Split::train ? gen.n_train_traj : gen.n_test_traj;
  const int n_steps = split == Split::train ? gen.n_train_steps : gen.n_test_steps;
  const int offset = split == Split::train ? 0 : gen.n_train_traj;
  for (int t = 0; t < n_traj; ++t)
    ds.trajectories.push_back(
        simulate_trajectory(ns, gen, n_steps, substream_seed(ns.seed, "dns", static_cast<std::uint64_t>(offset + t))));
  return ds;
}

}  // namespace ecsi
