#pragma once

// Periodic MAC (staggered) grids on [0, 2pi]^2.
//
//   v[i,j] lives on the top face of cell (i,j):   x = (i+1/2)h, y = (j+1)h
//   u[i,j] lives on the right face of cell (i,j): x = (i+1)h,   y = (j+1/2)h
//   scalars live at cell centres:                 x = (i+1/2)h, y = (j+1/2)h
//
// All arrays are row-major with x fastest: index j*n + i. A VelocityField stores
// u followed by v in one contiguous vector, which is also the flat state layout
// used by the generative model (channel 0 = u, channel 1 = v).

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ecsi/core.hpp"
#include "ecsi/detail/fft.hpp"

namespace ecsi {

class Grid {
 public:
  Grid() = default;
  explicit Grid(int n) : n_(n) {
    if (n < 4) throw ConfigError("grid needs at least 4 cells per side, got " + std::to_string(n));
  }

  int n() const { return n_; }
  double h() const { return 2.0 * std::numbers::pi / n_; }
  std::size_t cells() const { return static_cast<std::size_t>(n_) * n_; }

  int wrap(int i) const { return ((i % n_) + n_) % n_; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(wrap(j)) * n_ + static_cast<std::size_t>(wrap(i));
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int n_ = 4;
};

struct ScalarField {
  Grid grid;
  Vector values;

  ScalarField() = default;
  explicit ScalarField(Grid g) : grid(g), values(g.cells(), 0.0) {}

  double& operator()(int i, int j) { return values[grid.index(i, j)]; }
  double operator()(int i, int j) const { return values[grid.index(i, j)]; }
};

class VelocityField {
 public:
  VelocityField() = default;
  explicit VelocityField(Grid g) : grid_(g), data_(2 * g.cells(), 0.0) {}
  VelocityField(Grid g, Vector data) : grid_(g), data_(std::move(data)) {
    if (data_.size() != 2 * g.cells())
      throw ConfigError("velocity data has " + std::to_string(data_.size()) + " entries, grid needs " +
                        std::to_string(2 * g.cells()));
  }

  const Grid& grid() const { return grid_; }
  int n() const { return grid_.n(); }

  double& u(int i, int j) { return data_[grid_.index(i, j)]; }
  double u(int i, int j) const { return data_[grid_.index(i, j)]; }
  double& v(int i, int j) { return data_[grid_.cells() + grid_.index(i, j)]; }
  double v(int i, int j) const { return data_[grid_.cells() + grid_.index(i, j)]; }

  std::span<double> u_span() { return {data_.data(), grid_.cells()}; }
  std::span<const double> u_span() const { return {data_.data(), grid_.cells()}; }
  std::span<double> v_span() { return {data_.data() + grid_.cells(), grid_.cells()}; }
  std::span<const double> v_span() const { return {data_.data() + grid_.cells(), grid_.cells()}; }

  /// Flat state (u then v), length 2n^2.
  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  double max_abs() const {
    double m = 0.0;
    for (double x : data_) m = std::max(m, std::abs(x));
    return m;
  }

  VelocityField& operator+=(const VelocityField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  VelocityField& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }
  /// this += s * o
  void axpy(double s, const VelocityField& o) {
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += s * o.data_[k];
  }

 private:
  Grid grid_;
  Vector data_;
};

inline VelocityField operator*(double s, VelocityField q) {
  q *= s;
  return q;
}

/// Discrete divergence M q at cell centres.
inline ScalarField divergence(const VelocityField& q) {
  const Grid& g = q.grid();
  const int n = g.n();
  const double inv_h = 1.0 / g.h();
  ScalarField div(g);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      div(i, j) = (q.u(i, j) - q.u(i - 1, j) + q.v(i, j) - q.v(i, j - 1)) * inv_h;
  return div;
}

/// Transpose of the divergence stencil, M^T phi (= minus the discrete gradient).
inline VelocityField divergence_transpose(const ScalarField& phi) {
  const Grid& g = phi.grid;
  const int n = g.n();
  const double inv_h = 1.0 / g.h();
  VelocityField q(g);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      q.u(i, j) = (phi(i, j) - phi(i + 1, j)) * inv_h;
      q.v(i, j) = (phi(i, j) - phi(i, j + 1)) * inv_h;
    }
  return q;
}

/// Symbol of L = M M^T for wavenumber pair (kx, ky): the 5-point Laplacian eigenvalue.
inline double poisson_symbol(const Grid& g, int kx, int ky) {
  const double h = g.h();
  const double theta = 2.0 * std::numbers::pi / g.n();
  return (4.0 - 2.0 * std::cos(theta * kx) - 2.0 * std::cos(theta * ky)) / (h * h);
}

/// Solves L phi = rhs spectrally with the zero-mean gauge.
inline ScalarField solve_poisson(const ScalarField& rhs) {
  const Grid& g = rhs.grid;
  const int n = g.n();
  detail::FftHandle fft(n);
  const int nc = fft->half_cols();
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n) * nc);
  fft->forward(rhs.values, spec);
  const double norm = 1.0 / static_cast<double>(g.cells());
  for (int ky = 0; ky < n; ++ky)
    for (int kx = 0; kx < nc; ++kx) {
      auto& c = spec[static_cast<std::size_t>(ky) * nc + kx];
      if (kx == 0 && ky == 0) {
        c = 0.0;
        continue;
      }
      c *= norm / poisson_symbol(g, kx, ky);
    }
  ScalarField phi(g);
  fft->inverse(spec, phi.values);
  return phi;
}

/// Discrete Leray projection (I - M^T L^+ M) q.
inline VelocityField project(const VelocityField& q) {
  const ScalarField phi = solve_poisson(divergence(q));
  VelocityField out = q;
  out.axpy(-1.0, divergence_transpose(phi));
  return out;
}

/// Kinetic energy ||q||^2 / (2 h^2).
inline double kinetic_energy(const VelocityField& q) {
  const double h = q.grid().h();
  return dot(q.data(), q.data()) / (2.0 * h * h);
}

/// Face-averaging filter: each coarse face value is the mean of the `factor`
/// fine face values lying on it. Maps divergence-free fields to divergence-free fields.
inline VelocityField face_average(const VelocityField& fine, int factor) {
  const int nf = fine.n();
  if (factor < 2 || nf % factor != 0)
    throw ConfigError("face_average: factor " + std::to_string(factor) + " must be >= 2 and divide n=" +
                      std::to_string(nf));
  const Grid coarse_grid(nf / factor);
  const int nc = coarse_grid.n();
  VelocityField coarse(coarse_grid);
  const double inv = 1.0 / factor;
  for (int jc = 0; jc < nc; ++jc)
    for (int ic = 0; ic < nc; ++ic) {
      double su = 0.0;
      double sv = 0.0;
      for (int s = 0; s < factor; ++s) {
        su += fine.u((ic + 1) * factor - 1, jc * factor + s);
        sv += fine.v(ic * factor + s, (jc + 1) * factor - 1);
      }
      coarse.u(ic, jc) = su * inv;
      coarse.v(ic, jc) = sv * inv;
    }
  return coarse;
}

/// Max-norm of the discrete divergence.
inline double max_divergence(const VelocityField& q) {
  const ScalarField d = divergence(q);
  double m = 0.0;
  for (double x : d.values) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace ecsi
