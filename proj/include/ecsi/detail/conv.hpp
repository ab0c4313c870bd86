#pragma once

// Periodic 2D convolution kernels on channel-major planes (c, y, x), x fastest.
// Inputs are pre-padded by p = k/2 cells with periodic wrap so the inner loops
// run over contiguous rows.

#include <cmath>
#include <cstddef>
#include <numbers>

namespace ecsi::detail {

struct PlaneDims {
  int ny = 0;
  int nx = 0;
  int pad = 0;

  std::size_t plane() const { return static_cast<std::size_t>(ny) * nx; }
  int py() const { return ny + 2 * pad; }
  int px() const { return nx + 2 * pad; }
  std::size_t padded_plane() const { return static_cast<std::size_t>(py()) * px(); }
};

inline int wrap_index(int i, int n) { return ((i % n) + n) % n; }

inline void pad_periodic(const double* in, int channels, const PlaneDims& d, double* out) {
  for (int c = 0; c < channels; ++c) {
    const double* src = in + c * d.plane();
    double* dst = out + c * d.padded_plane();
    for (int yy = 0; yy < d.py(); ++yy) {
      const int y = wrap_index(yy - d.pad, d.ny);
      for (int xx = 0; xx < d.px(); ++xx) dst[yy * d.px() + xx] = src[y * d.nx + wrap_index(xx - d.pad, d.nx)];
    }
  }
}

/// Adds a padded gradient back onto the periodic plane it was padded from.
inline void fold_periodic_add(const double* padded, int channels, const PlaneDims& d, double* out) {
  for (int c = 0; c < channels; ++c) {
    const double* src = padded + c * d.padded_plane();
    double* dst = out + c * d.plane();
    for (int yy = 0; yy < d.py(); ++yy) {
      const int y = wrap_index(yy - d.pad, d.ny);
      for (int xx = 0; xx < d.px(); ++xx) dst[y * d.nx + wrap_index(xx - d.pad, d.nx)] += src[yy * d.px() + xx];
    }
  }
}

/// out[o] += sum_i w[o,i] * in_pad[i] (k x k stencil); w is [cout][cin][k][k].
inline void conv_forward(const double* in_pad, int cin, const double* w, int cout, int k, const PlaneDims& d,
                         double* out) {
  for (int o = 0; o < cout; ++o) {
    double* dst_plane = out + o * d.plane();
    for (int i = 0; i < cin; ++i) {
      const double* src_plane = in_pad + i * d.padded_plane();
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const double wv = w[((static_cast<std::size_t>(o) * cin + i) * k + dy) * k + dx];
          for (int y = 0; y < d.ny; ++y) {
            const double* src = src_plane + (y + dy) * d.px() + dx;
            double* dst = dst_plane + y * d.nx;
            for (int x = 0; x < d.nx; ++x) dst[x] += wv * src[x];
          }
        }
    }
  }
}

/// Accumulates weight gradients and (optionally) padded-input gradients of conv_forward.
inline void conv_backward(const double* in_pad, int cin, const double* w, int cout, int k, const PlaneDims& d,
                          const double* gout, double* gw, double* gin_pad) {
  for (int o = 0; o < cout; ++o) {
    const double* g_plane = gout + o * d.plane();
    for (int i = 0; i < cin; ++i) {
      const double* src_plane = in_pad + i * d.padded_plane();
      double* gin_plane = gin_pad ? gin_pad + i * d.padded_plane() : nullptr;
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const std::size_t widx = ((static_cast<std::size_t>(o) * cin + i) * k + dy) * k + dx;
          const double wv = w[widx];
          double acc = 0.0;
          for (int y = 0; y < d.ny; ++y) {
            const double* src = src_plane + (y + dy) * d.px() + dx;
            const double* g = g_plane + y * d.nx;
            for (int x = 0; x < d.nx; ++x) acc += g[x] * src[x];
            if (gin_plane) {
              double* gi = gin_plane + (y + dy) * d.px() + dx;
              for (int x = 0; x < d.nx; ++x) gi[x] += wv * g[x];
            }
          }
          gw[widx] += acc;
        }
    }
  }
}

/// Exact GELU x * Phi(x).
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

}  // namespace ecsi::detail
