#pragma once

// Thin FFTW wrapper for square periodic grids. Plans are created once per grid
// size with FFTW_ESTIMATE and executed on fftw_malloc'd scratch buffers, so the
// same input always takes the same codelet path (bitwise reproducible output).

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>

namespace ecsi::detail {

class SquareFft {
 public:
  explicit SquareFft(int n) : n_(n), nc_(n / 2 + 1) {
    const auto nn = static_cast<std::size_t>(n) * n;
    real_ = fftw_alloc_real(nn);
    half_ = fftw_alloc_complex(static_cast<std::size_t>(n) * nc_);
    full_in_ = fftw_alloc_complex(nn);
    full_out_ = fftw_alloc_complex(nn);
    r2c_ = fftw_plan_dft_r2c_2d(n, n, real_, half_, FFTW_ESTIMATE);
    c2r_ = fftw_plan_dft_c2r_2d(n, n, half_, real_, FFTW_ESTIMATE);
    c2c_ = fftw_plan_dft_2d(n, n, full_in_, full_out_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  SquareFft(const SquareFft&) = delete;
  SquareFft& operator=(const SquareFft&) = delete;
  ~SquareFft() {
    fftw_destroy_plan(r2c_);
    fftw_destroy_plan(c2r_);
    fftw_destroy_plan(c2c_);
    fftw_free(real_);
    fftw_free(half_);
    fftw_free(full_in_);
    fftw_free(full_out_);
  }

  int n() const { return n_; }
  /// Number of stored x-wavenumbers in the half spectrum (n/2 + 1).
  int half_cols() const { return nc_; }

  /// Unnormalized forward transform of a row-major n*n array (index j*n + i).
  /// The half spectrum is indexed [ky * (n/2+1) + kx].
  void forward(std::span<const double> in, std::span<std::complex<double>> out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(r2c_);
    auto* h = reinterpret_cast<std::complex<double>*>(half_);
    std::copy(h, h + out.size(), out.begin());
  }

  /// Unnormalized inverse of `forward` (result is n*n times the original).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) {
    auto* h = reinterpret_cast<std::complex<double>*>(half_);
    std::copy(in.begin(), in.end(), h);
    fftw_execute(c2r_);
    std::copy(real_, real_ + out.size(), out.begin());
  }

  /// Full complex forward transform of a real row-major array.
  void forward_full(std::span<const double> in, std::span<std::complex<double>> out) {
    auto* fin = reinterpret_cast<std::complex<double>*>(full_in_);
    for (std::size_t k = 0; k < in.size(); ++k) fin[k] = in[k];
    fftw_execute(c2c_);
    auto* fout = reinterpret_cast<std::complex<double>*>(full_out_);
    std::copy(fout, fout + out.size(), out.begin());
  }

 private:
  int n_;
  int nc_;
  double* real_;
  fftw_complex* half_;
  fftw_complex* full_in_;
  fftw_complex* full_out_;
  fftw_plan r2c_;
  fftw_plan c2r_;
  fftw_plan c2c_;
};

/// Locked handle to the cached transform for grid size n. The lock is recursive
/// and every transform copies in and out of scratch, so nested handles are safe.
class FftHandle {
 public:
  explicit FftHandle(int n) : lock_(mutex()) {
    auto& cache = plans();
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<SquareFft>(n)).first;
    fft_ = it->second.get();
  }
  SquareFft* operator->() { return fft_; }

 private:
  static std::recursive_mutex& mutex() {
    static std::recursive_mutex m;
    return m;
  }
  static std::map<int, std::unique_ptr<SquareFft>>& plans() {
    static std::map<int, std::unique_ptr<SquareFft>> cache;
    return cache;
  }

  std::lock_guard<std::recursive_mutex> lock_;
  SquareFft* fft_ = nullptr;
};

}  // namespace ecsi::detail
