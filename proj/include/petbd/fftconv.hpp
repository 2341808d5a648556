#pragma once

// Circular convolution on the square grid, evaluated in the Fourier domain
// with FFTW real-to-complex transforms.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/grid.hpp"

namespace petbd {

/// Blur kernel on the full image grid with its origin at pixel (0, 0);
/// negative offsets wrap to the opposite edge.
class Psf {
public:
  Psf() = default;
  explicit Psf(Image kernel) : kernel_(std::move(kernel)) {}

  /// Unit impulse at the origin.
  static Psf delta(std::size_t n) {
    Image k(n);
    k[0] = 1.0;
    return Psf(std::move(k));
  }

  std::size_t side() const noexcept { return kernel_.side(); }
  std::size_t size() const noexcept { return kernel_.size(); }
  const Image &image() const noexcept { return kernel_; }
  Image &image() noexcept { return kernel_; }
  double operator[](std::size_t k) const noexcept { return kernel_[k]; }
  double &operator[](std::size_t k) noexcept { return kernel_[k]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return kernel_(i, j); }

  /// Entries >= -tol and |sum - 1| <= tol.
  bool on_simplex(double tol) const {
    double s = 0.0;
    for (double v : kernel_) {
      if (v < -tol) return false;
      s += v;
    }
    return std::abs(s - 1.0) <= tol;
  }

  friend bool operator==(const Psf &, const Psf &) = default;

private:
  Image kernel_;
};

using Spectrum = std::vector<std::complex<double>>;

namespace detail {

// FFTW planning is not thread-safe; plans are created once per grid side
// under a lock and then executed through the new-array interface, which is.
class FftPlans {
public:
  struct Pair {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
  };

  static const Pair &get(std::size_t n) {
    static FftPlans cache;
    std::lock_guard lock(cache.mutex_);
    auto it = cache.plans_.find(n);
    if (it != cache.plans_.end()) return it->second;
    const int side = static_cast<int>(n);
    std::vector<double> real(n * n);
    Spectrum spec(n * (n / 2 + 1));
    Pair p;
    p.forward = fftw_plan_dft_r2c_2d(side, side, real.data(),
                                     reinterpret_cast<fftw_complex *>(spec.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.inverse = fftw_plan_dft_c2r_2d(side, side, reinterpret_cast<fftw_complex *>(spec.data()),
                                     real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    return cache.plans_.emplace(n, p).first->second;
  }

  FftPlans(const FftPlans &) = delete;
  FftPlans &operator=(const FftPlans &) = delete;

  ~FftPlans() {
    for (auto &[n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

private:
  FftPlans() = default;
  std::mutex mutex_;
  std::map<std::size_t, Pair> plans_;
};

} // namespace detail

/// Half-plane DFT of a real image, n x (n/2 + 1) bins, row-major.
inline Spectrum rfft2(const Image &u) {
  const std::size_t n = u.side();
  const auto &plan = detail::FftPlans::get(n);
  std::vector<double> in(u.begin(), u.end());
  Spectrum out(n * (n / 2 + 1));
  fftw_execute_dft_r2c(plan.forward, in.data(), reinterpret_cast<fftw_complex *>(out.data()));
  return out;
}

/// Inverse of rfft2, including the 1/N normalization.
inline Image irfft2(Spectrum spec, std::size_t n) {
  const auto &plan = detail::FftPlans::get(n);
  std::vector<double> out(n * n);
  fftw_execute_dft_c2r(plan.inverse, reinterpret_cast<fftw_complex *>(spec.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n * n);
  for (double &v : out) v *= scale;
  return Image(n, std::move(out));
}

/// The operator x -> h (*) x with its transfer function cached, for the
/// repeated applications inside the solvers.
class ConvolutionOperator {
public:
  explicit ConvolutionOperator(const Psf &h) : n_(h.side()), transfer_(rfft2(h.image())) {}
  explicit ConvolutionOperator(const Image &kernel) : n_(kernel.side()), transfer_(rfft2(kernel)) {}

  std::size_t side() const noexcept { return n_; }
  const Spectrum &transfer() const noexcept { return transfer_; }

  Image apply(const Image &x) const {
    detail::require_same_grid(n_, x.side(), "convolve");
    Spectrum s = rfft2(x);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= transfer_[k];
    return irfft2(std::move(s), n_);
  }

  /// Circular correlation with the kernel, the adjoint of apply().
  Image apply_adjoint(const Image &r) const {
    detail::require_same_grid(n_, r.side(), "adjoint_convolve");
    Spectrum s = rfft2(r);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= std::conj(transfer_[k]);
    return irfft2(std::move(s), n_);
  }

  /// max |H(f)|, the operator 2-norm.
  double norm() const {
    double m = 0.0;
    for (const auto &c : transfer_) m = std::max(m, std::abs(c));
    return m;
  }

private:
  std::size_t n_;
  Spectrum transfer_;
};

inline Image convolve(const Psf &h, const Image &x) {
  detail::require_same_grid(h.side(), x.side(), "convolve");
  return ConvolutionOperator(h).apply(x);
}

inline Image adjoint_convolve(const Psf &h, const Image &r) {
  detail::require_same_grid(h.side(), r.side(), "adjoint_convolve");
  return ConvolutionOperator(h).apply_adjoint(r);
}

/// Places a centre-origin s x s kernel (s odd) on an n x n grid with its
/// centre at (0, 0).
inline Psf embed_kernel(const std::vector<std::vector<double>> &small, std::size_t n) {
  const std::size_t s = small.size();
  if (s == 0 || s % 2 == 0) throw InvalidArgument("embed_kernel: kernel side must be odd");
  if (s > n) throw InvalidArgument("embed_kernel: kernel larger than grid");
  for (const auto &row : small) {
    if (row.size() != s) throw InvalidArgument("embed_kernel: kernel must be square");
  }
  const long half = static_cast<long>(s / 2);
  const long side = static_cast<long>(n);
  Image out(n);
  for (long a = 0; a < static_cast<long>(s); ++a) {
    for (long b = 0; b < static_cast<long>(s); ++b) {
      const long i = ((a - half) % side + side) % side;
      const long j = ((b - half) % side + side) % side;
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +=
          small[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
  }
  return Psf(std::move(out));
}

inline double spectral_norm(const Psf &h) { return ConvolutionOperator(h).norm(); }

/// Mask of the centred s x s window (wrapped around the origin).
inline RegionMask support_window(std::size_t n, std::size_t s) {
  if (s == 0 || s % 2 == 0) throw InvalidArgument("support_window: side must be odd");
  if (s > n) throw InvalidArgument("support_window: window larger than grid");
  RegionMask m(n);
  const std::size_t half = s / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t di = std::min(i, n - i);
      const std::size_t dj = std::min(j, n - j);
      if (di <= half && dj <= half) m.set(i, j, true);
    }
  }
  return m;
}

} // namespace petbd
