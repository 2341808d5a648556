#pragma once

// Image and PSF quality scores in dB.

#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>

#include "petbd/error.hpp"
#include "petbd/fftconv.hpp"
#include "petbd/grid.hpp"
#include "petbd/phantom.hpp"

namespace petbd {

/// Reported in place of +/-infinity when an error term vanishes.
inline constexpr double kMetricCapDb = 300.0;

namespace detail {

inline double capped_db(double numerator, double denominator, double factor) {
  if (denominator <= 0.0) return numerator <= 0.0 ? 0.0 : kMetricCapDb;
  if (numerator <= 0.0) return -kMetricCapDb;
  return std::clamp(factor * std::log10(numerator / denominator), -kMetricCapDb, kMetricCapDb);
}

inline double squared_distance(const Image &a, const Image &b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

} // namespace detail

/// 10 log10(var(b) / sigma_n^2).
inline double bsnr(const Image &b, double sigma_n) {
  return detail::capped_db(variance(b), sigma_n * sigma_n, 10.0);
}

/// 10 log10(||y - x||^2 / ||x_est - x||^2).
inline double isnr(const Image &x_true, const Image &y, const Image &x_est) {
  detail::require_same_grid(x_true.side(), y.side(), "isnr");
  detail::require_same_grid(x_true.side(), x_est.side(), "isnr");
  return detail::capped_db(detail::squared_distance(y, x_true),
                           detail::squared_distance(x_est, x_true), 10.0);
}

/// Circular shift (di, dj) of `moving` that maximizes its correlation with
/// `fixed`; ties resolve to the first shift in row-major order.
inline std::pair<long, long> best_alignment(const Image &fixed, const Image &moving) {
  detail::require_same_grid(fixed.side(), moving.side(), "best_alignment");
  const std::size_t n = fixed.side();
  Spectrum a = rfft2(fixed);
  const Spectrum b = rfft2(moving);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] *= std::conj(b[k]);
  const Image corr = irfft2(std::move(a), n);
  std::size_t best = 0;
  for (std::size_t k = 1; k < corr.size(); ++k) {
    if (corr[k] > corr[best]) best = k;
  }
  return {static_cast<long>(best / n), static_cast<long>(best % n)};
}

/// 20 log10(||h_true|| / ||h_est - h_true||), optionally after shifting h_est
/// onto h_true.
inline double rsnr(const Psf &h_true, const Psf &h_est, bool align) {
  detail::require_same_grid(h_true.side(), h_est.side(), "rsnr");
  Image est = h_est.image();
  if (align) {
    const auto [di, dj] = best_alignment(h_true.image(), est);
    est = circshift(est, di, dj);
  }
  return detail::capped_db(std::sqrt(squared_norm(h_true.image().values())),
                           std::sqrt(detail::squared_distance(est, h_true.image())), 20.0);
}

} // namespace petbd
