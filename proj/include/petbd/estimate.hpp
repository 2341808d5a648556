#pragma once

// Noise level, residual bound and the regularization-weight schedule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/grid.hpp"

namespace petbd {

/// Median absolute deviation of the diagonal Haar detail band, scaled to a
/// Gaussian standard deviation.
inline double estimate_sigma(const Image &y) {
  const std::size_t n = y.side();
  if (n < 2 || n % 2 != 0) {
    throw InvalidArgument("estimate_sigma: grid side must be even and at least 2");
  }
  std::vector<double> detail;
  detail.reserve(n * n / 4);
  for (std::size_t i = 0; i < n; i += 2) {
    for (std::size_t j = 0; j < n; j += 2) {
      const double hh = 0.5 * (y(i, j) - y(i, j + 1) - y(i + 1, j) + y(i + 1, j + 1));
      detail.push_back(std::abs(hh));
    }
  }
  const std::size_t m = detail.size();
  auto mid = detail.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(detail.begin(), mid, detail.end());
  double median = *mid;
  if (m % 2 == 0) {
    const double lower = *std::max_element(detail.begin(), mid);
    median = 0.5 * (median + lower);
  }
  return median / 0.6745;
}

/// sigma * sqrt(N + c sqrt(N)); ||noise||_2 stays below it with high probability.
inline double epsilon_bound(double sigma, std::size_t N, double c) {
  const double n = static_cast<double>(N);
  return sigma * std::sqrt(n + c * std::sqrt(n));
}

/// Universal-threshold starting weight sigma * sqrt(2 ln N).
inline double rho_init(double sigma, std::size_t N) {
  return sigma * std::sqrt(2.0 * std::log(static_cast<double>(N)));
}

/// State of the multiplicative residual-balancing rule for rho.
struct RhoSchedule {
  double rho = 1.0;
  double gamma = 1.05;
  double epsilon = 0.0;
  double min_rho = 1e-8;
  double max_rho = 1e3;

  /// Builds a schedule with rho clamped into [min_rho, max_rho].
  static RhoSchedule make(double rho, double gamma, double epsilon, double min_rho,
                          double max_rho) {
    if (!(gamma > 1.0)) throw InvalidArgument("RhoSchedule: gamma must exceed 1");
    if (!(epsilon >= 0.0)) throw InvalidArgument("RhoSchedule: epsilon must be non-negative");
    if (!(min_rho > 0.0) || !(max_rho >= min_rho)) {
      throw InvalidArgument("RhoSchedule: need 0 < min_rho <= max_rho");
    }
    return RhoSchedule{std::clamp(rho, min_rho, max_rho), gamma, epsilon, min_rho, max_rho};
  }
};

/// Residual above epsilon loosens the regularization, below tightens it.
inline RhoSchedule rho_update(const RhoSchedule &s, double residual_norm) {
  RhoSchedule next = s;
  if (residual_norm > s.epsilon) {
    next.rho = s.rho / s.gamma;
  } else if (residual_norm < s.epsilon) {
    next.rho = s.rho * s.gamma;
  }
  next.rho = std::clamp(next.rho, s.min_rho, s.max_rho);
  return next;
}

} // namespace petbd
