#pragma once

// Projections and proximal maps for the nonsmooth terms of the blind
// deconvolution objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/grid.hpp"

namespace petbd {

/// Pixelwise max(u, 0).
inline Image project_nonneg(const Image &u) {
  Image out(u.side());
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = std::max(u[k], 0.0);
  return out;
}

/// Euclidean projection onto {w >= 0, sum w = 1} by sort and threshold.
inline std::vector<double> project_simplex(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("project_simplex: empty vector");
  std::vector<double> sorted(v.begin(), v.end());
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - t > 0.0) theta = t;
  }
  std::vector<double> w(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) w[k] = std::max(v[k] - theta, 0.0);
  // Restore the unit sum lost to rounding; the largest entry absorbs it.
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  auto top = std::max_element(w.begin(), w.end());
  *top += 1.0 - s;
  return w;
}

/// Prox of t*||.||_{2,1} + indicator{p = 0 on omega}: zero on omega, group
/// soft-threshold elsewhere.
inline GradientField prox_tv_region(const GradientField &p, double t, const RegionMask &omega) {
  if (!(t >= 0.0)) throw InvalidArgument("prox_tv_region: threshold must be non-negative");
  detail::require_same_grid(p.side(), omega.side(), "prox_tv_region");
  GradientField out(p.side());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (omega[k]) continue;
    const double mag = std::hypot(p.gx[k], p.gy[k]);
    if (mag <= t || mag == 0.0) continue;
    const double shrink = 1.0 - t / mag;
    out.gx[k] = shrink * p.gx[k];
    out.gy[k] = shrink * p.gy[k];
  }
  return out;
}

/// Conjugate prox of z -> 1/2 ||y - z||^2 with step sigma_step.
inline Image prox_dual_fidelity(const Image &q, double sigma_step, const Image &y) {
  if (!(sigma_step > 0.0)) throw InvalidArgument("prox_dual_fidelity: step must be positive");
  detail::require_same_grid(q.side(), y.side(), "prox_dual_fidelity");
  Image out(q.side());
  const double inv = 1.0 / (1.0 + sigma_step);
  for (std::size_t k = 0; k < q.size(); ++k) out[k] = (q[k] - sigma_step * y[k]) * inv;
  return out;
}

/// argmin_u  i_{u>=0}(u) + |u - anchor|^2/(2 lambda) + |u - v|^2/(2 tau).
inline Image prox_primal_x(const Image &v, double tau, const Image &x_anchor, double lambda_x) {
  if (!(tau > 0.0) || !(lambda_x > 0.0)) {
    throw InvalidArgument("prox_primal_x: tau and lambda_x must be positive");
  }
  detail::require_same_grid(v.side(), x_anchor.side(), "prox_primal_x");
  const double wv = lambda_x / (lambda_x + tau);
  const double wa = tau / (lambda_x + tau);
  Image out(v.side());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(wv * v[k] + wa * x_anchor[k], 0.0);
  return out;
}

/// Pixels tied together by a zero-gradient constraint on omega. A pixel in
/// omega is joined with its right and lower neighbours (the two forward
/// differences it owns).
class RegionComponents {
public:
  RegionComponents() = default;

  explicit RegionComponents(const RegionMask &omega) : n_(omega.side()) {
    const std::size_t N = omega.size();
    std::vector<std::size_t> parent(N);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
      while (parent[a] != a) {
        parent[a] = parent[parent[a]];
        a = parent[a];
      }
      return a;
    };
    auto unite = [&](std::size_t a, std::size_t b) {
      a = find(a);
      b = find(b);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    };
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t k = i * n_ + j;
        if (!omega[k]) continue;
        if (j + 1 < n_) unite(k, k + 1);
        if (i + 1 < n_) unite(k, k + n_);
      }
    }
    std::vector<long> label(N, -1);
    std::vector<std::size_t> size_of_root(N, 0);
    for (std::size_t k = 0; k < N; ++k) ++size_of_root[find(k)];
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t r = find(k);
      if (size_of_root[r] < 2) continue;
      if (label[r] < 0) {
        label[r] = static_cast<long>(groups_.size());
        groups_.emplace_back();
      }
      groups_[static_cast<std::size_t>(label[r])].push_back(k);
    }
  }

  std::size_t side() const noexcept { return n_; }
  /// Groups of two or more pixels that must share one value.
  const std::vector<std::vector<std::size_t>> &groups() const noexcept { return groups_; }

private:
  std::size_t n_ = 0;
  std::vector<std::vector<std::size_t>> groups_;
};

/// Euclidean projection onto {u : gradient(u) = 0 on omega, u >= 0}: each tied
/// group is replaced by its clamped mean, other pixels are clamped.
inline Image project_region_constant(const Image &u, const RegionComponents &components) {
  detail::require_same_grid(u.side(), components.side(), "project_region_constant");
  Image out = project_nonneg(u);
  for (const auto &g : components.groups()) {
    double s = 0.0;
    for (std::size_t k : g) s += u[k];
    const double mean = std::max(s / static_cast<double>(g.size()), 0.0);
    for (std::size_t k : g) out[k] = mean;
  }
  return out;
}

inline Image project_region_constant(const Image &u, const RegionMask &omega) {
  return project_region_constant(u, RegionComponents(omega));
}

} // namespace petbd
