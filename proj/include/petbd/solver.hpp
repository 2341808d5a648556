#pragma once

// Blind deconvolution by proximal alternating minimization over (x, h):
//
//   L(x, h) = rho TV(x) + 1/2 ||y - h (*) x||^2
//             + i{x >= 0} + i{grad x = 0 on omega} + i{h in simplex}
//
// Each outer pass solves an x-subproblem with a primal-dual iteration and an
// h-subproblem with ADMM, both anchored to the previous iterate by a
// quadratic proximal term. A non-blind pass reuses the
// x machinery with h fixed, no region constraint and no anchor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/estimate.hpp"
#include "petbd/fftconv.hpp"
#include "petbd/grid.hpp"
#include "petbd/prox.hpp"

namespace petbd {

struct BdConfig {
  std::size_t max_outer = 100;
  std::size_t inner_x_iters = 150;
  std::size_t inner_h_iters = 100;
  double lambda_x = 1.0;
  double lambda_h = 1.0;
  /// Stop once the relative objective decrease over one outer pass drops below this.
  double objective_tol = 1e-6;
  /// ADMM penalty of the h-step, relative to the median of |X(f)|^2.
  double h_penalty_scale = 0.3;
  /// Inner loops stop early when the relative iterate change drops below this.
  double inner_tol = 1e-7;
  /// Odd side of a centred support window for h; unset means full grid.
  std::optional<std::size_t> psf_support;

  double rho_gamma = 1.05;
  double epsilon_c = 2.0 * std::numbers::sqrt2;
  double min_rho = 1e-8;
  double max_rho = 1e3;
  /// Overrides the sigma * sqrt(2 ln N) starting weight.
  std::optional<double> rho_initial;
  /// Overrides the median-based noise estimate.
  std::optional<double> sigma;

  std::uint64_t seed = 0;
  bool deterministic = false;

  void validate() const {
    if (max_outer < 1 || inner_x_iters < 1 || inner_h_iters < 1) {
      throw InvalidArgument("BdConfig: iteration counts must be at least 1");
    }
    if (!(lambda_x > 0.0) || !(lambda_h > 0.0)) {
      throw InvalidArgument("BdConfig: lambda_x and lambda_h must be positive");
    }
    if (!(h_penalty_scale > 0.0)) {
      throw InvalidArgument("BdConfig: h_penalty_scale must be positive");
    }
    if (!(objective_tol >= 0.0) || !(inner_tol >= 0.0)) {
      throw InvalidArgument("BdConfig: tolerances must be non-negative");
    }
    if (psf_support && (*psf_support == 0 || *psf_support % 2 == 0)) {
      throw InvalidArgument("BdConfig: psf_support must be odd");
    }
    if (!(rho_gamma > 1.0)) throw InvalidArgument("BdConfig: rho_gamma must exceed 1");
    if (!(min_rho > 0.0) || !(max_rho >= min_rho)) {
      throw InvalidArgument("BdConfig: need 0 < min_rho <= max_rho");
    }
    if (rho_initial && !(*rho_initial >= 0.0)) {
      throw InvalidArgument("BdConfig: rho_initial must be non-negative");
    }
    if (sigma && !(*sigma >= 0.0)) throw InvalidArgument("BdConfig: sigma must be non-negative");
  }
};

struct Feasibility {
  bool x_nonneg = false;
  bool grad_zero_on_omega = false;
  bool h_on_simplex = false;
};

struct ObjectiveValue {
  double value = 0.0; ///< rho TV(x) + 1/2 ||y - h (*) x||^2
  double tv = 0.0;
  double residual_norm = 0.0;
  Feasibility flags;
};

struct TraceRow {
  std::size_t iteration = 0;
  double rho = 0.0;
  double objective_start = 0.0;   ///< L(x_k, h_k) at this pass's rho
  double objective_after_x = 0.0; ///< L(x_{k+1}, h_k)
  double objective = 0.0;         ///< L(x_{k+1}, h_{k+1})
  double residual_norm = 0.0;
  double tv = 0.0;
  double photometry = 0.0; ///< sum(x) / sum(y)
  Feasibility flags;
};

struct SolveTrace {
  std::vector<TraceRow> rows;
  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  const TraceRow &back() const { return rows.back(); }
};

struct BdResult {
  Image x_b;
  Psf h_b;
  SolveTrace trace;
  double rho = 0.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  bool converged = false;
};

struct NbdResult {
  Image x;
  SolveTrace trace;
  double rho = 0.0;
  double sigma = 0.0;
};

namespace detail {

inline constexpr double kFeasibilityTol = 1e-9;

inline void require_finite(const Image &u, const char *what) {
  if (!u.all_finite()) throw NumericFailure(std::string(what) + ": non-finite value in iterate");
}

inline double finite_objective(double v) {
  if (!std::isfinite(v)) throw NumericFailure("objective is not finite");
  return v;
}

inline double relative_change(const Image &a, const Image &b) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += b[k] * b[k];
  }
  return std::sqrt(num / std::max(den, std::numeric_limits<double>::min()));
}

inline ObjectiveValue evaluate(const Image &x, const Image &hx, const Psf &h, const Image &y,
                               double rho, const RegionMask &omega) {
  ObjectiveValue out;
  out.tv = total_variation(x);
  double r2 = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) r2 += (y[k] - hx[k]) * (y[k] - hx[k]);
  out.residual_norm = std::sqrt(r2);
  out.value = rho * out.tv + 0.5 * r2;
  out.flags.x_nonneg = std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0; });
  out.flags.grad_zero_on_omega = masked_gradient_max(x, omega) <= kFeasibilityTol;
  out.flags.h_on_simplex = h.on_simplex(kFeasibilityTol);
  return out;
}

inline void require_simplex(const Psf &h, const char *what) {
  double s = 0.0;
  for (double v : h.image()) s += v;
  if (std::abs(s - 1.0) > 1e-6) {
    throw InvalidArgument(std::string(what) + ": PSF must sum to 1");
  }
}

/// Dual variables of the x-subproblem, kept between outer passes.
struct XStepState {
  GradientField p;
  Image q;
  bool ready = false;

  void reset(std::size_t n) {
    p = GradientField(n);
    q = Image(n);
    ready = true;
  }
};

struct XProblem {
  const Image &y;
  const ConvolutionOperator &blur;
  double rho;
  const RegionMask &omega;
  const RegionComponents &components;
  /// Proximal anchor and its weight; no anchor when unset.
  const Image *anchor = nullptr;
  double lambda = std::numeric_limits<double>::infinity();
};

inline double x_subproblem_value(const XProblem &pb, const Image &x) {
  const Image hx = pb.blur.apply(x);
  double r2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) r2 += (pb.y[k] - hx[k]) * (pb.y[k] - hx[k]);
  double v = pb.rho * total_variation(x) + 0.5 * r2;
  if (pb.anchor) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d2 += ((*pb.anchor)[k] - x[k]) * ((*pb.anchor)[k] - x[k]);
    v += d2 / (2.0 * pb.lambda);
  }
  return v;
}

/// Primal-dual iteration with K = (grad, H): dual prox for the TV/region term
/// through the Moreau identity, dual prox of the quadratic fidelity, and an
/// exact primal prox onto {x >= 0, constant on the tied groups}.
inline Image primal_dual_x(const XProblem &pb, Image x, std::size_t iters, double inner_tol,
                           XStepState &state) {
  const std::size_t n = x.side();
  if (!state.ready || state.p.side() != n) state.reset(n);
  const double op_norm2 = 8.0 + pb.blur.norm() * pb.blur.norm();
  double tau = 0.99 / std::sqrt(op_norm2);
  double sigma = 0.99 / std::sqrt(op_norm2);
  // Strong convexity of the anchor term allows the accelerated step rule.
  const double mu = pb.anchor ? 1.0 / pb.lambda : 0.0;

  Image x_bar = x;
  for (std::size_t it = 0; it < iters; ++it) {
    // Dual ascent on the gradient block.
    GradientField g = gradient(x_bar);
    GradientField v(n);
    for (std::size_t k = 0; k < v.size(); ++k) {
      v.gx[k] = state.p.gx[k] + sigma * g.gx[k];
      v.gy[k] = state.p.gy[k] + sigma * g.gy[k];
    }
    GradientField scaled(n);
    for (std::size_t k = 0; k < v.size(); ++k) {
      scaled.gx[k] = v.gx[k] / sigma;
      scaled.gy[k] = v.gy[k] / sigma;
    }
    const GradientField shrunk = prox_tv_region(scaled, pb.rho / sigma, pb.omega);
    for (std::size_t k = 0; k < v.size(); ++k) {
      state.p.gx[k] = v.gx[k] - sigma * shrunk.gx[k];
      state.p.gy[k] = v.gy[k] - sigma * shrunk.gy[k];
    }

    // Dual ascent on the blur block.
    Image hx = pb.blur.apply(x_bar);
    for (std::size_t k = 0; k < hx.size(); ++k) hx[k] = state.q[k] + sigma * hx[k];
    state.q = prox_dual_fidelity(hx, sigma, pb.y);

    // Primal descent: K^T (p, q) = -div p + H^T q.
    const Image div = divergence(state.p);
    const Image htq = pb.blur.apply_adjoint(state.q);
    Image w(n);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = x[k] - tau * (htq[k] - div[k]);
    if (pb.anchor) {
      const double a = pb.lambda / (pb.lambda + tau);
      const double b = tau / (pb.lambda + tau);
      for (std::size_t k = 0; k < w.size(); ++k) w[k] = a * w[k] + b * (*pb.anchor)[k];
    }
    Image x_next = project_region_constant(w, pb.components);

    double theta = 1.0;
    if (mu > 0.0) {
      theta = 1.0 / std::sqrt(1.0 + 2.0 * mu * tau);
      tau *= theta;
      sigma /= theta;
    }
    const double change = relative_change(x_next, x);
    for (std::size_t k = 0; k < x.size(); ++k) x_bar[k] = x_next[k] + theta * (x_next[k] - x[k]);
    x = std::move(x_next);
    if (change < inner_tol) break;
  }
  require_finite(x, "x-step");
  return x;
}

/// Anchored x-update of one outer pass; never returns a point worse than the
/// (feasible) previous iterate on the subproblem objective.
inline Image x_step(const XProblem &pb, const Image &x_prev, std::size_t iters, double inner_tol,
                    XStepState &state) {
  Image x = primal_dual_x(pb, x_prev, iters, inner_tol, state);
  const bool prev_feasible =
      std::all_of(x_prev.begin(), x_prev.end(), [](double v) { return v >= 0.0; }) &&
      masked_gradient_max(x_prev, pb.omega) == 0.0;
  if (prev_feasible && x_subproblem_value(pb, x_prev) < x_subproblem_value(pb, x)) return x_prev;
  return x;
}

inline std::vector<double> project_psf(std::span<const double> v, const RegionMask *support) {
  if (!support) return project_simplex(v);
  std::vector<double> inside;
  inside.reserve(support->count());
  for (std::size_t k = 0; k < v.size(); ++k) {
    if ((*support)[k]) inside.push_back(v[k]);
  }
  const std::vector<double> proj = project_simplex(inside);
  std::vector<double> out(v.size(), 0.0);
  std::size_t m = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if ((*support)[k]) out[k] = proj[m++];
  }
  return out;
}

inline double h_subproblem_value(const ConvolutionOperator &by_x, const Image &y, const Image &h,
                                 const Image &h_prev, double lambda_h) {
  const Image xh = by_x.apply(h);
  double r2 = 0.0;
  double d2 = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    r2 += (y[k] - xh[k]) * (y[k] - xh[k]);
    d2 += (h[k] - h_prev[k]) * (h[k] - h_prev[k]);
  }
  return 0.5 * r2 + d2 / (2.0 * lambda_h);
}

/// ADMM on  1/2 ||y - x (*) h||^2 + |h - h_prev|^2/(2 lambda_h) + i_S(g),  h = g,
/// with S the simplex (optionally restricted to a support window). The
/// quadratic block is diagonal in the Fourier domain and solved exactly; the
/// constraint block is a projection. The penalty is scaled to the median of
/// |X(f)|^2 so the split is balanced whatever the image intensity.
/// Unscaled ADMM multiplier of the h-step, kept between outer passes.
struct HStepState {
  Image multiplier;
  bool ready = false;
};

inline Psf h_step(const Image &y, const Image &x, const Psf &h_prev, double lambda_h,
                  double penalty_scale, std::size_t iters, double inner_tol,
                  const RegionMask *support, HStepState &state) {
  if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) {
    throw DegenerateInput("h-step: image estimate is identically zero");
  }
  const std::size_t n = x.side();
  const ConvolutionOperator by_x(x);
  const Spectrum &t = by_x.transfer();

  std::vector<double> power(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) power[k] = std::norm(t[k]);
  std::vector<double> sorted = power;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                   sorted.end());
  double beta = penalty_scale * sorted[sorted.size() / 2];
  if (!(beta > 0.0)) beta = penalty_scale * std::max(squared_norm(x.values()), 1.0);

  const Spectrum y_hat = rfft2(y);
  const Spectrum prev_hat = rfft2(h_prev.image());
  Spectrum fixed(t.size());
  std::vector<double> denom(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    fixed[k] = std::conj(t[k]) * y_hat[k] + prev_hat[k] / lambda_h;
    denom[k] = power[k] + 1.0 / lambda_h + beta;
  }

  Image g = h_prev.image();
  Image u(n);
  if (state.ready && state.multiplier.side() == n) u = (1.0 / beta) * state.multiplier;
  for (std::size_t it = 0; it < iters; ++it) {
    Spectrum rhs = rfft2(g - u);
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = (fixed[k] + beta * rhs[k]) / denom[k];
    const Image h = irfft2(std::move(rhs), n);
    const Image shifted = h + u;
    require_finite(shifted, "h-step");
    Image g_next(n, project_psf(shifted.values(), support));
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += h[k] - g_next[k];
    // Primal (split) and dual residuals both small.
    const double change = std::max(relative_change(g_next, g), relative_change(h, g_next));
    g = std::move(g_next);
    if (change < inner_tol) break;
  }
  require_finite(g, "h-step");
  state.multiplier = beta * u;
  state.ready = true;
  const bool prev_feasible = h_prev.on_simplex(kFeasibilityTol) &&
                             (!support || [&] {
                               for (std::size_t k = 0; k < h_prev.size(); ++k) {
                                 if (!(*support)[k] && h_prev[k] != 0.0) return false;
                               }
                               return true;
                             }());
  if (prev_feasible && h_subproblem_value(by_x, y, h_prev.image(), h_prev.image(), lambda_h) <
                           h_subproblem_value(by_x, y, g, h_prev.image(), lambda_h)) {
    return h_prev;
  }
  return Psf(std::move(g));
}

struct NoiseModel {
  double sigma = 0.0;
  double epsilon = 0.0;
  double rho0 = 0.0;
};

inline NoiseModel noise_model(const Image &y, const BdConfig &cfg) {
  NoiseModel m;
  m.sigma = cfg.sigma ? *cfg.sigma : estimate_sigma(y);
  m.epsilon = epsilon_bound(m.sigma, y.size(), cfg.epsilon_c);
  m.rho0 = cfg.rho_initial ? *cfg.rho_initial : rho_init(m.sigma, y.size());
  return m;
}

} // namespace detail

/// Finite part of the objective together with the three feasibility flags.
inline ObjectiveValue objective(const Image &x, const Psf &h, const Image &y, double rho,
                                const RegionMask &omega) {
  detail::require_same_grid(x.side(), h.side(), "objective");
  detail::require_same_grid(x.side(), y.side(), "objective");
  detail::require_same_grid(x.side(), omega.side(), "objective");
  return detail::evaluate(x, convolve(h, x), h, y, rho, omega);
}

/// One anchored x-update with h held fixed, from fresh dual variables.
inline Image solve_x_step(const Image &y, const Psf &h, const Image &x_prev, double rho,
                          const RegionMask &omega, const BdConfig &cfg) {
  cfg.validate();
  detail::require_same_grid(y.side(), h.side(), "solve_x_step");
  detail::require_same_grid(y.side(), x_prev.side(), "solve_x_step");
  detail::require_same_grid(y.side(), omega.side(), "solve_x_step");
  detail::require_simplex(h, "solve_x_step");
  if (!(rho >= 0.0)) throw InvalidArgument("solve_x_step: rho must be non-negative");
  const ConvolutionOperator blur(h);
  const RegionComponents components(omega);
  detail::XProblem pb{y, blur, rho, omega, components, &x_prev, cfg.lambda_x};
  detail::XStepState state;
  return detail::x_step(pb, x_prev, cfg.inner_x_iters, cfg.inner_tol, state);
}

/// One anchored h-update over the simplex with x held fixed.
inline Psf solve_h_step(const Image &y, const Image &x, const Psf &h_prev, const BdConfig &cfg) {
  cfg.validate();
  detail::require_same_grid(y.side(), x.side(), "solve_h_step");
  detail::require_same_grid(y.side(), h_prev.side(), "solve_h_step");
  std::optional<RegionMask> support;
  if (cfg.psf_support) support = support_window(y.side(), *cfg.psf_support);
  detail::HStepState state;
  return detail::h_step(y, x, h_prev, cfg.lambda_h, cfg.h_penalty_scale, cfg.inner_h_iters,
                        cfg.inner_tol, support ? &*support : nullptr, state);
}

/// Joint estimate of image and PSF from a single observation.
inline BdResult blind_deconvolve(const Image &y, const RegionMask &omega, const BdConfig &cfg) {
  cfg.validate();
  detail::require_same_grid(y.side(), omega.side(), "blind_deconvolve");
  detail::require_finite(y, "blind_deconvolve input");
  const std::size_t n = y.side();
  const detail::NoiseModel noise = detail::noise_model(y, cfg);
  RhoSchedule schedule =
      RhoSchedule::make(noise.rho0, cfg.rho_gamma, noise.epsilon, cfg.min_rho, cfg.max_rho);

  std::optional<RegionMask> support;
  if (cfg.psf_support) support = support_window(n, *cfg.psf_support);
  const RegionMask *support_ptr = support ? &*support : nullptr;

  const RegionComponents components(omega);
  // Start from the feasible point closest to the data and an identity blur.
  Image x = project_region_constant(y, components);
  Psf h = Psf::delta(n);
  const double sum_y = sum(y);

  BdResult result;
  result.sigma = noise.sigma;
  result.epsilon = noise.epsilon;
  detail::XStepState state;
  detail::HStepState h_state;
  for (std::size_t k = 0; k < cfg.max_outer; ++k) {
    const double rho = schedule.rho;
    TraceRow row;
    row.iteration = k;
    row.rho = rho;
    {
      const ConvolutionOperator blur(h);
      row.objective_start = detail::finite_objective(detail::evaluate(x, blur.apply(x), h, y, rho, omega).value);
      detail::XProblem pb{y, blur, rho, omega, components, &x, cfg.lambda_x};
      Image x_next = detail::x_step(pb, x, cfg.inner_x_iters, cfg.inner_tol, state);
      x = std::move(x_next);
      row.objective_after_x = detail::evaluate(x, blur.apply(x), h, y, rho, omega).value;
    }
    h = detail::h_step(y, x, h, cfg.lambda_h, cfg.h_penalty_scale, cfg.inner_h_iters,
                       cfg.inner_tol, support_ptr, h_state);

    const ObjectiveValue end = detail::evaluate(x, convolve(h, x), h, y, rho, omega);
    row.objective = end.value;
    row.residual_norm = end.residual_norm;
    row.tv = end.tv;
    row.flags = end.flags;
    row.photometry = sum_y != 0.0 ? sum(x) / sum_y : 0.0;
    if (!std::isfinite(row.objective)) {
      throw NumericFailure("blind_deconvolve: objective became non-finite at pass " +
                           std::to_string(k));
    }
    result.trace.rows.push_back(row);

    schedule = rho_update(schedule, end.residual_norm);
    const double scale = std::max(std::abs(row.objective_start), std::numeric_limits<double>::min());
    const double decrease = (row.objective_start - row.objective) / scale;
    if (k > 0 && decrease >= 0.0 && decrease < cfg.objective_tol) {
      result.converged = true;
      break;
    }
  }
  result.x_b = std::move(x);
  result.h_b = std::move(h);
  result.rho = schedule.rho;
  return result;
}

/// TV deconvolution with a fixed PSF, no region constraint.
inline NbdResult nonblind_deconvolve(const Image &y, const Psf &h, const BdConfig &cfg) {
  cfg.validate();
  detail::require_same_grid(y.side(), h.side(), "nonblind_deconvolve");
  detail::require_simplex(h, "nonblind_deconvolve");
  detail::require_finite(y, "nonblind_deconvolve input");
  const std::size_t n = y.side();
  const detail::NoiseModel noise = detail::noise_model(y, cfg);
  RhoSchedule schedule =
      RhoSchedule::make(noise.rho0, cfg.rho_gamma, noise.epsilon, cfg.min_rho, cfg.max_rho);

  const RegionMask no_region(n);
  const RegionComponents components(no_region);
  const ConvolutionOperator blur(h);
  const double sum_y = sum(y);

  NbdResult result;
  result.sigma = noise.sigma;
  Image x = project_nonneg(y);
  detail::XStepState state;
  for (std::size_t k = 0; k < cfg.max_outer; ++k) {
    TraceRow row;
    row.iteration = k;
    row.rho = schedule.rho;
    row.objective_start =
        detail::finite_objective(detail::evaluate(x, blur.apply(x), h, y, schedule.rho, no_region).value);
    detail::XProblem pb{y, blur, schedule.rho, no_region, components};
    Image x_next = detail::primal_dual_x(pb, x, cfg.inner_x_iters, cfg.inner_tol, state);
    const double change = detail::relative_change(x_next, x);
    x = std::move(x_next);
    const ObjectiveValue end = detail::evaluate(x, blur.apply(x), h, y, schedule.rho, no_region);
    row.objective_after_x = end.value;
    row.objective = end.value;
    row.residual_norm = end.residual_norm;
    row.tv = end.tv;
    row.flags = end.flags;
    row.photometry = sum_y != 0.0 ? sum(x) / sum_y : 0.0;
    result.trace.rows.push_back(row);
    const RhoSchedule next = rho_update(schedule, end.residual_norm);
    // Settled: rho pinned at a clamp bound and the iterate no longer moving.
    if (next.rho == schedule.rho && change < cfg.inner_tol) {
      schedule = next;
      break;
    }
    schedule = next;
  }
  result.x = std::move(x);
  result.rho = schedule.rho;
  return result;
}

} // namespace petbd
