#pragma once

// Square pixel grids and the discrete gradient / divergence pair used by the
// total-variation machinery. Storage is row-major, pixel (i, j) at i*n + j.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "petbd/error.hpp"

namespace petbd {

/// n x n raster of real intensities.
class Image {
public:
  Image() = default;

  explicit Image(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {
    if (n == 0) throw InvalidArgument("Image: side must be positive");
  }

  Image(std::size_t n, std::vector<double> data) : n_(n), data_(std::move(data)) {
    if (n == 0) throw InvalidArgument("Image: side must be positive");
    if (data_.size() != n * n) {
      throw InvalidArgument("Image: expected " + std::to_string(n * n) + " values, got " +
                            std::to_string(data_.size()));
    }
    if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
      throw InvalidArgument("Image: non-finite pixel value");
    }
  }

  std::size_t side() const noexcept { return n_; }
  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return n_; }
  std::size_t size() const noexcept { return data_.size(); }

  double &operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  double &operator[](std::size_t k) noexcept { return data_[k]; }
  double operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double> &vec() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Image &, const Image &) = default;

private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Per-pixel pair of forward differences; the codomain of gradient().
struct GradientField {
  std::size_t n = 0;
  std::vector<double> gx; ///< horizontal, u(i, j+1) - u(i, j)
  std::vector<double> gy; ///< vertical, u(i+1, j) - u(i, j)

  GradientField() = default;
  explicit GradientField(std::size_t side) : n(side), gx(side * side, 0.0), gy(side * side, 0.0) {}
  GradientField(std::size_t side, std::vector<double> x, std::vector<double> y)
      : n(side), gx(std::move(x)), gy(std::move(y)) {
    if (gx.size() != n * n || gy.size() != n * n) {
      throw InvalidArgument("GradientField: component length does not match grid");
    }
  }

  std::size_t side() const noexcept { return n; }
  std::size_t size() const noexcept { return gx.size(); }
};

/// Pixel set on which the restored image is required to be constant.
class RegionMask {
public:
  RegionMask() = default;
  explicit RegionMask(std::size_t n) : n_(n), inside_(n * n, 0) {
    if (n == 0) throw InvalidArgument("RegionMask: side must be positive");
  }
  RegionMask(std::size_t n, std::vector<std::uint8_t> inside) : n_(n), inside_(std::move(inside)) {
    if (n == 0) throw InvalidArgument("RegionMask: side must be positive");
    if (inside_.size() != n * n) throw InvalidArgument("RegionMask: length does not match grid");
    for (auto &b : inside_) b = b ? 1 : 0;
  }

  std::size_t side() const noexcept { return n_; }
  std::size_t size() const noexcept { return inside_.size(); }

  bool operator[](std::size_t k) const noexcept { return inside_[k] != 0; }
  bool operator()(std::size_t i, std::size_t j) const noexcept { return inside_[i * n_ + j] != 0; }
  void set(std::size_t k, bool v) noexcept { inside_[k] = v ? 1 : 0; }
  void set(std::size_t i, std::size_t j, bool v) noexcept { inside_[i * n_ + j] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(inside_.begin(), inside_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return count() == 0; }
  const std::vector<std::uint8_t> &bytes() const noexcept { return inside_; }

  friend bool operator==(const RegionMask &, const RegionMask &) = default;

private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> inside_;
};

/// Forward differences with a Neumann boundary: the last column of gx and
/// the last row of gy are zero.
inline GradientField gradient(const Image &u) {
  const std::size_t n = u.side();
  GradientField g(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      if (j + 1 < n) g.gx[k] = u[k + 1] - u[k];
      if (i + 1 < n) g.gy[k] = u[k + n] - u[k];
    }
  }
  return g;
}

/// Negative adjoint of gradient(): <gradient(u), p> = -<u, divergence(p)>.
inline Image divergence(const GradientField &p) {
  const std::size_t n = p.side();
  Image d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      double v = 0.0;
      if (j + 1 < n) v += p.gx[k];
      if (j > 0) v -= p.gx[k - 1];
      if (i + 1 < n) v += p.gy[k];
      if (i > 0) v -= p.gy[k - n];
      d[k] = v;
    }
  }
  return d;
}

/// Isotropic TV: sum over pixels of the gradient magnitude.
inline double tv_norm(const GradientField &p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::hypot(p.gx[k], p.gy[k]);
  return s;
}

inline double total_variation(const Image &u) { return tv_norm(gradient(u)); }

// Small vector helpers shared by the solver and metrics.

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double dot(const GradientField &a, const GradientField &b) {
  return dot(a.gx, b.gx) + dot(a.gy, b.gy);
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double sum(const Image &u) { return std::accumulate(u.begin(), u.end(), 0.0); }

inline double max_abs(const Image &u) {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

inline Image operator-(const Image &a, const Image &b) {
  detail::require_same_grid(a.side(), b.side(), "image difference");
  Image out(a.side());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

inline Image operator+(const Image &a, const Image &b) {
  detail::require_same_grid(a.side(), b.side(), "image sum");
  Image out(a.side());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
  return out;
}

inline Image operator*(double s, const Image &a) {
  Image out(a.side());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = s * a[k];
  return out;
}

/// Largest gradient magnitude over the pixels of `omega`.
inline double masked_gradient_max(const Image &u, const RegionMask &omega) {
  detail::require_same_grid(u.side(), omega.side(), "masked_gradient_max");
  const GradientField g = gradient(u);
  double m = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (omega[k]) m = std::max(m, std::hypot(g.gx[k], g.gy[k]));
  }
  return m;
}

/// Circular shift: out(i, j) = u(i - di, j - dj) with wraparound.
inline Image circshift(const Image &u, long di, long dj) {
  const long n = static_cast<long>(u.side());
  Image out(u.side());
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const long si = ((i - di) % n + n) % n;
      const long sj = ((j - dj) % n + n) % n;
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          u(static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
    }
  }
  return out;
}

} // namespace petbd
