#pragma once

// Synthetic disk phantoms, Gaussian PSFs and noisy observations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/fftconv.hpp"
#include "petbd/grid.hpp"

namespace petbd {

struct Disk {
  double row = 0.0;
  double col = 0.0;
  double radius = 1.0;
  double intensity = 1.0;
};

/// How the selected disks are shrunk to form the constancy region.
enum class OmegaErosion {
  /// Drop pixels whose right or lower neighbour leaves the disk. The forward
  /// differences owned by the remaining pixels then tie exactly the disk.
  forward,
  /// Drop pixels with any 4-neighbour outside the disk.
  full,
};

struct PhantomSpec {
  std::size_t n = 64;
  std::vector<Disk> disks;
  double background = 0.0;
  std::size_t omega_disk_count = 5;
  OmegaErosion erosion = OmegaErosion::forward;

  /// Six unit-intensity disks of radii 2..8 px on a 64 x 64 grid; the five
  /// largest form the constancy region.
  static PhantomSpec standard() {
    PhantomSpec s;
    s.n = 64;
    s.background = 0.0;
    s.omega_disk_count = 5;
    s.disks = {
        {20.0, 20.0, 8.0, 1.0}, {18.0, 45.0, 6.0, 1.0}, {44.0, 17.0, 5.0, 1.0},
        {44.0, 33.0, 4.0, 1.0}, {45.0, 46.0, 3.0, 1.0}, {32.0, 33.0, 2.0, 1.0},
    };
    return s;
  }
};

namespace detail {

inline bool pixel_in_disk(std::size_t i, std::size_t j, const Disk &d) {
  const double di = static_cast<double>(i) - d.row;
  const double dj = static_cast<double>(j) - d.col;
  return di * di + dj * dj < d.radius * d.radius;
}

inline void validate(const PhantomSpec &spec) {
  if (spec.n < 2) throw InvalidArgument("PhantomSpec: grid side must be at least 2");
  if (!(spec.background >= 0.0)) throw InvalidArgument("PhantomSpec: negative background");
  if (spec.omega_disk_count > spec.disks.size()) {
    throw InvalidArgument("PhantomSpec: omega_disk_count exceeds the number of disks");
  }
  const double n = static_cast<double>(spec.n);
  for (const Disk &d : spec.disks) {
    if (!(d.radius > 0.0)) throw InvalidArgument("PhantomSpec: disk radius must be positive");
    if (!(d.intensity >= 0.0)) throw InvalidArgument("PhantomSpec: negative disk intensity");
    // Margin of 2 px between the disk and every edge of the grid.
    if (d.row - d.radius < 2.0 || d.col - d.radius < 2.0 || d.row + d.radius > n - 3.0 ||
        d.col + d.radius > n - 3.0) {
      throw InvalidArgument("PhantomSpec: disk closer than 2 px to the grid edge");
    }
  }
}

} // namespace detail

struct Phantom {
  Image x;
  RegionMask omega;
};

/// Piecewise-constant disk image and the eroded union of the largest disks
/// (ties broken by list order).
inline Phantom make_phantom(const PhantomSpec &spec) {
  detail::validate(spec);
  const std::size_t n = spec.n;
  Image x(n, spec.background);
  std::vector<int> owner(n * n, -1);
  for (std::size_t d = 0; d < spec.disks.size(); ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!detail::pixel_in_disk(i, j, spec.disks[d])) continue;
        if (owner[i * n + j] >= 0) throw InvalidArgument("make_phantom: overlapping disks");
        owner[i * n + j] = static_cast<int>(d);
        x(i, j) = spec.disks[d].intensity;
      }
    }
  }

  std::vector<std::size_t> order(spec.disks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return spec.disks[a].radius > spec.disks[b].radius;
  });
  std::vector<std::uint8_t> selected(spec.disks.size(), 0);
  for (std::size_t k = 0; k < spec.omega_disk_count; ++k) selected[order[k]] = 1;

  auto owner_at = [&](long i, long j) {
    if (i < 0 || j < 0 || i >= static_cast<long>(n) || j >= static_cast<long>(n)) return -1;
    return owner[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
  };
  RegionMask omega(n);
  const bool full = spec.erosion == OmegaErosion::full;
  for (long i = 0; i < static_cast<long>(n); ++i) {
    for (long j = 0; j < static_cast<long>(n); ++j) {
      const int o = owner_at(i, j);
      if (o < 0 || !selected[static_cast<std::size_t>(o)]) continue;
      bool keep = owner_at(i + 1, j) == o && owner_at(i, j + 1) == o;
      if (full) keep = keep && owner_at(i - 1, j) == o && owner_at(i, j - 1) == o;
      if (keep) omega.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), true);
    }
  }
  return {std::move(x), std::move(omega)};
}

/// Isotropic Gaussian sampled on wrapped offsets, normalized to unit sum.
inline Psf make_gaussian_psf(std::size_t n, double sigma_px) {
  if (n == 0) throw InvalidArgument("make_gaussian_psf: grid side must be positive");
  if (!(sigma_px > 0.0)) throw InvalidArgument("make_gaussian_psf: sigma must be positive");
  Image h(n);
  const double denom = 2.0 * sigma_px * sigma_px;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double di = static_cast<double>(std::min(i, n - i));
      const double dj = static_cast<double>(std::min(j, n - j));
      h(i, j) = std::exp(-(di * di + dj * dj) / denom);
    }
  }
  const double s = sum(h);
  for (double &v : h) v /= s;
  return Psf(std::move(h));
}

/// Population variance of the pixel values.
inline double variance(const Image &u) {
  const double mean = sum(u) / static_cast<double>(u.size());
  double acc = 0.0;
  for (double v : u) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(u.size());
}

/// SplitMix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for stream `index` of `base`: splitmix64(base ^ splitmix64(index)).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base ^ splitmix64(index));
}

/// Standard normal draws from mt19937_64 via Box-Muller. Both pieces are
/// fully specified, so the stream is identical on every platform (unlike
/// std::normal_distribution).
class NormalStream {
public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // 53-bit uniforms in (0, 1].
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct Observation {
  Image y;
  double sigma_n = 0.0;
};

/// y = h (*) x + sigma_n * noise with sigma_n set from the requested BSNR in
/// dB. An infinite BSNR returns the noiseless blur.
inline Observation simulate_observation(const Image &x, const Psf &h, double bsnr_db,
                                        std::uint64_t seed) {
  Image b = convolve(h, x);
  if (std::isinf(bsnr_db) && bsnr_db > 0) return {std::move(b), 0.0};
  if (!std::isfinite(bsnr_db)) throw InvalidArgument("simulate_observation: invalid BSNR");
  const double var = variance(b);
  if (!(var > 0.0)) {
    throw DegenerateInput("simulate_observation: blurred image is constant, BSNR undefined");
  }
  const double sigma_n = std::sqrt(var / std::pow(10.0, bsnr_db / 10.0));
  NormalStream noise(seed);
  for (double &v : b) v += sigma_n * noise();
  return {std::move(b), sigma_n};
}

} // namespace petbd
