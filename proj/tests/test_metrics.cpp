#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "petbd/metrics.hpp"
#include "petbd/phantom.hpp"

using namespace petbd;

TEST(Bsnr, Examples) {
  Image b(8);
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = (k % 2) ? 10.0 : -10.0;
  EXPECT_NEAR(bsnr(b, 1.0), 20.0, 1e-12);
  EXPECT_NEAR(bsnr(b, 10.0), 0.0, 1e-12);
  EXPECT_EQ(bsnr(b, 0.0), kMetricCapDb);
}

TEST(Bsnr, RoundTripWithSimulation) {
  const Phantom p = make_phantom(PhantomSpec::standard());
  const Psf h = make_gaussian_psf(64, 1.3);
  const Observation o = simulate_observation(p.x, h, 30.0, 8);
  EXPECT_NEAR(bsnr(convolve(h, p.x), o.sigma_n), 30.0, 1e-9);
}

TEST(Isnr, Examples) {
  std::mt19937_64 rng(1);
  const Image x = oracle::random_image(8, rng);
  const Image y = oracle::random_image(8, rng);
  EXPECT_NEAR(isnr(x, y, y), 0.0, 1e-12);
  EXPECT_EQ(isnr(x, y, x), kMetricCapDb);
  const Image half = x + 0.5 * (y - x);
  EXPECT_NEAR(isnr(x, y, half), 20.0 * std::log10(2.0), 1e-10);
  EXPECT_NEAR(isnr(x, y, half), 6.0206, 1e-4);
}

TEST(Isnr, OffsetInvariant) {
  std::mt19937_64 rng(2);
  const Image x = oracle::random_image(8, rng);
  const Image y = oracle::random_image(8, rng);
  const Image e = oracle::random_image(8, rng);
  const Image c(8, 3.25);
  EXPECT_NEAR(isnr(x + c, y + c, e + c), isnr(x, y, e), 1e-10);
}

TEST(Rsnr, IdentityAndShift) {
  const Psf h = make_gaussian_psf(16, 1.3);
  EXPECT_EQ(rsnr(h, h, false), kMetricCapDb);
  EXPECT_EQ(rsnr(h, h, true), kMetricCapDb);
  const Psf shifted(circshift(h.image(), 1, 0));
  EXPECT_EQ(rsnr(h, shifted, true), kMetricCapDb);
  EXPECT_LT(rsnr(h, shifted, false), 20.0);
}

TEST(Rsnr, TenPercentErrorIsTwentyDb) {
  const Psf h = make_gaussian_psf(16, 1.3);
  const double norm = std::sqrt(squared_norm(h.image().values()));
  Image e = h.image();
  e[5] += 0.1 * norm;
  EXPECT_NEAR(rsnr(h, Psf(e), false), 20.0, 1e-10);
}

TEST(Rsnr, AlignedIsShiftInvariant) {
  std::mt19937_64 rng(3);
  const Psf h = make_gaussian_psf(12, 1.3);
  const Psf est = oracle::random_simplex_psf(12, rng);
  const double base = rsnr(h, est, true);
  for (long di : {0L, 1L, 5L, 11L}) {
    for (long dj : {0L, 3L, 7L}) {
      EXPECT_NEAR(rsnr(h, Psf(circshift(est.image(), di, dj)), true), base, 1e-9);
    }
  }
}

TEST(Alignment, RecoversShift) {
  const Psf h = make_gaussian_psf(16, 1.0);
  const auto [di, dj] = best_alignment(h.image(), circshift(h.image(), 3, 14));
  EXPECT_EQ(di, 13);
  EXPECT_EQ(dj, 2);
}
