#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "petbd/config.hpp"
#include "petbd/io.hpp"
#include "petbd/phantom.hpp"

using namespace petbd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / "petbd_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Pgrid, ImageRoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  Image u = oracle::random_image(7, rng, -1e3, 1e3);
  u[0] = -0.0;
  u[1] = std::numeric_limits<double>::denorm_min();
  u[2] = std::numeric_limits<double>::max();
  const fs::path p = scratch("u.pgrid");
  io::write_image(p, u);
  const Image back = io::read_image(p);
  ASSERT_EQ(back.side(), 7u);
  EXPECT_EQ(std::memcmp(back.values().data(), u.values().data(), 8 * u.size()), 0);
  EXPECT_EQ(io::encode(back), slurp(p));
}

TEST(Pgrid, HeaderAndLittleEndianPayload) {
  const std::string bytes = io::encode(Image(1, {1.0}));
  EXPECT_EQ(bytes.substr(0, 16), "pgrid 1 1 1 f64\n");
  ASSERT_EQ(bytes.size(), 24u);
  // 1.0 = 0x3FF0000000000000, low byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[22]), 0xF0);
}

TEST(Pgrid, PsfAndMaskRoundTrip) {
  const Psf h = make_gaussian_psf(16, 1.3);
  io::write_psf(scratch("h.pgrid"), h);
  EXPECT_EQ(io::read_psf(scratch("h.pgrid")).image(), h.image());

  const RegionMask m = make_phantom(PhantomSpec::standard()).omega;
  io::write_mask(scratch("m.pgrid"), m);
  EXPECT_EQ(io::read_mask(scratch("m.pgrid")), m);
  EXPECT_EQ(slurp(scratch("m.pgrid")).substr(0, 19), "pgrid 1 64 64 mask\n");
}

TEST(Pgrid, RejectsMalformedFiles) {
  EXPECT_THROW(io::decode_image("garbage"), IoError);
  EXPECT_THROW(io::decode_image("pgrid 2 1 1 f64\n12345678"), IoError);
  EXPECT_THROW(io::decode_image("pgrid 1 1 2 f64\n1234567812345678"), IoError);
  EXPECT_THROW(io::decode_image("pgrid 1 1 1 f32\n1234"), IoError);
  EXPECT_THROW(io::decode_image("pgrid 1 1 1 f64\n1234567"), IoError);
  EXPECT_THROW(io::decode_image("pgrid 1 1 1 mask\n\1"), IoError);
  EXPECT_THROW(io::decode_mask("pgrid 1 1 1 mask\n\2"), IoError);
  EXPECT_THROW(io::decode_mask(std::string("pgrid 1 2 2 mask\n\1\0\1", 20)), IoError);
  EXPECT_THROW(io::read_image(scratch("does_not_exist.pgrid")), IoError);
  std::string nan = io::encode(Image(1, {0.0}));
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan.data() + 16, &q, 8);
  EXPECT_THROW(io::decode_image(nan), IoError);
}

TEST(Csv, ImageAndMask) {
  EXPECT_EQ(io::to_csv(Image(2, {0.5, 1, -2, 0.1})), "0.5,1\n-2,0.10000000000000001\n");
  RegionMask m(2);
  m.set(1, 0, true);
  EXPECT_EQ(io::to_csv(m), "0,0\n1,0\n");
}

TEST(Config, DefaultsMatchExperiment) {
  const RunConfig c = parse_config_text("{}");
  EXPECT_EQ(c.phantom.n, 64u);
  EXPECT_EQ(c.psf_sigma, 1.3);
  EXPECT_EQ(c.trials, 10u);
  EXPECT_EQ(c.bsnr_db, (std::vector<double>{40, 30, 20, 10}));
  EXPECT_EQ(c.phantom.disks.size(), 6u);
}

TEST(Config, ParsesAllSections) {
  const RunConfig c = parse_config_text(R"({
    "phantom": {"n": 32, "psf_sigma": 1.0, "omega_disk_count": 1, "omega_erosion": "full",
                "disks": [{"row": 10, "col": 10, "radius": 4, "intensity": 2}]},
    "solver": {"max_outer": 7, "lambda_h": 2.5, "psf_support": 9},
    "rho": {"gamma": 1.2, "initial": 0.5, "sigma": null},
    "experiment": {"bsnr_db": [30, "inf"], "trials": 2, "seed": 5},
    "output": {"dir": "o", "csv": true}
  })");
  EXPECT_EQ(c.phantom.n, 32u);
  EXPECT_EQ(c.phantom.erosion, OmegaErosion::full);
  EXPECT_EQ(c.phantom.disks[0].intensity, 2.0);
  EXPECT_EQ(c.solver.max_outer, 7u);
  EXPECT_EQ(c.solver.lambda_h, 2.5);
  EXPECT_EQ(*c.solver.psf_support, 9u);
  EXPECT_EQ(c.solver.rho_gamma, 1.2);
  EXPECT_EQ(*c.solver.rho_initial, 0.5);
  EXPECT_FALSE(c.solver.sigma.has_value());
  EXPECT_TRUE(std::isinf(c.bsnr_db[1]));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_TRUE(c.csv);
  // Serialization round trip.
  const RunConfig again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config_text(R"({"solver": {"max_outr": 3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"extra": {}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"solver": {"max_outer": "3"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"solver": {"max_outer": -3}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"solver": {"lambda_x": 0}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"experiment": {"bsnr_db": ["loud"]}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"phantom": {"omega_erosion": "some"}})"), ConfigError);
  EXPECT_THROW(parse_config_text(R"({"phantom": {"n": 16}})"), ConfigError);
  EXPECT_THROW(parse_config_text("{not json"), ConfigError);
  EXPECT_THROW(load_config(scratch("missing.json")), IoError);
}
