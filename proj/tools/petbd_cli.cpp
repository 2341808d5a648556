// petbd: batch front end for simulation, blind/non-blind deconvolution,
// scoring and the BSNR sweep.
//
// Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
// 4 I/O error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "petbd/commands.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool csv = false;
  bool deterministic = false;

  std::string y, omega, h;
  std::string x_true, h_true, x_est, h_est, label;
};

petbd::RunConfig load(const Options &o, const CLI::App &app) {
  petbd::RunConfig cfg = o.config.empty() ? petbd::RunConfig{} : petbd::load_config(o.config);
  if (app.count("--seed")) cfg.seed = o.seed;
  if (o.csv) cfg.csv = true;
  cfg.solver.deterministic = cfg.solver.deterministic || o.deterministic;
  cfg.validate();
  return cfg;
}

// --out, then output.dir from the config, then $PGRID_OUT, then ./petbd_out.
std::filesystem::path out_dir(const Options &o, const petbd::RunConfig &cfg) {
  if (!o.out.empty()) return o.out;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char *env = std::getenv("PGRID_OUT"); env && *env) return env;
  return "petbd_out";
}

void print_json(const nlohmann::json &doc) { std::cout << doc.dump(2) << "\n"; }

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"PET blind deconvolution with an anatomical region prior"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App *cmd) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--out", o.out, "output directory (default: $PGRID_OUT or ./petbd_out)");
    cmd->add_option("--seed", o.seed, "base seed, overrides the config");
    cmd->add_flag("--csv", o.csv, "also export grids as CSV");
    cmd->add_flag("--deterministic", o.deterministic, "bitwise-reproducible execution");
  };

  auto *simulate = app.add_subcommand("simulate", "write phantom, PSF, mask and noisy observations");
  common(simulate);

  auto *bd = app.add_subcommand("bd", "blind deconvolution with a region prior");
  common(bd);
  bd->add_option("--y", o.y, "observation (PGRID f64)")->required();
  bd->add_option("--omega", o.omega, "region mask (PGRID mask)")->required();

  auto *nbd = app.add_subcommand("nbd", "non-blind TV deconvolution with a known PSF");
  common(nbd);
  nbd->add_option("--y", o.y, "observation (PGRID f64)")->required();
  nbd->add_option("--psf", o.h, "PSF (PGRID f64)")->required();

  auto *metrics = app.add_subcommand("metrics", "score estimates against ground truth (CSV row)");
  metrics->add_option("--x-true", o.x_true, "true image")->required();
  metrics->add_option("--h-true", o.h_true, "true PSF")->required();
  metrics->add_option("--y", o.y, "observation")->required();
  metrics->add_option("--x-est", o.x_est, "estimated image")->required();
  metrics->add_option("--h-est", o.h_est, "estimated PSF")->required();
  metrics->add_option("--label", o.label, "row label");
  metrics->add_option("--out", o.out, "append the row to this CSV file");

  auto *sweep = app.add_subcommand("sweep", "BSNR x trial grid with reference table");
  common(sweep);
  sweep->add_option("--jobs", o.jobs, "concurrent trials")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*simulate) {
      const auto cfg = load(o, *simulate);
      const auto dir = out_dir(o, cfg);
      petbd::cli::cmd_simulate(cfg, dir);
      std::cout << "wrote " << dir.string() << "/manifest.json\n";
    } else if (*bd) {
      const auto cfg = load(o, *bd);
      print_json(petbd::cli::cmd_bd(o.y, o.omega, cfg, out_dir(o, cfg)));
    } else if (*nbd) {
      const auto cfg = load(o, *nbd);
      print_json(petbd::cli::cmd_nbd(o.y, o.h, cfg, out_dir(o, cfg)));
    } else if (*metrics) {
      const auto row =
          petbd::cli::cmd_metrics(o.x_true, o.h_true, o.y, o.x_est, o.h_est, o.label);
      const std::string line = petbd::cli::metrics_csv(row);
      std::cout << petbd::cli::metrics_header() << "\n" << line << "\n";
      if (!o.out.empty()) {
        const bool fresh = !std::filesystem::exists(o.out);
        std::ofstream f(o.out, std::ios::app);
        if (!f) throw petbd::IoError("cannot open " + o.out + " for appending");
        if (fresh) f << petbd::cli::metrics_header() << "\n";
        f << line << "\n";
        if (!f) throw petbd::IoError("write failed for " + o.out);
      }
    } else if (*sweep) {
      const auto cfg = load(o, *sweep);
      const std::size_t jobs = o.deterministic ? 1 : o.jobs;
      const auto rep = petbd::cli::cmd_sweep(cfg, out_dir(o, cfg), jobs);
      std::cout << petbd::cli::format_report(rep);
    }
  } catch (const petbd::IoError &e) {
    std::cerr << "petbd: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const petbd::NumericFailure &e) {
    std::cerr << "petbd: numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception &e) {
    // ConfigError, InvalidArgument, GridMismatch, DegenerateInput.
    std::cerr << "petbd: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}
