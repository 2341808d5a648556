#pragma once

// The batch commands behind the `petbd` tool: simulate, bd, nbd, metrics and
// sweep. Each command reads and writes files only under the paths it is given.
//
// Noise seeds: trial t draws its observation noise from
// derive_seed(seed, t); the same stream is reused at every BSNR level, so the
// levels differ only in noise scale. The independent NBD observation of trial
// t uses derive_seed(derive_seed(seed, t), 1).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "petbd/config.hpp"
#include "petbd/io.hpp"
#include "petbd/metrics.hpp"
#include "petbd/phantom.hpp"
#include "petbd/solver.hpp"

namespace petbd::cli {

namespace fs = std::filesystem;

/// Published blind-deconvolution results for the disk phantom, by BSNR [dB]:
/// PSF RSNR and image ISNR (means over 10 trials).
struct ReferenceRow {
  double bsnr_db;
  double rsnr_db;
  double isnr_db;
};

inline const std::vector<ReferenceRow> &reference_table() {
  static const std::vector<ReferenceRow> rows{
      {40.0, 19.47, 11.38}, {30.0, 16.34, 10.18}, {20.0, 12.60, 7.82}, {10.0, 6.20, 4.71}};
  return rows;
}

inline const ReferenceRow *reference_for(double bsnr_db) {
  for (const auto &r : reference_table()) {
    if (r.bsnr_db == bsnr_db) return &r;
  }
  return nullptr;
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return derive_seed(seed, trial);
}

inline std::uint64_t nbd_seed(std::uint64_t seed, std::size_t trial) {
  return derive_seed(trial_seed(seed, trial), 1);
}

inline std::string bsnr_label(double bsnr_db) {
  if (std::isinf(bsnr_db)) return "inf";
  std::ostringstream ss;
  ss << bsnr_db;
  return ss.str();
}

inline std::string trial_dir_name(double bsnr_db, std::size_t trial) {
  return "bsnr" + bsnr_label(bsnr_db) + "_t" + std::to_string(trial);
}

namespace detail {

inline void ensure_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

inline void write_image_file(const fs::path &path, const Image &u, bool csv) {
  io::write_image(path, u);
  if (csv) io::write_text(fs::path(path).replace_extension(".csv"), io::to_csv(u));
}

inline void write_mask_file(const fs::path &path, const RegionMask &m, bool csv) {
  io::write_mask(path, m);
  if (csv) io::write_text(fs::path(path).replace_extension(".csv"), io::to_csv(m));
}

inline void write_json(const fs::path &path, const nlohmann::json &doc) {
  io::write_text(path, doc.dump(2) + "\n");
}

} // namespace detail

inline std::string trace_csv(const SolveTrace &trace) {
  std::string out = "iteration,rho,objective_start,objective_after_x,objective,residual_norm,tv,"
                    "photometry,x_nonneg,grad_zero_on_omega,h_on_simplex\n";
  char buf[512];
  for (const TraceRow &r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d\n",
                  r.iteration, r.rho, r.objective_start, r.objective_after_x, r.objective,
                  r.residual_norm, r.tv, r.photometry, r.flags.x_nonneg ? 1 : 0,
                  r.flags.grad_zero_on_omega ? 1 : 0, r.flags.h_on_simplex ? 1 : 0);
    out += buf;
  }
  return out;
}

/// Ground truth plus one observation per (BSNR, trial), and a manifest.
inline nlohmann::json cmd_simulate(const RunConfig &cfg, const fs::path &out_dir) {
  cfg.validate();
  detail::ensure_dir(out_dir);
  const Phantom ph = make_phantom(cfg.phantom);
  const Psf h = make_gaussian_psf(cfg.phantom.n, cfg.psf_sigma);
  detail::write_image_file(out_dir / "x.pgrid", ph.x, cfg.csv);
  detail::write_image_file(out_dir / "h.pgrid", h.image(), cfg.csv);
  detail::write_mask_file(out_dir / "omega.pgrid", ph.omega, cfg.csv);

  nlohmann::json observations = nlohmann::json::array();
  for (double b : cfg.bsnr_db) {
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const std::string name = trial_dir_name(b, t);
      detail::ensure_dir(out_dir / name);
      const Observation obs = simulate_observation(ph.x, h, b, trial_seed(cfg.seed, t));
      detail::write_image_file(out_dir / name / "y.pgrid", obs.y, cfg.csv);
      nlohmann::json entry{{"bsnr_db", detail::json_number(b)},
                           {"trial", t},
                           {"seed", trial_seed(cfg.seed, t)},
                           {"sigma_n", obs.sigma_n},
                           {"y", name + "/y.pgrid"}};
      if (cfg.independent_nbd_observation) {
        const Observation second = simulate_observation(ph.x, h, b, nbd_seed(cfg.seed, t));
        detail::write_image_file(out_dir / name / "y_nbd.pgrid", second.y, cfg.csv);
        entry["y_nbd"] = name + "/y_nbd.pgrid";
        entry["nbd_seed"] = nbd_seed(cfg.seed, t);
      }
      observations.push_back(entry);
    }
  }
  nlohmann::json manifest{{"x", "x.pgrid"},
                          {"h", "h.pgrid"},
                          {"omega", "omega.pgrid"},
                          {"seed", cfg.seed},
                          {"seed_rule", "trial t: derive_seed(seed, t); nbd: derive_seed(trial seed, 1)"},
                          {"observations", observations},
                          {"config", to_json(cfg)}};
  detail::write_json(out_dir / "manifest.json", manifest);
  return manifest;
}

inline nlohmann::json bd_summary(const BdResult &r, const Image &y, const RegionMask &omega) {
  const TraceRow &last = r.trace.back();
  return {{"final_rho", r.rho},
          {"sigma_hat", r.sigma},
          {"epsilon", r.epsilon},
          {"iterations", r.trace.size()},
          {"converged", r.converged},
          {"objective", last.objective},
          {"residual_norm", last.residual_norm},
          {"tv", last.tv},
          {"photometry", sum(y) != 0.0 ? sum(r.x_b) / sum(y) : 0.0},
          {"masked_gradient_max", masked_gradient_max(r.x_b, omega)},
          {"feasibility",
           {{"x_nonneg", last.flags.x_nonneg},
            {"grad_zero_on_omega", last.flags.grad_zero_on_omega},
            {"h_on_simplex", last.flags.h_on_simplex}}}};
}

inline nlohmann::json cmd_bd(const fs::path &y_path, const fs::path &omega_path,
                             const RunConfig &cfg, const fs::path &out_dir) {
  cfg.validate();
  const Image y = io::read_image(y_path);
  const RegionMask omega = io::read_mask(omega_path);
  if (omega.side() != y.side()) throw GridMismatch("bd: observation and mask grids differ");
  detail::ensure_dir(out_dir);
  const BdResult r = blind_deconvolve(y, omega, cfg.solver);
  detail::write_image_file(out_dir / "x_b.pgrid", r.x_b, cfg.csv);
  detail::write_image_file(out_dir / "h_b.pgrid", r.h_b.image(), cfg.csv);
  io::write_text(out_dir / "trace.csv", trace_csv(r.trace));
  nlohmann::json summary = bd_summary(r, y, omega);
  detail::write_json(out_dir / "summary.json", summary);
  return summary;
}

inline nlohmann::json cmd_nbd(const fs::path &y_path, const fs::path &h_path,
                              const RunConfig &cfg, const fs::path &out_dir) {
  cfg.validate();
  const Image y = io::read_image(y_path);
  const Psf h = io::read_psf(h_path);
  if (h.side() != y.side()) throw GridMismatch("nbd: observation and PSF grids differ");
  detail::ensure_dir(out_dir);
  const NbdResult r = nonblind_deconvolve(y, h, cfg.solver);
  detail::write_image_file(out_dir / "x_nbd.pgrid", r.x, cfg.csv);
  io::write_text(out_dir / "trace.csv", trace_csv(r.trace));
  nlohmann::json summary{{"final_rho", r.rho},
                         {"sigma_hat", r.sigma},
                         {"iterations", r.trace.size()},
                         {"residual_norm", r.trace.back().residual_norm},
                         {"photometry", sum(y) != 0.0 ? sum(r.x) / sum(y) : 0.0}};
  detail::write_json(out_dir / "summary.json", summary);
  return summary;
}

struct MetricsRow {
  std::string label;
  double isnr_db = 0.0;
  double rsnr_aligned_db = 0.0;
  double rsnr_raw_db = 0.0;
  double bsnr_realized_db = 0.0;
};

inline std::string metrics_header() { return "label,isnr_db,rsnr_aligned_db,rsnr_raw_db,bsnr_realized_db"; }

inline std::string metrics_csv(const MetricsRow &m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g", m.label.c_str(), m.isnr_db,
                m.rsnr_aligned_db, m.rsnr_raw_db, m.bsnr_realized_db);
  return buf;
}

/// Scores an estimate against ground truth. The realized BSNR uses the
/// empirical noise level of y - h_true (*) x_true.
inline MetricsRow compute_metrics(const Image &x_true, const Psf &h_true, const Image &y,
                                  const Image &x_est, const Psf &h_est, std::string label = "") {
  MetricsRow m;
  m.label = std::move(label);
  m.isnr_db = isnr(x_true, y, x_est);
  m.rsnr_aligned_db = rsnr(h_true, h_est, true);
  m.rsnr_raw_db = rsnr(h_true, h_est, false);
  const Image b = convolve(h_true, x_true);
  const Image noise = y - b;
  const double sigma_emp = std::sqrt(squared_norm(noise.values()) / static_cast<double>(noise.size()));
  m.bsnr_realized_db = bsnr(b, sigma_emp);
  return m;
}

inline MetricsRow cmd_metrics(const fs::path &x_true, const fs::path &h_true, const fs::path &y,
                              const fs::path &x_est, const fs::path &h_est,
                              const std::string &label = "") {
  return compute_metrics(io::read_image(x_true), io::read_psf(h_true), io::read_image(y),
                         io::read_image(x_est), io::read_psf(h_est), label);
}

struct TrialResult {
  double bsnr_db = 0.0;
  std::size_t trial = 0;
  double sigma_n = 0.0;
  double rsnr_aligned_db = 0.0;
  double rsnr_raw_db = 0.0;
  double isnr_b_db = 0.0;
  double isnr_nbd_db = 0.0;
  std::size_t iterations = 0;
  double masked_gradient_b = 0.0;
  double masked_gradient_nbd = 0.0;
};

struct SweepRow {
  double bsnr_db = 0.0;
  std::size_t trials = 0;
  double rsnr_aligned_db = 0.0;
  double rsnr_raw_db = 0.0;
  double isnr_b_db = 0.0;
  double isnr_nbd_db = 0.0;
  const ReferenceRow *reference = nullptr;
};

struct SweepReport {
  std::vector<TrialResult> trials;
  std::vector<SweepRow> rows;
};

inline std::string format_report(const SweepReport &rep) {
  std::string out =
      "bsnr_db,trials,rsnr_h_b_db,rsnr_h_b_raw_db,isnr_x_b_db,isnr_x_nbd_db,ref_rsnr_db,ref_isnr_db\n";
  char buf[256];
  for (const SweepRow &r : rep.rows) {
    std::string ref_r = "", ref_i = "";
    if (r.reference) {
      char a[32], b[32];
      std::snprintf(a, sizeof a, "%.2f", r.reference->rsnr_db);
      std::snprintf(b, sizeof b, "%.2f", r.reference->isnr_db);
      ref_r = a;
      ref_i = b;
    }
    std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f,%.4f,%.4f,%s,%s\n",
                  bsnr_label(r.bsnr_db).c_str(), r.trials, r.rsnr_aligned_db, r.rsnr_raw_db,
                  r.isnr_b_db, r.isnr_nbd_db, ref_r.c_str(), ref_i.c_str());
    out += buf;
  }
  return out;
}

/// One (BSNR, trial) cell of the sweep: simulate, blind pass, non-blind pass
/// with the estimated PSF, scores. Writes into `dir` when it is non-empty.
inline TrialResult run_trial(const RunConfig &cfg, const Phantom &ph, const Psf &h_true,
                             double bsnr_db, std::size_t trial, const fs::path &dir) {
  const Observation obs = simulate_observation(ph.x, h_true, bsnr_db, trial_seed(cfg.seed, trial));
  const BdResult bd = blind_deconvolve(obs.y, ph.omega, cfg.solver);
  const Image y_nbd = cfg.independent_nbd_observation
                          ? simulate_observation(ph.x, h_true, bsnr_db, nbd_seed(cfg.seed, trial)).y
                          : obs.y;
  const NbdResult nbd = nonblind_deconvolve(y_nbd, bd.h_b, cfg.solver);

  TrialResult r;
  r.bsnr_db = bsnr_db;
  r.trial = trial;
  r.sigma_n = obs.sigma_n;
  r.rsnr_aligned_db = rsnr(h_true, bd.h_b, true);
  r.rsnr_raw_db = rsnr(h_true, bd.h_b, false);
  r.isnr_b_db = isnr(ph.x, obs.y, bd.x_b);
  r.isnr_nbd_db = isnr(ph.x, y_nbd, nbd.x);
  r.iterations = bd.trace.size();
  r.masked_gradient_b = masked_gradient_max(bd.x_b, ph.omega);
  r.masked_gradient_nbd = masked_gradient_max(nbd.x, ph.omega);

  if (!dir.empty()) {
    detail::ensure_dir(dir);
    detail::write_image_file(dir / "y.pgrid", obs.y, cfg.csv);
    detail::write_image_file(dir / "x_b.pgrid", bd.x_b, cfg.csv);
    detail::write_image_file(dir / "h_b.pgrid", bd.h_b.image(), cfg.csv);
    detail::write_image_file(dir / "x_nbd.pgrid", nbd.x, cfg.csv);
    io::write_text(dir / "trace_bd.csv", trace_csv(bd.trace));
    io::write_text(dir / "trace_nbd.csv", trace_csv(nbd.trace));
    nlohmann::json summary = bd_summary(bd, obs.y, ph.omega);
    summary["bsnr_db"] = detail::json_number(bsnr_db);
    summary["trial"] = trial;
    summary["seed"] = trial_seed(cfg.seed, trial);
    summary["sigma_n"] = obs.sigma_n;
    summary["rsnr_aligned_db"] = r.rsnr_aligned_db;
    summary["rsnr_raw_db"] = r.rsnr_raw_db;
    summary["isnr_x_b_db"] = r.isnr_b_db;
    summary["isnr_x_nbd_db"] = r.isnr_nbd_db;
    detail::write_json(dir / "summary.json", summary);
  }
  return r;
}

/// Full BSNR x trial grid. `jobs` bounds the number of concurrent trials;
/// results are independent of it.
inline SweepReport cmd_sweep(const RunConfig &cfg, const fs::path &out_dir, std::size_t jobs) {
  cfg.validate();
  const Phantom ph = make_phantom(cfg.phantom);
  const Psf h_true = make_gaussian_psf(cfg.phantom.n, cfg.psf_sigma);
  if (!out_dir.empty()) {
    detail::ensure_dir(out_dir);
    detail::write_image_file(out_dir / "x.pgrid", ph.x, cfg.csv);
    detail::write_image_file(out_dir / "h.pgrid", h_true.image(), cfg.csv);
    detail::write_mask_file(out_dir / "omega.pgrid", ph.omega, cfg.csv);
  }

  struct Task {
    double bsnr_db;
    std::size_t trial;
  };
  std::vector<Task> tasks;
  for (double b : cfg.bsnr_db) {
    for (std::size_t t = 0; t < cfg.trials; ++t) tasks.push_back({b, t});
  }
  SweepReport rep;
  rep.trials.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const fs::path dir =
            out_dir.empty() ? fs::path() : out_dir / trial_dir_name(tasks[i].bsnr_db, tasks[i].trial);
        rep.trials[i] = run_trial(cfg, ph, h_true, tasks[i].bsnr_db, tasks[i].trial, dir);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
        return;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(tasks.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto &t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (double b : cfg.bsnr_db) {
    SweepRow row;
    row.bsnr_db = b;
    row.reference = reference_for(b);
    for (const TrialResult &t : rep.trials) {
      if (t.bsnr_db != b) continue;
      ++row.trials;
      row.rsnr_aligned_db += t.rsnr_aligned_db;
      row.rsnr_raw_db += t.rsnr_raw_db;
      row.isnr_b_db += t.isnr_b_db;
      row.isnr_nbd_db += t.isnr_nbd_db;
    }
    const double m = static_cast<double>(std::max<std::size_t>(row.trials, 1));
    row.rsnr_aligned_db /= m;
    row.rsnr_raw_db /= m;
    row.isnr_b_db /= m;
    row.isnr_nbd_db /= m;
    rep.rows.push_back(row);
  }

  if (!out_dir.empty()) {
    std::string per_trial = "bsnr_db,trial,sigma_n,rsnr_h_b_db,rsnr_h_b_raw_db,isnr_x_b_db,"
                            "isnr_x_nbd_db,iterations\n";
    char buf[256];
    for (const TrialResult &t : rep.trials) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.10g,%.6f,%.6f,%.6f,%.6f,%zu\n",
                    bsnr_label(t.bsnr_db).c_str(), t.trial, t.sigma_n, t.rsnr_aligned_db,
                    t.rsnr_raw_db, t.isnr_b_db, t.isnr_nbd_db, t.iterations);
      per_trial += buf;
    }
    io::write_text(out_dir / "trials.csv", per_trial);
    io::write_text(out_dir / "report.csv", format_report(rep));
  }
  return rep;
}

} // namespace petbd::cli
