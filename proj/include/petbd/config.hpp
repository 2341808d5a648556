#pragma once

// JSON run configuration. Every section and key is optional; missing values
// take the defaults below, unknown keys are rejected.
//
// {
//   "phantom":    { "n", "background", "omega_disk_count", "omega_erosion",
//                   "psf_sigma", "disks": [ { "row", "col", "radius", "intensity" } ] },
//   "solver":     { "max_outer", "inner_x_iters", "inner_h_iters", "lambda_x",
//                   "lambda_h", "objective_tol", "inner_tol", "h_penalty_scale",
//                   "psf_support" },
//   "rho":        { "gamma", "c", "min_rho", "max_rho", "initial", "sigma" },
//   "experiment": { "bsnr_db": [..] (numbers or "inf"), "trials", "seed",
//                   "independent_nbd_observation" },
//   "output":     { "dir", "csv" }
// }

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "petbd/error.hpp"
#include "petbd/phantom.hpp"
#include "petbd/solver.hpp"

namespace petbd {

struct RunConfig {
  PhantomSpec phantom = PhantomSpec::standard();
  double psf_sigma = 1.3;
  BdConfig solver;
  std::vector<double> bsnr_db{40.0, 30.0, 20.0, 10.0};
  std::size_t trials = 10;
  std::uint64_t seed = 20170101;
  bool independent_nbd_observation = false;
  std::string out_dir;
  bool csv = false;

  void validate() const {
    try {
      solver.validate();
      detail::validate(phantom);
    } catch (const InvalidArgument &e) {
      throw ConfigError(e.what());
    }
    if (!(psf_sigma > 0.0)) throw ConfigError("phantom.psf_sigma must be positive");
    if (trials < 1) throw ConfigError("experiment.trials must be at least 1");
    if (bsnr_db.empty()) throw ConfigError("experiment.bsnr_db must not be empty");
    for (double b : bsnr_db) {
      if (std::isnan(b) || (std::isinf(b) && b < 0)) {
        throw ConfigError("experiment.bsnr_db entries must be finite or \"inf\"");
      }
    }
    if (solver.psf_support && *solver.psf_support > phantom.n) {
      throw ConfigError("solver.psf_support exceeds the grid side");
    }
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json &obj, const std::string &section,
                           std::initializer_list<const char *> allowed) {
  if (!obj.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto &[key, value] : obj.items()) {
    bool ok = false;
    for (const char *a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read_key(const json &obj, const char *key, const std::string &section, T &out) {
  if (!obj.contains(key)) return;
  try {
    const json &v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(section + "." + key + " must be a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) {
        throw ConfigError(section + "." + key + " must be a non-negative integer");
      }
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError(section + "." + key + " must be a number");
    } else {
      if (!v.is_string()) throw ConfigError(section + "." + key + " must be a string");
    }
    out = v.get<T>();
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_optional(const json &obj, const char *key, const std::string &section,
                   std::optional<T> &out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read_key(obj, key, section, v);
  out = v;
}

inline double bsnr_from_json(const json &v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "+inf")) {
    return std::numeric_limits<double>::infinity();
  }
  throw ConfigError("experiment.bsnr_db entries must be numbers or \"inf\"");
}

} // namespace detail

inline RunConfig parse_config(const nlohmann::json &doc) {
  using detail::read_key;
  using detail::read_optional;
  RunConfig cfg;
  detail::reject_unknown(doc, "config", {"phantom", "solver", "rho", "experiment", "output"});

  if (doc.contains("phantom")) {
    const auto &p = doc.at("phantom");
    detail::reject_unknown(p, "phantom", {"n", "background", "omega_disk_count", "omega_erosion",
                                          "psf_sigma", "disks"});
    read_key(p, "n", "phantom", cfg.phantom.n);
    read_key(p, "background", "phantom", cfg.phantom.background);
    read_key(p, "omega_disk_count", "phantom", cfg.phantom.omega_disk_count);
    read_key(p, "psf_sigma", "phantom", cfg.psf_sigma);
    if (p.contains("omega_erosion")) {
      std::string mode;
      read_key(p, "omega_erosion", "phantom", mode);
      if (mode == "forward") {
        cfg.phantom.erosion = OmegaErosion::forward;
      } else if (mode == "full") {
        cfg.phantom.erosion = OmegaErosion::full;
      } else {
        throw ConfigError("phantom.omega_erosion must be \"forward\" or \"full\"");
      }
    }
    if (p.contains("disks")) {
      const auto &disks = p.at("disks");
      if (!disks.is_array()) throw ConfigError("phantom.disks must be an array");
      cfg.phantom.disks.clear();
      for (const auto &d : disks) {
        detail::reject_unknown(d, "phantom.disks[]", {"row", "col", "radius", "intensity"});
        Disk disk;
        read_key(d, "row", "phantom.disks[]", disk.row);
        read_key(d, "col", "phantom.disks[]", disk.col);
        read_key(d, "radius", "phantom.disks[]", disk.radius);
        read_key(d, "intensity", "phantom.disks[]", disk.intensity);
        cfg.phantom.disks.push_back(disk);
      }
    }
  }

  if (doc.contains("solver")) {
    const auto &s = doc.at("solver");
    detail::reject_unknown(s, "solver", {"max_outer", "inner_x_iters", "inner_h_iters",
                                         "lambda_x", "lambda_h", "objective_tol", "inner_tol",
                                         "h_penalty_scale", "psf_support"});
    read_key(s, "max_outer", "solver", cfg.solver.max_outer);
    read_key(s, "inner_x_iters", "solver", cfg.solver.inner_x_iters);
    read_key(s, "inner_h_iters", "solver", cfg.solver.inner_h_iters);
    read_key(s, "lambda_x", "solver", cfg.solver.lambda_x);
    read_key(s, "lambda_h", "solver", cfg.solver.lambda_h);
    read_key(s, "objective_tol", "solver", cfg.solver.objective_tol);
    read_key(s, "inner_tol", "solver", cfg.solver.inner_tol);
    read_key(s, "h_penalty_scale", "solver", cfg.solver.h_penalty_scale);
    read_optional(s, "psf_support", "solver", cfg.solver.psf_support);
  }

  if (doc.contains("rho")) {
    const auto &r = doc.at("rho");
    detail::reject_unknown(r, "rho", {"gamma", "c", "min_rho", "max_rho", "initial", "sigma"});
    read_key(r, "gamma", "rho", cfg.solver.rho_gamma);
    read_key(r, "c", "rho", cfg.solver.epsilon_c);
    read_key(r, "min_rho", "rho", cfg.solver.min_rho);
    read_key(r, "max_rho", "rho", cfg.solver.max_rho);
    read_optional(r, "initial", "rho", cfg.solver.rho_initial);
    read_optional(r, "sigma", "rho", cfg.solver.sigma);
  }

  if (doc.contains("experiment")) {
    const auto &e = doc.at("experiment");
    detail::reject_unknown(e, "experiment",
                           {"bsnr_db", "trials", "seed", "independent_nbd_observation"});
    if (e.contains("bsnr_db")) {
      const auto &list = e.at("bsnr_db");
      if (!list.is_array()) throw ConfigError("experiment.bsnr_db must be an array");
      cfg.bsnr_db.clear();
      for (const auto &v : list) cfg.bsnr_db.push_back(detail::bsnr_from_json(v));
    }
    read_key(e, "trials", "experiment", cfg.trials);
    read_key(e, "seed", "experiment", cfg.seed);
    read_key(e, "independent_nbd_observation", "experiment", cfg.independent_nbd_observation);
  }

  if (doc.contains("output")) {
    const auto &o = doc.at("output");
    detail::reject_unknown(o, "output", {"dir", "csv"});
    read_key(o, "dir", "output", cfg.out_dir);
    read_key(o, "csv", "output", cfg.csv);
  }

  cfg.validate();
  return cfg;
}

inline RunConfig parse_config_text(const std::string &text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

/// The configuration as a complete JSON document (all keys explicit).
inline nlohmann::json to_json(const RunConfig &cfg) {
  nlohmann::json disks = nlohmann::json::array();
  for (const Disk &d : cfg.phantom.disks) {
    disks.push_back({{"row", d.row}, {"col", d.col}, {"radius", d.radius}, {"intensity", d.intensity}});
  }
  nlohmann::json bsnr = nlohmann::json::array();
  for (double b : cfg.bsnr_db) {
    if (std::isinf(b)) {
      bsnr.push_back("inf");
    } else {
      bsnr.push_back(b);
    }
  }
  const BdConfig &s = cfg.solver;
  return {
      {"phantom",
       {{"n", cfg.phantom.n},
        {"background", cfg.phantom.background},
        {"omega_disk_count", cfg.phantom.omega_disk_count},
        {"omega_erosion", cfg.phantom.erosion == OmegaErosion::forward ? "forward" : "full"},
        {"psf_sigma", cfg.psf_sigma},
        {"disks", disks}}},
      {"solver",
       {{"max_outer", s.max_outer},
        {"inner_x_iters", s.inner_x_iters},
        {"inner_h_iters", s.inner_h_iters},
        {"lambda_x", s.lambda_x},
        {"lambda_h", s.lambda_h},
        {"objective_tol", s.objective_tol},
        {"inner_tol", s.inner_tol},
        {"h_penalty_scale", s.h_penalty_scale},
        {"psf_support", s.psf_support ? nlohmann::json(*s.psf_support) : nlohmann::json(nullptr)}}},
      {"rho",
       {{"gamma", s.rho_gamma},
        {"c", s.epsilon_c},
        {"min_rho", s.min_rho},
        {"max_rho", s.max_rho},
        {"initial", s.rho_initial ? nlohmann::json(*s.rho_initial) : nlohmann::json(nullptr)},
        {"sigma", s.sigma ? nlohmann::json(*s.sigma) : nlohmann::json(nullptr)}}},
      {"experiment",
       {{"bsnr_db", bsnr},
        {"trials", cfg.trials},
        {"seed", cfg.seed},
        {"independent_nbd_observation", cfg.independent_nbd_observation}}},
      {"output", {{"dir", cfg.out_dir}, {"csv", cfg.csv}}},
  };
}

} // namespace petbd
