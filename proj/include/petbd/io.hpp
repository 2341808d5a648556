#pragma once

// PGRID raster files and CSV exports.
//
// A PGRID file is one ASCII header line
//
//     pgrid 1 <rows> <cols> <kind>\n
//
// with kind "f64" or "mask", followed by the row-major payload: little-endian
// IEEE-754 doubles for f64, one byte (0 or 1) per pixel for mask.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "petbd/error.hpp"
#include "petbd/fftconv.hpp"
#include "petbd/grid.hpp"

namespace petbd::io {

enum class GridKind { f64, mask };

struct PgridHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  GridKind kind = GridKind::f64;
};

namespace detail {

inline std::string header_line(std::size_t n, GridKind kind) {
  return "pgrid 1 " + std::to_string(n) + " " + std::to_string(n) + " " +
         (kind == GridKind::f64 ? "f64" : "mask") + "\n";
}

inline void write_bytes(const std::filesystem::path &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void append_le(std::string &out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

inline double read_le(const std::string &in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) {
    bits = (bits << 8) | static_cast<unsigned char>(in[offset + static_cast<std::size_t>(b)]);
  }
  return std::bit_cast<double>(bits);
}

/// Parses the header and returns the payload offset.
inline std::size_t parse_header(const std::string &bytes, const std::string &name,
                                PgridHeader &header) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos || eol > 128) throw IoError(name + ": missing PGRID header");
  std::istringstream line(bytes.substr(0, eol));
  std::string magic;
  std::string kind;
  int version = 0;
  long long rows = -1;
  long long cols = -1;
  if (!(line >> magic >> version >> rows >> cols >> kind) || magic != "pgrid") {
    throw IoError(name + ": malformed PGRID header");
  }
  std::string extra;
  if (line >> extra) throw IoError(name + ": trailing tokens in PGRID header");
  if (version != 1) throw IoError(name + ": unsupported PGRID version " + std::to_string(version));
  if (rows <= 0 || cols <= 0) throw IoError(name + ": non-positive grid size");
  if (rows != cols) throw IoError(name + ": only square grids are supported");
  if (kind == "f64") {
    header.kind = GridKind::f64;
  } else if (kind == "mask") {
    header.kind = GridKind::mask;
  } else {
    throw IoError(name + ": unknown PGRID kind '" + kind + "'");
  }
  header.rows = static_cast<std::size_t>(rows);
  header.cols = static_cast<std::size_t>(cols);
  return eol + 1;
}

} // namespace detail

inline std::string encode(const Image &u) {
  std::string out = detail::header_line(u.side(), GridKind::f64);
  out.reserve(out.size() + 8 * u.size());
  for (double v : u) detail::append_le(out, v);
  return out;
}

inline std::string encode(const RegionMask &m) {
  std::string out = detail::header_line(m.side(), GridKind::mask);
  for (std::size_t k = 0; k < m.size(); ++k) out.push_back(m[k] ? '\1' : '\0');
  return out;
}

inline Image decode_image(const std::string &bytes, const std::string &name = "<buffer>") {
  PgridHeader h;
  const std::size_t offset = detail::parse_header(bytes, name, h);
  if (h.kind != GridKind::f64) throw IoError(name + ": expected an f64 grid, found a mask");
  const std::size_t N = h.rows * h.cols;
  if (bytes.size() - offset != 8 * N) throw IoError(name + ": payload size does not match header");
  std::vector<double> data(N);
  for (std::size_t k = 0; k < N; ++k) data[k] = detail::read_le(bytes, offset + 8 * k);
  try {
    return Image(h.rows, std::move(data));
  } catch (const InvalidArgument &e) {
    throw IoError(name + ": " + e.what());
  }
}

inline RegionMask decode_mask(const std::string &bytes, const std::string &name = "<buffer>") {
  PgridHeader h;
  const std::size_t offset = detail::parse_header(bytes, name, h);
  if (h.kind != GridKind::mask) throw IoError(name + ": expected a mask grid");
  const std::size_t N = h.rows * h.cols;
  if (bytes.size() - offset != N) throw IoError(name + ": payload size does not match header");
  std::vector<std::uint8_t> inside(N);
  for (std::size_t k = 0; k < N; ++k) {
    const auto b = static_cast<unsigned char>(bytes[offset + k]);
    if (b > 1) throw IoError(name + ": mask bytes must be 0 or 1");
    inside[k] = b;
  }
  return RegionMask(h.rows, std::move(inside));
}

inline void write_image(const std::filesystem::path &path, const Image &u) {
  detail::write_bytes(path, encode(u));
}
inline void write_psf(const std::filesystem::path &path, const Psf &h) { write_image(path, h.image()); }
inline void write_mask(const std::filesystem::path &path, const RegionMask &m) {
  detail::write_bytes(path, encode(m));
}

inline Image read_image(const std::filesystem::path &path) {
  return decode_image(detail::read_bytes(path), path.string());
}
inline Psf read_psf(const std::filesystem::path &path) { return Psf(read_image(path)); }
inline RegionMask read_mask(const std::filesystem::path &path) {
  return decode_mask(detail::read_bytes(path), path.string());
}

/// Human-readable grid, one row per line, full round-trip precision.
inline std::string to_csv(const Image &u) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", u(i, j));
      if (j) out.push_back(',');
      out += buf;
    }
    out.push_back('\n');
  }
  return out;
}

inline std::string to_csv(const RegionMask &m) {
  std::string out;
  for (std::size_t i = 0; i < m.side(); ++i) {
    for (std::size_t j = 0; j < m.side(); ++j) {
      if (j) out.push_back(',');
      out.push_back(m(i, j) ? '1' : '0');
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  detail::write_bytes(path, text);
}

} // namespace petbd::io
