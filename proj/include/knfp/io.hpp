#pragma once

#include <string>
#include <vector>

#include "knfp/grid.hpp"

namespace knfp::io {

// Field snapshot: fixed 64-byte little-endian header (magic "KNFP", u32
// version, u32 dim, u32 kinetic, u32 nx, u32 nv, f64 box_x, f64 box_v, zero
// padding) followed by row-major f64 samples, position axes outermost.
void write_snapshot(const std::string& path, const PhaseField& f);
PhaseField read_snapshot(const std::string& path);

// Particle dump: same header discipline (magic "KNPC"), then N*(per-particle
// doubles) row-major.
void write_particles(const std::string& path, int dim, bool second_order,
                     const std::vector<double>& flat, std::size_t count);
std::vector<double> read_particles(const std::string& path, int& dim,
                                   bool& second_order, std::size_t& count);

// Write text atomically: temp file in the target directory, then rename.
void write_text_atomic(const std::string& path, const std::string& content);

std::string csv_line(const std::vector<double>& row);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  void save(const std::string& path) const;
};

}  // namespace knfp::io
