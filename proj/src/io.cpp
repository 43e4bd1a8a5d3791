#include "knfp/io.hpp"

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace knfp::io {
namespace {

constexpr std::size_t kHeaderBytes = 64;

static_assert(sizeof(double) == 8, "f64 storage assumed");

void put_u32(char* p, std::uint32_t v) { std::memcpy(p, &v, 4); }
void put_f64(char* p, double v) { std::memcpy(p, &v, 8); }
std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
double get_f64(const char* p) {
  double v;
  std::memcpy(&v, p, 8);
  return v;
}

void check_little_endian() {
  const std::uint32_t probe = 1;
  char c;
  std::memcpy(&c, &probe, 1);
  require(c == 1, "io: snapshot format requires a little-endian host");
}

std::string temp_name(const std::string& path) {
  return path + ".tmp-" + std::to_string(::getpid());
}

void commit(const std::string& tmp, const std::string& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("io: rename failed for " + path + ": " + ec.message());
  }
}

}  // namespace

void write_snapshot(const std::string& path, const PhaseField& f) {
  require(!f.empty(), "write_snapshot: empty field");
  check_little_endian();
  const PhaseGrid& g = f.grid();
  char h[kHeaderBytes] = {};
  std::memcpy(h, "KNFP", 4);
  put_u32(h + 4, 1u);
  put_u32(h + 8, static_cast<std::uint32_t>(g.dim));
  put_u32(h + 12, g.kinetic ? 1u : 0u);
  put_u32(h + 16, static_cast<std::uint32_t>(g.nx));
  put_u32(h + 20, static_cast<std::uint32_t>(g.nv));
  put_f64(h + 24, g.box_x);
  put_f64(h + 32, g.box_v);

  const std::string tmp = temp_name(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "write_snapshot: cannot open " + tmp);
    out.write(h, kHeaderBytes);
    const std::vector<double>& v = f.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    require(out.good(), "write_snapshot: write failed for " + tmp);
  }
  commit(tmp, path);
}

PhaseField read_snapshot(const std::string& path) {
  check_little_endian();
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_snapshot: cannot open " + path);
  char h[kHeaderBytes];
  in.read(h, kHeaderBytes);
  require(in.gcount() == static_cast<std::streamsize>(kHeaderBytes),
          "read_snapshot: truncated header in " + path);
  require(std::memcmp(h, "KNFP", 4) == 0, "read_snapshot: bad magic in " + path);
  require(get_u32(h + 4) == 1u, "read_snapshot: unsupported version in " + path);
  const int dim = static_cast<int>(get_u32(h + 8));
  const bool kinetic = get_u32(h + 12) != 0;
  const int nx = static_cast<int>(get_u32(h + 16));
  const int nv = static_cast<int>(get_u32(h + 20));
  const double box_x = get_f64(h + 24);
  const double box_v = get_f64(h + 32);
  GridPtr g = make_grid(dim, kinetic, nx, box_x, nv, box_v);
  std::vector<double> v(g->size);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(v.size() * sizeof(double)),
          "read_snapshot: truncated payload in " + path);
  return PhaseField::from_values(std::move(g), std::move(v));
}

void write_particles(const std::string& path, int dim, bool second_order,
                     const std::vector<double>& flat, std::size_t count) {
  check_little_endian();
  const std::size_t per = static_cast<std::size_t>(dim) * (second_order ? 2 : 1);
  require(count * per == flat.size(), "write_particles: size mismatch");
  char h[kHeaderBytes] = {};
  std::memcpy(h, "KNPC", 4);
  put_u32(h + 4, 1u);
  put_u32(h + 8, static_cast<std::uint32_t>(dim));
  put_u32(h + 12, second_order ? 1u : 0u);
  put_u32(h + 16, static_cast<std::uint32_t>(count));
  const std::string tmp = temp_name(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), "write_particles: cannot open " + tmp);
    out.write(h, kHeaderBytes);
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
    require(out.good(), "write_particles: write failed for " + tmp);
  }
  commit(tmp, path);
}

std::vector<double> read_particles(const std::string& path, int& dim,
                                   bool& second_order, std::size_t& count) {
  check_little_endian();
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_particles: cannot open " + path);
  char h[kHeaderBytes];
  in.read(h, kHeaderBytes);
  require(in.gcount() == static_cast<std::streamsize>(kHeaderBytes) &&
              std::memcmp(h, "KNPC", 4) == 0,
          "read_particles: bad header in " + path);
  dim = static_cast<int>(get_u32(h + 8));
  second_order = get_u32(h + 12) != 0;
  count = get_u32(h + 16);
  const std::size_t per = static_cast<std::size_t>(dim) * (second_order ? 2 : 1);
  std::vector<double> flat(count * per);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(flat.size() * sizeof(double)),
          "read_particles: truncated payload in " + path);
  return flat;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = temp_name(path);
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(out.good(), "write_text_atomic: cannot open " + tmp);
    out << content;
    require(out.good(), "write_text_atomic: write failed for " + tmp);
  }
  commit(tmp, path);
}

std::string csv_line(const std::vector<double>& row) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << row[i];
  }
  return os.str();
}

void CsvTable::save(const std::string& path) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) os << ',';
    os << header[i];
  }
  os << '\n';
  for (const auto& r : rows) os << csv_line(r) << '\n';
  write_text_atomic(path, os.str());
}

}  // namespace knfp::io
