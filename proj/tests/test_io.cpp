#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "knfp/grid.hpp"
#include "knfp/io.hpp"

using namespace knfp;

TEST_CASE("snapshot round trip preserves grid and samples") {
  GridPtr g = make_grid(1, true, 16, 2.5, 8, 4.0);
  PhaseField f = random_band_limited(g, 5, 42);
  const std::string path = "snap_test.knfp";
  io::write_snapshot(path, f);
  PhaseField back = io::read_snapshot(path);
  CHECK(back.grid().same(*g));
  const auto& a = f.values();
  const auto& b = back.values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(std::filesystem::file_size(path) == 64 + a.size() * 8);
  std::filesystem::remove(path);
}

TEST_CASE("snapshot reader rejects corrupt input") {
  const std::string path = "snap_bad.knfp";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
    std::vector<char> pad(60 + 16, 0);
    out.write(pad.data(), static_cast<std::streamsize>(pad.size()));
  }
  CHECK_THROWS(io::read_snapshot(path));
  std::filesystem::remove(path);
  CHECK_THROWS(io::read_snapshot("does_not_exist.knfp"));
}

TEST_CASE("truncated payload is detected") {
  GridPtr g = make_grid(1, false, 16, 1.0);
  PhaseField f = PhaseField::zero(g);
  const std::string path = "snap_trunc.knfp";
  io::write_snapshot(path, f);
  std::filesystem::resize_file(path, 64 + 8 * 8);
  CHECK_THROWS(io::read_snapshot(path));
  std::filesystem::remove(path);
}

TEST_CASE("particle dump round trip") {
  std::vector<double> flat = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  io::write_particles("par_test.knpc", 2, true, flat, 2);
  int dim = 0;
  bool second = false;
  std::size_t count = 0;
  auto back = io::read_particles("par_test.knpc", dim, second, count);
  CHECK(dim == 2);
  CHECK(second);
  CHECK(count == 2);
  CHECK(back == flat);
  std::filesystem::remove("par_test.knpc");
}

TEST_CASE("atomic text write leaves no temp files") {
  io::write_text_atomic("atomic_test.csv", "a,b\n1,2\n");
  std::ifstream in("atomic_test.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "a,b");
  int stray = 0;
  for (const auto& e : std::filesystem::directory_iterator(".")) {
    if (e.path().filename().string().find("atomic_test.csv.tmp") != std::string::npos)
      ++stray;
  }
  CHECK(stray == 0);
  std::filesystem::remove("atomic_test.csv");
}
