#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "kronsketch/mmio.hpp"
#include "test_support.hpp"

using namespace kronsketch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ksk_mmio_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("dense array round trip is exact") {
  TempDir dir;
  const Matrix m = ksk_test::random_matrix(7, 3, Seed{11, 0});
  mmio::write_dense(dir.file("m.mtx"), m);
  const Matrix back = mmio::read_dense(dir.file("m.mtx"));
  CHECK((back - m).norm() == 0.0);
}

TEST_CASE("coordinate round trip is exact and keeps sparsity") {
  TempDir dir;
  Matrix m = Matrix::Zero(80, 70);
  m(0, 0) = 1.5;
  m(79, 69) = -2.25;
  m(40, 3) = 1e-17;
  mmio::write_sparse(dir.file("s.mtx"), SparseRowMatrix(m.sparseView()));
  const FactorMatrix f = mmio::read_factor(dir.file("s.mtx"));
  CHECK(f.is_sparse());
  CHECK((f.dense() - m).norm() == 0.0);
}

TEST_CASE("comment lines and the banner are handled") {
  std::istringstream in(
      "%%MatrixMarket matrix coordinate real general\n"
      "% a comment\n"
      "%another\n"
      "2 2 2\n"
      "1 1 3.5\n"
      "% interleaved comment\n"
      "2 2 -1\n");
  const Matrix m = mmio::read_dense(in);
  CHECK(m(0, 0) == 3.5);
  CHECK(m(1, 1) == -1.0);
  CHECK(m(0, 1) == 0.0);
}

TEST_CASE("vectors read from single-column array files") {
  TempDir dir;
  const Vector v = ksk_test::random_vector(12, Seed{3, 9});
  mmio::write_vector(dir.file("v.mtx"), v);
  CHECK((mmio::read_vector(dir.file("v.mtx")) - v).norm() == 0.0);
}

TEST_CASE("malformed headers are rejected") {
  std::istringstream bad_banner("%%NotMarket matrix array real general\n1 1\n0\n");
  CHECK_THROWS(mmio::read_dense(bad_banner));
  std::istringstream bad_field("%%MatrixMarket matrix array complex general\n1 1\n0\n");
  CHECK_THROWS(mmio::read_dense(bad_field));
  std::istringstream bad_entry(
      "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n");
  CHECK_THROWS(mmio::read_dense(bad_entry));
}

TEST_CASE("repeated writes are byte-identical") {
  const Matrix m = ksk_test::random_matrix(5, 4, Seed{21, 1});
  std::ostringstream a, b;
  mmio::write_dense(a, m);
  mmio::write_dense(b, m);
  CHECK(a.str() == b.str());
}
