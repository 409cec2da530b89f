#include "kronsketch/mmio.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace kronsketch::mmio {

namespace {

struct Header {
  bool coordinate = false;
};

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Header parse_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("matrix market: empty stream");
  std::istringstream hs(lowercase(line));
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix")
    throw std::runtime_error("matrix market: bad banner: " + line);
  if (field != "real" && field != "integer" && field != "double")
    throw std::runtime_error("matrix market: only real matrices supported");
  if (symmetry != "general")
    throw std::runtime_error("matrix market: only general symmetry supported");
  Header h;
  if (format == "coordinate") {
    h.coordinate = true;
  } else if (format != "array") {
    throw std::runtime_error("matrix market: unknown format: " + format);
  }
  return h;
}

std::string next_data_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == line.size() || line[i] == '%') continue;
    return line;
  }
  throw std::runtime_error("matrix market: unexpected end of stream");
}

void format_value(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

Matrix read_dense(std::istream& in) {
  const Header h = parse_header(in);
  std::istringstream sz(next_data_line(in));
  long rows = 0, cols = 0;
  sz >> rows >> cols;
  if (rows <= 0 || cols <= 0) throw std::runtime_error("matrix market: bad dimensions");
  Matrix m = Matrix::Zero(rows, cols);
  if (h.coordinate) {
    long nnz = 0;
    sz >> nnz;
    if (nnz < 0) throw std::runtime_error("matrix market: bad nnz");
    for (long k = 0; k < nnz; ++k) {
      std::istringstream es(next_data_line(in));
      long i = 0, j = 0;
      double v = 0.0;
      es >> i >> j >> v;
      if (i < 1 || i > rows || j < 1 || j > cols)
        throw std::runtime_error("matrix market: entry out of range");
      m(i - 1, j - 1) = v;
    }
  } else {
    for (long j = 0; j < cols; ++j)
      for (long i = 0; i < rows; ++i) {
        std::istringstream es(next_data_line(in));
        double v = 0.0;
        es >> v;
        m(i, j) = v;
      }
  }
  return m;
}

Matrix read_dense(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dense(in);
}

FactorMatrix read_factor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  // Peek at the header to preserve sparsity of coordinate inputs.
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  const bool coord = lowercase(first).find("coordinate") != std::string::npos;
  Matrix m = read_dense(in);
  if (coord && (m.rows() >= 64 || m.cols() >= 64))
    return FactorMatrix(SparseRowMatrix(m.sparseView()));
  return FactorMatrix(std::move(m));
}

Vector read_vector(const std::string& path) {
  Matrix m = read_dense(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw std::runtime_error(path + ": expected a vector (one row or column)");
}

void write_dense(std::ostream& out, const Matrix& m) {
  std::string buf;
  buf += "%%MatrixMarket matrix array real general\n";
  buf += "% generated by kronsketch\n";
  buf += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      format_value(buf, m(i, j));
      buf += '\n';
    }
  out << buf;
}

void write_dense(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dense(out, m);
}

void write_sparse(std::ostream& out, const SparseRowMatrix& m) {
  std::string buf;
  buf += "%%MatrixMarket matrix coordinate real general\n";
  buf += "% generated by kronsketch\n";
  buf += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " +
         std::to_string(m.nonZeros()) + "\n";
  for (Eigen::Index i = 0; i < m.outerSize(); ++i)
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
      buf += std::to_string(it.row() + 1) + " " + std::to_string(it.col() + 1) + " ";
      format_value(buf, it.value());
      buf += '\n';
    }
  out << buf;
}

void write_sparse(const std::string& path, const SparseRowMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_sparse(out, m);
}

void write_vector(const std::string& path, const Vector& v) {
  write_dense(path, Matrix(v));
}

}  // namespace kronsketch::mmio
