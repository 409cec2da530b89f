#pragma once

#include <iosfwd>
#include <string>

#include "kronsketch/kron.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch::mmio {

/// Matrix Market text I/O. Readers accept both "array" (dense, column-major
/// values) and "coordinate" (1-based triplets) real general matrices;
/// comment lines start with '%'. Writers emit value fields with %.17g so a
/// write/read round trip is exact and repeated writes are byte-identical.

Matrix read_dense(std::istream& in);
Matrix read_dense(const std::string& path);

FactorMatrix read_factor(const std::string& path);
Vector read_vector(const std::string& path);

void write_dense(std::ostream& out, const Matrix& m);
void write_dense(const std::string& path, const Matrix& m);
void write_sparse(std::ostream& out, const SparseRowMatrix& m);
void write_sparse(const std::string& path, const SparseRowMatrix& m);
void write_vector(const std::string& path, const Vector& v);

}  // namespace kronsketch::mmio
