#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace kronsketch {

using Index = std::uint64_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

/// Thrown when an oracle call exceeds its configured budget.
struct BudgetExceeded : std::runtime_error {
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when an iterative routine fails to converge within its caps.
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kronsketch
