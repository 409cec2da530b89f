#pragma once

#include <memory>
#include <vector>

#include "kronsketch/multi_index.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// One factor A_i of a Kronecker design. Sparse factors are kept in
/// compressed row form; anything below 64x64 falls back to dense storage.
class FactorMatrix {
 public:
  FactorMatrix() = default;
  explicit FactorMatrix(Matrix dense) : dense_(std::move(dense)) {}
  explicit FactorMatrix(const SparseRowMatrix& sparse);

  [[nodiscard]] Index rows() const {
    return sparse_ ? static_cast<Index>(csr_.rows()) : static_cast<Index>(dense_.rows());
  }
  [[nodiscard]] Index cols() const {
    return sparse_ ? static_cast<Index>(csr_.cols()) : static_cast<Index>(dense_.cols());
  }
  [[nodiscard]] Index nnz() const;
  [[nodiscard]] bool is_sparse() const { return sparse_; }

  [[nodiscard]] Vector apply(const Vector& x) const;           // A x
  [[nodiscard]] Vector apply_transpose(const Vector& x) const; // A^T x
  [[nodiscard]] Matrix multiply_left(const Matrix& lhs) const; // lhs * A
  [[nodiscard]] Matrix multiply_right(const Matrix& rhs) const; // A * rhs

  [[nodiscard]] Vector row(Index i) const;
  [[nodiscard]] double row_dot(Index i, const Vector& v) const;

  [[nodiscard]] Matrix dense() const;

 private:
  bool sparse_ = false;
  Matrix dense_;
  SparseRowMatrix csr_;
};

/// Implicit q-factor Kronecker design A = A_1 (x) ... (x) A_q plus response
/// vector b. The full matrix is never materialized here; see oracle.hpp for
/// the brute-force test path. Immutable after construction.
class KronDesign {
 public:
  KronDesign(std::vector<FactorMatrix> factors, Vector response);

  /// Design without a response (low-rank approximation input).
  explicit KronDesign(std::vector<FactorMatrix> factors);

  [[nodiscard]] std::size_t order() const { return factors_.size(); }
  [[nodiscard]] const FactorMatrix& factor(std::size_t i) const { return factors_[i]; }
  [[nodiscard]] const std::vector<FactorMatrix>& factors() const { return factors_; }
  [[nodiscard]] const Vector& response() const { return b_; }
  [[nodiscard]] bool has_response() const { return has_b_; }

  [[nodiscard]] Index rows() const { return n_; }
  [[nodiscard]] Index cols() const { return d_; }
  [[nodiscard]] const std::vector<Index>& row_dims() const { return row_dims_; }
  [[nodiscard]] const std::vector<Index>& col_dims() const { return col_dims_; }

  [[nodiscard]] Index total_nnz() const;

  /// Row `flat` of the full design as a dense length-d vector, assembled
  /// factor-wise in O(d q) time.
  [[nodiscard]] Vector kron_row(Index flat) const;

  /// Entry of the full design at (row multi-index, col multi-index).
  [[nodiscard]] double entry(const std::vector<Index>& row_idx,
                             const std::vector<Index>& col_idx) const;

 private:
  std::vector<FactorMatrix> factors_;
  Vector b_;
  bool has_b_ = false;
  std::vector<Index> row_dims_, col_dims_;
  Index n_ = 0, d_ = 0;
};

/// (A_1 (x) ... (x) A_q) x without materializing the product, via successive
/// mode products. Cost O(sum_i nnz(A_i) * (current flat size / d_i)).
Vector kron_apply(const KronDesign& design, const Vector& x);

/// Same contraction for an arbitrary factor list (used by sketch pipelines
/// where the factors are sketching matrices rather than the design).
Vector kron_apply(const std::vector<FactorMatrix>& factors, const Vector& x);

/// The tensor operator ((B_1,...,B_q), X): entry (i_1,...,i_q) equals
/// sum_{i'} X_{i'} prod_l (B_l)_{i_l, i'_l}. X is flat in the library's
/// vectorization convention; for q=2 this is B_1 X B_2^T.
Vector apply_factors_to_tensor(const std::vector<FactorMatrix>& factors,
                               const Vector& tensor,
                               const std::vector<Index>& mode_dims);

/// reshape is the identity on storage by construction (same flat layout);
/// these helpers exist to check sizes and to document intent at call sites.
Vector reshape_vec_to_tensor(const Vector& x, const std::vector<Index>& dims);
Vector reshape_tensor_to_vec(const Vector& tensor, const std::vector<Index>& dims);

/// Entry-wise l_p norm (p >= 1); p=2 is the Frobenius/Euclidean norm.
double entrywise_lp_norm(const Vector& v, double p);

}  // namespace kronsketch
