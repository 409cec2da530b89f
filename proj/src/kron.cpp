#include "kronsketch/kron.hpp"

#include <cmath>

namespace kronsketch {

FactorMatrix::FactorMatrix(const SparseRowMatrix& sparse) {
  if (sparse.rows() < 64 && sparse.cols() < 64) {
    dense_ = Matrix(sparse);
  } else {
    sparse_ = true;
    csr_ = sparse;
    csr_.makeCompressed();
  }
}

Index FactorMatrix::nnz() const {
  if (sparse_) return static_cast<Index>(csr_.nonZeros());
  Index count = 0;
  for (Eigen::Index j = 0; j < dense_.size(); ++j)
    if (dense_(j) != 0.0) ++count;
  return count;
}

Vector FactorMatrix::apply(const Vector& x) const {
  require(static_cast<Index>(x.size()) == cols(), "FactorMatrix::apply: dimension mismatch");
  return sparse_ ? Vector(csr_ * x) : Vector(dense_ * x);
}

Vector FactorMatrix::apply_transpose(const Vector& x) const {
  require(static_cast<Index>(x.size()) == rows(),
          "FactorMatrix::apply_transpose: dimension mismatch");
  return sparse_ ? Vector(csr_.transpose() * x) : Vector(dense_.transpose() * x);
}

Matrix FactorMatrix::multiply_left(const Matrix& lhs) const {
  require(static_cast<Index>(lhs.cols()) == rows(), "multiply_left: dimension mismatch");
  return sparse_ ? Matrix(lhs * csr_) : Matrix(lhs * dense_);
}

Matrix FactorMatrix::multiply_right(const Matrix& rhs) const {
  require(static_cast<Index>(rhs.rows()) == cols(), "multiply_right: dimension mismatch");
  return sparse_ ? Matrix(csr_ * rhs) : Matrix(dense_ * rhs);
}

Vector FactorMatrix::row(Index i) const {
  require(i < rows(), "row index out of range");
  if (!sparse_) return dense_.row(static_cast<Eigen::Index>(i)).transpose();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(cols()));
  for (SparseRowMatrix::InnerIterator it(csr_, static_cast<Eigen::Index>(i)); it; ++it)
    out(it.col()) = it.value();
  return out;
}

double FactorMatrix::row_dot(Index i, const Vector& v) const {
  require(i < rows(), "row index out of range");
  require(static_cast<Index>(v.size()) == cols(), "row_dot: dimension mismatch");
  if (!sparse_) return dense_.row(static_cast<Eigen::Index>(i)).dot(v.transpose());
  double acc = 0.0;
  for (SparseRowMatrix::InnerIterator it(csr_, static_cast<Eigen::Index>(i)); it; ++it)
    acc += it.value() * v(it.col());
  return acc;
}

Matrix FactorMatrix::dense() const { return sparse_ ? Matrix(csr_) : dense_; }

KronDesign::KronDesign(std::vector<FactorMatrix> factors, Vector response)
    : KronDesign(std::move(factors)) {
  require(static_cast<Index>(response.size()) == n_,
          "response length must equal the product of factor row counts");
  b_ = std::move(response);
  has_b_ = true;
}

KronDesign::KronDesign(std::vector<FactorMatrix> factors) : factors_(std::move(factors)) {
  require(!factors_.empty(), "need at least one factor");
  row_dims_.reserve(factors_.size());
  col_dims_.reserve(factors_.size());
  for (const auto& f : factors_) {
    require(f.rows() >= 1 && f.cols() >= 1, "factors must be non-empty");
    row_dims_.push_back(f.rows());
    col_dims_.push_back(f.cols());
  }
  n_ = checked_product(row_dims_);
  d_ = checked_product(col_dims_);
}

Index KronDesign::total_nnz() const {
  Index total = 0;
  for (const auto& f : factors_) total += f.nnz();
  return total;
}

Vector KronDesign::kron_row(Index flat) const {
  require(flat < n_, "row index out of range");
  const MultiIndex idx = MultiIndex::unflatten(flat, row_dims_);
  // Progressive outer product, first factor fastest.
  Vector acc = factors_[0].row(idx.coords[0]);
  for (std::size_t l = 1; l < factors_.size(); ++l) {
    const Vector next = factors_[l].row(idx.coords[l]);
    Vector grown(acc.size() * next.size());
    for (Eigen::Index j = 0; j < next.size(); ++j)
      grown.segment(j * acc.size(), acc.size()) = next(j) * acc;
    acc = std::move(grown);
  }
  return acc;
}

double KronDesign::entry(const std::vector<Index>& row_idx,
                         const std::vector<Index>& col_idx) const {
  require(row_idx.size() == factors_.size() && col_idx.size() == factors_.size(),
          "entry: arity mismatch");
  double prod = 1.0;
  for (std::size_t l = 0; l < factors_.size(); ++l) {
    Vector r = factors_[l].row(row_idx[l]);
    require(col_idx[l] < static_cast<Index>(r.size()), "entry: column out of range");
    prod *= r(static_cast<Eigen::Index>(col_idx[l]));
  }
  return prod;
}

namespace {

// Mode-l product: replaces mode size m_l by B.rows(), contracting with B.
// Layout is "first mode fastest", so the tensor viewed with the first l-1
// modes flattened is a stack of (stride x m_l) column-major slabs.
Vector mode_product(const FactorMatrix& B, const Vector& flat,
                    std::vector<Index>& dims, std::size_t l) {
  const Index m_l = dims[l];
  require(B.cols() == m_l, "mode size does not match factor column count");
  Index stride = 1;
  for (std::size_t t = 0; t < l; ++t) stride *= dims[t];
  Index outer = 1;
  for (std::size_t t = l + 1; t < dims.size(); ++t) outer *= dims[t];

  const Index out_m = B.rows();
  Vector out(static_cast<Eigen::Index>(stride * out_m * outer));
  const Matrix Bt = B.dense().transpose();  // m_l x out_m
  for (Index o = 0; o < outer; ++o) {
    Eigen::Map<const Matrix> slab(flat.data() + o * stride * m_l,
                                  static_cast<Eigen::Index>(stride),
                                  static_cast<Eigen::Index>(m_l));
    Eigen::Map<Matrix> dst(out.data() + o * stride * out_m,
                           static_cast<Eigen::Index>(stride),
                           static_cast<Eigen::Index>(out_m));
    dst = slab * Bt;
  }
  dims[l] = out_m;
  return out;
}

// Sparse-aware variant: for large sparse factors contract through CSR.
Vector mode_product_any(const FactorMatrix& B, const Vector& flat,
                        std::vector<Index>& dims, std::size_t l) {
  if (!B.is_sparse()) return mode_product(B, flat, dims, l);
  const Index m_l = dims[l];
  require(B.cols() == m_l, "mode size does not match factor column count");
  Index stride = 1;
  for (std::size_t t = 0; t < l; ++t) stride *= dims[t];
  Index outer = 1;
  for (std::size_t t = l + 1; t < dims.size(); ++t) outer *= dims[t];
  const Index out_m = B.rows();
  Vector out(static_cast<Eigen::Index>(stride * out_m * outer));
  for (Index o = 0; o < outer; ++o) {
    Eigen::Map<const Matrix> slab(flat.data() + o * stride * m_l,
                                  static_cast<Eigen::Index>(stride),
                                  static_cast<Eigen::Index>(m_l));
    Eigen::Map<Matrix> dst(out.data() + o * stride * out_m,
                           static_cast<Eigen::Index>(stride),
                           static_cast<Eigen::Index>(out_m));
    dst = B.multiply_right(Matrix(slab.transpose())).transpose();
  }
  dims[l] = out_m;
  return out;
}

}  // namespace

Vector kron_apply(const std::vector<FactorMatrix>& factors, const Vector& x) {
  require(!factors.empty(), "need at least one factor");
  std::vector<Index> dims;
  dims.reserve(factors.size());
  Index d = 1;
  for (const auto& f : factors) {
    dims.push_back(f.cols());
    d *= f.cols();
  }
  require(static_cast<Index>(x.size()) == d, "kron_apply: dimension mismatch");
  Vector cur = x;
  for (std::size_t l = 0; l < factors.size(); ++l)
    cur = mode_product_any(factors[l], cur, dims, l);
  return cur;
}

Vector kron_apply(const KronDesign& design, const Vector& x) {
  return kron_apply(design.factors(), x);
}

Vector apply_factors_to_tensor(const std::vector<FactorMatrix>& factors,
                               const Vector& tensor,
                               const std::vector<Index>& mode_dims) {
  require(factors.size() == mode_dims.size(), "tensor operator: arity mismatch");
  require(static_cast<Index>(tensor.size()) == checked_product(mode_dims),
          "tensor operator: mode sizes do not match tensor length");
  for (std::size_t l = 0; l < factors.size(); ++l)
    require(factors[l].cols() == mode_dims[l],
            "tensor operator: mode size does not match factor column count");
  return kron_apply(factors, tensor);
}

Vector reshape_vec_to_tensor(const Vector& x, const std::vector<Index>& dims) {
  require(static_cast<Index>(x.size()) == checked_product(dims),
          "reshape: product of dims must equal vector length");
  return x;
}

Vector reshape_tensor_to_vec(const Vector& tensor, const std::vector<Index>& dims) {
  require(static_cast<Index>(tensor.size()) == checked_product(dims),
          "reshape: product of dims must equal tensor size");
  return tensor;
}

double entrywise_lp_norm(const Vector& v, double p) {
  require(p >= 1.0, "p must be >= 1");
  if (p == 2.0) return v.norm();
  if (p == 1.0) return v.lpNorm<1>();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v(i)), p);
  return std::pow(acc, 1.0 / p);
}

}  // namespace kronsketch
