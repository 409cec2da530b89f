#include "kronsketch/sketch_ops.hpp"

#include <cmath>

namespace kronsketch {

PStableDense::PStableDense(Index rows, Index cols, double p, Seed seed, double scale) {
  require(rows >= 1 && cols >= 1, "dense p-stable transform dims must be positive");
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  Rng rng(seed);
  s_.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < s_.rows(); ++i)
    for (Eigen::Index j = 0; j < s_.cols(); ++j) s_(i, j) = scale * stable_draw(rng, p);
}

PStableSparse::PStableSparse(Index rows, Index cols, double p, Seed seed, double scale)
    : m_(rows), n_(cols) {
  require(rows >= 1 && cols >= 1, "sparse p-stable transform dims must be positive");
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  Rng rng(seed);
  buckets_.resize(cols);
  values_.resize(cols);
  for (Index j = 0; j < cols; ++j) {
    buckets_[j] = rng.below(rows);
    values_[j] = scale * stable_draw(rng, p);
  }
}

Vector PStableSparse::apply(const Vector& x) const {
  require(static_cast<Index>(x.size()) == n_, "sparse p-stable apply: dimension mismatch");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m_));
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) == 0.0) continue;
    out(static_cast<Eigen::Index>(buckets_[j])) += values_[j] * x(j);
  }
  return out;
}

Matrix PStableSparse::apply_to_rows(const Matrix& a) const {
  require(static_cast<Index>(a.rows()) == n_, "sparse p-stable apply: dimension mismatch");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(m_), a.cols());
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    out.row(static_cast<Eigen::Index>(buckets_[j])) += values_[j] * a.row(j);
  return out;
}

Matrix PStableSparse::apply_to_rows(const FactorMatrix& a) const {
  if (!a.is_sparse()) return apply_to_rows(a.dense());
  require(a.rows() == n_, "sparse p-stable apply: dimension mismatch");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(a.cols()));
  const Matrix dense = a.dense();  // factor rows iterated once, O(nnz)
  for (Eigen::Index j = 0; j < dense.rows(); ++j)
    out.row(static_cast<Eigen::Index>(buckets_[j])) += values_[j] * dense.row(j);
  return out;
}

ExponentialScaler::ExponentialScaler(Index n, double p, Seed seed) {
  require(n >= 1, "exponential scaler needs n >= 1");
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  Rng rng(seed);
  scales_.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < scales_.size(); ++i)
    scales_(i) = 1.0 / std::pow(rng.exponential(), 1.0 / p);
}

Index exp_argmax_sample(const ExponentialScaler& scaler, const Vector& x) {
  require(static_cast<Index>(x.size()) == scaler.size(),
          "exp_argmax_sample: dimension mismatch");
  require(x.lpNorm<Eigen::Infinity>() > 0.0, "exp_argmax_sample: zero vector");
  Index best = 0;
  double best_val = -1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = std::abs(x(i)) * scaler.scale(static_cast<Index>(i));
    if (v > best_val) {
      best_val = v;
      best = static_cast<Index>(i);
    }
  }
  return best;
}

}  // namespace kronsketch
