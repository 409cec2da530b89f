#pragma once

#include "kronsketch/kron.hpp"
#include "kronsketch/rng.hpp"
#include "kronsketch/stable.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// Dense p-stable transform: S = scale * C with C_{ij} i.i.d. from D_p.
class PStableDense {
 public:
  PStableDense(Index rows, Index cols, double p, Seed seed, double scale = 1.0);

  [[nodiscard]] const Matrix& matrix() const { return s_; }
  [[nodiscard]] Matrix apply(const Matrix& a) const { return s_ * a; }
  [[nodiscard]] Vector apply(const Vector& x) const { return s_ * x; }

 private:
  Matrix s_;
};

/// Sparse p-stable transform: one +-D_p entry per column, bucketed uniformly
/// over the m rows; applying to A costs O(nnz(A)).
class PStableSparse {
 public:
  PStableSparse(Index rows, Index cols, double p, Seed seed, double scale = 1.0);

  [[nodiscard]] Index rows() const { return m_; }
  [[nodiscard]] Index cols() const { return n_; }
  [[nodiscard]] Index bucket(Index j) const { return buckets_[j]; }
  [[nodiscard]] double value(Index j) const { return values_[j]; }

  [[nodiscard]] Vector apply(const Vector& x) const;
  [[nodiscard]] Matrix apply_to_rows(const Matrix& a) const;
  [[nodiscard]] Matrix apply_to_rows(const FactorMatrix& a) const;

 private:
  Index m_, n_;
  std::vector<Index> buckets_;
  std::vector<double> values_;
};

/// Diagonal of 1/u_i^{1/p} for i.i.d. standard exponentials u_i.
class ExponentialScaler {
 public:
  ExponentialScaler(Index n, double p, Seed seed);

  [[nodiscard]] Index size() const { return static_cast<Index>(scales_.size()); }
  [[nodiscard]] double scale(Index i) const { return scales_[static_cast<Eigen::Index>(i)]; }
  [[nodiscard]] const Vector& scales() const { return scales_; }

 private:
  Vector scales_;
};

/// argmax_i |x_i| / u_i^{1/p}. Over the randomness of the scaler this is an
/// exact l_p sample: Pr[i] = |x_i|^p / ||x||_p^p. Rejects x = 0.
Index exp_argmax_sample(const ExponentialScaler& scaler, const Vector& x);

}  // namespace kronsketch
