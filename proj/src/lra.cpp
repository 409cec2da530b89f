#include "kronsketch/lra.hpp"

#include <cmath>

namespace kronsketch {

namespace {

// Dense Kronecker assembly in the library's convention (first factor's
// index fastest in both rows and columns).
Matrix kron_dense(const std::vector<Matrix>& mats) {
  Matrix acc = mats[0];
  for (std::size_t l = 1; l < mats.size(); ++l) {
    const Matrix& next = mats[l];
    Matrix grown(acc.rows() * next.rows(), acc.cols() * next.cols());
    for (Eigen::Index i = 0; i < next.rows(); ++i)
      for (Eigen::Index j = 0; j < next.cols(); ++j)
        grown.block(i * acc.rows(), j * acc.cols(), acc.rows(), acc.cols()) =
            next(i, j) * acc;
    acc = std::move(grown);
  }
  return acc;
}

}  // namespace

FactorMatrix count_sketch_factor(const CountSketch& s) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(s.cols());
  for (Index j = 0; j < s.cols(); ++j)
    trips.emplace_back(static_cast<int>(s.bucket(j)), static_cast<int>(j), s.sign(j));
  SparseRowMatrix m(static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.cols()));
  m.setFromTriplets(trips.begin(), trips.end());
  return FactorMatrix(m);
}

double LraFactors::residual_frobenius() const {
  double a_sq = 1.0;
  std::vector<FactorMatrix> grams;
  grams.reserve(factors.size());
  for (const auto& f : factors) {
    const Matrix d = f.dense();
    a_sq *= d.squaredNorm();
    grams.emplace_back(Matrix(d.transpose() * d));
  }
  double proj_sq = 0.0;
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const Vector ur = u.row(r).transpose();
    proj_sq += ur.dot(kron_apply(grams, ur));
  }
  return std::sqrt(std::max(0.0, a_sq - proj_sq));
}

Matrix LraFactors::materialize(Index max_entries) const {
  KronDesign design{factors};
  require(design.rows() * design.cols() <= max_entries,
          "LraFactors::materialize exceeds the entry cap");
  Matrix b(static_cast<Eigen::Index>(design.rows()), static_cast<Eigen::Index>(design.cols()));
  const Matrix projector = u.transpose() * u;
  for (Index row = 0; row < design.rows(); ++row)
    b.row(static_cast<Eigen::Index>(row)) =
        design.kron_row(row).transpose() * projector;
  return b;
}

LraFactors kron_lra(const KronDesign& design, Index k, double eps, Seed seed,
                    const LraConfig& cfg) {
  require(k >= 1 && k <= design.cols(), "rank k must lie in [1, d]");
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  const double q = static_cast<double>(design.order());

  std::vector<Matrix> sketched;
  Index total_rows = 1;
  for (std::size_t i = 0; i < design.order(); ++i) {
    const Index n_i = design.factor(i).rows();
    const Index k_i = std::min<Index>(
        n_i, std::max<Index>(k + 2,
                             static_cast<Index>(std::ceil(cfg.sketch_const * q *
                                                          static_cast<double>(k * k) /
                                                          (eps * eps)))));
    total_rows *= k_i;
    if (total_rows > cfg.max_sketch_rows)
      throw std::invalid_argument(
          "kron_lra: sketch of " + std::to_string(total_rows) +
          "+ rows exceeds the cap; reduce k or raise eps");
    if (k_i >= n_i) {
      sketched.push_back(design.factor(i).dense());
    } else {
      CountSketch s(k_i, n_i, seed.derived(0x15a + i));
      sketched.push_back(design.factor(i).is_sparse()
                             ? s.apply_to_rows(SparseRowMatrix(
                                   design.factor(i).dense().sparseView()))
                             : s.apply_to_rows(design.factor(i).dense()));
    }
  }

  const Matrix m = kron_dense(sketched);
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinV);
  const double tol = Eigen::NumTraits<double>::epsilon() *
                     static_cast<double>(std::max(m.rows(), m.cols())) *
                     (svd.singularValues().size() ? svd.singularValues()(0) : 0.0);
  Index rank = 0;
  for (Eigen::Index t = 0; t < svd.singularValues().size(); ++t)
    if (svd.singularValues()(t) > tol) ++rank;

  LraFactors out;
  out.factors = design.factors();
  out.k = std::min<Index>(k, std::max<Index>(rank, 1));
  out.truncated = out.k < k;
  out.u = svd.matrixV().leftCols(static_cast<Eigen::Index>(out.k)).transpose();
  return out;
}

Matrix rearrange_for_trank(const Matrix& a, Index n) {
  const Eigen::Index nn = static_cast<Eigen::Index>(n);
  require(a.rows() == nn * nn && a.cols() == nn * nn,
          "rearrange_for_trank: matrix must be n^2 x n^2");
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index j2 = 0; j2 < nn; ++j2)
    for (Eigen::Index j1 = 0; j1 < nn; ++j1)
      for (Eigen::Index i2 = 0; i2 < nn; ++i2)
        for (Eigen::Index i1 = 0; i1 < nn; ++i1)
          out(i1 + nn * j1, i2 + nn * j2) = a(i1 + nn * i2, j1 + nn * j2);
  return out;
}

Matrix TrankFactors::materialize() const {
  require(!u.empty(), "empty trank factorization");
  const Eigen::Index n = u[0].rows();
  Matrix acc = Matrix::Zero(n * n, n * n);
  for (std::size_t t = 0; t < u.size(); ++t) {
    std::vector<Matrix> pair{u[t], v[t]};
    acc += kron_dense(pair);
  }
  return acc;
}

TrankFactors trank_approx(const Matrix& a, Index k, bool sketched, Seed seed, double eps) {
  const Eigen::Index nn2 = a.rows();
  const Index n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(nn2))));
  require(static_cast<Eigen::Index>(n) * static_cast<Eigen::Index>(n) == nn2 &&
              a.cols() == nn2,
          "trank_approx: dimensions must be perfect squares of the same n");
  require(k >= 1 && k <= static_cast<Index>(nn2), "trank k out of range");

  const Matrix rearranged = rearrange_for_trank(a, n);
  Matrix target = rearranged;
  if (sketched) {
    const Index rows = std::min<Index>(
        static_cast<Index>(nn2),
        std::max<Index>(k + 2, static_cast<Index>(std::ceil(
                                   4.0 * static_cast<double>(k * k) / (eps * eps)))));
    if (rows < static_cast<Index>(nn2)) {
      CountSketch s(rows, static_cast<Index>(nn2), seed.derived(0x7a4));
      const Matrix sm = s.apply_to_rows(rearranged);
      Eigen::BDCSVD<Matrix> ssvd(sm, Eigen::ComputeThinV);
      const Matrix vk = ssvd.matrixV().leftCols(static_cast<Eigen::Index>(
          std::min<Index>(k, static_cast<Index>(ssvd.matrixV().cols()))));
      target = rearranged * vk * vk.transpose();
    }
  }

  Eigen::BDCSVD<Matrix> svd(target, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index kk =
      std::min<Eigen::Index>(static_cast<Eigen::Index>(k), svd.singularValues().size());

  TrankFactors out;
  Matrix approx = Matrix::Zero(rearranged.rows(), rearranged.cols());
  for (Eigen::Index t = 0; t < kk; ++t) {
    const Vector u_col = svd.matrixU().col(t) * svd.singularValues()(t);
    const Vector v_col = svd.matrixV().col(t);
    out.u.push_back(Eigen::Map<const Matrix>(u_col.data(), static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(n)));
    out.v.push_back(Eigen::Map<const Matrix>(v_col.data(), static_cast<Eigen::Index>(n),
                                             static_cast<Eigen::Index>(n)));
    approx += u_col * v_col.transpose();
  }
  out.residual = (approx - rearranged).norm();
  return out;
}

}  // namespace kronsketch
