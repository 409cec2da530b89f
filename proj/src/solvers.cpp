#include "kronsketch/solvers.hpp"

#include <cmath>

#include "kronsketch/kron.hpp"

namespace kronsketch {

namespace {

double lp_objective(const Matrix& w, const Vector& c, const Vector& x, double p) {
  return entrywise_lp_norm(w * x - c, p);
}

}  // namespace

SolveReport least_squares(const Matrix& w, const Vector& c) {
  require(w.rows() >= 1, "least_squares: need at least one row");
  require(w.rows() == c.size(), "least_squares: row/rhs mismatch");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(w);
  cod.setThreshold(Eigen::NumTraits<double>::epsilon() *
                   static_cast<double>(std::max(w.rows(), w.cols())));
  SolveReport rep;
  rep.solution = cod.solve(c);
  rep.p = 2.0;
  rep.iterations = 1;
  rep.rank_deficient = cod.rank() < w.cols();
  const Vector resid = w * rep.solution - c;
  rep.objective = resid.norm();
  rep.optimality_residual = (w.transpose() * resid).norm();
  return rep;
}

SolveReport lp_solve(const Matrix& w, const Vector& c, double p, const LpSolveOptions& opts) {
  require(w.rows() >= 1, "lp_solve: need at least one row");
  require(w.rows() == c.size(), "lp_solve: row/rhs mismatch");
  require(p >= 1.0 && p < 2.0, "lp_solve handles p in [1,2); use least_squares for p=2");

  SolveReport ls = least_squares(w, c);
  Vector x = ls.solution;
  double obj = lp_objective(w, c, x, p);

  const double m = static_cast<double>(w.rows());
  double mu = std::max(c.lpNorm<Eigen::Infinity>() / m, opts.smoothing_floor);

  SolveReport rep;
  rep.p = p;
  int stable = 0;
  double prev_obj = obj;
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    Vector resid = w * x - c;
    Vector weights(resid.size());
    for (Eigen::Index i = 0; i < resid.size(); ++i)
      weights(i) = std::pow(resid(i) * resid(i) + mu * mu, (p - 2.0) / 2.0);
    // Weighted normal equations with a rank-revealing fallback.
    const Matrix wt = w.transpose() * weights.asDiagonal();
    const Matrix gram = wt * w;
    Eigen::LDLT<Matrix> ldlt(gram);
    Vector x_new;
    if (ldlt.info() == Eigen::Success) x_new = ldlt.solve(wt * c);
    if (ldlt.info() != Eigen::Success || !x_new.allFinite()) {
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gram);
      x_new = cod.solve(wt * c);
      rep.rank_deficient = true;
    }
    x = x_new;
    const double new_obj = lp_objective(w, c, x, p);
    const double denom = std::max(prev_obj, 1e-300);
    if (std::abs(prev_obj - new_obj) / denom < opts.rel_tol && mu <= opts.smoothing_floor * 1.0001) {
      if (++stable >= opts.stable_iters) {
        prev_obj = new_obj;
        ++iter;
        break;
      }
    } else {
      stable = 0;
    }
    prev_obj = new_obj;
    mu = std::max(mu * opts.smoothing_decay, opts.smoothing_floor);
  }
  rep.iterations = iter;
  rep.converged = iter < opts.max_iters;

  // Keep the best of the IRLS iterate and the warm-start candidates.
  rep.solution = x;
  rep.objective = prev_obj;
  const double obj_zero = entrywise_lp_norm(c, p);
  const double obj_ls = lp_objective(w, c, ls.solution, p);
  if (obj_ls < rep.objective) {
    rep.solution = ls.solution;
    rep.objective = obj_ls;
  }
  if (obj_zero < rep.objective) {
    rep.solution = Vector::Zero(w.cols());
    rep.objective = obj_zero;
  }

  // Subgradient residual at the final smoothing level.
  const Vector resid = w * rep.solution - c;
  Vector grad = Vector::Zero(w.cols());
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const double r = resid(i);
    grad += p * std::pow(r * r + opts.smoothing_floor * opts.smoothing_floor,
                         (p - 2.0) / 2.0) * r * w.row(i).transpose();
  }
  rep.optimality_residual = grad.norm();
  return rep;
}

}  // namespace kronsketch
