#include "kronsketch/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "kronsketch/multi_index.hpp"

namespace kronsketch::oracle {

namespace {

void check_entries(Index rows, Index cols, const OracleBudget& budget) {
  if (rows * cols > budget.max_materialized_entries)
    throw BudgetExceeded("oracle: materialization budget exceeded (" +
                         std::to_string(rows * cols) + " entries)");
}

// Keeps the pivot columns of a rank-deficient system so the core solvers can
// assume full column rank; minimizers extend by zeros on dropped columns
// (they are spanned by the kept ones, so the objective is unchanged).
struct ColumnReduction {
  Matrix w;
  std::vector<Eigen::Index> kept;
  [[nodiscard]] Vector embed(const Vector& z, Eigen::Index full_cols) const {
    Vector x = Vector::Zero(full_cols);
    for (std::size_t k = 0; k < kept.size(); ++k) x(kept[k]) = z(static_cast<Eigen::Index>(k));
    return x;
  }
};

ColumnReduction reduce_columns(const Matrix& w) {
  Eigen::ColPivHouseholderQR<Matrix> qr(w);
  qr.setThreshold(Eigen::NumTraits<double>::epsilon() *
                  static_cast<double>(std::max(w.rows(), w.cols())));
  const Eigen::Index r = qr.rank();
  ColumnReduction red;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = 0; k < r; ++k) red.kept.push_back(perm(k));
  std::sort(red.kept.begin(), red.kept.end());
  red.w.resize(w.rows(), r);
  for (Eigen::Index k = 0; k < r; ++k) red.w.col(k) = w.col(red.kept[k]);
  return red;
}

// ----- l_1: dense simplex specialized to least absolute deviations. -----
//
// Maintains d interpolated rows T (the simplex basis). At each step the dual
// multipliers sigma of the basis rows certify optimality (|sigma| <= 1) or
// name a leaving row; the entering row comes from an exact piecewise-linear
// line search (weighted median over residual breakpoints). Dantzig pricing
// with a Bland-style lowest-index mode engaged after stalls.
struct L1Simplex {
  const Matrix& w;
  const Vector& c;
  std::vector<Eigen::Index> basis;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  double dual_violation = 0.0;

  explicit L1Simplex(const Matrix& w_in, const Vector& c_in) : w(w_in), c(c_in) {}

  Matrix basis_matrix() const {
    Matrix bm(static_cast<Eigen::Index>(basis.size()), w.cols());
    for (std::size_t k = 0; k < basis.size(); ++k) bm.row(static_cast<Eigen::Index>(k)) = w.row(basis[k]);
    return bm;
  }

  void refit() {
    const Matrix bm = basis_matrix();
    Vector rhs(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k) rhs(static_cast<Eigen::Index>(k)) = c(basis[k]);
    x = bm.partialPivLu().solve(rhs);
  }

  void pick_initial_basis() {
    Eigen::ColPivHouseholderQR<Matrix> qr(w.transpose());
    const auto& perm = qr.colsPermutation().indices();
    basis.assign(perm.data(), perm.data() + w.cols());
    basis.resize(static_cast<std::size_t>(w.cols()));
  }

  bool run(int max_iters) {
    pick_initial_basis();
    refit();
    const double zero_tol = 1e-11 * (1.0 + c.lpNorm<Eigen::Infinity>());
    bool bland = false;
    int stall = 0;
    double prev_obj = std::numeric_limits<double>::infinity();

    std::vector<bool> in_basis(static_cast<std::size_t>(w.rows()), false);
    const Eigen::Index d = w.cols();

    for (iterations = 0; iterations < max_iters; ++iterations) {
      std::fill(in_basis.begin(), in_basis.end(), false);
      for (Eigen::Index t : basis) in_basis[static_cast<std::size_t>(t)] = true;

      const Vector resid = w * x - c;
      objective = resid.lpNorm<1>();
      if (objective > prev_obj - 1e-13 * (1.0 + prev_obj)) {
        if (++stall > 30) bland = true;
      } else {
        stall = 0;
      }
      prev_obj = objective;

      // Signed rows and the zero-residual (tied) non-basic rows. The tied
      // rows matter for optimality: along any pivot direction they add
      // |W_i dz| to the one-sided derivative, so the vertex test is
      // |sigma_j| <= 1 + v_j rather than |sigma_j| <= 1.
      Vector s(resid.size());
      std::vector<Eigen::Index> tied;
      for (Eigen::Index i = 0; i < resid.size(); ++i) {
        if (in_basis[static_cast<std::size_t>(i)]) {
          s(i) = 0.0;
        } else if (std::abs(resid(i)) <= zero_tol) {
          s(i) = 0.0;
          if (w.row(i).cwiseAbs().maxCoeff() > 0.0) tied.push_back(i);
        } else {
          s(i) = resid(i) > 0.0 ? 1.0 : -1.0;
        }
      }
      const Vector g = w.transpose() * s;
      const Matrix bm = basis_matrix();
      Eigen::PartialPivLU<Matrix> lu(bm);
      const Vector sigma = lu.transpose().solve(-g);
      const Matrix basis_inv = lu.inverse();  // columns are the dz_j

      Vector slack = Vector::Ones(d);  // 1 + v_j
      if (!tied.empty()) {
        Matrix wz(static_cast<Eigen::Index>(tied.size()), d);
        for (std::size_t k = 0; k < tied.size(); ++k) wz.row(static_cast<Eigen::Index>(k)) = w.row(tied[k]);
        const Matrix cross = wz * basis_inv;  // |tied| x d
        for (Eigen::Index j = 0; j < d; ++j) slack(j) += cross.col(j).cwiseAbs().sum();
      }

      Eigen::Index leave = -1;
      double worst = 1e-9;
      double max_violation = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double violation = std::abs(sigma(j)) - slack(j);
        max_violation = std::max(max_violation, violation);
        if (bland) {
          if (violation > 1e-9) { leave = j; break; }
        } else if (violation > worst) {
          worst = violation;
          leave = j;
        }
      }
      if (leave < 0) {
        dual_violation = std::max(0.0, max_violation);
        return true;  // optimal vertex
      }

      const Vector dz = basis_inv.col(leave);
      const Vector dir = (sigma(leave) > 0.0 ? 1.0 : -1.0) * dz;
      const Vector wd = w * dir;

      // Exact line search on f(t) = |t| + sum_{i not in T} |r_i + t wd_i|.
      double slope = 1.0;
      std::vector<std::pair<double, Eigen::Index>> breaks;
      for (Eigen::Index i = 0; i < resid.size(); ++i) {
        if (in_basis[static_cast<std::size_t>(i)] || wd(i) == 0.0) continue;
        if (std::abs(resid(i)) <= zero_tol) {
          slope += std::abs(wd(i));
          continue;
        }
        slope += (resid(i) > 0.0 ? 1.0 : -1.0) * wd(i);
        const double t_i = -resid(i) / wd(i);
        if (t_i > 0.0) breaks.emplace_back(t_i, i);
      }

      Eigen::Index enter = -1;
      if (slope >= -1e-12) {
        // Numerically flat direction: swap in a tied row crossing it.
        double best = 0.0;
        for (Eigen::Index i : tied) {
          if (wd(i) == 0.0) continue;
          if (bland) { enter = i; break; }
          if (std::abs(wd(i)) > best) { best = std::abs(wd(i)); enter = i; }
        }
        if (enter < 0) {
          dual_violation = std::max(0.0, max_violation);
          return true;  // no admissible pivot; accept current vertex
        }
      } else {
        std::sort(breaks.begin(), breaks.end());
        for (const auto& [t_i, i] : breaks) {
          slope += 2.0 * std::abs(wd(i));
          if (slope >= 0.0) { enter = i; break; }
        }
        if (enter < 0) return false;  // cannot happen: slope -> +inf
      }
      basis[static_cast<std::size_t>(leave)] = enter;
      refit();
    }
    return false;
  }
};

SolveReport solve_l1(const Matrix& w, const Vector& c) {
  SolveReport rep;
  rep.p = 1.0;
  ColumnReduction red = reduce_columns(w);
  if (red.kept.empty()) {  // zero matrix
    rep.solution = Vector::Zero(w.cols());
    rep.objective = c.lpNorm<1>();
    return rep;
  }
  L1Simplex simplex(red.w, c);
  const int cap = 220 * static_cast<int>(red.w.cols()) + 5000;
  const bool ok = simplex.run(cap);
  if (!ok) throw ConvergenceError("l1 simplex failed to converge");
  rep.solution = red.embed(simplex.x, w.cols());
  rep.objective = (w * rep.solution - c).lpNorm<1>();
  rep.iterations = simplex.iterations;
  rep.rank_deficient = static_cast<Eigen::Index>(red.kept.size()) < w.cols();
  rep.optimality_residual = simplex.dual_violation;
  return rep;
}

// ----- p in (1,2): smoothed damped Newton, independent of the IRLS path. ---

double smoothed_objective(const Matrix& w, const Vector& c, const Vector& x, double p, double mu) {
  const Vector r = w * x - c;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    acc += std::pow(r(i) * r(i) + mu * mu, p / 2.0);
  return acc;
}

using LdMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LdVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

// Extended-precision polish: the |r|^{p-1} terms near a kink limit what a
// double-precision gradient can certify, so the last stretch runs in long
// double. Returns the final first-order residual over `scale`.
double polish_long_double(const Matrix& w, const Vector& c, double p, Vector* z_io,
                          double scale) {
  const LdMatrix a = w.cast<long double>();
  const LdVector cc = c.cast<long double>();
  LdVector z = z_io->cast<long double>();
  const long double pl = p;

  const auto grad_hess = [&](const LdVector& zz, long double mu, LdVector* g, LdMatrix* h) {
    const LdVector r = a * zz - cc;
    *g = LdVector::Zero(a.cols());
    if (h) *h = LdMatrix::Zero(a.cols(), a.cols());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const long double q = r(i) * r(i) + mu * mu;
      if (q == 0.0L) continue;  // exact zero contributes nothing for p > 1
      *g += pl * powl(q, (pl - 2.0L) / 2.0L) * r(i) * a.row(i).transpose();
      if (h)
        *h += pl * powl(q, (pl - 4.0L) / 2.0L) * ((pl - 1.0L) * r(i) * r(i) + mu * mu) *
              (a.row(i).transpose() * a.row(i));
    }
  };

  for (long double mu = 1e-10L; mu >= 1e-19L; mu *= 1e-2L) {
    for (int inner = 0; inner < 120; ++inner) {
      LdVector g;
      LdMatrix h;
      grad_hess(z, mu, &g, &h);
      if (g.norm() <= 1e-12L * scale) break;
      LdVector step;
      long double lm = 0.0L;
      for (int damp = 0; damp < 10; ++damp) {
        Eigen::LDLT<LdMatrix> ldlt(LdMatrix(h + lm * LdMatrix::Identity(a.cols(), a.cols())));
        step = ldlt.solve(-g);
        if (step.allFinite() && g.dot(step) < 0.0L) break;
        lm = lm == 0.0L ? 1e-10L * (1.0L + h.trace()) : lm * 100.0L;
      }
      if (!step.allFinite() || g.dot(step) >= 0.0L) step = -g;
      const long double g0 = g.norm();
      long double t = 1.0L;
      bool moved = false;
      for (int back = 0; back < 80 && !moved; ++back) {
        LdVector g_t;
        grad_hess(z + t * step, mu, &g_t, nullptr);
        if (g_t.norm() < g0 * (1.0L - 1e-6L)) {
          z += t * step;
          moved = true;
        }
        t *= 0.5L;
      }
      if (!moved) break;
    }
  }

  *z_io = z.cast<double>();
  LdVector g_final;
  grad_hess(z, 0.0L, &g_final, nullptr);
  return static_cast<double>(g_final.norm()) / scale;
}

SolveReport solve_lp_newton(const Matrix& w, const Vector& c, double p) {
  SolveReport rep;
  rep.p = p;
  ColumnReduction red = reduce_columns(w);
  if (red.kept.empty()) {
    rep.solution = Vector::Zero(w.cols());
    rep.objective = entrywise_lp_norm(c, p);
    return rep;
  }
  const Matrix& a = red.w;

  Vector z = a.completeOrthogonalDecomposition().solve(c);
  if (a.cols() == 1) {
    // Fine grid over the breakpoint range, then Newton polish.
    double lo = 1e300, hi = -1e300;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (a(i, 0) == 0.0) continue;
      const double t = c(i) / a(i, 0);
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    if (lo <= hi) {
      double best = smoothed_objective(a, c, z, p, 0.0), best_t = z(0);
      for (int k = 0; k <= 4000; ++k) {
        const double t = lo + (hi - lo) * k / 4000.0;
        Vector cand(1);
        cand << t;
        const double f = smoothed_objective(a, c, cand, p, 0.0);
        if (f < best) { best = f; best_t = t; }
      }
      z(0) = best_t;
    }
  }

  int total_iters = 0;
  double mu = std::max(1e-3, c.lpNorm<Eigen::Infinity>());
  const double scale = 1.0 + entrywise_lp_norm(c, p);
  while (true) {
    const int inner_cap = mu <= 1e-13 ? 400 : 100;
    for (int inner = 0; inner < inner_cap; ++inner) {
      const Vector r = a * z - c;
      Vector g = Vector::Zero(a.cols());
      Matrix h = Matrix::Zero(a.cols(), a.cols());
      for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double q = r(i) * r(i) + mu * mu;
        const double w1 = p * std::pow(q, (p - 2.0) / 2.0);
        const double w2 = p * std::pow(q, (p - 4.0) / 2.0) * ((p - 1.0) * r(i) * r(i) + mu * mu);
        g += w1 * r(i) * a.row(i).transpose();
        h += w2 * (a.row(i).transpose() * a.row(i));
      }
      if (g.norm() <= 1e-12 * scale) break;
      // Newton step with Levenberg damping retries.
      Vector step;
      double lm = 0.0;
      for (int damp = 0; damp < 10; ++damp) {
        Eigen::LDLT<Matrix> ldlt(
            Matrix(h + lm * Matrix::Identity(a.cols(), a.cols())));
        step = ldlt.solve(-g);
        if (step.allFinite() && g.dot(step) < 0.0) break;
        lm = lm == 0.0 ? 1e-8 * (1.0 + h.trace()) : lm * 100.0;
      }
      if (!step.allFinite() || g.dot(step) >= 0.0) step = -g;
      const double f0 = smoothed_objective(a, c, z, p, mu);
      double t = 1.0;
      bool moved = false;
      for (int back = 0; back < 60; ++back) {
        const Vector zt = z + t * step;
        if (smoothed_objective(a, c, zt, p, mu) <= f0 + 1e-4 * t * g.dot(step)) {
          z = zt;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) {
        // Objective differences are at the precision floor; accept on a
        // measurable gradient-norm decrease instead.
        const auto grad_norm = [&](const Vector& zz) {
          const Vector rr = a * zz - c;
          Vector gg = Vector::Zero(a.cols());
          for (Eigen::Index i = 0; i < rr.size(); ++i)
            gg += p * std::pow(rr(i) * rr(i) + mu * mu, (p - 2.0) / 2.0) * rr(i) *
                  a.row(i).transpose();
          return gg.norm();
        };
        const double g0 = g.norm();
        double t2 = 1.0;
        for (int back = 0; back < 60 && !moved; ++back) {
          const Vector zt = z + t2 * step;
          if (grad_norm(zt) < g0 * (1.0 - 1e-4)) {
            z = zt;
            moved = true;
          }
          t2 *= 0.5;
        }
      }
      ++total_iters;
      if (!moved) break;  // stationary for this smoothing level
    }
    if (mu <= 1e-13) break;
    mu = std::max(mu * 0.1, 1e-13);
  }

  rep.optimality_residual = polish_long_double(a, c, p, &z, scale);
  rep.solution = red.embed(z, w.cols());
  rep.objective = entrywise_lp_norm(w * rep.solution - c, p);
  rep.iterations = total_iters;
  rep.rank_deficient = static_cast<Eigen::Index>(red.kept.size()) < w.cols();
  return rep;
}

}  // namespace

Vector exact_leverage(const Matrix& a, const OracleBudget& budget) {
  check_entries(static_cast<Index>(a.rows()), static_cast<Index>(a.cols()), budget);
  if (a.rows() == 0) return Vector();
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const double tol = Eigen::NumTraits<double>::epsilon() *
                     static_cast<double>(std::max(a.rows(), a.cols())) *
                     (svd.singularValues().size() ? svd.singularValues()(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
    if (svd.singularValues()(k) > tol) ++rank;
  Vector scores(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    scores(i) = svd.matrixU().row(i).head(rank).squaredNorm();
  return scores;
}

SolveReport exact_lp_regression(const Matrix& w, const Vector& c, double p,
                                const OracleBudget& budget) {
  require(w.rows() == c.size(), "exact_lp_regression: row/rhs mismatch");
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  if (static_cast<Index>(w.rows()) > budget.max_lp_rows)
    throw BudgetExceeded("oracle: lp row budget exceeded");
  check_entries(static_cast<Index>(w.rows()), static_cast<Index>(w.cols()) + 1, budget);
  if (p == 2.0) return least_squares(w, c);
  if (p == 1.0) return solve_l1(w, c);
  return solve_lp_newton(w, c, p);
}

Vector exact_lp_distribution(const Vector& rho, double p) {
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  Vector probs(rho.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    probs(i) = std::pow(std::abs(rho(i)), p);
    total += probs(i);
  }
  require(total > 0.0, "exact_lp_distribution: zero vector");
  return probs / total;
}

Matrix materialize(const KronDesign& design, const OracleBudget& budget) {
  check_entries(design.rows(), design.cols(), budget);
  Matrix full(static_cast<Eigen::Index>(design.rows()),
              static_cast<Eigen::Index>(design.cols()));
  for (Index r = 0; r < design.rows(); ++r)
    full.row(static_cast<Eigen::Index>(r)) = design.kron_row(r).transpose();
  return full;
}

}  // namespace kronsketch::oracle
