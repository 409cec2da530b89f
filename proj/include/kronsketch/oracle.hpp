#pragma once

#include "kronsketch/kron.hpp"
#include "kronsketch/solvers.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch::oracle {

/// Budgets for brute-force reference computations. Any oracle call that
/// would exceed them fails loudly (BudgetExceeded) rather than thrash.
struct OracleBudget {
  Index max_materialized_entries = 10'000'000;
  Index max_lp_rows = 100'000;
};

/// Exact l_2 leverage scores sigma_i = ||U_{i,*}||_2^2 from a thin SVD
/// (unnormalized: they sum to rank(A)).
Vector exact_leverage(const Matrix& a, const OracleBudget& budget = {});

/// Ground-truth min_x ||W x - c||_p. p=1 is solved by a dense simplex
/// specialized to the l_1 linear program (weighted-median line search,
/// Bland's rule engaged on stalls to prevent cycling). p in (1,2) runs a
/// damped-Newton descent on the smoothed objective, polished until the
/// first-order residual clears 1e-8; for d=1 it starts from a fine grid
/// scan. These paths are independent of solvers::lp_solve.
SolveReport exact_lp_regression(const Matrix& w, const Vector& c, double p,
                                const OracleBudget& budget = {});

/// |rho_i|^p / ||rho||_p^p, the target distribution of the residual sampler.
Vector exact_lp_distribution(const Vector& rho, double p);

/// Materializes the full n x d Kronecker design (test oracle only).
Matrix materialize(const KronDesign& design, const OracleBudget& budget = {});

}  // namespace kronsketch::oracle
