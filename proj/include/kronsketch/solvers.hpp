#pragma once

#include "kronsketch/types.hpp"

namespace kronsketch {

/// Result of a dense subproblem solve.
struct SolveReport {
  Vector solution;
  double objective = 0.0;       // ||W x - c||_p recomputed at the solution
  double p = 2.0;
  int iterations = 0;
  bool converged = true;
  bool rank_deficient = false;
  double optimality_residual = 0.0;  // first-order / subgradient measure
};

/// Minimum-norm least squares via rank-revealing QR (complete orthogonal
/// decomposition). Singular values below eps * max(m,d) * sigma_max are
/// treated as zero. Residual is orthogonal to range(W).
SolveReport least_squares(const Matrix& w, const Vector& c);

struct LpSolveOptions {
  double smoothing_floor = 1e-10;
  double smoothing_decay = 0.5;
  double rel_tol = 1e-10;   // converged when relative objective change stays
  int stable_iters = 3;     // below rel_tol for this many iterations
  int max_iters = 500;
};

/// min_x ||W x - c||_p for p in [1,2) by smoothed IRLS: weights
/// (r_i^2 + mu^2)^{(p-2)/2} with mu decreasing geometrically from
/// ||c||_inf / m to the floor. Warm-start candidates (0 and the
/// least-squares solution) are compared and the best kept, so the returned
/// objective never exceeds either. Iteration cap leaves converged=false
/// (callers treat it as retryable).
SolveReport lp_solve(const Matrix& w, const Vector& c, double p,
                     const LpSolveOptions& opts = {});

}  // namespace kronsketch
