#pragma once

#include <optional>
#include <vector>

#include "kronsketch/kron.hpp"
#include "kronsketch/multi_index.hpp"
#include "kronsketch/rng.hpp"
#include "kronsketch/sampler.hpp"
#include "kronsketch/solvers.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// Per-factor approximate l_2 leverage scores (unnormalized: each factor's
/// scores sum to about its rank).
struct LeverageScores {
  std::vector<Vector> per_factor;
  double eps_lev = 0.1;
};

struct LeverageConfig {
  double sketch_const = 4.0;   // count-sketch rows = const * d^2 / eps^2
  double jl_const = 8.0;       // Gaussian columns = const * log2(n) / eps^2
};

/// sigma~_j = (1 +- eps) sigma_j for all rows simultaneously w.h.p., via
/// count-sketch embedding + QR + Gaussian column-count reduction. Both
/// reductions saturate to the exact computation when the sketched size
/// would exceed the input's (which is the common case at small scale).
Vector approx_leverage(const FactorMatrix& a, double eps_lev, Seed seed,
                       const LeverageConfig& cfg = {});

LeverageScores approx_leverage_scores(const KronDesign& design, double eps_lev,
                                      Seed seed, const LeverageConfig& cfg = {});

/// Product form: the leverage score of the Kronecker design at a row
/// multi-index is the product of the per-factor scores.
double kron_leverage(const LeverageScores& scores, const MultiIndex& idx);

/// m independent draws, one index per factor proportional to its scores.
/// Recorded prob is the normalized product; weight = 1/(m * prob).
DiagonalSampler build_l2_sampler(const KronDesign& design,
                                 const LeverageScores& scores, Index m, Seed seed);

struct L2SolveResult {
  Vector solution;
  bool rank_deficient = false;
  Index samples = 0;
};

struct L2SolveConfig {
  double sample_const = 10.0;  // m = const * d / (delta eps^2)
  std::optional<Index> sample_override;  // pin m directly (the CLI's -m)
  LeverageConfig leverage;
};

/// (1+eps) l_2 Kronecker regression: leverage-score sample m rows, solve the
/// sampled system through the pseudo-inverse (normal equations with a
/// rank-revealing fallback).
L2SolveResult solve_l2(const KronDesign& design, double eps, double delta,
                       Seed seed, const L2SolveConfig& cfg = {});

}  // namespace kronsketch
