#pragma once

#include <optional>
#include <vector>

#include "kronsketch/rng.hpp"
#include "kronsketch/sampler.hpp"
#include "kronsketch/solvers.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

/// All-pairs (rank) regression input: min_x || Abar x - bbar ||_p where
/// Abar stacks all pairwise row differences A_{i,*} - A_{j,*} at flat index
/// i + (j-1) n (1-based; first coordinate fastest, matching the library's
/// flatten convention) and bbar likewise. Neither is ever materialized here.
struct AllPairsProblem {
  Matrix a;  // n x d
  Vector b;  // n

  AllPairsProblem(Matrix a_in, Vector b_in) : a(std::move(a_in)), b(std::move(b_in)) {
    require(a.rows() == b.size(), "row/response mismatch");
    require(a.rows() >= 1, "need at least one observation");
  }

  [[nodiscard]] Index n() const { return static_cast<Index>(a.rows()); }
  [[nodiscard]] Index d() const { return static_cast<Index>(a.cols()); }

  [[nodiscard]] Matrix f() const {  // F = [A, b]
    Matrix f(a.rows(), a.cols() + 1);
    f.leftCols(a.cols()) = a;
    f.col(a.cols()) = b;
    return f;
  }

  /// Row (i,j) of [Abar, bbar]x-style products: difference of F rows.
  [[nodiscard]] double pair_residual(Index i, Index j, const Vector& x) const {
    return (a.row(static_cast<Eigen::Index>(i)) - a.row(static_cast<Eigen::Index>(j)))
               .dot(x.transpose()) -
           (b(static_cast<Eigen::Index>(i)) - b(static_cast<Eigen::Index>(j)));
  }
};

struct AllPairsConfig {
  double embed_rows_const = 64.0;  // sketch rows per side = const * (d+1)^2
  double tau_const = 2.0;          // dense p-stable repetitions = const*log2 n
  double sample_const = 2.0;       // r = const * (d+1)^2 / eps^2 by default
  double hh_exponent = 4.0;        // desk-scaled from 16 (config switch)
  double hh_eps_floor = 0.125;
  double eta_eps = 0.25;           // eta = min(n, r^4 / eta_eps^4), capped
  Index eta_cap = Index{1} << 20;
  Index exact_cell_scan = 4096;    // exact argmax when |Omega_t| <= this
  Index exact_column_scan = 65536; // direct heavy filter when n <= this
  int partition_retry = 10;        // distinct-cell redraws before accepting
  double p2_rows_const = 24.0;     // p=2 path: total sketch rows = const*(d+1)/eps^2
};

/// Upper-triangular R from the QR of (S1 (x) S2)(F (x) 1 - 1 (x) F), where
/// S1, S2 are sparse p-stable transforms; M = (F (x) 1 - 1 (x) F) R^{-1} is
/// then a well-conditioned basis. Singular R retries with fresh seeds (x3).
Matrix allpairs_embed(const AllPairsProblem& problem, double p, Index k, Seed seed,
                      const AllPairsConfig& cfg = {});

struct ApSampleStats {
  Index exact_scan_fallbacks = 0;
  Index sketch_queries = 0;
  Index dependence_warnings = 0;  // duplicate partition cells accepted
};

/// l_p row sampler over the n^2 implicit rows of M: Gaussian column
/// reduction, column sampling by median estimates, heavy/partition branch
/// with exponential-argmax perfect sampling, and per-row recorded
/// probabilities q~ accurate to (1 +- eps^2).
DiagonalSampler allpairs_sample(const AllPairsProblem& problem, const Matrix& r_upper,
                                Index r, double p, double eps, Seed seed,
                                const AllPairsConfig& cfg = {},
                                ApSampleStats* stats = nullptr);

struct AllPairsResult {
  Vector solution;
  Index sampled_rows = 0;
};

/// (1+eps) all-pairs regression. p < 2 runs embed + sample + weighted l_p
/// solve; p = 2 applies a Kronecker count-sketch difference of
/// Theta((d+1)/eps^2) total rows and solves the small least squares system.
AllPairsResult allpairs_solve(const AllPairsProblem& problem, double p, double eps,
                              double delta, Seed seed, const AllPairsConfig& cfg = {});

}  // namespace kronsketch
