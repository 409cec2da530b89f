#pragma once

#include <vector>

#include "kronsketch/count_sketch.hpp"
#include "kronsketch/kron.hpp"
#include "kronsketch/rng.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

struct LraConfig {
  double sketch_const = 4.0;        // k_i = const * q * k^2 / eps^2, capped at n_i
  Index max_sketch_rows = 100'000;  // cap on prod k_i (reduce k or raise eps)
  bool amplify = false;             // optional repeat-and-estimate amplification
  int amplify_reps = 3;
};

/// Rank-k approximation of A = A_1 (x) ... (x) A_q in factored form:
/// B = A U^T U where U holds the top-k right singular rows of the
/// count-sketched matrix M = (x)_i S_i A_i. A itself is never materialized.
struct LraFactors {
  std::vector<FactorMatrix> factors;
  Matrix u;  // k x d, orthonormal rows
  Index k = 0;
  bool truncated = false;  // requested k exceeded rank(M)

  /// ||A - A U^T U||_F via the Gram identity
  /// ||A||_F^2 - ||A U^T||_F^2 with (x)_i (A_i^T A_i) applied implicitly.
  /// Subject to cancellation when the residual is many orders below ||A||_F;
  /// tests at that scale should materialize instead.
  [[nodiscard]] double residual_frobenius() const;

  /// B = A U^T U densely (small test instances only).
  [[nodiscard]] Matrix materialize(Index max_entries = 10'000'000) const;
};

LraFactors kron_lra(const KronDesign& design, Index k, double eps, Seed seed,
                    const LraConfig& cfg = {});

/// The entry rearrangement under which a Kronecker product U (x) V becomes
/// the rank-1 matrix vec(U) vec(V)^T. Exact permutation of entries.
Matrix rearrange_for_trank(const Matrix& a, Index n);

/// Rank-k approximation in the trank sense: B = sum_i U_i (x) V_i.
struct TrankFactors {
  std::vector<Matrix> u;  // n x n each
  std::vector<Matrix> v;
  double residual = 0.0;  // ||B - A||_F of the rearranged rank-k problem

  [[nodiscard]] Matrix materialize() const;
};

/// Frobenius low-trank approximation via the rearrangement: exact SVD path
/// by default, count-sketched path behind the flag.
TrankFactors trank_approx(const Matrix& a, Index k, bool sketched = false,
                          Seed seed = {}, double eps = 0.5);

/// Count-sketch as an explicit sparse factor (for Kronecker application).
FactorMatrix count_sketch_factor(const CountSketch& s);

}  // namespace kronsketch
