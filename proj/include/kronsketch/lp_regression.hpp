#pragma once

#include <optional>
#include <vector>

#include "kronsketch/kron.hpp"
#include "kronsketch/rng.hpp"
#include "kronsketch/sampler.hpp"
#include "kronsketch/solvers.hpp"
#include "kronsketch/types.hpp"

namespace kronsketch {

struct LpConfig {
  double wc_sketch_const = 2.0;   // sparse p-stable rows per factor = const*q*d_i^2
  double tau_const = 2.0;         // median repetitions tau = max(9, const*log2 n)
  double r1_const = 1.0;          // default r1 = const * d^3
  double r2_const = 1.0;          // default r2 = const * d^3/eps^2 * log2(1/eps)
  // Oversampling r3 = min(n, const * r2 * log2(n)^exponent / delta). The
  // exponent is desk-scaled from its q^2 theory value; both exposed, and an
  // explicit override pins r3 outright (the CLI's -m does this).
  double r3_log_const = 4.0;
  double r3_log_exponent = 1.0;
  std::optional<Index> r3_override;
  // Heavy-hitter thresholds use desk-scaled exponents (4/8 instead of 8/16)
  // with a floor keeping sketch sizes sane; correctness rests on the
  // probability bookkeeping, not on these constants.
  double hh_exponent = 4.0;
  double hh_eps_floor = 0.125;
  int hh_union_reps = 3;
  double eta_const = 1.0;         // partition cells = min(n_i, const * r3^2)
  Index bernoulli_budget = Index{1} << 22;  // full-enumeration cutoff for Pi
  int max_boost_reps = 64;
  // Sigma also includes rows drawn from the basis distribution (the q_i side
  // of the inclusion probability). Tests of the pure residual machinery may
  // switch this off.
  bool include_basis_rows = true;
};

/// Well-conditioned basis in factored form: per-factor R_i^{-1} from the QR
/// of a sparse p-stable sketch of A_i, plus estimated row norms
/// a_{i,j} ~ ||(A_i R_i^{-1})_{j,*}||_p^p. Never materialized as a full
/// basis.
struct WellCondBasis {
  std::vector<Matrix> r_inv;
  std::vector<Vector> row_norms;
  double p = 1.0;
};

WellCondBasis build_wc_basis(const KronDesign& design, double p, double delta,
                             Seed seed, const LpConfig& cfg = {});

/// Sampling state of the O(1)-approximation stage: the product-form
/// distribution over rows implied by the basis row norms, plus the
/// oversampling count, so later stages can reconstruct any row's inclusion
/// probability q_i.
struct WcSampling {
  std::vector<Vector> probs;       // normalized per factor
  std::vector<Vector> cumulative;
  Index r1 = 0;
  bool bernoulli = true;           // literal Bernoulli vs draw-and-dedupe

  [[nodiscard]] double product_prob(const std::vector<Index>& coords) const;
  [[nodiscard]] double inclusion_prob(const std::vector<Index>& coords) const;
};

WcSampling make_wc_sampling(const KronDesign& design, const WellCondBasis& basis,
                            Index r1, const LpConfig& cfg = {});

struct O1Result {
  Vector solution;
  DiagonalSampler pi;
  WcSampling sampling;
};

/// Constant-factor l_p solve on rows sampled from the well-conditioned
/// basis distribution (Pi_{ii} = 1/q_i^{1/p}, q_i = min{1, r1 q'_i}).
O1Result o1_approx_solve(const KronDesign& design, const WellCondBasis& basis,
                         Index r1, Seed seed, const LpConfig& cfg = {});

/// Implicit residual rho = (A_1 (x) ... (x) A_q) x' - b with the p-stable
/// contraction precomputations the sampler needs (Z^{i,j} A_i products and
/// the per-stage reshaped b contractions).
class ResidualHandle {
 public:
  ResidualHandle(const KronDesign& design, Vector x_prime, double p, Seed seed,
                 const LpConfig& cfg = {});

  [[nodiscard]] const KronDesign& design() const { return *design_; }
  [[nodiscard]] const Vector& x_prime() const { return x_prime_; }
  [[nodiscard]] double p() const { return p_; }
  [[nodiscard]] Index tau() const { return tau_; }

  /// Median-estimated ||rho||_p (zero-residual detection).
  [[nodiscard]] double residual_norm_estimate() const;

  /// Stage-1 median contraction magnitudes w (length n_1).
  [[nodiscard]] const Vector& stage1_weights() const { return stage1_w_; }

  /// Exact residual entry (testing and per-candidate estimates).
  [[nodiscard]] double rho_entry(Index flat) const;

  /// V^j over [n_i] for stage i given the prefix (a_1..a_{i-1}):
  /// entry l estimates the residual mass of the block (prefix, l, *).
  [[nodiscard]] Vector stage_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix) const;

  /// Scalar contraction (x) over all of modes stage..q (the beta estimate
  /// ingredient): (e_prefix (x) Z^{stage} (x) ... (x) Z^{q}) rho.
  [[nodiscard]] double block_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix) const;

  /// Single entry of V^j: (e_prefix (x) e_coord (x) Z...) rho in O(qd).
  [[nodiscard]] double entry_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix,
                                         Index coord) const;

  [[nodiscard]] const Vector& z_vector(std::size_t stage, Index rep) const {
    return z_[stage][rep];
  }

 private:
  Vector contract_prefix(std::size_t stage, Index rep,
                         const std::vector<Index>& prefix) const;  // zeta

  const KronDesign* design_;
  Vector x_prime_;
  double p_;
  Index tau_;
  std::vector<std::vector<Vector>> z_;    // z_[i][j] over [n_i]
  std::vector<std::vector<Vector>> za_;   // Z^{i,j} A_i, length d_i
  std::vector<std::vector<Vector>> y_;    // X' contracted over modes > i
  std::vector<std::vector<Matrix>> bp_;   // b contracted over modes > i
  std::vector<std::vector<Vector>> bz_;   // bp_ * Z^{i,j}
  Vector stage1_w_;
};

/// Residual l_p sampler (the refinement-stage Sigma). Recorded
/// probabilities combine the replayed per-draw probability with the
/// basis-distribution inclusion (heavy path exact, partition path
/// estimate-backed). rho = 0 returns an empty sampler with exact_fit set.
DiagonalSampler residual_sample(const ResidualHandle& handle, const WcSampling& wc,
                                Index r2, double delta, Seed seed,
                                const LpConfig& cfg = {});

/// argmin ||Sigma(Ax - b)||_p over the sampled rows.
Vector refine_solve(const KronDesign& design, const Vector& x_prime,
                    const DiagonalSampler& sigma);

struct BoostedReport {
  Vector solution;
  std::vector<double> candidate_costs;  // median-of-samplers cost estimates
  int chosen = 0;
  int repetitions = 1;
};

struct LpPipelineKnobs {
  std::optional<Index> r1;  // defaults derive from LpConfig when unset
  std::optional<Index> r2;
};

/// Full (1+eps) pipeline with median-of-repetitions boosting:
/// r = O(log 1/delta) independent runs, r additional samplers, candidate
/// with the minimal median estimated cost wins.
BoostedReport boosted_solve(const KronDesign& design, double p, double eps,
                            double delta, Seed seed, const LpConfig& cfg = {},
                            const LpPipelineKnobs& knobs = {});

/// Median-of-samplers cost estimate of a fixed candidate.
double estimate_cost(const KronDesign& design, const Vector& x,
                     const std::vector<DiagonalSampler>& samplers, double p);

}  // namespace kronsketch
