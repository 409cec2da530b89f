#include "kronsketch/lp_regression.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "kronsketch/count_sketch.hpp"
#include "kronsketch/multi_index.hpp"
#include "kronsketch/sketch_ops.hpp"
#include "kronsketch/stable.hpp"

namespace kronsketch {

namespace {

Index tau_for(Index n, const LpConfig& cfg) {
  return std::max<Index>(9, static_cast<Index>(std::ceil(
                               cfg.tau_const * std::log2(std::max<double>(n, 4)))));
}

// Contract the trailing mode of a flat tensor (first mode fastest) with v.
Vector contract_last_mode(const Vector& flat, Index lead, Index last, const Vector& v) {
  require(static_cast<Index>(flat.size()) == lead * last, "contract: size mismatch");
  Eigen::Map<const Matrix> m(flat.data(), static_cast<Eigen::Index>(lead),
                             static_cast<Eigen::Index>(last));
  return m * v;
}

// Contract the leading mode with a factor row.
Vector contract_first_mode(const Vector& flat, Index first, const Vector& r) {
  const Index tail = static_cast<Index>(flat.size()) / first;
  Eigen::Map<const Matrix> m(flat.data(), static_cast<Eigen::Index>(first),
                             static_cast<Eigen::Index>(tail));
  return m.transpose() * r;
}

Index draw_cumulative(const Vector& cum, double u) {
  // Inverse CDF, ties broken toward the lower index.
  const double* begin = cum.data();
  return static_cast<Index>(std::lower_bound(begin, begin + cum.size(), u) - begin);
}

Vector cumulative_of(const Vector& probs) {
  Vector cum(probs.size());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    acc += probs(j);
    cum(j) = acc;
  }
  cum(probs.size() - 1) = 1.0;
  return cum;
}

}  // namespace

WellCondBasis build_wc_basis(const KronDesign& design, double p, double delta,
                             Seed seed, const LpConfig& cfg) {
  require(p >= 1.0 && p < 2.0, "well-conditioned basis: p must lie in [1,2)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const double q = static_cast<double>(design.order());
  const Index tau = tau_for(design.rows(), cfg);

  WellCondBasis basis;
  basis.p = p;
  for (std::size_t i = 0; i < design.order(); ++i) {
    const FactorMatrix& a = design.factor(i);
    const Index n_i = a.rows();
    const Index d_i = a.cols();
    const Index s_i = std::min<Index>(
        n_i, std::max<Index>(d_i + 1,
                             static_cast<Index>(std::ceil(cfg.wc_sketch_const * q *
                                                          static_cast<double>(d_i * d_i)))));
    Matrix r_inv;
    bool ok = false;
    for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
      Matrix sa;
      if (s_i >= n_i) {
        sa = a.dense();
      } else {
        PStableSparse s(s_i, n_i, p, seed.derived(0xba5e + i * 7 + attempt * 131));
        sa = s.apply_to_rows(a);
      }
      Eigen::HouseholderQR<Matrix> qr(sa);
      Matrix r = qr.matrixQR()
                     .topRows(static_cast<Eigen::Index>(d_i))
                     .triangularView<Eigen::Upper>();
      const double dmax = r.diagonal().cwiseAbs().maxCoeff();
      const double dmin = r.diagonal().cwiseAbs().minCoeff();
      if (dmax <= 0.0 || dmin < 1e-12 * dmax) continue;
      r_inv = r.triangularView<Eigen::Upper>().solve(
          Matrix::Identity(static_cast<Eigen::Index>(d_i), static_cast<Eigen::Index>(d_i)));
      ok = true;
    }
    if (!ok)
      throw ConvergenceError("well-conditioned basis: singular R after 3 sketch attempts");

    // Row norm estimates via dense p-stable columns and the median estimator.
    PStableDense z(d_i, tau, p, seed.derived(0x2a11 + i));
    const Matrix t = a.multiply_right(r_inv * z.matrix());  // n_i x tau
    const double theta = stable_abs_median(p);
    Vector norms(static_cast<Eigen::Index>(n_i));
    std::vector<double> row(tau);
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
      for (Index h = 0; h < tau; ++h) row[h] = t(j, static_cast<Eigen::Index>(h));
      norms(j) = std::pow(median_abs(row) / theta, p);
    }
    basis.r_inv.push_back(std::move(r_inv));
    basis.row_norms.push_back(std::move(norms));
  }
  return basis;
}

double WcSampling::product_prob(const std::vector<Index>& coords) const {
  double prod = 1.0;
  for (std::size_t l = 0; l < probs.size(); ++l)
    prod *= probs[l](static_cast<Eigen::Index>(coords[l]));
  return prod;
}

double WcSampling::inclusion_prob(const std::vector<Index>& coords) const {
  const double q_prime = product_prob(coords);
  if (bernoulli) return std::min(1.0, static_cast<double>(r1) * q_prime);
  return 1.0 - std::pow(1.0 - q_prime, static_cast<double>(r1));
}

WcSampling make_wc_sampling(const KronDesign& design, const WellCondBasis& basis,
                            Index r1, const LpConfig& cfg) {
  require(r1 >= 1, "r1 must be >= 1");
  require(basis.row_norms.size() == design.order(), "basis does not match design");
  WcSampling wc;
  wc.r1 = r1;
  wc.bernoulli = design.rows() <= cfg.bernoulli_budget;
  for (const Vector& norms : basis.row_norms) {
    const double total = norms.sum();
    require(total > 0.0, "all-zero basis row norms");
    Vector probs = norms / total;
    wc.cumulative.push_back(cumulative_of(probs));
    wc.probs.push_back(std::move(probs));
  }
  return wc;
}

namespace {

DiagonalSampler sample_pi(const KronDesign& design, const WcSampling& wc, double p,
                          Seed seed) {
  DiagonalSampler pi;
  pi.p = p;
  pi.target_m = wc.r1;
  Rng rng(seed);
  const std::size_t q = design.order();
  std::vector<Index> coords(q, 0);
  if (wc.bernoulli) {
    // Literal Bernoulli over every row, walking the flat order.
    const Index n = design.rows();
    for (Index flat = 0; flat < n; ++flat) {
      const double q_row = std::min(1.0, static_cast<double>(wc.r1) * wc.product_prob(coords));
      const double u = rng.uniform01();
      if (q_row > 0.0 && u < q_row)
        pi.entries.push_back(SampleEntry{flat, 1.0 / q_row, q_row});
      for (std::size_t l = 0; l < q; ++l) {  // advance, first coordinate fastest
        if (++coords[l] < static_cast<Index>(wc.probs[l].size())) break;
        coords[l] = 0;
      }
    }
  } else {
    std::map<Index, double> seen;  // row -> inclusion probability
    for (Index t = 0; t < wc.r1; ++t) {
      for (std::size_t l = 0; l < q; ++l)
        coords[l] = draw_cumulative(wc.cumulative[l], rng.uniform01());
      seen.emplace(MultiIndex::flatten_index(coords, design.row_dims()),
                   wc.inclusion_prob(coords));
    }
    for (const auto& [row, alpha] : seen)
      pi.entries.push_back(SampleEntry{row, 1.0 / alpha, alpha});
  }
  return pi;
}

}  // namespace

O1Result o1_approx_solve(const KronDesign& design, const WellCondBasis& basis, Index r1,
                         Seed seed, const LpConfig& cfg) {
  require(design.has_response(), "o1_approx_solve needs a response vector");
  O1Result out;
  out.sampling = make_wc_sampling(design, basis, r1, cfg);
  out.pi = sample_pi(design, out.sampling, basis.p, seed.derived(0x01a));
  require(!out.pi.entries.empty(), "o1_approx_solve: sampled system is empty (r1 too small)");
  const SampledSystem sys = build_sampled_system(design, out.pi);
  out.solution = lp_solve(sys.w, sys.c, basis.p).solution;
  return out;
}

// ---------------------------------------------------------------------------
// ResidualHandle
// ---------------------------------------------------------------------------

ResidualHandle::ResidualHandle(const KronDesign& design, Vector x_prime, double p,
                               Seed seed, const LpConfig& cfg)
    : design_(&design), x_prime_(std::move(x_prime)), p_(p) {
  require(design.has_response(), "residual handle needs a response vector");
  require(static_cast<Index>(x_prime_.size()) == design.cols(),
          "x' length must equal the design column count");
  require(p >= 1.0 && p < 2.0, "residual handle: p must lie in [1,2)");
  const std::size_t q = design.order();
  tau_ = tau_for(design.rows(), cfg);

  z_.resize(q);
  za_.resize(q);
  for (std::size_t i = 0; i < q; ++i) {
    z_[i].reserve(tau_);
    za_[i].reserve(tau_);
    for (Index j = 0; j < tau_; ++j) {
      Vector z = pstable_sample(p, design.row_dims()[i], seed.derived(0xabc + i * 1009 + j));
      za_[i].push_back(design.factor(i).apply_transpose(z));
      z_[i].push_back(std::move(z));
    }
  }

  // y_[i][j]: x' contracted over modes > i with the za vectors. The last
  // stage needs no contraction and is stored once.
  y_.resize(q);
  y_[q - 1].push_back(x_prime_);
  for (std::size_t i = q - 1; i-- > 0;) {
    Index lead = 1;
    for (std::size_t t = 0; t <= i; ++t) lead *= design.col_dims()[t];
    y_[i].reserve(tau_);
    for (Index j = 0; j < tau_; ++j) {
      const Vector& upper = y_[i + 1][y_[i + 1].size() == 1 ? 0 : j];
      y_[i].push_back(contract_last_mode(upper, lead, design.col_dims()[i + 1], za_[i + 1][j]));
    }
  }

  // bp_[i][j]: b contracted over modes > i, viewed (prefix rows) x n_i.
  bp_.resize(q);
  bz_.resize(q);
  {
    const Index n_q = design.row_dims()[q - 1];
    const Index lead = design.rows() / n_q;
    bp_[q - 1].emplace_back(Eigen::Map<const Matrix>(design.response().data(),
                                                     static_cast<Eigen::Index>(lead),
                                                     static_cast<Eigen::Index>(n_q)));
  }
  for (std::size_t i = q - 1; i-- > 0;) {
    Index lead = 1;
    for (std::size_t t = 0; t <= i; ++t) lead *= design.row_dims()[t];
    bp_[i].reserve(tau_);
    for (Index j = 0; j < tau_; ++j) {
      const Matrix& upper = bp_[i + 1][bp_[i + 1].size() == 1 ? 0 : j];
      const Vector flat = upper * z_[i + 1][j];
      bp_[i].emplace_back(Eigen::Map<const Matrix>(
          flat.data(), static_cast<Eigen::Index>(lead / design.row_dims()[i]),
          static_cast<Eigen::Index>(design.row_dims()[i])));
    }
  }
  for (std::size_t i = 0; i < q; ++i) {
    bz_[i].reserve(tau_);
    for (Index j = 0; j < tau_; ++j) {
      const Matrix& bpj = bp_[i][bp_[i].size() == 1 ? 0 : j];
      bz_[i].push_back(bpj * z_[i][j]);
    }
  }

  // Stage-1 medians w_l over the tau contractions.
  const Index n1 = design.row_dims()[0];
  Matrix w_all(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(tau_));
  for (Index j = 0; j < tau_; ++j) {
    const Matrix& bpj = bp_[0][bp_[0].size() == 1 ? 0 : j];
    const Vector& yj = y_[0][y_[0].size() == 1 ? 0 : j];
    w_all.col(static_cast<Eigen::Index>(j)) =
        design.factor(0).apply(yj) - bpj.row(0).transpose();
  }
  stage1_w_.resize(static_cast<Eigen::Index>(n1));
  std::vector<double> row(tau_);
  for (Eigen::Index l = 0; l < w_all.rows(); ++l) {
    for (Index j = 0; j < tau_; ++j) row[j] = w_all(l, static_cast<Eigen::Index>(j));
    stage1_w_(l) = median_abs(row);
  }
}

Vector ResidualHandle::contract_prefix(std::size_t stage, Index rep,
                                       const std::vector<Index>& prefix) const {
  require(prefix.size() == stage, "prefix length must equal the stage index");
  Vector cur = y_[stage][y_[stage].size() == 1 ? 0 : rep];
  for (std::size_t t = 0; t < stage; ++t)
    cur = contract_first_mode(cur, design_->col_dims()[t], design_->factor(t).row(prefix[t]));
  return cur;
}

namespace {

Index prefix_flat(const std::vector<Index>& prefix, const std::vector<Index>& row_dims) {
  if (prefix.empty()) return 0;
  const std::vector<Index> dims(row_dims.begin(), row_dims.begin() + prefix.size());
  return MultiIndex::flatten_index(prefix, dims);
}

}  // namespace

Vector ResidualHandle::stage_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix) const {
  const Vector zeta = contract_prefix(stage, rep, prefix);
  const Matrix& bpj = bp_[stage][bp_[stage].size() == 1 ? 0 : rep];
  const Index pf = prefix_flat(prefix, design_->row_dims());
  return design_->factor(stage).apply(zeta) -
         bpj.row(static_cast<Eigen::Index>(pf)).transpose();
}

double ResidualHandle::block_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix) const {
  const Vector zeta = contract_prefix(stage, rep, prefix);
  const Index pf = prefix_flat(prefix, design_->row_dims());
  return za_[stage][rep].dot(zeta) - bz_[stage][rep](static_cast<Eigen::Index>(pf));
}

double ResidualHandle::entry_contraction(std::size_t stage, Index rep,
                                         const std::vector<Index>& prefix,
                                         Index coord) const {
  const Vector zeta = contract_prefix(stage, rep, prefix);
  const Matrix& bpj = bp_[stage][bp_[stage].size() == 1 ? 0 : rep];
  const Index pf = prefix_flat(prefix, design_->row_dims());
  return design_->factor(stage).row_dot(coord, zeta) -
         bpj(static_cast<Eigen::Index>(pf), static_cast<Eigen::Index>(coord));
}

double ResidualHandle::residual_norm_estimate() const {
  std::vector<double> samples(tau_);
  for (Index j = 0; j < tau_; ++j) samples[j] = block_contraction(0, j, {});
  return median_abs(std::move(samples)) / stable_abs_median(p_);
}

double ResidualHandle::rho_entry(Index flat) const {
  return design_->kron_row(flat).dot(x_prime_) -
         design_->response()(static_cast<Eigen::Index>(flat));
}

// ---------------------------------------------------------------------------
// residual_sample
// ---------------------------------------------------------------------------

namespace {

// Deterministic per-(stage, prefix) sampling context: heavy-hitter set,
// branch estimates, per-candidate masses inside the heavy set, and a seeded
// partition of the non-heavy coordinates. Deterministic so every draw that
// shares the prefix -- and the probability replay -- see the same numbers.
struct StageContext {
  std::vector<Index> heavy;                 // sorted
  std::vector<double> heavy_theta;
  double heavy_theta_sum = 0.0;
  double p_heavy = 0.0;
  Index eta = 1;
  std::vector<Index> nonempty_cells;        // cells with >= 1 non-heavy member
  Seed partition_seed;
  std::vector<std::vector<double>> zetas_cache;  // per rep: zeta as raw values

  [[nodiscard]] Index cell_of(Index j) const {
    return reduce_to(mix64(partition_seed.value ^ mix64(j + 3)), eta);
  }
  [[nodiscard]] bool is_heavy(Index j) const {
    return std::binary_search(heavy.begin(), heavy.end(), j);
  }
};

class ResidualSampler {
 public:
  ResidualSampler(const ResidualHandle& h, const LpConfig& cfg, Seed seed, Index r3)
      : handle_(h), cfg_(cfg), seed_(seed), r3_(r3), p_(h.p()) {
    const Vector& w = h.stage1_weights();
    stage1_probs_.resize(w.size());
    for (Eigen::Index l = 0; l < w.size(); ++l)
      stage1_probs_(l) = std::pow(std::abs(w(l)), p_);
    const double total = stage1_probs_.sum();
    require(total > 0.0, "stage-1 distribution is empty");
    stage1_probs_ /= total;
    stage1_cum_ = cumulative_of(stage1_probs_);
  }

  [[nodiscard]] const Vector& stage1_probs() const { return stage1_probs_; }
  [[nodiscard]] const Vector& stage1_cum() const { return stage1_cum_; }

  struct StagePick {
    Index coord = 0;
    double prob = 1.0;
  };

  StagePick sample_stage(std::size_t stage, const std::vector<Index>& prefix, Rng& rng) {
    const StageContext& ctx = context(stage, prefix);
    if (ctx.p_heavy > 0.0 && rng.uniform01() < ctx.p_heavy) {
      double u = rng.uniform01() * ctx.heavy_theta_sum;
      std::size_t k = 0;
      for (; k + 1 < ctx.heavy.size(); ++k) {
        if (u < ctx.heavy_theta[k]) break;
        u -= ctx.heavy_theta[k];
      }
      return StagePick{ctx.heavy[k],
                       ctx.p_heavy * ctx.heavy_theta[k] / ctx.heavy_theta_sum};
    }
    // Partition branch: uniform over nonempty cells, then mass-proportional
    // among the cell's non-heavy members (masses recomputed directly).
    const Index n_i = handle_.design().row_dims()[stage];
    const Index t = ctx.nonempty_cells[rng.below(ctx.nonempty_cells.size())];
    std::vector<Index> members;
    for (Index j = 0; j < n_i; ++j)
      if (ctx.cell_of(j) == t && !ctx.is_heavy(j)) members.push_back(j);
    std::vector<double> masses(members.size());
    double total = 0.0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      masses[k] = candidate_mass(stage, prefix, members[k]);
      total += masses[k];
    }
    const double cell_p = 1.0 / static_cast<double>(ctx.nonempty_cells.size());
    if (total <= 0.0) {
      // Numerically dead cell: uniform member, same rule replayed.
      const std::size_t k = static_cast<std::size_t>(rng.below(members.size()));
      return StagePick{members[k],
                       (1.0 - ctx.p_heavy) * cell_p / static_cast<double>(members.size())};
    }
    double u = rng.uniform01() * total;
    std::size_t k = 0;
    for (; k + 1 < members.size(); ++k) {
      if (u < masses[k]) break;
      u -= masses[k];
    }
    return StagePick{members[k], (1.0 - ctx.p_heavy) * cell_p * masses[k] / total};
  }

  // Exact replay of the probability that the machinery yields `coords`.
  double replay_prob(const std::vector<Index>& coords) {
    double prob = stage1_probs_(static_cast<Eigen::Index>(coords[0]));
    for (std::size_t stage = 1; stage < coords.size() && prob > 0.0; ++stage) {
      const std::vector<Index> prefix(coords.begin(), coords.begin() + stage);
      const StageContext& ctx = context(stage, prefix);
      const Index coord = coords[stage];
      if (ctx.is_heavy(coord)) {
        const auto it = std::lower_bound(ctx.heavy.begin(), ctx.heavy.end(), coord);
        const std::size_t k = static_cast<std::size_t>(it - ctx.heavy.begin());
        prob *= ctx.heavy_theta_sum > 0.0
                    ? ctx.p_heavy * ctx.heavy_theta[k] / ctx.heavy_theta_sum
                    : 0.0;
        continue;
      }
      if (ctx.nonempty_cells.empty()) return 0.0;
      const Index t = ctx.cell_of(coord);
      const Index n_i = handle_.design().row_dims()[stage];
      double total = 0.0, mine = 0.0;
      Index member_count = 0;
      for (Index j = 0; j < n_i; ++j) {
        if (ctx.cell_of(j) != t || ctx.is_heavy(j)) continue;
        ++member_count;
        const double mass = candidate_mass(stage, prefix, j);
        total += mass;
        if (j == coord) mine = mass;
      }
      const double cell_p = 1.0 / static_cast<double>(ctx.nonempty_cells.size());
      if (total <= 0.0)
        prob *= (1.0 - ctx.p_heavy) * cell_p / static_cast<double>(std::max<Index>(member_count, 1));
      else
        prob *= (1.0 - ctx.p_heavy) * cell_p * mine / total;
    }
    return prob;
  }

 private:
  double candidate_mass(std::size_t stage, const std::vector<Index>& prefix, Index coord) {
    std::vector<double> vals(handle_.tau());
    for (Index j = 0; j < handle_.tau(); ++j)
      vals[j] = handle_.entry_contraction(stage, j, prefix, coord);
    return std::pow(median_abs(std::move(vals)), p_);
  }

  const StageContext& context(std::size_t stage, const std::vector<Index>& prefix) {
    const Index pf = prefix_flat(prefix, handle_.design().row_dims());
    const auto key = std::make_pair(stage, pf);
    auto it = contexts_.find(key);
    if (it != contexts_.end()) return it->second;

    StageContext ctx;
    ctx.partition_seed = seed_.derived(0x9a7 + stage * 0x10001 + pf * 2654435761ULL);
    const Index n_i = handle_.design().row_dims()[stage];

    // Heavy hitters: union of dyadic queries over a few repetitions.
    const double eps_hh =
        std::min(0.5, std::max(cfg_.hh_eps_floor,
                               std::pow(static_cast<double>(std::max<Index>(r3_, 2)),
                                        -cfg_.hh_exponent / p_)));
    DyadicHeavyHitter hh(n_i, eps_hh, seed_.derived(0x44d + stage * 31 + pf));
    std::vector<Index> heavy;
    const Index hh_reps =
        std::min<Index>(handle_.tau(), static_cast<Index>(std::max(1, cfg_.hh_union_reps)));
    for (Index j = 0; j < hh_reps; ++j) {
      const Vector v = handle_.stage_contraction(stage, j, prefix);
      const auto found = hh.query(hh.sketch(v));
      heavy.insert(heavy.end(), found.begin(), found.end());
    }
    std::sort(heavy.begin(), heavy.end());
    heavy.erase(std::unique(heavy.begin(), heavy.end()), heavy.end());
    ctx.heavy = std::move(heavy);

    // Branch estimates: beta (block mass) and gamma (non-heavy remainder).
    std::vector<double> beta_j(handle_.tau()), gamma_j(handle_.tau());
    for (Index j = 0; j < handle_.tau(); ++j) {
      const double block = handle_.block_contraction(stage, j, prefix);
      double heavy_part = 0.0;
      for (Index h : ctx.heavy)
        heavy_part += handle_.z_vector(stage, j)(static_cast<Eigen::Index>(h)) *
                      handle_.entry_contraction(stage, j, prefix, h);
      beta_j[j] = block;
      gamma_j[j] = block - heavy_part;
    }
    const double beta = std::pow(median_abs(std::move(beta_j)), p_);
    const double gamma = std::pow(median_abs(std::move(gamma_j)), p_);
    ctx.p_heavy = (ctx.heavy.empty() || beta <= 0.0)
                      ? 0.0
                      : std::clamp(1.0 - gamma / beta, 0.0, 1.0);

    for (Index h : ctx.heavy)
      ctx.heavy_theta.push_back(candidate_mass(stage, prefix, h));
    for (double t : ctx.heavy_theta) ctx.heavy_theta_sum += t;
    if (ctx.heavy_theta_sum <= 0.0) ctx.p_heavy = 0.0;

    // Seeded partition; record the cells holding non-heavy coordinates.
    ctx.eta = std::min<Index>(
        n_i, std::max<Index>(2, static_cast<Index>(cfg_.eta_const * static_cast<double>(r3_) *
                                                   static_cast<double>(r3_))));
    std::vector<bool> seen(ctx.eta, false);
    for (Index j = 0; j < n_i; ++j)
      if (!ctx.is_heavy(j)) seen[ctx.cell_of(j)] = true;
    for (Index c = 0; c < ctx.eta; ++c)
      if (seen[c]) ctx.nonempty_cells.push_back(c);
    if (ctx.nonempty_cells.empty()) ctx.p_heavy = 1.0;  // every coordinate is heavy

    return contexts_.emplace(key, std::move(ctx)).first->second;
  }

  const ResidualHandle& handle_;
  const LpConfig& cfg_;
  Seed seed_;
  Index r3_;
  double p_;
  Vector stage1_probs_, stage1_cum_;
  std::map<std::pair<std::size_t, Index>, StageContext> contexts_;
};

}  // namespace

DiagonalSampler residual_sample(const ResidualHandle& handle, const WcSampling& wc, Index r2,
                                double delta, Seed seed, const LpConfig& cfg) {
  require(r2 >= 1, "r2 must be >= 1");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const KronDesign& design = handle.design();
  const Index n = design.rows();
  const double p = handle.p();

  DiagonalSampler sigma;
  sigma.p = p;
  sigma.target_m = r2;

  // Exact-fit detection through the median estimator.
  const double b_norm = entrywise_lp_norm(design.response(), p);
  if (handle.residual_norm_estimate() <= 1e-12 * b_norm) {
    sigma.exact_fit = true;
    return sigma;
  }

  const double log_n = std::log2(std::max<double>(n, 4));
  const double r3_raw =
      cfg.r3_override
          ? static_cast<double>(*cfg.r3_override)
          : cfg.r3_log_const * static_cast<double>(r2) *
                std::pow(log_n, cfg.r3_log_exponent) / std::max(delta, 1e-3);
  const Index r3 = static_cast<Index>(std::min<double>(static_cast<double>(n),
                                                       std::ceil(r3_raw)));
  if (r3 >= n) {
    // Oversampling saturates: keep every row exactly.
    sigma.entries.reserve(n);
    for (Index row = 0; row < n; ++row) sigma.entries.push_back(SampleEntry{row, 1.0, 1.0});
    return sigma;
  }

  ResidualSampler sampler(handle, cfg, seed.derived(0x5a3), r3);
  Rng rng(seed.derived(0xd7a4));
  const std::size_t q = design.order();

  std::map<Index, double> residual_prob;  // row -> per-draw probability
  std::vector<Index> coords(q);
  for (Index t = 0; t < r3; ++t) {
    coords[0] = draw_cumulative(sampler.stage1_cum(), rng.uniform01());
    double prob = sampler.stage1_probs()(static_cast<Eigen::Index>(coords[0]));
    for (std::size_t stage = 1; stage < q; ++stage) {
      const auto pick = sampler.sample_stage(
          stage, std::vector<Index>(coords.begin(), coords.begin() + stage), rng);
      coords[stage] = pick.coord;
      prob *= pick.prob;
    }
    if (prob <= 0.0) continue;
    residual_prob.emplace(MultiIndex::flatten_index(coords, design.row_dims()), prob);
  }

  // Fresh basis-distribution draws cover the q_i side of alpha.
  std::map<Index, double> wc_rows;  // row -> product probability
  if (cfg.include_basis_rows) {
    Rng wc_rng(seed.derived(0x77c1));
    for (Index t = 0; t < r3; ++t) {
      for (std::size_t l = 0; l < q; ++l)
        coords[l] = draw_cumulative(wc.cumulative[l], wc_rng.uniform01());
      wc_rows.emplace(MultiIndex::flatten_index(coords, design.row_dims()),
                      wc.product_prob(coords));
    }
  }

  // alpha per distinct row: inclusion through either route over r3 draws.
  const auto inclusion = [&](double per_draw) {
    return 1.0 - std::pow(1.0 - std::min(1.0, per_draw), static_cast<double>(r3));
  };
  std::map<Index, double> alpha;
  for (const auto& [row, p_res] : residual_prob) {
    const auto idx = MultiIndex::unflatten(row, design.row_dims());
    const double q_side = cfg.include_basis_rows ? inclusion(wc.product_prob(idx.coords)) : 0.0;
    alpha[row] = std::min(1.0, 1.0 - (1.0 - inclusion(p_res)) * (1.0 - q_side));
  }
  for (const auto& [row, q_prime] : wc_rows) {
    if (alpha.count(row)) continue;
    const auto idx = MultiIndex::unflatten(row, design.row_dims());
    const double p_res = sampler.replay_prob(idx.coords);
    alpha[row] =
        std::min(1.0, 1.0 - (1.0 - inclusion(p_res)) * (1.0 - inclusion(q_prime)));
  }

  sigma.entries.reserve(alpha.size());
  for (const auto& [row, a] : alpha) {
    require(a > 0.0, "sampled row with zero recorded probability");
    sigma.entries.push_back(SampleEntry{row, 1.0 / a, a});
  }
  return sigma;
}

Vector refine_solve(const KronDesign& design, const Vector& x_prime,
                    const DiagonalSampler& sigma) {
  if (sigma.exact_fit) return x_prime;
  require(!sigma.entries.empty(), "refine_solve: empty sampler");
  const SampledSystem sys = build_sampled_system(design, sigma);
  if (sigma.p == 2.0) return least_squares(sys.w, sys.c).solution;
  return lp_solve(sys.w, sys.c, sigma.p).solution;
}

double estimate_cost(const KronDesign& design, const Vector& x,
                     const std::vector<DiagonalSampler>& samplers, double p) {
  require(!samplers.empty(), "need at least one sampler");
  std::vector<double> costs;
  costs.reserve(samplers.size());
  for (const auto& s : samplers) {
    double acc = 0.0;
    for (const auto& e : s.entries) {
      const double r = design.kron_row(e.row).dot(x) -
                       design.response()(static_cast<Eigen::Index>(e.row));
      acc += e.weight * std::pow(std::abs(r), p);
    }
    costs.push_back(std::pow(acc, 1.0 / p));
  }
  std::sort(costs.begin(), costs.end());
  const std::size_t mid = costs.size() / 2;
  return costs.size() % 2 == 1 ? costs[mid] : 0.5 * (costs[mid - 1] + costs[mid]);
}

namespace {

struct PipelineRun {
  Vector solution;
  DiagonalSampler sigma;
};

PipelineRun run_pipeline(const KronDesign& design, double p, Index r1, Index r2, Seed seed,
                         const LpConfig& cfg) {
  const WellCondBasis basis = build_wc_basis(design, p, 0.1, seed.derived(0xb), cfg);
  O1Result o1 = o1_approx_solve(design, basis, r1, seed.derived(0x0), cfg);
  ResidualHandle handle(design, o1.solution, p, seed.derived(0x4), cfg);
  PipelineRun run;
  run.sigma = residual_sample(handle, o1.sampling, r2, 0.1, seed.derived(0x5), cfg);
  run.solution = refine_solve(design, o1.solution, run.sigma);
  return run;
}

}  // namespace

BoostedReport boosted_solve(const KronDesign& design, double p, double eps, double delta,
                            Seed seed, const LpConfig& cfg, const LpPipelineKnobs& knobs) {
  require(p >= 1.0 && p < 2.0, "boosted_solve: p must lie in [1,2)");
  require(eps > 0.0 && eps < 0.5, "eps must lie in (0, 1/2)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  const double d = static_cast<double>(design.cols());
  const Index r1 =
      knobs.r1.value_or(static_cast<Index>(std::ceil(cfg.r1_const * d * d * d)));
  const Index r2 = knobs.r2.value_or(static_cast<Index>(
      std::ceil(cfg.r2_const * d * d * d / (eps * eps) * std::max(1.0, std::log2(1.0 / eps)))));

  int reps = delta >= 0.5 ? 1 : static_cast<int>(std::ceil(std::log2(1.0 / delta)));
  reps = std::min(reps, cfg.max_boost_reps);

  BoostedReport report;
  report.repetitions = reps;
  std::vector<Vector> candidates;
  candidates.reserve(reps);
  for (int r = 0; r < reps; ++r)
    candidates.push_back(run_pipeline(design, p, r1, r2, seed.derived(0xca0d + r), cfg).solution);
  if (reps == 1) {
    report.solution = candidates[0];
    return report;
  }

  std::vector<DiagonalSampler> cost_samplers;
  cost_samplers.reserve(reps);
  for (int r = 0; r < reps; ++r)
    cost_samplers.push_back(
        run_pipeline(design, p, r1, r2, seed.derived(0x5e1ec7 + r), cfg).sigma);

  report.candidate_costs.resize(reps);
  int best = 0;
  for (int r = 0; r < reps; ++r) {
    report.candidate_costs[r] = estimate_cost(design, candidates[r], cost_samplers, p);
    if (report.candidate_costs[r] < report.candidate_costs[best]) best = r;
  }
  report.chosen = best;
  report.solution = candidates[best];
  return report;
}

}  // namespace kronsketch
