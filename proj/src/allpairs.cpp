#include "kronsketch/allpairs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "kronsketch/count_sketch.hpp"
#include "kronsketch/sketch_ops.hpp"
#include "kronsketch/stable.hpp"

namespace kronsketch {

namespace {

Index tau_for(Index n, double tau_const) {
  return std::max<Index>(9, static_cast<Index>(std::ceil(
                               tau_const * std::log2(std::max<double>(n, 4)))));
}

// Assembles (S1 (x) S2)(F (x) 1 - 1 (x) F) from the four factor sketches;
// row flat index is i1 + k*i2 (first factor fastest).
Matrix kron_difference(const Matrix& s1f, const Vector& s1_ones, const Matrix& s2f,
                       const Vector& s2_ones) {
  const Eigen::Index k1 = s1f.rows();
  const Eigen::Index k2 = s2f.rows();
  Matrix out(k1 * k2, s1f.cols());
  for (Eigen::Index i2 = 0; i2 < k2; ++i2)
    for (Eigen::Index i1 = 0; i1 < k1; ++i1)
      out.row(i1 + k1 * i2) = s2_ones(i2) * s1f.row(i1) - s1_ones(i1) * s2f.row(i2);
  return out;
}

}  // namespace

Matrix allpairs_embed(const AllPairsProblem& problem, double p, Index k, Seed seed,
                      const AllPairsConfig& cfg) {
  (void)cfg;
  require(p >= 1.0 && p < 2.0, "allpairs_embed: p must lie in [1,2)");
  require(k >= problem.d() + 1, "sketch rows must exceed d+1");
  const Index n = problem.n();
  const Matrix f = problem.f();
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(n));

  for (int attempt = 0; attempt < 3; ++attempt) {
    PStableSparse s1(k, n, p, seed.derived(0xa11 + attempt * 17));
    PStableSparse s2(k, n, p, seed.derived(0xb22 + attempt * 17));
    const Matrix s1f = s1.apply_to_rows(f);
    const Matrix s2f = s2.apply_to_rows(f);
    const Vector s1o = s1.apply(ones);
    const Vector s2o = s2.apply(ones);
    // R of the QR of M_sk = S1F (x) S2·1 - S1·1 (x) S2F through its Gram
    // matrix: the k^2 sketched rows never materialize.
    const Matrix gram = s2o.squaredNorm() * (s1f.transpose() * s1f) -
                        (s1f.transpose() * s1o) * (s2o.transpose() * s2f) -
                        (s2f.transpose() * s2o) * (s1o.transpose() * s1f) +
                        s1o.squaredNorm() * (s2f.transpose() * s2f);
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() == Eigen::Success) {
      Matrix r = llt.matrixU();
      const double dmax = r.diagonal().cwiseAbs().maxCoeff();
      if (dmax > 0.0 && r.diagonal().cwiseAbs().minCoeff() >= 1e-10 * dmax) return r;
    }
    if (attempt == 2) {
      // Degenerate column span (e.g. Abar = 0): bump the Gram diagonal so R
      // stays invertible; the dead directions carry no mass anyway.
      const double bump = std::max(1e-12 * gram.diagonal().maxCoeff(), 1e-12);
      Eigen::LLT<Matrix> reg(Matrix(gram + bump * Matrix::Identity(gram.rows(), gram.cols())));
      Matrix r = reg.matrixU();
      for (Eigen::Index j = 0; j < r.rows(); ++j)
        if (std::abs(r(j, j)) <= 0.0) r(j, j) = std::sqrt(bump);
      return r;
    }
  }
  throw ConvergenceError("allpairs_embed: unreachable");
}

namespace {

struct ColumnTables {
  Index n = 0;
  Index xi = 0;
  Index tau = 0;
  double p = 1.0;
  Matrix fy;       // n x xi
  Matrix zfy;      // tau x xi
  Vector z_ones;   // tau
  Matrix z;        // tau x n (dense p-stable rows)
  Matrix sigma;    // xi x n estimates of ||W^{(i,l)}||_p^p
  double sigma_total = 0.0;
};

// W^{(i,l)}_j = FY(j,i) - FY(l,i).
inline double w_entry(const ColumnTables& t, Index i, Index l, Index j) {
  return t.fy(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) -
         t.fy(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
}

ColumnTables build_tables(const AllPairsProblem& problem, const Matrix& r_upper, double p,
                          Seed seed, const AllPairsConfig& cfg) {
  ColumnTables t;
  t.n = problem.n();
  t.p = p;
  t.xi = std::max<Index>(8, static_cast<Index>(std::ceil(2.0 * std::log2(std::max<double>(t.n, 4)))));
  t.tau = tau_for(t.n, cfg.tau_const);

  // Gaussian column reduction Y = R^{-1} G.
  Rng grng(seed.derived(0x6a5));
  Matrix g(r_upper.cols(), static_cast<Eigen::Index>(t.xi));
  const double gscale = 1.0 / std::sqrt(static_cast<double>(t.xi));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = gscale * grng.normal();
  const Matrix y = r_upper.triangularView<Eigen::Upper>().solve(g);
  t.fy = problem.f() * y;

  // Indyk median estimates of every column norm from tau stable rows.
  t.z.resize(static_cast<Eigen::Index>(t.tau), static_cast<Eigen::Index>(t.n));
  for (Index r = 0; r < t.tau; ++r)
    t.z.row(static_cast<Eigen::Index>(r)) =
        pstable_sample(p, t.n, seed.derived(0x57ab + r)).transpose();
  t.zfy = t.z * t.fy;
  t.z_ones = t.z * Vector::Ones(static_cast<Eigen::Index>(t.n));

  const double theta = stable_abs_median(p);
  t.sigma.resize(static_cast<Eigen::Index>(t.xi), static_cast<Eigen::Index>(t.n));
  std::vector<double> vals(t.tau);
  for (Index i = 0; i < t.xi; ++i)
    for (Index l = 0; l < t.n; ++l) {
      for (Index r = 0; r < t.tau; ++r)
        vals[r] = t.zfy(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) -
                  t.z_ones(static_cast<Eigen::Index>(r)) *
                      t.fy(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
      t.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
          std::pow(median_abs(vals) / theta, p);
    }
  t.sigma_total = t.sigma.sum();
  return t;
}

// Per-(i,l) heavy-hitter data shared by sampling and probability replay.
struct ColumnContext {
  std::vector<Index> heavy;  // sorted
  double heavy_mass = 0.0;   // sum of exact |W_j|^p over heavy
  double alpha = 0.0;        // estimated non-heavy mass
  double p_heavy = 0.0;
};

class ApSampler {
 public:
  ApSampler(const AllPairsProblem& problem, const ColumnTables& tables, Index r,
            const AllPairsConfig& cfg, Seed seed)
      : problem_(problem), t_(tables), r_(r), cfg_(cfg), seed_(seed),
        hh_(tables.n, hh_eps(), seed.derived(0x440)),
        scaler_(tables.n, tables.p, seed.derived(0xe49)) {
    eta_ = std::max<Index>(
        2, std::min({static_cast<Index>(std::ceil(std::pow(static_cast<double>(r_), 4.0) /
                                                  std::pow(cfg.eta_eps, 4.0))),
                     std::max<Index>(2, t_.n / 4), cfg.eta_cap}));
    partition_seed_ = seed.derived(0x9a37);
  }

  [[nodiscard]] Index eta() const { return eta_; }
  [[nodiscard]] Index cell_of(Index j) const {
    return reduce_to(mix64(partition_seed_.value ^ mix64(j + 11)), eta_);
  }
  [[nodiscard]] double hh_eps() const {
    return std::min(0.5, std::max(cfg_.hh_eps_floor,
                                  std::pow(static_cast<double>(std::max<Index>(r_, 2)),
                                           -cfg_.hh_exponent / t_.p)));
  }

  const ColumnContext& context(Index i, Index l) {
    const auto key = std::make_pair(i, l);
    auto it = contexts_.find(key);
    if (it != contexts_.end()) return it->second;

    ColumnContext ctx;
    const double sigma_il = t_.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
    const double thr = 0.5 * std::pow(hh_eps(), t_.p) * std::max(sigma_il, 0.0);
    if (t_.n <= cfg_.exact_column_scan) {
      // Desk scale: exact heavy filter by direct scan.
      for (Index j = 0; j < t_.n; ++j) {
        const double mass = std::pow(std::abs(w_entry(t_, i, l, j)), t_.p);
        if (mass > thr) {
          ctx.heavy.push_back(j);
          ctx.heavy_mass += mass;
        }
      }
    } else {
      // Candidates via a transient dyadic sketch of the implicit column,
      // then the exact filter over the candidates.
      Vector w_col(static_cast<Eigen::Index>(t_.n));
      for (Index j = 0; j < t_.n; ++j)
        w_col(static_cast<Eigen::Index>(j)) = w_entry(t_, i, l, j);
      for (Index j : hh_.query(hh_.sketch(w_col))) {
        const double mass = std::pow(std::abs(w_col(static_cast<Eigen::Index>(j))), t_.p);
        if (mass > thr) {
          ctx.heavy.push_back(j);
          ctx.heavy_mass += mass;
        }
      }
      std::sort(ctx.heavy.begin(), ctx.heavy.end());
    }

    // Non-heavy mass estimate: subtract the heavy contributions from the
    // stable contractions and take the median.
    std::vector<double> vals(t_.tau);
    for (Index r = 0; r < t_.tau; ++r) {
      double zw = t_.zfy(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) -
                  t_.z_ones(static_cast<Eigen::Index>(r)) *
                      t_.fy(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
      for (Index h : ctx.heavy)
        zw -= t_.z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(h)) *
              w_entry(t_, i, l, h);
      vals[r] = zw;
    }
    ctx.alpha = std::pow(median_abs(std::move(vals)) / stable_abs_median(t_.p), t_.p);
    ctx.p_heavy = (ctx.heavy.empty() || sigma_il <= 0.0)
                      ? 0.0
                      : std::clamp(1.0 - ctx.alpha / sigma_il, 0.0, 1.0);
    if (ctx.heavy_mass <= 0.0) ctx.p_heavy = 0.0;
    return contexts_.emplace(key, std::move(ctx)).first->second;
  }

  [[nodiscard]] bool cell_scan(Index i, Index l, Index cell, const ColumnContext& ctx,
                               Index* argmax, double* mass_of_argmax, double* cell_mass,
                               Index* member_count) const {
    double best = -1.0;
    Index best_j = 0;
    double total = 0.0;
    Index count = 0;
    for (Index j = 0; j < t_.n; ++j) {
      if (cell_of(j) != cell) continue;
      if (std::binary_search(ctx.heavy.begin(), ctx.heavy.end(), j)) continue;
      ++count;
      const double w = w_entry(t_, i, l, j);
      total += std::pow(std::abs(w), t_.p);
      const double scaled = std::abs(w) * scaler_.scale(j);
      if (scaled > best) {
        best = scaled;
        best_j = j;
      }
    }
    if (count == 0) return false;
    *argmax = best_j;
    *mass_of_argmax = std::pow(std::abs(w_entry(t_, i, l, best_j)), t_.p);
    *cell_mass = total;
    *member_count = count;
    return true;
  }

  // Probability that one draw produces flat row (j, l): sum over all xi
  // columns that could have yielded it.
  double row_probability(Index j, Index l) {
    if (t_.sigma_total <= 0.0) return 0.0;
    double prob = 0.0;
    for (Index i = 0; i < t_.xi; ++i) {
      const double pick_col =
          t_.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) / t_.sigma_total;
      if (pick_col <= 0.0) continue;
      const ColumnContext& ctx = context(i, l);
      const double mass = std::pow(std::abs(w_entry(t_, i, l, j)), t_.p);
      double within = 0.0;
      if (std::binary_search(ctx.heavy.begin(), ctx.heavy.end(), j)) {
        within = ctx.heavy_mass > 0.0 ? ctx.p_heavy * mass / ctx.heavy_mass : 0.0;
      } else {
        Index argmax = 0, count = 0;
        double argmax_mass = 0.0, cell_mass = 0.0;
        if (cell_scan(i, l, cell_of(j), ctx, &argmax, &argmax_mass, &cell_mass, &count)) {
          const double within_cell =
              cell_mass > 0.0 ? mass / cell_mass : 1.0 / static_cast<double>(count);
          within = (1.0 - ctx.p_heavy) * within_cell / static_cast<double>(eta_);
        }
      }
      prob += pick_col * within;
    }
    return prob;
  }

  const AllPairsProblem& problem_;
  const ColumnTables& t_;
  Index r_;
  const AllPairsConfig& cfg_;
  Seed seed_;
  DyadicHeavyHitter hh_;
  ExponentialScaler scaler_;
  Index eta_ = 2;
  Seed partition_seed_;
  std::map<std::pair<Index, Index>, ColumnContext> contexts_;
};

}  // namespace

DiagonalSampler allpairs_sample(const AllPairsProblem& problem, const Matrix& r_upper,
                                Index r, double p, double eps, Seed seed,
                                const AllPairsConfig& cfg, ApSampleStats* stats) {
  require(r >= 1, "sample count must be >= 1");
  require(p >= 1.0 && p < 2.0, "allpairs_sample: p must lie in [1,2)");
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  const Index n = problem.n();

  DiagonalSampler sigma_out;
  sigma_out.p = p;
  sigma_out.target_m = r;

  const ColumnTables tables = build_tables(problem, r_upper, p, seed.derived(0x7ab1e), cfg);
  const double scale = tables.fy.cwiseAbs().maxCoeff();
  if (tables.sigma_total <= 1e-28 * std::max(1.0, scale)) {
    sigma_out.exact_fit = true;  // M = 0: nothing to sample
    return sigma_out;
  }

  ApSampler sampler(problem, tables, r, cfg, seed.derived(0x3a3));
  Rng rng(seed.derived(0xd4a));

  // Cumulative distribution over the xi * n columns.
  Vector flat_sigma(static_cast<Eigen::Index>(tables.xi * n));
  for (Index i = 0; i < tables.xi; ++i)
    for (Index l = 0; l < n; ++l)
      flat_sigma(static_cast<Eigen::Index>(i + tables.xi * l)) =
          tables.sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
  Vector cum(flat_sigma.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < flat_sigma.size(); ++k) {
    acc += flat_sigma(k);
    cum(k) = acc;
  }
  cum(cum.size() - 1) = acc;

  std::set<Index> used_cells;
  std::map<Index, double> row_prob;  // flat row (j + n*l) -> per-draw probability
  ApSampleStats local_stats;

  for (Index draw = 0; draw < r; ++draw) {
    // Sample a column (i, l).
    const double u = rng.uniform01() * acc;
    const double* begin = cum.data();
    Index flat_col = static_cast<Index>(
        std::lower_bound(begin, begin + cum.size(), u) - begin);
    if (flat_col >= tables.xi * n) flat_col = tables.xi * n - 1;
    const Index i = flat_col % tables.xi;
    const Index l = flat_col / tables.xi;
    const ColumnContext& ctx = sampler.context(i, l);

    Index j_star = 0;
    bool have = false;
    if (ctx.p_heavy > 0.0 && rng.uniform01() < ctx.p_heavy) {
      double v = rng.uniform01() * ctx.heavy_mass;
      for (Index h : ctx.heavy) {
        const double mass = std::pow(std::abs(w_entry(tables, i, l, h)), p);
        if (v < mass || h == ctx.heavy.back()) {
          j_star = h;
          have = true;
          break;
        }
        v -= mass;
      }
    } else {
      // Partition branch with the distinct-cell conditioning.
      Index cell = 0;
      bool fresh = false;
      for (int attempt = 0; attempt <= cfg.partition_retry; ++attempt) {
        cell = rng.below(sampler.eta());
        if (!used_cells.count(cell)) {
          fresh = true;
          break;
        }
      }
      if (!fresh) ++local_stats.dependence_warnings;
      used_cells.insert(cell);
      Index argmax = 0, count = 0;
      double argmax_mass = 0.0, cell_mass = 0.0;
      if (sampler.cell_scan(i, l, cell, ctx, &argmax, &argmax_mass, &cell_mass, &count)) {
        ++local_stats.exact_scan_fallbacks;
        j_star = argmax;
        have = true;
      }
    }
    if (!have) continue;
    const Index flat_row = j_star + n * l;
    if (!row_prob.count(flat_row))
      row_prob.emplace(flat_row, sampler.row_probability(j_star, l));
  }

  const auto inclusion = [&](double per_draw) {
    return 1.0 - std::pow(1.0 - std::min(1.0, per_draw), static_cast<double>(r));
  };
  sigma_out.entries.reserve(row_prob.size());
  for (const auto& [row, prob] : row_prob) {
    if (prob <= 0.0) continue;
    const double alpha = std::min(1.0, inclusion(prob));
    sigma_out.entries.push_back(SampleEntry{row, 1.0 / alpha, alpha});
  }
  if (stats) *stats = local_stats;
  return sigma_out;
}

namespace {

// Weighted l_p solve over the sampled pair rows.
Vector solve_on_sample(const AllPairsProblem& problem, const DiagonalSampler& sampler,
                       double p) {
  const Index n = problem.n();
  Matrix w(static_cast<Eigen::Index>(sampler.entries.size()), problem.a.cols());
  Vector c(static_cast<Eigen::Index>(sampler.entries.size()));
  for (std::size_t t = 0; t < sampler.entries.size(); ++t) {
    const auto& e = sampler.entries[t];
    const Index j = e.row % n;
    const Index l = e.row / n;
    const double scale = std::pow(e.weight, 1.0 / p);
    w.row(static_cast<Eigen::Index>(t)) =
        scale * (problem.a.row(static_cast<Eigen::Index>(j)) -
                 problem.a.row(static_cast<Eigen::Index>(l)));
    c(static_cast<Eigen::Index>(t)) =
        scale * (problem.b(static_cast<Eigen::Index>(j)) -
                 problem.b(static_cast<Eigen::Index>(l)));
  }
  if (p == 2.0) return least_squares(w, c).solution;
  return lp_solve(w, c, p).solution;
}

Vector solve_p2(const AllPairsProblem& problem, double eps, Seed seed,
                const AllPairsConfig& cfg) {
  const Index n = problem.n();
  const Index d1 = problem.d() + 1;
  const Index total_rows = std::max<Index>(
      d1 + 1, static_cast<Index>(std::ceil(cfg.p2_rows_const * static_cast<double>(d1) /
                                           (eps * eps))));
  const Index k = std::max<Index>(2, static_cast<Index>(std::ceil(
                                         std::sqrt(static_cast<double>(total_rows)))));
  CountSketch s1(k, n, seed.derived(0xc51));
  CountSketch s2(k, n, seed.derived(0xc52));
  const Matrix f = problem.f();
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(n));
  const Matrix s1f = s1.apply_to_rows(f);
  const Matrix s2f = s2.apply_to_rows(f);
  const Vector s1o = s1.apply(ones);
  const Vector s2o = s2.apply(ones);
  const Matrix sketched = kron_difference(s1f, s1o, s2f, s2o);
  const Matrix sa = sketched.leftCols(problem.d());
  const Vector sb = sketched.col(problem.d());
  return least_squares(sa, sb).solution;
}

}  // namespace

AllPairsResult allpairs_solve(const AllPairsProblem& problem, double p, double eps,
                              double delta, Seed seed, const AllPairsConfig& cfg) {
  require(p >= 1.0 && p <= 2.0, "p must lie in [1,2]");
  require(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
  require(problem.d() < problem.n(),
          "all-pairs estimator undefined for d >= n at this scale");

  AllPairsResult res;
  if (p == 2.0) {
    res.solution = solve_p2(problem, eps, seed, cfg);
    return res;
  }

  const Index d1 = problem.d() + 1;
  const Index k = std::min<Index>(
      std::max<Index>(d1 + 1, static_cast<Index>(cfg.embed_rows_const *
                                                 static_cast<double>(d1 * d1))),
      2048);
  const Matrix r_upper = allpairs_embed(problem, p, k, seed.derived(0xe3bd), cfg);
  const Index r = static_cast<Index>(
      std::ceil(cfg.sample_const * static_cast<double>(d1 * d1) / (eps * eps) *
                std::max(1.0, std::log2(1.0 / delta))));
  const DiagonalSampler sampler =
      allpairs_sample(problem, r_upper, r, p, eps, seed.derived(0x5a9), cfg);
  if (sampler.exact_fit || sampler.entries.empty()) {
    res.solution = Vector::Zero(problem.a.cols());
    return res;
  }
  res.sampled_rows = static_cast<Index>(sampler.entries.size());
  res.solution = solve_on_sample(problem, sampler, p);
  return res;
}

}  // namespace kronsketch
