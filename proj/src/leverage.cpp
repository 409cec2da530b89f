#include "kronsketch/leverage.hpp"

#include <cmath>

#include "kronsketch/count_sketch.hpp"

namespace kronsketch {

SampledSystem build_sampled_system(const KronDesign& design, const DiagonalSampler& sampler) {
  sampler.validate();
  require(!sampler.entries.empty(), "empty sampler");
  SampledSystem sys;
  sys.w.resize(static_cast<Eigen::Index>(sampler.entries.size()),
               static_cast<Eigen::Index>(design.cols()));
  sys.c.resize(static_cast<Eigen::Index>(sampler.entries.size()));
  for (std::size_t t = 0; t < sampler.entries.size(); ++t) {
    const auto& e = sampler.entries[t];
    const double scale = std::pow(e.weight, 1.0 / sampler.p);
    sys.w.row(static_cast<Eigen::Index>(t)) = scale * design.kron_row(e.row).transpose();
    sys.c(static_cast<Eigen::Index>(t)) =
        scale * design.response()(static_cast<Eigen::Index>(e.row));
  }
  return sys;
}

Vector approx_leverage(const FactorMatrix& a, double eps_lev, Seed seed,
                       const LeverageConfig& cfg) {
  require(eps_lev > 0.0 && eps_lev < 1.0, "eps_lev must lie in (0,1)");
  const Index n = a.rows();
  const Index d = a.cols();

  // Count-sketch embedding of the column span; saturates to the identity.
  const Index s_rows = static_cast<Index>(
      std::ceil(cfg.sketch_const * static_cast<double>(d) * static_cast<double>(d) /
                (eps_lev * eps_lev)));
  Matrix sa;
  if (s_rows >= n) {
    sa = a.dense();
  } else {
    CountSketch s(s_rows, n, seed.derived(0xce11));
    sa = a.is_sparse() ? s.apply_to_rows(SparseRowMatrix(a.dense().sparseView()))
                       : s.apply_to_rows(a.dense());
  }

  // Basis map from the sketched SVD; rank-deficient inputs keep rank columns.
  Eigen::BDCSVD<Matrix> svd(sa, Eigen::ComputeThinV);
  const double tol = Eigen::NumTraits<double>::epsilon() *
                     static_cast<double>(std::max(sa.rows(), sa.cols())) *
                     (svd.singularValues().size() ? svd.singularValues()(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
    if (svd.singularValues()(k) > tol) ++rank;
  if (rank == 0) return Vector::Zero(static_cast<Eigen::Index>(n));
  Matrix basis_map(static_cast<Eigen::Index>(d), rank);
  for (Eigen::Index k = 0; k < rank; ++k)
    basis_map.col(k) = svd.matrixV().col(k) / svd.singularValues()(k);

  // Gaussian column-count reduction; saturates to exact row norms.
  const Index jl_cols = static_cast<Index>(
      std::ceil(cfg.jl_const * std::log2(std::max<double>(n, 2)) / (eps_lev * eps_lev)));
  if (jl_cols < static_cast<Index>(rank)) {
    Rng rng(seed.derived(0x91));
    Matrix g(rank, static_cast<Eigen::Index>(jl_cols));
    const double scale = 1.0 / std::sqrt(static_cast<double>(jl_cols));
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = scale * rng.normal();
    basis_map = basis_map * g;
  }

  const Matrix embedded = a.multiply_right(basis_map);
  Vector scores(embedded.rows());
  for (Eigen::Index i = 0; i < embedded.rows(); ++i)
    scores(i) = embedded.row(i).squaredNorm();
  return scores;
}

LeverageScores approx_leverage_scores(const KronDesign& design, double eps_lev,
                                      Seed seed, const LeverageConfig& cfg) {
  LeverageScores out;
  out.eps_lev = eps_lev;
  out.per_factor.reserve(design.order());
  for (std::size_t i = 0; i < design.order(); ++i)
    out.per_factor.push_back(
        approx_leverage(design.factor(i), eps_lev, seed.derived(0x1e + i), cfg));
  return out;
}

double kron_leverage(const LeverageScores& scores, const MultiIndex& idx) {
  require(scores.per_factor.size() == idx.coords.size(),
          "kron_leverage: one score vector per factor required");
  double prod = 1.0;
  for (std::size_t l = 0; l < idx.coords.size(); ++l) {
    const Vector& s = scores.per_factor[l];
    require(idx.coords[l] < static_cast<Index>(s.size()), "kron_leverage: index out of range");
    prod *= s(static_cast<Eigen::Index>(idx.coords[l]));
  }
  return prod;
}

namespace {

struct FactorDistribution {
  std::vector<Vector> cumulative;  // per factor, cumulative normalized scores
  std::vector<Vector> probs;
};

FactorDistribution normalize_scores(const LeverageScores& scores) {
  FactorDistribution dist;
  for (const Vector& s : scores.per_factor) {
    const double total = s.sum();
    require(total > 0.0, "all-zero leverage scores");
    Vector probs = s / total;
    Vector cum(probs.size());
    double acc = 0.0;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
      acc += probs(j);
      cum(j) = acc;
    }
    cum(probs.size() - 1) = 1.0;
    dist.probs.push_back(std::move(probs));
    dist.cumulative.push_back(std::move(cum));
  }
  return dist;
}

Index draw_from_cumulative(const Vector& cum, double u) {
  // Inverse CDF, ties resolved toward the lower index.
  const double* begin = cum.data();
  const double* end = begin + cum.size();
  return static_cast<Index>(std::lower_bound(begin, end, u) - begin);
}

}  // namespace

DiagonalSampler build_l2_sampler(const KronDesign& design, const LeverageScores& scores,
                                 Index m, Seed seed) {
  require(m >= 1, "sample count m must be >= 1");
  require(scores.per_factor.size() == design.order(),
          "scores do not match the design's factors");
  const FactorDistribution dist = normalize_scores(scores);
  Rng rng(seed);
  DiagonalSampler sampler;
  sampler.p = 2.0;
  sampler.target_m = m;
  sampler.entries.reserve(m);
  std::vector<Index> coords(design.order());
  for (Index t = 0; t < m; ++t) {
    double prob = 1.0;
    for (std::size_t l = 0; l < design.order(); ++l) {
      const Index j = draw_from_cumulative(dist.cumulative[l], rng.uniform01());
      coords[l] = j;
      prob *= dist.probs[l](static_cast<Eigen::Index>(j));
    }
    const Index flat = MultiIndex::flatten_index(coords, design.row_dims());
    sampler.entries.push_back(
        SampleEntry{flat, 1.0 / (static_cast<double>(m) * prob), prob});
  }
  return sampler;
}

L2SolveResult solve_l2(const KronDesign& design, double eps, double delta, Seed seed,
                       const L2SolveConfig& cfg) {
  require(design.has_response(), "solve_l2 needs a response vector");
  require(eps > 0.0 && eps < 0.5, "eps must lie in (0, 1/2)");
  require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");

  const double q = static_cast<double>(design.order());
  const double eps_lev = std::min(1.0 / (10.0 * q), 0.1);
  const LeverageScores scores =
      approx_leverage_scores(design, eps_lev, seed.derived(0x5c0), cfg.leverage);

  Index m = cfg.sample_override.value_or(static_cast<Index>(std::ceil(
      cfg.sample_const * static_cast<double>(design.cols()) / (delta * eps * eps))));
  // With-replacement draws beyond a few multiples of n add nothing.
  m = std::min<Index>(m, std::max<Index>(design.cols() + 1, 4 * design.rows()));
  const DiagonalSampler sampler = build_l2_sampler(design, scores, m, seed.derived(0xd1));
  const SampledSystem sys = build_sampled_system(design, sampler);

  // Pseudo-inverse of the sampled system: normal equations when well posed,
  // rank-revealing minimum-norm fallback otherwise.
  L2SolveResult res;
  res.samples = m;
  const Matrix gram = sys.w.transpose() * sys.w;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success) {
    res.solution = llt.solve(sys.w.transpose() * sys.c);
    const double rel =
        (gram * res.solution - sys.w.transpose() * sys.c).norm() /
        std::max(1e-300, sys.c.norm() * gram.norm());
    if (res.solution.allFinite() && rel < 1e-8) return res;
  }
  SolveReport rep = least_squares(sys.w, sys.c);
  res.solution = rep.solution;
  res.rank_deficient = rep.rank_deficient;
  return res;
}

}  // namespace kronsketch
