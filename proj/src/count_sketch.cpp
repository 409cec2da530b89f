#include "kronsketch/count_sketch.hpp"

#include <algorithm>
#include <cmath>

#include "kronsketch/stable.hpp"

namespace kronsketch {

Vector CountSketch::apply(const Vector& x) const {
  require(static_cast<Index>(x.size()) == n_, "count-sketch apply: dimension mismatch");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m_));
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x(j) == 0.0) continue;
    out(static_cast<Eigen::Index>(bucket(j))) += sign(j) * x(j);
  }
  return out;
}

Matrix CountSketch::apply_to_rows(const Matrix& a) const {
  require(static_cast<Index>(a.rows()) == n_, "count-sketch apply: dimension mismatch");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(m_), a.cols());
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    out.row(static_cast<Eigen::Index>(bucket(j))) += sign(j) * a.row(j);
  return out;
}

Matrix CountSketch::apply_to_rows(const SparseRowMatrix& a) const {
  require(static_cast<Index>(a.rows()) == n_, "count-sketch apply: dimension mismatch");
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(m_), a.cols());
  for (Eigen::Index j = 0; j < a.outerSize(); ++j) {
    const Eigen::Index r = static_cast<Eigen::Index>(bucket(j));
    const double s = sign(j);
    for (SparseRowMatrix::InnerIterator it(a, j); it; ++it)
      out(r, it.col()) += s * it.value();
  }
  return out;
}

namespace {

int bit_width_of(Index n) {
  int w = 0;
  while ((Index{1} << w) < n) ++w;
  return w;
}

}  // namespace

DyadicHeavyHitter::DyadicHeavyHitter(Index n, double eps, Seed seed, int tail_exponent)
    : n_(n), eps_(eps), seed_(seed) {
  require(n >= 1, "need n >= 1");
  require(eps > 0.0 && eps <= 1.0, "threshold must lie in (0,1]");
  levels_ = bit_width_of(n);
  const double log2n = std::max(1.0, std::log2(static_cast<double>(n)));
  reps_ = static_cast<Index>(std::ceil(3.0 * (tail_exponent + 1) * log2n / 2.0));
  reps_ = std::max<Index>(reps_, 9);
  buckets_ = std::max<Index>(8, static_cast<Index>(std::ceil(12.0 / (eps * eps))));
  expand_budget_ = std::max<Index>(8, static_cast<Index>(std::ceil(16.0 / (eps * eps))));
  candidate_cap_ = std::max<Index>(4, static_cast<Index>(std::ceil(8.0 / (eps * eps))));
}

Index DyadicHeavyHitter::sketch_size() const {
  return static_cast<Index>(levels_ + 1) * reps_ * buckets_;
}

Index DyadicHeavyHitter::bucket_of(int level, int rep, Index prefix) const {
  const std::uint64_t key =
      mix64(seed_.value ^ mix64((static_cast<std::uint64_t>(level) << 40) ^
                                (static_cast<std::uint64_t>(rep) << 20) ^ (prefix + 1)));
  return reduce_to(key, buckets_);
}

double DyadicHeavyHitter::sign_of(int rep, Index j) const {
  // Signs live on the finest indices and are shared across levels within a
  // repetition, so a node estimate sees the same signed contribution of a
  // heavy coordinate at every level.
  return (mix64(seed_.stream ^
                mix64(seed_.value + ((static_cast<std::uint64_t>(rep) << 32) ^ (j + 7)))) >>
          63)
             ? 1.0
             : -1.0;
}

DyadicHeavyHitter::State DyadicHeavyHitter::combine(const State& x, double cx,
                                                    const State& y, double cy) {
  require(x.populated() && y.populated() && x.n == y.n,
          "combining incompatible heavy-hitter states");
  State out = x;
  for (std::size_t level = 0; level < out.sketches.size(); ++level)
    for (std::size_t r = 0; r < out.sketches[level].size(); ++r)
      out.sketches[level][r] = cx * x.sketches[level][r] + cy * y.sketches[level][r];
  return out;
}

DyadicHeavyHitter::State DyadicHeavyHitter::sketch(const Vector& x) const {
  require(static_cast<Index>(x.size()) == n_, "heavy-hitter sketch: dimension mismatch");
  State st;
  st.n = n_;
  st.sketches.resize(levels_ + 1);
  for (int level = 0; level <= levels_; ++level) {
    st.sketches[level].assign(reps_, Vector::Zero(static_cast<Eigen::Index>(buckets_)));
    const int shift = levels_ - level;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (x(j) == 0.0) continue;
      const Index prefix = static_cast<Index>(j) >> shift;
      for (Index r = 0; r < reps_; ++r)
        st.sketches[level][r](static_cast<Eigen::Index>(bucket_of(level, static_cast<int>(r), prefix))) +=
            sign_of(static_cast<int>(r), j) * x(j);
    }
  }
  return st;
}

double DyadicHeavyHitter::node_mass(const State& state, int level, Index prefix) const {
  // A node containing a heavy coordinate clears |x_j| in any single
  // repetition only with probability >= 1/2 (an opposite-signed sibling of
  // similar magnitude cancels it in the other half). Grouping repetitions
  // into triples and taking the max raises that to 7/8 per triple; the
  // returned score is the 0.4-quantile over triples, which stays at the
  // heavy coordinate's scale with high probability.
  std::vector<double> triples;
  triples.reserve(reps_ / 3 + 1);
  double cur = 0.0;
  for (Index r = 0; r < reps_; ++r) {
    const double v = std::abs(state.sketches[level][r](
        static_cast<Eigen::Index>(bucket_of(level, static_cast<int>(r), prefix))));
    cur = std::max(cur, v);
    if (r % 3 == 2) {
      triples.push_back(cur);
      cur = 0.0;
    }
  }
  if (reps_ % 3 != 0) triples.push_back(cur);
  const std::size_t k = static_cast<std::size_t>(0.4 * (triples.size() - 1));
  std::nth_element(triples.begin(), triples.begin() + k, triples.end());
  return triples[k];
}

double DyadicHeavyHitter::point_estimate(const State& state, Index j) const {
  require(state.populated(), "querying unpopulated heavy-hitter state");
  require(j < n_, "index out of range");
  std::vector<double> vals(reps_);
  for (Index r = 0; r < reps_; ++r)
    vals[r] = sign_of(static_cast<int>(r), j) *
              state.sketches[levels_][r](
                  static_cast<Eigen::Index>(bucket_of(levels_, static_cast<int>(r), j)));
  std::sort(vals.begin(), vals.end());
  const std::size_t mid = vals.size() / 2;
  return vals.size() % 2 == 1 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
}

std::vector<Index> DyadicHeavyHitter::query(const State& state) const {
  require(state.populated(), "querying unpopulated heavy-hitter state");
  // ||x||_2 estimate: median over repetitions of the finest-level bucket
  // norm (count-sketch preserves the norm in expectation).
  std::vector<double> norms(reps_);
  for (Index r = 0; r < reps_; ++r) norms[r] = state.sketches[levels_][r].norm();
  const double norm_est = median_abs(std::move(norms));
  if (norm_est == 0.0) return {};

  const double expand_threshold = 0.35 * eps_ * norm_est;
  const double accept_threshold = 0.5 * eps_ * norm_est;

  std::vector<Index> frontier{0};  // level-0 root prefix
  for (int level = 1; level <= levels_; ++level) {
    std::vector<std::pair<double, Index>> scored;
    scored.reserve(frontier.size() * 2);
    const Index max_prefix = (n_ + (Index{1} << (levels_ - level)) - 1) >> (levels_ - level);
    for (Index parent : frontier)
      for (Index child = parent * 2; child <= parent * 2 + 1; ++child) {
        if (child >= max_prefix) continue;
        const double mass = node_mass(state, level, child);
        if (mass >= expand_threshold) scored.emplace_back(mass, child);
      }
    if (scored.size() > expand_budget_) {
      std::nth_element(scored.begin(), scored.begin() + expand_budget_, scored.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      scored.resize(expand_budget_);
    }
    frontier.clear();
    for (const auto& [mass, prefix] : scored) frontier.push_back(prefix);
    if (frontier.empty()) return {};
  }

  std::vector<std::pair<double, Index>> accepted;
  for (Index j : frontier) {
    if (j >= n_) continue;
    const double est = std::abs(point_estimate(state, j));
    if (est >= accept_threshold) accepted.emplace_back(est, j);
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  if (accepted.size() > candidate_cap_) accepted.resize(candidate_cap_);
  std::vector<Index> out;
  out.reserve(accepted.size());
  for (const auto& [est, j] : accepted) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace kronsketch
