#include <doctest.h>

#include <cmath>
#include <map>

#include "kronsketch/leverage.hpp"
#include "kronsketch/oracle.hpp"
#include "test_support.hpp"

using namespace kronsketch;
using ksk_test::random_design;
using ksk_test::random_matrix;
using ksk_test::random_vector;

TEST_CASE("approx_leverage: identity matrix has unit scores") {
  const Vector s = approx_leverage(FactorMatrix(Matrix::Identity(8, 8)), 0.1, Seed{1, 1});
  for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(s(i) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("approx_leverage: single nonzero row carries all the mass") {
  Matrix a = Matrix::Zero(3, 1);
  a(0, 0) = 1.0;
  const Vector s = approx_leverage(FactorMatrix(a), 0.1, Seed{2, 2});
  CHECK(s(0) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(s(1) == doctest::Approx(0.0));
  CHECK(s(2) == doctest::Approx(0.0));
}

TEST_CASE("approx_leverage matches the SVD oracle on a 200x5 Gaussian") {
  const double eps_lev = 0.25;
  const Matrix a = random_matrix(200, 5, Seed{42, 0});
  const Vector exact = oracle::exact_leverage(a);
  const Vector approx = approx_leverage(FactorMatrix(a), eps_lev, Seed{42, 1});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < exact.size(); ++i)
    worst = std::max(worst, std::abs(approx(i) / exact(i) - 1.0));
  CHECK(worst <= eps_lev);
}

TEST_CASE("approx_leverage exercises the sketched path on taller inputs") {
  // Loose eps keeps the count-sketch and JL stages genuinely smaller than
  // the input so the reductions really run.
  const double eps_lev = 0.5;
  const Matrix a = random_matrix(3000, 4, Seed{43, 0});
  const Vector exact = oracle::exact_leverage(a);
  const Vector approx = approx_leverage(FactorMatrix(a), eps_lev, Seed{43, 1});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < exact.size(); ++i)
    if (exact(i) > 1e-6)
      worst = std::max(worst, std::abs(approx(i) / exact(i) - 1.0));
  CHECK(worst <= eps_lev);
}

TEST_CASE("approx_leverage: zero matrix yields zero scores") {
  const Vector s = approx_leverage(FactorMatrix(Matrix::Zero(5, 2)), 0.1, Seed{3, 3});
  CHECK(s.norm() == 0.0);
}

TEST_CASE("kron_leverage: concentrated factors put the mass on one row") {
  Matrix e1 = Matrix::Zero(4, 1);
  e1(0, 0) = 1.0;
  LeverageScores scores;
  scores.per_factor = {oracle::exact_leverage(e1), oracle::exact_leverage(e1)};
  std::vector<Index> dims{4, 4};
  CHECK(kron_leverage(scores, MultiIndex({0, 0}, dims)) == doctest::Approx(1.0));
  CHECK(kron_leverage(scores, MultiIndex({1, 2}, dims)) == doctest::Approx(0.0));
}

TEST_CASE("kron_leverage: exact product equals the materialized leverage") {
  for (int t = 0; t < 3; ++t) {
    Seed seed{7000, static_cast<std::uint64_t>(t)};
    const KronDesign design = random_design({{20, 3}, {20, 3}}, seed);
    LeverageScores scores;
    scores.per_factor = {oracle::exact_leverage(design.factor(0).dense()),
                         oracle::exact_leverage(design.factor(1).dense())};
    const Vector full = oracle::exact_leverage(oracle::materialize(design));
    for (Index flat = 0; flat < design.rows(); ++flat) {
      const MultiIndex idx = MultiIndex::unflatten(flat, design.row_dims());
      CHECK(std::abs(kron_leverage(scores, idx) -
                     full(static_cast<Eigen::Index>(flat))) <= 1e-9);
    }
  }
}

TEST_CASE("kron_leverage is invariant to factor scaling") {
  Seed seed{7100, 0};
  const Matrix a = random_matrix(12, 3, seed);
  LeverageScores s1, s2;
  s1.per_factor = {oracle::exact_leverage(a), oracle::exact_leverage(a)};
  s2.per_factor = {oracle::exact_leverage(Matrix(5.0 * a)), oracle::exact_leverage(a)};
  std::vector<Index> dims{12, 12};
  for (Index flat = 0; flat < 144; flat += 7) {
    const MultiIndex idx = MultiIndex::unflatten(flat, dims);
    CHECK(kron_leverage(s1, idx) == doctest::Approx(kron_leverage(s2, idx)).epsilon(1e-9));
  }
}

TEST_CASE("build_l2_sampler: concentrated scores select a single row") {
  const KronDesign design = random_design({{4, 1}, {5, 1}}, Seed{8, 8});
  LeverageScores scores;
  Vector s1 = Vector::Zero(4), s2 = Vector::Zero(5);
  s1(2) = 1.0;
  s2(3) = 1.0;
  scores.per_factor = {s1, s2};
  const DiagonalSampler sampler = build_l2_sampler(design, scores, 25, Seed{9, 9});
  CHECK(sampler.entries.size() == 25);
  const Index expected = MultiIndex::flatten_index({2, 3}, {4, 5});
  for (const auto& e : sampler.entries) {
    CHECK(e.row == expected);
    CHECK(e.prob == doctest::Approx(1.0));
  }
}

TEST_CASE("build_l2_sampler: uniform scores draw uniformly") {
  const KronDesign design = random_design({{5, 2}, {4, 2}}, Seed{10, 0});
  LeverageScores scores;
  scores.per_factor = {Vector::Ones(5), Vector::Ones(4)};
  const Index draws = 100000;
  const DiagonalSampler sampler = build_l2_sampler(design, scores, draws, Seed{10, 1});
  std::map<Index, int> counts;
  for (const auto& e : sampler.entries) ++counts[e.row];
  const double expect = static_cast<double>(draws) / 20.0;
  const double band = 3.0 * std::sqrt(expect * (1.0 - 1.0 / 20.0));
  for (Index row = 0; row < 20; ++row)
    CHECK(std::abs(counts[row] - expect) <= band);
}

TEST_CASE("build_l2_sampler rejects m=0 and all-zero scores") {
  const KronDesign design = random_design({{4, 2}, {4, 2}}, Seed{11, 0});
  LeverageScores scores;
  scores.per_factor = {Vector::Ones(4), Vector::Ones(4)};
  CHECK_THROWS_AS(build_l2_sampler(design, scores, 0, Seed{1, 1}), std::invalid_argument);
  LeverageScores zero;
  zero.per_factor = {Vector::Zero(4), Vector::Ones(4)};
  CHECK_THROWS_AS(build_l2_sampler(design, zero, 5, Seed{1, 1}), std::invalid_argument);
}

TEST_CASE("solve_l2: response in the column span gives near-zero residual") {
  Seed seed{12, 0};
  std::vector<FactorMatrix> fs{FactorMatrix(random_matrix(25, 3, seed.derived(1))),
                               FactorMatrix(random_matrix(20, 2, seed.derived(2)))};
  KronDesign span_free(std::move(fs));
  const Vector x_star = random_vector(span_free.cols(), seed.derived(3));
  const Vector b = kron_apply(span_free, x_star);
  KronDesign design(span_free.factors(), b);
  const L2SolveResult res = solve_l2(design, 0.1, 0.1, seed.derived(4));
  const double resid = (kron_apply(design, res.solution) - b).norm();
  CHECK(resid <= 1e-8 * b.norm());
}

TEST_CASE("solve_l2: (1+eps) ratio against the dense oracle") {
  int ok = 0;
  const int seeds = 50;
  for (int t = 0; t < seeds; ++t) {
    Seed seed{1300, static_cast<std::uint64_t>(t)};
    const KronDesign design = random_design({{40, 3}, {40, 3}}, seed);
    const L2SolveResult res = solve_l2(design, 0.05, 0.1, seed.derived(5));
    const double ours = (kron_apply(design, res.solution) - design.response()).norm();
    const Matrix full = oracle::materialize(design);
    const double opt = (full * least_squares(full, design.response()).solution -
                        design.response()).norm();
    if (ours <= 1.05 * opt) ++ok;
  }
  CHECK(ok >= 45);  // >= 90% of 50 seeds
}

TEST_CASE("approximate matrix product through the leverage sampler") {
  // || U^T D^T D B - U^T B ||_F <= eps ||U||_F ||B||_F in >= 1-delta of trials.
  const double eps = 0.5, delta = 0.1;
  int ok = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Seed seed{1400, static_cast<std::uint64_t>(t)};
    const KronDesign design = random_design({{12, 2}, {12, 2}}, seed);
    const Matrix full = oracle::materialize(design);
    Eigen::BDCSVD<Matrix> svd(full, Eigen::ComputeThinU);
    const Matrix u = svd.matrixU();
    const Matrix b = random_matrix(design.rows(), 3, seed.derived(6));
    LeverageScores scores;
    scores.per_factor = {oracle::exact_leverage(design.factor(0).dense()),
                         oracle::exact_leverage(design.factor(1).dense())};
    const Index m = static_cast<Index>(std::ceil(10.0 / (delta * eps * eps)));
    const DiagonalSampler sampler = build_l2_sampler(design, scores, m, seed.derived(7));
    // Assemble U^T D^T D B from the samples: sum_t w_t u_{i_t} b_{i_t}^T.
    Matrix approx = Matrix::Zero(u.cols(), b.cols());
    for (const auto& e : sampler.entries)
      approx += e.weight * u.row(static_cast<Eigen::Index>(e.row)).transpose() *
                b.row(static_cast<Eigen::Index>(e.row));
    const double err = (approx - u.transpose() * b).norm();
    if (err <= eps * u.norm() * b.norm()) ++ok;
  }
  CHECK(ok >= static_cast<int>((1.0 - delta) * trials));
}

TEST_CASE("solve_l2: residual is monotone in the sample count (paired seeds)") {
  std::vector<double> small_m, large_m;
  for (int t = 0; t < 15; ++t) {
    Seed seed{1500, static_cast<std::uint64_t>(t)};
    const KronDesign design = random_design({{30, 3}, {30, 3}}, seed);
    LeverageScores scores;
    scores.per_factor = {oracle::exact_leverage(design.factor(0).dense()),
                         oracle::exact_leverage(design.factor(1).dense())};
    for (Index m : {Index{40}, Index{800}}) {
      const DiagonalSampler sampler = build_l2_sampler(design, scores, m, seed.derived(m));
      const SampledSystem sys = build_sampled_system(design, sampler);
      const Vector x = least_squares(sys.w, sys.c).solution;
      const double resid = (kron_apply(design, x) - design.response()).norm();
      (m == 40 ? small_m : large_m).push_back(resid);
    }
  }
  std::sort(small_m.begin(), small_m.end());
  std::sort(large_m.begin(), large_m.end());
  CHECK(large_m[large_m.size() / 2] <= small_m[small_m.size() / 2] + 1e-12);
}
