#include <doctest.h>

#include <cmath>

#include "kronsketch/oracle.hpp"
#include "kronsketch/solvers.hpp"
#include "test_support.hpp"

using namespace kronsketch;
using ksk_test::random_design;
using ksk_test::random_matrix;
using ksk_test::random_vector;

TEST_CASE("exact_leverage: identity and single-mass matrices") {
  const Vector id = oracle::exact_leverage(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(id(i) == doctest::Approx(1.0));

  Matrix single(3, 1);
  single << 1, 0, 0;
  const Vector s = oracle::exact_leverage(single);
  CHECK(s(0) == doctest::Approx(1.0));
  CHECK(s(1) == doctest::Approx(0.0));
  CHECK(s(2) == doctest::Approx(0.0));
}

TEST_CASE("exact_leverage sums to the rank") {
  const Matrix a = random_matrix(40, 6, Seed{10, 0});
  CHECK(oracle::exact_leverage(a).sum() == doctest::Approx(6.0).epsilon(1e-10));
  Matrix low = a;
  low.col(5) = 2.0 * low.col(1) - low.col(3);
  CHECK(oracle::exact_leverage(low).sum() == doctest::Approx(5.0).epsilon(1e-8));
}

TEST_CASE("exact_lp_distribution basics") {
  Vector rho(2);
  rho << 1, -1;
  const Vector d1 = oracle::exact_lp_distribution(rho, 1.0);
  CHECK(d1(0) == doctest::Approx(0.5));
  CHECK(d1(1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(oracle::exact_lp_distribution(Vector::Zero(3), 1.0),
                  std::invalid_argument);
}

TEST_CASE("l1 simplex: the 1-D median example") {
  Matrix w(3, 1);
  w << 1, 1, 1;
  Vector c(3);
  c << 1, 2, 4;
  const SolveReport rep = oracle::exact_lp_regression(w, c, 1.0);
  CHECK(rep.solution(0) == doctest::Approx(2.0));
  CHECK(rep.objective == doctest::Approx(3.0));
}

TEST_CASE("l1 simplex: exact fit recovers the planted solution") {
  const Matrix w = random_matrix(50, 4, Seed{60, 0});
  const Vector x_star = random_vector(4, Seed{60, 1});
  const SolveReport rep = oracle::exact_lp_regression(w, w * x_star, 1.0);
  CHECK(rep.objective <= 1e-10 * entrywise_lp_norm(w * x_star, 1.0));
  CHECK((rep.solution - x_star).norm() <= 1e-8 * x_star.norm());
}

TEST_CASE("l1 simplex beats or ties IRLS across random instances") {
  for (int t = 0; t < 40; ++t) {
    Seed seed{909, static_cast<std::uint64_t>(t)};
    const Matrix w = random_matrix(60, 5, seed);
    const Vector c = random_vector(60, seed.derived(1));
    const SolveReport simplex = oracle::exact_lp_regression(w, c, 1.0);
    const SolveReport irls = lp_solve(w, c, 1.0);
    // The simplex result is the vertex optimum; IRLS approaches it but its
    // smoothing floor keeps it ~1e-5 relative away on ill-conditioned fits.
    CHECK(simplex.objective <= irls.objective * (1.0 + 1e-9));
    CHECK(irls.objective <= simplex.objective * (1.0 + 1e-4));
    CHECK(simplex.optimality_residual <= 1e-7);
  }
}

TEST_CASE("l1 simplex handles degenerate/duplicate rows") {
  Matrix w(6, 2);
  w << 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 1, 1;
  Vector c(6);
  c << 1, 1, 2, 2, 5, 5;
  const SolveReport rep = oracle::exact_lp_regression(w, c, 1.0);
  const SolveReport irls = lp_solve(w, c, 1.0);
  CHECK(rep.objective <= irls.objective * (1.0 + 1e-9));
}

TEST_CASE("l1 simplex with rank-deficient columns") {
  Matrix w(20, 3);
  w.leftCols(2) = random_matrix(20, 2, Seed{3131, 0});
  w.col(2) = w.col(0) - 3.0 * w.col(1);
  const Vector c = random_vector(20, Seed{3131, 1});
  const SolveReport rep = oracle::exact_lp_regression(w, c, 1.0);
  CHECK(rep.rank_deficient);
  const SolveReport irls = lp_solve(w, c, 1.0);
  CHECK(rep.objective <= irls.objective * (1.0 + 1e-9));
}

TEST_CASE("newton oracle for p in (1,2) reaches first-order stationarity") {
  for (double p : {1.2, 1.5, 1.8}) {
    const Matrix w = random_matrix(45, 4, Seed{17, static_cast<std::uint64_t>(p * 10)});
    const Vector c = random_vector(45, Seed{18, static_cast<std::uint64_t>(p * 10)});
    const SolveReport rep = oracle::exact_lp_regression(w, c, p);
    CHECK(rep.optimality_residual <= 1e-8);
    const SolveReport irls = lp_solve(w, c, p);
    CHECK(std::abs(rep.objective - irls.objective) <= 1e-6 * rep.objective);
  }
}

TEST_CASE("p=2 oracle is plain least squares") {
  const Matrix w = random_matrix(30, 3, Seed{77, 0});
  const Vector c = random_vector(30, Seed{77, 1});
  CHECK(oracle::exact_lp_regression(w, c, 2.0).objective ==
        doctest::Approx(least_squares(w, c).objective));
}

TEST_CASE("materialize respects the entry budget") {
  const KronDesign design = random_design({{40, 3}, {40, 3}}, Seed{5, 5});
  oracle::OracleBudget tight;
  tight.max_materialized_entries = 1000;
  CHECK_THROWS_AS(oracle::materialize(design, tight), BudgetExceeded);
  const Matrix full = oracle::materialize(design);
  CHECK(full.rows() == 1600);
  CHECK(full.cols() == 9);
}

TEST_CASE("lp oracle respects the row budget") {
  const Matrix w = random_matrix(200, 2, Seed{6, 6});
  const Vector c = random_vector(200, Seed{6, 7});
  oracle::OracleBudget tight;
  tight.max_lp_rows = 100;
  CHECK_THROWS_AS(oracle::exact_lp_regression(w, c, 1.0, tight), BudgetExceeded);
}

TEST_CASE("oracles are deterministic and seed-free") {
  const Matrix w = random_matrix(30, 3, Seed{8, 8});
  const Vector c = random_vector(30, Seed{8, 9});
  const SolveReport a = oracle::exact_lp_regression(w, c, 1.0);
  const SolveReport b = oracle::exact_lp_regression(w, c, 1.0);
  CHECK((a.solution - b.solution).norm() == 0.0);
  CHECK((oracle::exact_leverage(w) - oracle::exact_leverage(w)).norm() == 0.0);
}
