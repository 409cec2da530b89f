#include <doctest.h>

#include "kronsketch/kron.hpp"
#include "kronsketch/multi_index.hpp"
#include "kronsketch/oracle.hpp"
#include "test_support.hpp"

using namespace kronsketch;
using ksk_test::random_design;
using ksk_test::random_matrix;
using ksk_test::random_vector;

TEST_CASE("flatten matches the first-coordinate-fastest formula") {
  // dims (3,2): 1-based (2,2) -> 2 + 3*(2-1) = 5, i.e. 0-based (1,1) -> 4.
  MultiIndex idx({1, 1}, {3, 2});
  CHECK(idx.flatten() == 4);
  CHECK(MultiIndex::flatten_index({0, 0}, {3, 2}) == 0);
  CHECK(MultiIndex::flatten_index({2, 1}, {3, 2}) == 5);
}

TEST_CASE("flatten/unflatten bijection, exhaustive") {
  const std::vector<std::vector<Index>> dim_sets = {
      {7}, {3, 5}, {4, 4, 4}, {2, 3, 5, 7}, {10, 10, 10, 10}};
  for (const auto& dims : dim_sets) {
    const Index n = checked_product(dims);
    REQUIRE(n <= 10000);
    for (Index flat = 0; flat < n; ++flat) {
      const MultiIndex idx = MultiIndex::unflatten(flat, dims);
      CHECK(idx.flatten() == flat);
    }
  }
}

TEST_CASE("index product overflow is a construction error") {
  std::vector<FactorMatrix> factors;
  for (int i = 0; i < 41; ++i) factors.emplace_back(Matrix::Ones(3, 1));
  CHECK_THROWS_AS(KronDesign(std::move(factors)), std::overflow_error);
}

TEST_CASE("kron_apply on identity factors is the identity") {
  std::vector<FactorMatrix> factors{FactorMatrix(Matrix::Identity(2, 2)),
                                    FactorMatrix(Matrix::Identity(2, 2))};
  KronDesign design(std::move(factors));
  Vector x(4);
  x << 1, 2, 3, 4;
  CHECK((kron_apply(design, x) - x).norm() == 0.0);
}

TEST_CASE("kron_apply with e_1 selects the first Kronecker column") {
  Matrix a1(2, 2);
  a1 << 1, 2, 3, 4;
  std::vector<FactorMatrix> factors{FactorMatrix(a1), FactorMatrix(Matrix::Identity(2, 2))};
  KronDesign design(std::move(factors));
  const Matrix full = oracle::materialize(design);
  const Vector got = kron_apply(design, Vector::Unit(4, 0));
  CHECK((got - full.col(0)).norm() == 0.0);
}

TEST_CASE("kron_apply agrees with the materialized oracle") {
  for (int trial = 0; trial < 100; ++trial) {
    Seed seed{2024, static_cast<std::uint64_t>(trial)};
    const KronDesign design = random_design({{3, 2}, {4, 2}}, seed);
    const Vector x = random_vector(design.cols(), seed.derived(7));
    const Vector got = kron_apply(design, x);
    const Vector want = oracle::materialize(design) * x;
    CHECK((got - want).norm() <= 1e-10 * (1.0 + want.norm()));
  }
}

TEST_CASE("kron_apply matches the oracle on mixed larger shapes") {
  for (int trial = 0; trial < 20; ++trial) {
    Seed seed{77, static_cast<std::uint64_t>(trial)};
    const KronDesign design = random_design({{16, 3}, {16, 4}, {16, 2}}, seed);
    REQUIRE(design.rows() == 4096);
    const Vector x = random_vector(design.cols(), seed.derived(3));
    const Vector want = oracle::materialize(design) * x;
    CHECK((kron_apply(design, x) - want).norm() <= 1e-10 * want.norm());
  }
}

TEST_CASE("sparse factors apply identically to dense ones") {
  Seed seed{5150, 0};
  Matrix dense = random_matrix(80, 5, seed);
  for (Eigen::Index i = 0; i < dense.rows(); ++i)
    for (Eigen::Index j = 0; j < dense.cols(); ++j)
      if ((i + j) % 3 != 0) dense(i, j) = 0.0;
  FactorMatrix sparse{SparseRowMatrix(dense.sparseView())};
  REQUIRE(sparse.is_sparse());
  FactorMatrix as_dense{dense};
  const Vector x = random_vector(5, seed.derived(1));
  CHECK((sparse.apply(x) - as_dense.apply(x)).norm() == 0.0);
  CHECK(sparse.nnz() == as_dense.nnz());
  std::vector<FactorMatrix> fs{sparse, FactorMatrix(random_matrix(6, 3, seed.derived(2)))};
  KronDesign design(std::move(fs));
  const Vector y = random_vector(15, seed.derived(3));
  const Vector want = oracle::materialize(design) * y;
  CHECK((kron_apply(design, y) - want).norm() <= 1e-10 * want.norm());
}

TEST_CASE("tensor operator: identity factors leave the tensor unchanged") {
  std::vector<FactorMatrix> factors{FactorMatrix(Matrix::Identity(3, 3)),
                                    FactorMatrix(Matrix::Identity(2, 2))};
  const Vector x = random_vector(6, Seed{1, 2});
  CHECK((apply_factors_to_tensor(factors, x, {3, 2}) - x).norm() == 0.0);
}

TEST_CASE("tensor operator: scalar case") {
  std::vector<FactorMatrix> factors{FactorMatrix(Matrix::Constant(1, 1, 2.0)),
                                    FactorMatrix(Matrix::Constant(1, 1, 3.0))};
  Vector x(1);
  x << 1.0;
  CHECK(apply_factors_to_tensor(factors, x, {1, 1})(0) == doctest::Approx(6.0));
}

TEST_CASE("tensor operator equals kron_apply after the index round trip") {
  Seed seed{88, 3};
  const KronDesign design = random_design({{4, 2}, {3, 2}, {5, 3}}, seed);
  const Vector x = random_vector(design.cols(), seed.derived(11));
  const Vector via_tensor =
      apply_factors_to_tensor(design.factors(), reshape_vec_to_tensor(x, {2, 2, 3}), {2, 2, 3});
  const Vector via_kron = kron_apply(design, x);
  for (Index flat = 0; flat < design.rows(); ++flat) {
    const MultiIndex idx = MultiIndex::unflatten(flat, design.row_dims());
    CHECK(via_tensor(static_cast<Eigen::Index>(idx.flatten())) ==
          doctest::Approx(via_kron(static_cast<Eigen::Index>(flat))).epsilon(1e-12));
  }
}

TEST_CASE("reshape is norm preserving and round trips") {
  const Vector e8 = Vector::Unit(8, 7);
  const Vector tensor = reshape_vec_to_tensor(e8, {2, 2, 2});
  CHECK(tensor(7) == 1.0);  // 0-based (1,1,1) <-> 1-based (2,2,2)
  CHECK((reshape_tensor_to_vec(tensor, {2, 2, 2}) - e8).norm() == 0.0);
  CHECK_THROWS_AS(reshape_vec_to_tensor(e8, {3, 3}), std::invalid_argument);
}

TEST_CASE("reshaping identity: ||((A1,A2),X) - B|| equals ||(A1 (x) A2)x - b||") {
  for (int trial = 0; trial < 100; ++trial) {
    Seed seed{31337, static_cast<std::uint64_t>(trial)};
    const KronDesign design = random_design({{5, 3}, {4, 2}}, seed);
    const Vector x = random_vector(design.cols(), seed.derived(23));
    const Vector lhs = apply_factors_to_tensor(design.factors(), x, {3, 2});
    const Vector rhs = kron_apply(design, x);
    for (double p : {1.0, 1.5, 2.0}) {
      const double a = entrywise_lp_norm(lhs - design.response(), p);
      const double b = entrywise_lp_norm(rhs - design.response(), p);
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, b));
    }
  }
}

TEST_CASE("kron_row assembles the materialized row") {
  Seed seed{99, 1};
  const KronDesign design = random_design({{3, 2}, {4, 3}, {2, 2}}, seed);
  const Matrix full = oracle::materialize(design);
  for (Index row = 0; row < design.rows(); row += 5)
    CHECK((design.kron_row(row).transpose() - full.row(static_cast<Eigen::Index>(row)))
              .norm() == 0.0);
}

TEST_CASE("dimension mismatches raise invalid-argument") {
  const KronDesign design = random_design({{3, 2}, {4, 2}}, Seed{4, 4});
  CHECK_THROWS_AS(kron_apply(design, Vector::Zero(5)), std::invalid_argument);
  CHECK_THROWS_AS(apply_factors_to_tensor(design.factors(), Vector::Zero(4), {2, 3}),
                  std::invalid_argument);
  CHECK_THROWS_AS(KronDesign(design.factors(), Vector::Zero(3)), std::invalid_argument);
}
