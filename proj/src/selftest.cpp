#include "kronsketch/selftest.hpp"

#include <cmath>
#include <sstream>

#include "kronsketch/count_sketch.hpp"
#include "kronsketch/kron.hpp"
#include "kronsketch/leverage.hpp"
#include "kronsketch/multi_index.hpp"
#include "kronsketch/oracle.hpp"
#include "kronsketch/sketch_ops.hpp"
#include "kronsketch/solvers.hpp"
#include "kronsketch/stable.hpp"

namespace kronsketch::selftest {

namespace {

Matrix random_matrix(Index rows, Index cols, Seed seed) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal();
  return m;
}

Vector random_vector(Index len, Seed seed) {
  Rng rng(seed);
  Vector v(static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v;
}

Check run_check(const std::string& name, const std::function<std::string()>& body) {
  Check c;
  c.name = name;
  try {
    c.detail = body();
    c.passed = c.detail.empty();
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail = e.what();
  }
  return c;
}

}  // namespace

Check check_theta_values(const std::function<double(double)>& theta) {
  return run_check("theta-table", [&]() -> std::string {
    if (std::abs(theta(1.0) - 1.0) > 1e-3) return "theta(1) != 1";
    if (std::abs(theta(2.0) - 0.6744897501960817) > 1e-3) return "theta(2) off";
    double prev = theta(1.0);
    for (double p = 1.01; p < 1.995; p += 0.01) {
      const double cur = theta(p);
      if (!(cur < prev) || cur < 0.9 || cur > 1.0)
        return "theta not decreasing in (0.9, 1) at p=" + std::to_string(p);
      prev = cur;
    }
    return {};
  });
}

Report run_all() {
  Report report;
  const Seed seed{0x5e1f, 0x7e57};

  report.checks.push_back(check_theta_values([](double p) { return stable_abs_median(p); }));

  report.checks.push_back(run_check("multi-index-bijection", [&]() -> std::string {
    const std::vector<Index> dims{5, 7, 3};
    for (Index flat = 0; flat < 105; ++flat)
      if (MultiIndex::unflatten(flat, dims).flatten() != flat) return "round trip broke";
    return {};
  }));

  report.checks.push_back(run_check("kron-apply-vs-oracle", [&]() -> std::string {
    std::vector<FactorMatrix> fs{FactorMatrix(random_matrix(6, 3, seed.derived(1))),
                                 FactorMatrix(random_matrix(5, 2, seed.derived(2)))};
    KronDesign design(std::move(fs), random_vector(30, seed.derived(3)));
    const Vector x = random_vector(6, seed.derived(4));
    const double err =
        (kron_apply(design, x) - oracle::materialize(design) * x).norm();
    return err <= 1e-10 ? std::string{} : "mismatch " + std::to_string(err);
  }));

  report.checks.push_back(run_check("reshape-norm-identity", [&]() -> std::string {
    std::vector<FactorMatrix> fs{FactorMatrix(random_matrix(4, 2, seed.derived(5))),
                                 FactorMatrix(random_matrix(6, 3, seed.derived(6)))};
    KronDesign design(std::move(fs), random_vector(24, seed.derived(7)));
    const Vector x = random_vector(6, seed.derived(8));
    const Vector lhs = apply_factors_to_tensor(design.factors(), x, {2, 3});
    const Vector rhs = kron_apply(design, x);
    for (double p : {1.0, 1.5, 2.0}) {
      const double a = entrywise_lp_norm(lhs - design.response(), p);
      const double b = entrywise_lp_norm(rhs - design.response(), p);
      if (std::abs(a - b) > 1e-12 * std::max(1.0, b)) return "norm identity broke";
    }
    return {};
  }));

  report.checks.push_back(run_check("count-sketch-unbiased", [&]() -> std::string {
    const Vector x = random_vector(32, seed.derived(9)).normalized();
    double mean = 0.0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
      CountSketch s(16, 32, seed.derived(100 + t));
      mean += s.apply(x).squaredNorm();
    }
    mean /= trials;
    return std::abs(mean - 1.0) < 0.1 ? std::string{}
                                      : "bias " + std::to_string(mean - 1.0);
  }));

  report.checks.push_back(run_check("exp-argmax-distribution", [&]() -> std::string {
    Vector x(2);
    x << 1, 2;
    int first = 0;
    const int draws = 20000;
    for (int t = 0; t < draws; ++t) {
      ExponentialScaler e(2, 1.0, seed.derived(9000 + t));
      if (exp_argmax_sample(e, x) == 0) ++first;
    }
    const double freq = static_cast<double>(first) / draws;
    return std::abs(freq - 1.0 / 3.0) < 0.02
               ? std::string{}
               : "frequency " + std::to_string(freq);
  }));

  report.checks.push_back(run_check("leverage-product", [&]() -> std::string {
    std::vector<FactorMatrix> fs{FactorMatrix(random_matrix(8, 2, seed.derived(11))),
                                 FactorMatrix(random_matrix(7, 3, seed.derived(12)))};
    KronDesign design(std::move(fs), random_vector(56, seed.derived(13)));
    const Vector s1 = oracle::exact_leverage(design.factor(0).dense());
    const Vector s2 = oracle::exact_leverage(design.factor(1).dense());
    const Vector full = oracle::exact_leverage(oracle::materialize(design));
    for (Index flat = 0; flat < design.rows(); ++flat) {
      const auto idx = MultiIndex::unflatten(flat, design.row_dims());
      const double prod = s1(static_cast<Eigen::Index>(idx.coords[0])) *
                          s2(static_cast<Eigen::Index>(idx.coords[1]));
      if (std::abs(prod - full(static_cast<Eigen::Index>(flat))) > 1e-9)
        return "leverage product mismatch at row " + std::to_string(flat);
    }
    return {};
  }));

  report.checks.push_back(run_check("solvers-sanity", [&]() -> std::string {
    Matrix w(3, 1);
    w << 1, 1, 1;
    Vector c(3);
    c << 1, 2, 4;
    const SolveReport rep = lp_solve(w, c, 1.0);
    if (std::abs(rep.solution(0) - 2.0) > 1e-6) return "l1 median broke";
    const Matrix w2 = random_matrix(20, 3, seed.derived(14));
    const Vector c2 = random_vector(20, seed.derived(15));
    const SolveReport ls = least_squares(w2, c2);
    if (ls.optimality_residual > 1e-9 * w2.norm() * c2.norm())
      return "least-squares optimality broke";
    return {};
  }));

  report.checks.push_back(run_check("determinism", [&]() -> std::string {
    const Vector a = pstable_sample(1.4, 64, seed);
    const Vector b = pstable_sample(1.4, 64, seed);
    return (a - b).norm() == 0.0 ? std::string{} : "seeded sampling not reproducible";
  }));

  return report;
}

std::string to_json(const Report& report) {
  std::ostringstream out;
  out << "{\"passed\":" << (report.all_passed() ? "true" : "false") << ",\"checks\":[";
  for (std::size_t i = 0; i < report.checks.size(); ++i) {
    const auto& c = report.checks[i];
    if (i) out << ',';
    out << "{\"name\":\"" << c.name << "\",\"passed\":" << (c.passed ? "true" : "false");
    if (!c.detail.empty()) out << ",\"detail\":\"" << c.detail << '"';
    out << '}';
  }
  out << "]}";
  return out.str();
}

}  // namespace kronsketch::selftest
