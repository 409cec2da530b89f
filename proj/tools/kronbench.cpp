// kronbench: generate Kronecker regression instances, run the sketched
// solvers against brute-force references, and emit CSV benchmark records.
//
// Subcommands: gen, l2, lp, allpairs, lra, trank, selftest.
// Exit codes: 0 success, 2 invalid arguments, 3 oracle budget exceeded,
// 4 invariant failure.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include "kronsketch/allpairs.hpp"
#include "kronsketch/kron.hpp"
#include "kronsketch/leverage.hpp"
#include "kronsketch/lp_regression.hpp"
#include "kronsketch/lra.hpp"
#include "kronsketch/mmio.hpp"
#include "kronsketch/oracle.hpp"
#include "kronsketch/selftest.hpp"
#include "kronsketch/stable.hpp"

namespace {

using namespace kronsketch;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CommonOpts {
  double p = 2.0;
  double eps = 0.1;
  double delta = 0.1;
  std::uint64_t seed = 1;
  int trials = 1;
  std::optional<std::uint64_t> rows;  // -m / --rows
  bool oracle = true;
  bool json = false;
  bool parallel_trials = false;
  std::string out;
  std::vector<std::string> factor_paths;
  std::string b_path;
  std::vector<std::uint64_t> gen_dims;  // n1 d1 n2 d2 ...
  std::optional<std::uint64_t> r1, r2;
  double hh_scale = 4.0;
  std::uint64_t budget_entries = 10'000'000;
  std::uint64_t budget_lp_rows = 100'000;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_p) {
  if (with_p)
    cmd->add_option("--p", o.p, "norm exponent")->check(CLI::Range(1.0, 2.0));
  cmd->add_option("--eps", o.eps, "accuracy target")
      ->check(CLI::Range(1e-6, 0.499999));
  cmd->add_option("--delta", o.delta, "failure probability")
      ->check(CLI::Range(1e-6, 0.999999));
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--trials", o.trials, "number of trials")->check(CLI::PositiveNumber);
  cmd->add_option("--rows,-m", o.rows, "sketch/sample row budget");
  cmd->add_flag("--oracle,!--no-oracle", o.oracle, "run the brute-force reference");
  cmd->add_flag("--json", o.json, "machine-readable summary");
  cmd->add_flag("--parallel-trials", o.parallel_trials,
                "run trials concurrently (timings unreliable)");
  cmd->add_option("--out", o.out, "output CSV path (default stdout)");
  cmd->add_option("--factor", o.factor_paths, "factor matrix files (repeatable)");
  cmd->add_option("--b", o.b_path, "response vector file");
  cmd->add_option("--gen", o.gen_dims, "generate: n1 d1 n2 d2 ...")->expected(-1);
  cmd->add_option("--r1", o.r1, "constant-factor stage sample override");
  cmd->add_option("--r2", o.r2, "refinement stage sample override");
  cmd->add_option("--hh-scale", o.hh_scale, "heavy-hitter exponent (desk scale)");
  cmd->add_option("--budget-entries", o.budget_entries, "oracle entry budget");
  cmd->add_option("--budget-lp-rows", o.budget_lp_rows, "oracle LP row budget");
}

KronDesign load_design(const CommonOpts& o, Seed seed) {
  if (!o.gen_dims.empty()) {
    if (o.gen_dims.size() % 2 != 0 || o.gen_dims.size() < 2)
      throw std::invalid_argument("--gen needs pairs: n1 d1 [n2 d2 ...]");
    std::vector<FactorMatrix> factors;
    Index n = 1;
    for (std::size_t i = 0; i + 1 < o.gen_dims.size(); i += 2) {
      const Index ni = o.gen_dims[i], di = o.gen_dims[i + 1];
      Rng rng(seed.derived(0xf<<4 | i));
      Matrix a(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(di));
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
      factors.emplace_back(std::move(a));
      n *= ni;
    }
    Rng rng(seed.derived(0xb0));
    Vector b(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
    return KronDesign(std::move(factors), std::move(b));
  }
  if (o.factor_paths.empty())
    throw std::invalid_argument("provide --factor files or a --gen spec");
  std::vector<FactorMatrix> factors;
  for (const auto& path : o.factor_paths) factors.push_back(mmio::read_factor(path));
  if (o.b_path.empty()) throw std::invalid_argument("provide --b RESPONSE.mtx");
  return KronDesign(std::move(factors), mmio::read_vector(o.b_path));
}

struct BenchRecord {
  std::string algorithm;
  int trial = 0;
  std::uint64_t seed = 0;
  double p = 2.0;
  double eps = 0.1;
  std::uint64_t m = 0;
  double obj_sketch = 0.0;
  std::optional<double> obj_oracle;
  std::optional<double> r_e;  // 100 |obj - obj_bf| / obj_bf
  double t_ours_ms = 0.0;
  std::optional<double> t_bf_ms;
};

class CsvSink {
 public:
  explicit CsvSink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open " + path + " for writing");
    }
  }
  std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

  void header() { out() << "algorithm,trial,seed,p,eps,m,obj_sketch,obj_oracle,r_e\n"; }

  void body_row(const BenchRecord& r) {
    out() << r.algorithm << ',' << r.trial << ',' << r.seed << ',' << fmt(r.p) << ','
          << fmt(r.eps) << ',' << r.m << ',' << fmt(r.obj_sketch) << ','
          << (r.obj_oracle ? fmt(*r.obj_oracle) : std::string()) << ','
          << (r.r_e ? fmt(*r.r_e) : std::string()) << '\n';
  }

  // Timing lives in the comment footer: the CSV body stays byte-identical
  // across runs with the same seed.
  void footer(const std::vector<BenchRecord>& records, bool parallel) {
    std::vector<double> ours, bf;
    for (const auto& r : records) {
      ours.push_back(r.t_ours_ms);
      if (r.t_bf_ms) bf.push_back(*r.t_bf_ms);
    }
    const auto stats = [](std::vector<double> v) -> std::pair<double, double> {
      if (v.empty()) return {0.0, 0.0};
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      std::sort(v.begin(), v.end());
      const std::size_t mid = v.size() / 2;
      const double med = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
      return {mean, med};
    };
    const auto [mean_ours, med_ours] = stats(ours);
    out() << "# t_ours_ms mean=" << fmt(mean_ours) << " median=" << fmt(med_ours);
    if (parallel) out() << " (parallel trials: timings unreliable)";
    out() << '\n';
    if (!bf.empty()) {
      const auto [mean_bf, med_bf] = stats(bf);
      out() << "# t_bf_ms mean=" << fmt(mean_bf) << " median=" << fmt(med_bf) << '\n';
      if (med_bf > 0.0) out() << "# r_t median=" << fmt(med_ours / med_bf) << '\n';
    }
    for (const auto& r : records) {
      out() << "# trial " << r.trial << " t_ours_ms=" << fmt(r.t_ours_ms);
      if (r.t_bf_ms) {
        out() << " t_bf_ms=" << fmt(*r.t_bf_ms);
        if (*r.t_bf_ms > 0.0) out() << " r_t=" << fmt(r.t_ours_ms / *r.t_bf_ms);
      }
      out() << '\n';
    }
  }

 private:
  std::ofstream file_;
};

int run_records(const CommonOpts& o, const std::string& algo,
                const std::function<BenchRecord(int, Seed)>& one_trial) {
  CsvSink sink(o.out);
  std::vector<BenchRecord> records(o.trials);
  if (o.parallel_trials) {
    std::vector<std::future<BenchRecord>> futures;
    futures.reserve(o.trials);
    for (int t = 0; t < o.trials; ++t)
      futures.push_back(std::async(std::launch::async, one_trial, t,
                                   Seed{o.seed, 0}.derived(1000 + t)));
    for (int t = 0; t < o.trials; ++t) records[t] = futures[t].get();
  } else {
    for (int t = 0; t < o.trials; ++t)
      records[t] = one_trial(t, Seed{o.seed, 0}.derived(1000 + t));
  }
  sink.header();
  for (auto& r : records) {
    r.algorithm = algo;
    r.trial = records.empty() ? 0 : r.trial;
    sink.body_row(r);
  }
  sink.footer(records, o.parallel_trials);
  if (o.json) {
    std::ostringstream js;
    js << "{\"algorithm\":\"" << algo << "\",\"trials\":" << o.trials << ",\"r_e\":[";
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (i) js << ',';
      js << (records[i].r_e ? fmt(*records[i].r_e) : "null");
    }
    js << "]}";
    std::cerr << js.str() << '\n';
  }
  return 0;
}

int cmd_gen(const CommonOpts& o, const std::string& prefix) {
  if (o.gen_dims.size() % 2 != 0 || o.gen_dims.size() < 2)
    throw std::invalid_argument("gen needs dimension pairs: n1 d1 [n2 d2 ...]");
  const Seed seed{o.seed, 0};
  Index n = 1;
  for (std::size_t i = 0; i + 1 < o.gen_dims.size(); i += 2) {
    const Index ni = o.gen_dims[i], di = o.gen_dims[i + 1];
    Rng rng(seed.derived(0xf<<4 | i));
    Matrix a(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(di));
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
    mmio::write_dense(prefix + "_A" + std::to_string(i / 2 + 1) + ".mtx", a);
    n *= ni;
  }
  Rng rng(seed.derived(0xb0));
  Vector b(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
  mmio::write_vector(prefix + "_b.mtx", b);
  std::cout << "wrote " << o.gen_dims.size() / 2 << " factors and a length-" << n
            << " response with prefix " << prefix << '\n';
  return 0;
}

int cmd_l2(const CommonOpts& o) {
  return run_records(o, "l2", [&](int trial, Seed seed) {
    const KronDesign design = load_design(o, seed.derived(3));
    BenchRecord rec;
    rec.trial = trial;
    rec.seed = seed.value;
    rec.p = 2.0;
    rec.eps = o.eps;

    L2SolveConfig cfg;
    if (o.rows) cfg.sample_override = *o.rows;
    const auto start = Clock::now();
    const L2SolveResult res = solve_l2(design, o.eps, o.delta, seed.derived(4), cfg);
    rec.t_ours_ms = ms_since(start);
    rec.m = res.samples;
    rec.obj_sketch = (kron_apply(design, res.solution) - design.response()).norm();

    if (o.oracle) {
      oracle::OracleBudget budget{o.budget_entries, o.budget_lp_rows};
      const auto bf_start = Clock::now();
      const Matrix full = oracle::materialize(design, budget);
      const Matrix gram = full.transpose() * full;
      const Vector rhs = full.transpose() * design.response();
      Vector x_bf = gram.llt().solve(rhs);
      if (!x_bf.allFinite()) x_bf = least_squares(full, design.response()).solution;
      rec.t_bf_ms = ms_since(bf_start);
      rec.obj_oracle = (full * x_bf - design.response()).norm();
      rec.r_e = 100.0 * std::abs(rec.obj_sketch - *rec.obj_oracle) / *rec.obj_oracle;
    }
    return rec;
  });
}

int cmd_lp(const CommonOpts& o) {
  return run_records(o, "lp", [&](int trial, Seed seed) {
    const KronDesign design = load_design(o, seed.derived(3));
    BenchRecord rec;
    rec.trial = trial;
    rec.seed = seed.value;
    rec.p = o.p;
    rec.eps = o.eps;

    LpConfig cfg;
    cfg.hh_exponent = o.hh_scale;
    LpPipelineKnobs knobs;
    if (o.rows) {
      // -m pins the total sample budget across the two stages.
      knobs.r1 = *o.rows / 2;
      knobs.r2 = *o.rows / 2;
      cfg.r3_override = *o.rows / 2;
    }
    if (o.r1) knobs.r1 = *o.r1;
    if (o.r2) knobs.r2 = *o.r2;
    rec.m = knobs.r1.value_or(0) + knobs.r2.value_or(0);

    const auto start = Clock::now();
    const BoostedReport rep =
        boosted_solve(design, o.p, o.eps, o.delta, seed.derived(4), cfg, knobs);
    rec.t_ours_ms = ms_since(start);
    rec.obj_sketch =
        entrywise_lp_norm(kron_apply(design, rep.solution) - design.response(), o.p);

    if (o.oracle) {
      oracle::OracleBudget budget{o.budget_entries, o.budget_lp_rows};
      const auto bf_start = Clock::now();
      const Matrix full = oracle::materialize(design, budget);
      const SolveReport bf = oracle::exact_lp_regression(full, design.response(), o.p, budget);
      rec.t_bf_ms = ms_since(bf_start);
      rec.obj_oracle = bf.objective;
      rec.r_e = 100.0 * std::abs(rec.obj_sketch - *rec.obj_oracle) / *rec.obj_oracle;
    }
    return rec;
  });
}

AllPairsProblem load_allpairs(const CommonOpts& o, Seed seed) {
  if (!o.gen_dims.empty()) {
    if (o.gen_dims.size() != 2)
      throw std::invalid_argument("allpairs --gen needs exactly: n d");
    const Index n = o.gen_dims[0], d = o.gen_dims[1];
    Rng rng(seed.derived(0xf0));
    Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
    Vector b(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.normal();
    return AllPairsProblem(std::move(a), std::move(b));
  }
  // CSV tabular input: rows = observations, last column = response.
  if (o.factor_paths.size() == 1 && o.factor_paths[0].size() > 4 &&
      o.factor_paths[0].substr(o.factor_paths[0].size() - 4) == ".csv") {
    std::ifstream in(o.factor_paths[0]);
    if (!in) throw std::invalid_argument("cannot open " + o.factor_paths[0]);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
      if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty() || rows[0].size() < 2)
      throw std::invalid_argument("csv needs at least two columns");
    Matrix a(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows[0].size() - 1));
    Vector b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size())
        throw std::invalid_argument("ragged csv row");
      for (std::size_t j = 0; j + 1 < rows[i].size(); ++j)
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      b(static_cast<Eigen::Index>(i)) = rows[i].back();
    }
    return AllPairsProblem(std::move(a), std::move(b));
  }
  if (o.factor_paths.size() == 1 && !o.b_path.empty())
    return AllPairsProblem(mmio::read_dense(o.factor_paths[0]), mmio::read_vector(o.b_path));
  throw std::invalid_argument("allpairs: provide --gen n d, a .csv, or --factor + --b");
}

int cmd_allpairs(const CommonOpts& o) {
  return run_records(o, "allpairs", [&](int trial, Seed seed) {
    const AllPairsProblem problem = load_allpairs(o, seed.derived(3));
    BenchRecord rec;
    rec.trial = trial;
    rec.seed = seed.value;
    rec.p = o.p;
    rec.eps = o.eps;

    AllPairsConfig cfg;
    cfg.hh_exponent = o.hh_scale;
    const auto start = Clock::now();
    const AllPairsResult res =
        allpairs_solve(problem, o.p, o.eps, o.delta, seed.derived(4), cfg);
    rec.t_ours_ms = ms_since(start);
    rec.m = res.sampled_rows;

    // Objective over the n^2 implicit rows, streamed.
    const auto pair_objective = [&](const Vector& x) {
      const Vector rvec = problem.a * x - problem.b;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rvec.size(); ++i)
        for (Eigen::Index j = 0; j < rvec.size(); ++j)
          acc += std::pow(std::abs(rvec(i) - rvec(j)), o.p);
      return std::pow(acc, 1.0 / o.p);
    };
    rec.obj_sketch = pair_objective(res.solution);

    if (o.oracle) {
      oracle::OracleBudget budget{o.budget_entries, o.budget_lp_rows};
      const Index n2 = problem.n() * problem.n();
      if (n2 > budget.max_lp_rows || n2 * (problem.d() + 1) > budget.max_materialized_entries)
        throw BudgetExceeded("allpairs oracle would materialize " + std::to_string(n2) +
                             " rows");
      const auto bf_start = Clock::now();
      Matrix abar(static_cast<Eigen::Index>(n2), problem.a.cols());
      Vector bbar(static_cast<Eigen::Index>(n2));
      for (Index j = 0; j < problem.n(); ++j)
        for (Index i = 0; i < problem.n(); ++i) {
          abar.row(static_cast<Eigen::Index>(i + problem.n() * j)) =
              problem.a.row(static_cast<Eigen::Index>(i)) -
              problem.a.row(static_cast<Eigen::Index>(j));
          bbar(static_cast<Eigen::Index>(i + problem.n() * j)) =
              problem.b(static_cast<Eigen::Index>(i)) - problem.b(static_cast<Eigen::Index>(j));
        }
      const SolveReport bf = o.p == 2.0 ? least_squares(abar, bbar)
                                        : oracle::exact_lp_regression(abar, bbar, o.p, budget);
      rec.t_bf_ms = ms_since(bf_start);
      rec.obj_oracle = bf.objective;
      rec.r_e = 100.0 * std::abs(rec.obj_sketch - *rec.obj_oracle) / *rec.obj_oracle;
    }
    return rec;
  });
}

int cmd_lra(const CommonOpts& o, Index k, const std::string& out_prefix) {
  return run_records(o, "lra", [&](int trial, Seed seed) {
    CommonOpts local = o;
    if (!local.gen_dims.empty() && local.b_path.empty()) {
      // LRA takes no response; synthesize one internally then drop it.
    }
    const KronDesign with_b = load_design(local, seed.derived(3));
    const KronDesign design(with_b.factors());
    BenchRecord rec;
    rec.trial = trial;
    rec.seed = seed.value;
    rec.p = 2.0;
    rec.eps = o.eps;
    rec.m = k;

    const auto start = Clock::now();
    const LraFactors lra = kron_lra(design, k, o.eps, seed.derived(4));
    rec.t_ours_ms = ms_since(start);
    rec.obj_sketch = lra.residual_frobenius();

    if (o.oracle) {
      oracle::OracleBudget budget{o.budget_entries, o.budget_lp_rows};
      const auto bf_start = Clock::now();
      const Matrix full = oracle::materialize(design, budget);
      Eigen::BDCSVD<Matrix> svd(full);
      double tail = 0.0;
      for (Eigen::Index i = static_cast<Eigen::Index>(k); i < svd.singularValues().size(); ++i)
        tail += svd.singularValues()(i) * svd.singularValues()(i);
      rec.t_bf_ms = ms_since(bf_start);
      rec.obj_oracle = std::sqrt(tail);
      rec.r_e = *rec.obj_oracle > 0.0
                    ? 100.0 * std::abs(rec.obj_sketch - *rec.obj_oracle) / *rec.obj_oracle
                    : 0.0;
    }

    if (!out_prefix.empty() && trial == 0) {
      for (std::size_t i = 0; i < design.order(); ++i)
        mmio::write_dense(out_prefix + "_A" + std::to_string(i + 1) + ".mtx",
                          design.factor(i).dense());
      mmio::write_dense(out_prefix + "_U.mtx", lra.u);
      std::ofstream manifest(out_prefix + "_manifest.txt");
      manifest << "k " << lra.k << "\neps " << fmt(o.eps) << "\nseed " << o.seed
               << "\nfactors " << design.order() << "\ntruncated "
               << (lra.truncated ? 1 : 0) << '\n';
    }
    return rec;
  });
}

int cmd_trank(const CommonOpts& o, Index k, bool sketched) {
  return run_records(o, "trank", [&](int trial, Seed seed) {
    Matrix a;
    if (!o.gen_dims.empty()) {
      if (o.gen_dims.size() != 1)
        throw std::invalid_argument("trank --gen needs exactly: n (builds n^2 x n^2)");
      const Index n = o.gen_dims[0];
      Rng rng(seed.derived(0xf1));
      a.resize(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
    } else if (o.factor_paths.size() == 1) {
      a = mmio::read_dense(o.factor_paths[0]);
    } else {
      throw std::invalid_argument("trank: provide --gen n or one --factor file");
    }
    BenchRecord rec;
    rec.trial = trial;
    rec.seed = seed.value;
    rec.p = 2.0;
    rec.eps = o.eps;
    rec.m = k;

    const auto start = Clock::now();
    const TrankFactors tf = trank_approx(a, k, sketched, seed.derived(4), o.eps);
    rec.t_ours_ms = ms_since(start);
    rec.obj_sketch = tf.residual;

    if (o.oracle) {
      const auto bf_start = Clock::now();
      const Index n = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(a.rows()))));
      Eigen::BDCSVD<Matrix> svd(rearrange_for_trank(a, n));
      double tail = 0.0;
      for (Eigen::Index i = static_cast<Eigen::Index>(k); i < svd.singularValues().size(); ++i)
        tail += svd.singularValues()(i) * svd.singularValues()(i);
      rec.t_bf_ms = ms_since(bf_start);
      rec.obj_oracle = std::sqrt(tail);
      rec.r_e = *rec.obj_oracle > 0.0
                    ? 100.0 * std::abs(rec.obj_sketch - *rec.obj_oracle) / *rec.obj_oracle
                    : 0.0;
    }
    return rec;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kronbench: sketched Kronecker regression / low-rank benchmarks"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string gen_prefix = "gen";
  Index k = 3;
  bool trank_sketched = false;

  auto* gen = app.add_subcommand("gen", "write a Gaussian instance as Matrix Market files");
  gen->add_option("dims", o.gen_dims, "n1 d1 [n2 d2 ...]")->expected(-1);
  gen->add_option("--seed", o.seed, "random seed");
  gen->add_option("--out", gen_prefix, "output file prefix");

  auto* l2 = app.add_subcommand("l2", "leverage-score sampled least squares");
  add_common(l2, o, false);
  auto* lp = app.add_subcommand("lp", "l_p regression pipeline, 1 <= p < 2");
  add_common(lp, o, true);
  auto* ap = app.add_subcommand("allpairs", "all-pairs (rank) regression");
  add_common(ap, o, true);
  auto* lra = app.add_subcommand("lra", "Kronecker low-rank approximation");
  add_common(lra, o, false);
  lra->add_option("--k", k, "target rank")->check(CLI::PositiveNumber);
  std::string lra_out_prefix;
  lra->add_option("--factored-out", lra_out_prefix,
                  "write factors + U + manifest with this prefix");
  auto* trank = app.add_subcommand("trank", "low-trank approximation");
  add_common(trank, o, false);
  trank->add_option("--k", k, "target trank")->check(CLI::PositiveNumber);
  trank->add_flag("--sketched", trank_sketched, "use the sketched path");
  auto* selftest = app.add_subcommand("selftest", "run reduced invariant suites");
  bool st_json = false;
  selftest->add_flag("--json", st_json, "machine-readable summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, gen_prefix);
    if (l2->parsed()) return cmd_l2(o);
    if (lp->parsed()) return cmd_lp(o);
    if (ap->parsed()) return cmd_allpairs(o);
    if (lra->parsed()) return cmd_lra(o, k, lra_out_prefix);
    if (trank->parsed()) return cmd_trank(o, k, trank_sketched);
    if (selftest->parsed()) {
      const auto report = kronsketch::selftest::run_all();
      if (st_json) {
        std::cout << kronsketch::selftest::to_json(report) << '\n';
      } else {
        for (const auto& check : report.checks)
          std::cout << (check.passed ? "[ok]   " : "[FAIL] ") << check.name << '\n';
      }
      return report.all_passed() ? 0 : 4;
    }
  } catch (const kronsketch::BudgetExceeded& e) {
    std::cerr << "oracle budget exceeded: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}
