#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "kronsketch/selftest.hpp"
#include "kronsketch/stable.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(KSK_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (std::size_t got = fread(buf.data(), 1, buf.size(), pipe)) res.output.append(buf.data(), got);
  const int status = pclose(pipe);
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string csv_body(const std::string& text) {
  std::stringstream in(text);
  std::string line, body;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') body += line + "\n";
  return body;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ksk_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gen writes files with the requested shapes, bit-identical per seed") {
  TempDir dir;
  const std::string p1 = (dir.path / "a").string();
  const std::string p2 = (dir.path / "b").string();
  CHECK(run("gen 6 2 5 2 --seed 7 --out " + p1).exit_code == 0);
  CHECK(run("gen 6 2 5 2 --seed 7 --out " + p2).exit_code == 0);
  for (const char* suffix : {"_A1.mtx", "_A2.mtx", "_b.mtx"}) {
    CHECK(slurp(p1 + suffix) == slurp(p2 + suffix));
    CHECK(!slurp(p1 + suffix).empty());
  }
  // Shapes: header line after comments is "rows cols".
  std::stringstream in(slurp(p1 + "_A1.mtx"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line) && line[0] == '%') {}
  CHECK(line == "6 2");
  // b has length 30.
  std::stringstream bin(slurp(p1 + "_b.mtx"));
  std::getline(bin, line);
  while (std::getline(bin, line) && line[0] == '%') {}
  CHECK(line == "30 1");
}

TEST_CASE("gen 2 1 2 1 produces a length-4 response") {
  TempDir dir;
  const std::string p = (dir.path / "t").string();
  CHECK(run("gen 2 1 2 1 --seed 3 --out " + p).exit_code == 0);
  std::stringstream in(slurp(p + "_b.mtx"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line) && line[0] == '%') {}
  CHECK(line == "4 1");
}

TEST_CASE("CSV bodies are byte-identical across invocations with a fixed seed") {
  for (const std::string algo :
       {std::string("l2 --gen 12 2 12 2"), std::string("lp --gen 10 2 10 2 --p 1 -m 40"),
        std::string("allpairs --gen 14 2 --p 1"), std::string("lra --gen 10 2 10 2 --k 2"),
        std::string("trank --gen 3 --k 1")}) {
    const std::string cmd = algo + " --seed 11 --trials 2";
    const RunResult a = run(cmd);
    const RunResult b = run(cmd);
    CHECK(a.exit_code == 0);
    CHECK(csv_body(a.output) == csv_body(b.output));
    CHECK(!csv_body(a.output).empty());
  }
}

TEST_CASE("parallel trials leave the CSV body unchanged") {
  const std::string base = "l2 --gen 12 2 12 2 --seed 4 --trials 3";
  const RunResult serial = run(base);
  const RunResult parallel = run(base + " --parallel-trials");
  CHECK(serial.exit_code == 0);
  CHECK(parallel.exit_code == 0);
  CHECK(csv_body(serial.output) == csv_body(parallel.output));
}

TEST_CASE("--no-oracle leaves the r_e column empty and exits 0") {
  const RunResult res = run("l2 --gen 12 2 12 2 --seed 5 --no-oracle");
  CHECK(res.exit_code == 0);
  std::stringstream in(csv_body(res.output));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  REQUIRE(row.size() >= 2);
  CHECK(row.substr(row.size() - 2) == ",,");  // obj_oracle and r_e both empty
}

TEST_CASE("invalid arguments exit with code 2") {
  CHECK(run("l2 --gen 12 2 12 2 --eps 0.9").exit_code == 2);
  CHECK(run("l2").exit_code == 2);              // no input source
  CHECK(run("lp --gen 10 2 --p 3").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
}

TEST_CASE("oracle budget violations exit with code 3") {
  CHECK(run("l2 --gen 40 2 40 2 --seed 1 --budget-entries 100").exit_code == 3);
}

TEST_CASE("selftest passes on a clean build, fails loudly when corrupted") {
  const RunResult res = run("selftest");
  CHECK(res.exit_code == 0);
  CHECK(res.output.find("[ok]   theta-table") != std::string::npos);

  const RunResult js = run("selftest --json");
  CHECK(js.exit_code == 0);
  CHECK(js.output.find("\"passed\":true") != std::string::npos);

  // Corruption detection: a broken theta lookup is reported by name.
  const auto corrupted = kronsketch::selftest::check_theta_values(
      [](double p) { return p == 1.0 ? 1.0 : 1.7; });
  CHECK(!corrupted.passed);
  CHECK(corrupted.name == "theta-table");
  const auto healthy = kronsketch::selftest::check_theta_values(
      [](double p) { return kronsketch::stable_abs_median(p); });
  CHECK(healthy.passed);
}

TEST_CASE("lra writes the factored output files with a manifest") {
  TempDir dir;
  const std::string prefix = (dir.path / "fact").string();
  const RunResult res =
      run("lra --gen 10 2 10 2 --k 2 --seed 9 --factored-out " + prefix);
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(prefix + "_A1.mtx"));
  CHECK(fs::exists(prefix + "_A2.mtx"));
  CHECK(fs::exists(prefix + "_U.mtx"));
  const std::string manifest = slurp(prefix + "_manifest.txt");
  CHECK(manifest.find("k 2") != std::string::npos);
  CHECK(manifest.find("seed 9") != std::string::npos);
}

TEST_CASE("allpairs accepts CSV tabular input") {
  TempDir dir;
  const fs::path csv = dir.path / "data.csv";
  {
    std::ofstream out(csv);
    out << "# x1,x2,y\n";
    for (int i = 0; i < 12; ++i)
      out << 0.1 * i << "," << (i % 3) << "," << 0.5 * i + 0.2 * (i % 3) << "\n";
  }
  const RunResult res =
      run("allpairs --factor " + csv.string() + " --p 1 --seed 2 --trials 1");
  CHECK(res.exit_code == 0);
  CHECK(csv_body(res.output).find("allpairs,0,") != std::string::npos);
}
