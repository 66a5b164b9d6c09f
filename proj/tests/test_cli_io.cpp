#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "sgdyn/cli_io.hpp"
#include "sgdyn/errors.hpp"
#include "sgdyn/io.hpp"

using namespace sgdyn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sgdyn_test_" + name);
  fs::remove_all(p);
  return p;
}

RunSpec random_spec(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<int> I(0, 1000);
  RunSpec s;
  s.elements = 4 + I(rng) % 13;
  s.periodic = I(rng) % 2;
  switch (I(rng) % 3) {
    case 0: s.scheme = SchemeConfig::gonzalez(); break;
    case 1: s.scheme = SchemeConfig::taylor_full(); break;
    default: s.scheme = SchemeConfig::taylor_reduced(1 + I(rng) % 8, I(rng) % 3); break;
  }
  s.dt = 1e-4 + 1e-3 * U(rng);
  s.dt_coarse = 0.01 + U(rng) / 7.0;
  s.t_end = 0.05 + U(rng);
  s.dissipation_threshold = 1e-7 * (1 + U(rng));
  s.allow_dt_switch = I(rng) % 2;
  s.stop_at_steady_state = I(rng) % 2;
  s.steady_steps = 1 + I(rng) % 9;
  s.steady_residual_tol = 1e-7 * (1 + 10 * U(rng));
  s.material.B1 *= 1 + 0.1 * U(rng);
  s.material.B2 *= 1 + 0.1 * U(rng);
  s.material.B3 *= 1 + 0.1 * U(rng);
  s.material.B4 *= 1 + 0.1 * U(rng);
  s.material.B5 *= 1 + 0.1 * U(rng);
  s.material.l = 0.05 * U(rng);
  s.material.c = I(rng) % 2 ? 0.0 : U(rng);
  s.energy = I(rng) % 2 ? "three_well" : "quadratic";
  s.quadratic_mu = 1 + U(rng);
  s.newton.residual_tol = 1e-12 * (1 + 100 * U(rng));
  s.newton.max_iters = 5 + I(rng) % 50;
  s.newton.line_search = I(rng) % 2;
  s.newton.linear = I(rng) % 2 ? LinearSolverKind::LU : LinearSolverKind::Auto;
  s.ic_amplitude = 1e-3 * U(rng) + 1e-5;
  s.output_dir = "runs/r" + std::to_string(I(rng));
  s.snapshot_times = {0.01 * U(rng), 0.02 + U(rng)};
  s.threads = I(rng) % 4;
  s.seed = rng();
  s.converge_dts = {4e-4 * (1 + U(rng)), 2e-4, 1e-4};
  s.compare_dts = {1e-3 * U(rng) + 1e-5};
  s.eta_values = {-0.1 * U(rng), 0.0, 0.1 * U(rng)};
  s.seed_amplitude = U(rng) / 10.0;
  return s;
}

RunSpec tiny_run(const fs::path& dir) {
  RunSpec s;
  s.elements = 4;
  s.ic_mesh = 4;
  s.ic_index = {4, 2, 2};
  s.ic_amplitude = 5e-3;
  s.dt = 1e-3;
  s.t_end = 0.0035;
  s.snapshot_times = {0.002};
  s.snapshot_lattice = 3;
  s.output_dir = dir.string();
  return s;
}

}  // namespace

TEST_CASE("run specs round trip through the INI form") {
  const RunSpec d;
  CHECK(parse_run_spec(serialize_run_spec(d)) == d);
  CHECK(parse_run_spec("") == d);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const RunSpec s = random_spec(rng);
    REQUIRE_NOTHROW(s.validate());
    const std::string text = serialize_run_spec(s);
    const RunSpec back = parse_run_spec(text);
    CHECK(back == s);
    CHECK(serialize_run_spec(back) == text);
  }
}

TEST_CASE("spec parsing accepts comments, lists and booleans") {
  const RunSpec s = parse_run_spec(
      "# comment\n[mesh]\nelements = 6\nperiodic = yes\n[output]\nsnapshot_times = 0.1, 0.2 0.3\n"
      "[scheme]\nkind = taylor_reduced\nkappa_F_max = 4\nkappa_gradF_max = 2\n");
  CHECK(s.elements == 6);
  CHECK(s.periodic);
  CHECK(s.snapshot_times == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(s.scheme == SchemeConfig::taylor_reduced(4, 2));
}

TEST_CASE("spec errors name the line and the field") {
  auto err = [](std::string_view text) {
    try {
      parse_run_spec(text);
    } catch (const ConfigError& e) {
      return std::make_pair(e.line(), e.field());
    }
    return std::make_pair(-1, std::string{});
  };
  CHECK(err("[time]\ndt = 0\n") == std::make_pair(2, std::string("time.dt")));
  CHECK(err("[mesh]\n\nbogus = 1\n") == std::make_pair(3, std::string("mesh.bogus")));
  CHECK(err("[nowhere]\nx = 1\n").first == 1);
  CHECK(err("[time]\ndt = fast\n") == std::make_pair(2, std::string("time.dt")));
  CHECK(err("[mesh]\nperiodic = maybe\n").second == "mesh.periodic");
  CHECK(err("[scheme]\nkind = euler\n").second == "scheme.kind");
  CHECK(err("[newton]\nmax_iters = 0\n").second == "newton.max_iters");
  CHECK(err("[material]\nB4 = -1\n").second.rfind("material", 0) == 0);
  CHECK_THROWS_AS(load_run_spec((fs::temp_directory_path() / "sgdyn_missing.ini").string()), IoError);
}

TEST_CASE("output directories resolve against the root variable") {
  ::setenv("SGDYN_OUTPUT_ROOT", "/tmp/root", 1);
  CHECK(fs::path(resolve_output_dir("a/b")) == fs::path("/tmp/root/a/b"));
  CHECK(resolve_output_dir("/abs/dir") == "/abs/dir");
  ::unsetenv("SGDYN_OUTPUT_ROOT");
  CHECK(resolve_output_dir("a/b") == "a/b");
}

TEST_CASE("CSV parsing rejects malformed files") {
  const CsvTable t = parse_csv("# note\na,b\n1,2\n3,4\n", {"a", "b"});
  CHECK(t.comments == std::vector<std::string>{"note"});
  CHECK(t.rows.size() == 2u);
  CHECK(t.rows[1][0] == "3");
  CHECK_THROWS_AS(parse_csv("a,b\n1,2"), IoError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2,3\n"), IoError);
  CHECK_THROWS_AS(parse_csv("a,c\n1,2\n", {"a", "b"}), IoError);
  CHECK_THROWS_AS(parse_csv(""), IoError);
}

TEST_CASE("atomic writes replace the file without leftovers") {
  const fs::path dir = scratch("atomic");
  fs::create_directories(dir);
  const std::string path = (dir / "f.txt").string();
  atomic_write(path, "first\n");
  atomic_write(path, "second\n");
  CHECK(read_file(path) == "second\n");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  atomic_write((dir / "sub" / "g.txt").string(), "x");
  CHECK(read_file((dir / "sub" / "g.txt").string()) == "x");
  CHECK_THROWS_AS(atomic_write((dir / "f.txt" / "g").string(), "x"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("doubles print in round-trip form") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1e3, 1e3);
  for (int k = 0; k < 1000; ++k) {
    const double x = U(rng) * std::pow(10.0, k % 20 - 10);
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("exit codes follow the error class") {
  CHECK(exit_code_for(ConfigError("x")) == kExitUsage);
  CHECK(exit_code_for(InvalidParameter("x")) == kExitUsage);
  CHECK(exit_code_for(InvalidMesh("x")) == kExitUsage);
  CHECK(exit_code_for(NonConvergence("x", 3, 1.0)) == kExitSolver);
  CHECK(exit_code_for(LinearSolverError("x")) == kExitSolver);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
  std::ostringstream err;
  CHECK(run_guarded([]() -> int { throw ConfigError("bad", 4, "time.dt"); }, err) == kExitUsage);
  CHECK(err.str().find("line 4") != std::string::npos);
  CHECK(err.str().find("time.dt") != std::string::npos);
  CHECK(run_guarded([] { return 0; }, err) == 0);
}

TEST_CASE("iteration histogram") {
  HistogramColumn a{"gonzalez", 1e-3, {2, 3, 3, 5}, false, 0};
  HistogramColumn b{"taylor_full", 5e-4, {2, 2}, true, 3};
  const CsvTable t = parse_csv(histogram_csv({a, b}));
  CHECK(t.header == std::vector<std::string>{"iterations", "gonzalez@0.001", "taylor_full@0.0005"});
  REQUIRE(t.rows.size() == 5u);
  CHECK(t.rows[0] == std::vector<std::string>{"2", "1", "2"});
  CHECK(t.rows[1] == std::vector<std::string>{"3", "2", "0"});
  CHECK(t.rows[3] == std::vector<std::string>{"5", "1", "0"});
  CHECK(t.rows[4] == std::vector<std::string>{"status", "ok", "DNF@step3"});
  const CsvTable empty = parse_csv(histogram_csv({}));
  CHECK(empty.header == std::vector<std::string>{"iterations"});
  CHECK(empty.rows.size() == 1u);
}

TEST_CASE("invalid runs write nothing") {
  const fs::path dir = scratch("invalid");
  RunSpec s = tiny_run(dir);
  s.dt = -1.0;
  std::ostringstream out, err;
  CHECK(run_guarded([&] { return cmd_run(s, out); }, err) == kExitUsage);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("run output is complete and deterministic") {
  const fs::path d1 = scratch("run1"), d2 = scratch("run2");
  std::ostringstream out;
  RunSpec s = tiny_run(d1);
  CHECK(cmd_run(s, out) == kExitOk);
  s.output_dir = d2.string();
  s.threads = 3;
  CHECK(cmd_run(s, out) == kExitOk);
  for (const char* f : {"energy.csv", "run_spec.ini", "restart.bin", "field_final.csv"}) {
    INFO(f);
    CHECK(fs::exists(d1 / f));
  }
  CHECK(read_file((d1 / "energy.csv").string()) == read_file((d2 / "energy.csv").string()));
  const CsvTable e = read_csv((d1 / "energy.csv").string(),
                              {"step", "t_half", "kinetic", "internal", "total", "dissipation", "newton_iters"});
  CHECK(e.rows.size() == 4u);
  CHECK(e.comments.at(0).rfind("initial", 0) == 0);
  // The written spec reproduces the run.
  RunSpec again = load_run_spec((d1 / "run_spec.ini").string());
  again.output_dir = s.output_dir;
  again.threads = s.threads;
  CHECK(again == s);
  bool snap = false;
  for (const auto& p : fs::directory_iterator(d1)) snap |= p.path().filename().string().rfind("snapshot_t", 0) == 0;
  CHECK(snap);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("the check command passes") {
  RunSpec s;
  s.elements = 2;
  std::ostringstream out;
  CHECK(cmd_check(s, out) == kExitOk);
  CHECK(out.str().find("FAIL") == std::string::npos);
}
