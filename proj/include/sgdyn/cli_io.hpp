#pragma once

// Run definitions, CSV output and the command implementations behind the
// sgdyn executable.
//
// A run spec is an INI file.  Keys not listed in the schema are rejected,
// lists are whitespace separated.  Sections and keys:
//
//   [mesh]       elements, periodic
//   [scheme]     kind (gonzalez | taylor_full | taylor_reduced), kappa_F_max,
//                kappa_gradF_max, l_gs
//   [time]       dt, dt_coarse, t_end, dissipation_threshold, allow_dt_switch,
//                stop_at_steady_state, steady_steps, steady_residual_tol
//   [material]   B1 .. B5, l, rho, c
//   [energy]     model (three_well | quadratic), mu, kappa
//   [newton]     residual_tol, max_iters, linear_solver, line_search
//   [initial]    kind (bump | zero | restart), ic_mesh, index, amplitude, restart
//   [output]     directory, snapshot_times, snapshot_lattice, write_restart,
//                residual_log
//   [run]        threads, seed
//   [converge]   dts, dt_reference
//   [compare]    schemes, dts
//   [homogenize] eta_values, increment, seed (homogeneous | laminate | <restart>),
//                seed_amplitude
//
// A relative output directory is resolved against $SGDYN_OUTPUT_ROOT when set.

#include <array>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sgdyn/dynamics.hpp"
#include "sgdyn/homogenize.hpp"

namespace sgdyn {

struct RunSpec {
  int elements = 8;
  bool periodic = false;

  SchemeConfig scheme;

  double dt = 1e-3;
  double dt_coarse = 2e-2;
  double t_end = 0.1;
  double dissipation_threshold = 1e-6;
  bool allow_dt_switch = true;
  bool stop_at_steady_state = true;
  int steady_steps = 5;
  double steady_residual_tol = 1e-6;

  MaterialParams material;
  std::string energy = "three_well";
  double quadratic_mu = 1.0;
  double quadratic_kappa = 1e-3;

  NewtonConfig newton;

  std::string initial = "bump";
  int ic_mesh = 8;
  std::array<int, 3> ic_index{6, 2, 2};
  double ic_amplitude = 1e-3;
  std::string ic_restart;

  std::string output_dir = "out";
  std::vector<double> snapshot_times{0.04, 0.07, 0.10, 0.25};
  int snapshot_lattice = 9;
  bool write_restart = true;
  bool residual_log = false;

  int threads = 0;
  std::uint64_t seed = 1;

  std::vector<double> converge_dts{4e-4, 2e-4, 1e-4};
  double converge_reference = 2.5e-5;

  std::vector<std::string> compare_schemes{"gonzalez", "taylor_full", "taylor_reduced"};
  std::vector<double> compare_dts{1e-3, 5e-4, 2.5e-4};

  std::vector<double> eta_values = MacroLoading::reference_eta_values();
  double eta_increment = 0.1;
  std::string homogenize_seed = "homogeneous";
  double seed_amplitude = 0.02;

  bool operator==(const RunSpec&) const = default;

  void validate() const;  // throws ConfigError naming the field
  SplineSpace space() const;
  RunConfig run_config() const;
  EnergyModel energy_model() const;
  MacroLoading loading() const;
};

RunSpec parse_run_spec(std::string_view text);  // throws ConfigError
RunSpec load_run_spec(const std::string& path);  // throws IoError, ConfigError
std::string serialize_run_spec(const RunSpec& spec);

std::string resolve_output_dir(const std::string& dir);

// CSV documents.  Every writer renders the whole table and replaces the file
// atomically.
std::string energy_csv(const EnergyLedger& ledger);
std::string residual_csv(const EnergyLedger& ledger);
std::string snapshot_csv(const Snapshot& s);
std::string field_csv(const SplineSpace& s, const FieldCoeffs& u, int lattice);
std::string convergence_csv(const ConvergenceTable& t);
std::string sweep_csv(const EffectiveResponse& r);

struct HistogramColumn {
  std::string scheme;
  double dt = 0.0;
  std::vector<int> iterations;  // per completed step
  bool failed = false;
  long failed_step = 0;
};
// Rows are Newton iteration counts, columns scheme x dt, cells the number of
// steps needing that many iterations.  A final status row marks DNF columns.
std::string histogram_csv(const std::vector<HistogramColumn>& cols);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;  // leading '#' lines without the marker
};
// Rejects ragged rows, a header mismatch and a missing final newline.
CsvTable parse_csv(std::string_view text, const std::vector<std::string>& expected_header = {});
CsvTable read_csv(const std::string& path, const std::vector<std::string>& expected_header = {});

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitSolver = 3, kExitIo = 4 };

// Commands log progress to `out` and return an exit code; errors propagate as
// exceptions that run_guarded maps to exit codes.
int cmd_run(const RunSpec& spec, std::ostream& out);
int cmd_converge(const RunSpec& spec, std::ostream& out);
int cmd_compare(const RunSpec& spec, std::ostream& out);
int cmd_homogenize(const RunSpec& spec, std::ostream& out);
// Property checks on states drawn from spec.seed.
int cmd_check(const RunSpec& spec, std::ostream& out);

int exit_code_for(const std::exception& e);
void report_error(const std::exception& e, std::ostream& err);

template <class F>
int run_guarded(F&& f, std::ostream& err) {
  try {
    return f();
  } catch (const std::exception& e) {
    report_error(e, err);
    return exit_code_for(e);
  }
}

}  // namespace sgdyn
