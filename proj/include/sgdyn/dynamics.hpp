#pragma once

// Time stepping of the space-time discrete problem.  The unknowns are the
// control-point fields u^n at t^n = t^{n-1} + dt; the pair (u^{n-1}, u^n)
// carries the half-step velocity v^{n-1/2} = (u^n - u^{n-1}) / dt and the
// half-point energy
//   Pi^{n-1/2} = rho/2 int |v^{n-1/2}|^2 + int Psi(zeta((u^n + u^{n-1}) / 2)).
// The initial time (t^0 + t^1) / 2 is zero.

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sgdyn/assembly.hpp"

namespace sgdyn {

struct InitialCondition {
  FieldCoeffs u0;
  FieldCoeffs v0;
};

struct StatePair {
  FieldCoeffs prev;  // u^{n-1}
  FieldCoeffs curr;  // u^n
  double dt = 0.0;   // t^n - t^{n-1}
  long step = 0;     // n - 1: number of completed steps
  double t_half = 0.0;

  FieldCoeffs midpoint() const;
  FieldCoeffs velocity() const;  // v^{n-1/2}
};

// u^1 = u0 + dt/2 v0 and u^0 = u0 - dt/2 v0.
StatePair init_states(const InitialCondition& ic, double dt);

// Single quadratic B-spline bump in u_1: amplitude * N_a(X1) N_b(X2) N_c(X3)
// with 1-based indices on a uniform open ic_mesh space, carried to `space`
// by knot insertion.  v0 = 0.
struct BumpIC {
  int ic_mesh = 8;
  std::array<int, 3> index{6, 2, 2};
  double amplitude = 1e-3;
};
InitialCondition bump_initial_condition(const SplineSpace& space, const BumpIC& bump = {});

struct RunConfig {
  double dt = 1e-3;
  double dt_coarse = 2e-2;
  double dissipation_switch_threshold = 1e-6;
  bool allow_dt_switch = true;
  double t_end = 0.1;
  bool stop_at_steady_state = true;
  int steady_steps = 5;
  // Steady state also needs the static residual at the midpoint below this.
  double steady_residual_tol = 1e-6;
  SchemeConfig scheme;
  NewtonConfig newton;
  std::vector<double> snapshot_times;
  int snapshot_lattice = 9;
  int threads = 0;

  void validate() const;  // throws InvalidParameter
};

struct LedgerRecord {
  long step = 0;  // 1-based
  double t_half = 0.0;
  double dt = 0.0;
  double kinetic = 0.0;
  double internal = 0.0;
  double total = 0.0;
  double dissipation = 0.0;  // dt * int {u_t} C {u_t}
  int newton_iters = 0;
  double residual_norm = 0.0;
  // (Pi^{n+1/2} - Pi^{n-1/2}) / dt + int {u_t} C {u_t}, and its bound.
  double balance_error = 0.0;
  double balance_tol = 0.0;
  std::vector<double> residual_history;  // ||R|| before each Newton update and at exit
};

struct EnergyLedger {
  double initial_kinetic = 0.0;
  double initial_internal = 0.0;
  double initial_total = 0.0;
  std::vector<LedgerRecord> records;
};

struct SnapshotRow {
  Vec3 X;
  Vec3 u;
  double e2 = 0.0, e3 = 0.0;
  Phase phase = Phase::None;
};
struct Snapshot {
  double time = 0.0;  // requested time
  double t_half = 0.0;
  long step = 0;
  std::vector<SnapshotRow> rows;
};

// Samples the field on an m^3 lattice including the faces.
Snapshot sample_snapshot(const SplineSpace& s, const FieldCoeffs& u, const MaterialParams& m, int lattice);

struct EnergyParts {
  double kinetic = 0.0, internal = 0.0;
  double total() const { return kinetic + internal; }
};

class Simulator {
 public:
  Simulator(const SplineSpace& space, const MaterialParams& material, const RunConfig& cfg,
            std::optional<EnergyModel> energy = std::nullopt);

  void start(const InitialCondition& ic);
  void restore(const StatePair& s);
  const StatePair& state() const { return state_; }
  const EnergyLedger& ledger() const { return ledger_; }
  const std::vector<Snapshot>& snapshots() const { return snapshots_; }
  const Assembler& assembler() const { return assembler_; }
  const RunConfig& config() const { return cfg_; }
  bool steady() const { return steady_; }

  EnergyParts energy(const StatePair& s) const;
  // Newton solve for u^{n+1}; appends and returns the ledger record.
  const LedgerRecord& step();
  // Re-seeds the pair for a new step size keeping v^{n-1/2} and the midpoint.
  void change_dt(double dt);
  // Steps until t_end or steady state.  The callback sees each new record.
  void run(const std::function<void(const LedgerRecord&)>& on_record = {});
  // Norm of the static residual (inertia and damping dropped) at the midpoint.
  double static_residual_norm() const;

  static double balance_tolerance(double residual_tol, int num_free, double pi_scale);

 private:
  void maybe_snapshot();

  SplineSpace space_;
  MaterialParams material_;
  RunConfig cfg_;
  EnergyModel energy_;
  Assembler assembler_;
  std::unique_ptr<PointKernel> kernel_;
  std::unique_ptr<PointKernel> static_kernel_;
  LinearSolver solver_;
  StatePair state_;
  EnergyLedger ledger_;
  std::vector<Snapshot> snapshots_;
  size_t next_snapshot_ = 0;
  bool armed_ = false;
  bool switched_ = false;
  bool steady_ = false;
  int quiet_steps_ = 0;
};

struct ConvergenceRow {
  double dt = 0.0;
  double l2_error = 0.0;
  bool converged = true;
  std::string failure;
};
struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;  // least-squares log-log slope over converged rows with error > 0
  FieldCoeffs reference;
};

// Runs base.scheme with every dt (and with dt_reference) to base.t_end, no dt
// switching or steady-state stop, and compares midpoint fields in L2.
ConvergenceTable temporal_convergence_study(const SplineSpace& space, const MaterialParams& material,
                                            const InitialCondition& ic, const RunConfig& base,
                                            const std::vector<double>& dts, double dt_reference,
                                            std::vector<FieldCoeffs>* finals = nullptr);
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Restart file, little-endian:
//   char[8] "SGDYNRS1", int32 dims[3], int32 periodic, float64 dt,
//   int64 step, float64 t_half, float64 prev[3 * ncp], float64 curr[3 * ncp]
void write_restart(const std::string& path, const StatePair& s, bool periodic);
StatePair read_restart(const std::string& path, bool* periodic = nullptr);

}  // namespace sgdyn
