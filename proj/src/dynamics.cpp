#include "sgdyn/dynamics.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "sgdyn/errors.hpp"
#include "sgdyn/io.hpp"

namespace sgdyn {

namespace {

FieldCoeffs lin(double a, const FieldCoeffs& x, double b, const FieldCoeffs& y) {
  if (!x.same_shape(y)) throw InvalidParameter("field shapes differ");
  FieldCoeffs out = x;
  for (size_t j = 0; j < out.data.size(); ++j) out.data[j] = a * x.data[j] + b * y.data[j];
  return out;
}

}  // namespace

FieldCoeffs StatePair::midpoint() const { return lin(0.5, curr, 0.5, prev); }

FieldCoeffs StatePair::velocity() const { return lin(1.0 / dt, curr, -1.0 / dt, prev); }

StatePair init_states(const InitialCondition& ic, double dt) {
  if (!(dt > 0.0)) throw InvalidParameter("time step must be positive");
  StatePair s;
  s.curr = lin(1.0, ic.u0, 0.5 * dt, ic.v0);
  s.prev = lin(1.0, ic.u0, -0.5 * dt, ic.v0);
  s.dt = dt;
  return s;
}

InitialCondition bump_initial_condition(const SplineSpace& space, const BumpIC& bump) {
  if (space.periodic()) throw InvalidParameter("the bump initial condition needs an open space");
  const SplineSpace coarse = SplineSpace::uniform(bump.ic_mesh, false);
  FieldCoeffs u = FieldCoeffs::zeros(coarse);
  for (int d = 0; d < 3; ++d)
    if (bump.index[d] < 1 || bump.index[d] > coarse.num_dofs(d))
      throw InvalidParameter("bump basis index out of range");
  const int cp = coarse.cp_index(bump.index[0] - 1, bump.index[1] - 1, bump.index[2] - 1);
  u.at(cp, 0) = bump.amplitude;
  InitialCondition ic;
  ic.u0 = knot_insert(coarse, u, space);
  ic.v0 = FieldCoeffs::zeros(space);
  return ic;
}

void RunConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidParameter("dt must be positive");
  if (!(dt_coarse >= dt)) throw InvalidParameter("dt_coarse must be at least dt");
  if (!(dissipation_switch_threshold >= 0.0)) throw InvalidParameter("dissipation threshold must be non-negative");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InvalidParameter("t_end must be non-negative");
  if (steady_steps < 1) throw InvalidParameter("steady_steps must be positive");
  if (!(steady_residual_tol > 0.0)) throw InvalidParameter("steady_residual_tol must be positive");
  if (!(newton.residual_tol > 0.0)) throw InvalidParameter("residual_tol must be positive");
  if (newton.max_iters < 1) throw InvalidParameter("max_iters must be positive");
  if (snapshot_lattice < 2) throw InvalidParameter("snapshot lattice needs at least 2 points per axis");
  for (double t : snapshot_times)
    if (!(t >= 0.0)) throw InvalidParameter("snapshot times must be non-negative");
  scheme.validate();
}

Snapshot sample_snapshot(const SplineSpace& s, const FieldCoeffs& u, const MaterialParams& m, int lattice) {
  Snapshot snap;
  snap.rows.reserve(static_cast<size_t>(lattice) * lattice * lattice);
  const double h = 1.0 / (lattice - 1);
  for (int i = 0; i < lattice; ++i)
    for (int j = 0; j < lattice; ++j)
      for (int k = 0; k < lattice; ++k) {
        SnapshotRow r;
        r.X = Vec3(i * h, j * h, k * h);
        const FieldSample f = interpolate_field(s, u, r.X);
        const QuadState q = quad_state(f);
        const ReparamStrains e = reparam_strains(q);
        r.u = f.u;
        r.e2 = e.e[1];
        r.e3 = e.e[2];
        r.phase = classify_phase(r.e2, r.e3, m);
        snap.rows.push_back(r);
      }
  return snap;
}

namespace {

AssemblyOptions assembly_options(const MaterialParams& m, int threads) {
  AssemblyOptions o;
  o.rho = m.rho;
  o.damping = m.c;
  o.threads = threads;
  return o;
}

class StepProblem final : public NonlinearProblem {
 public:
  StepProblem(const Assembler& a, const PointKernel& k, const StatePair& s, FieldCoeffs& next)
      : a_(a), k_(k), s_(s), next_(next) {}
  Eigen::VectorXd residual(const Eigen::VectorXd& x) override {
    a_.dofs().scatter(x, next_);
    return a_.dynamic(k_, s_.prev, s_.curr, next_, s_.dt, false).residual;
  }
  AssembledSystem system(const Eigen::VectorXd& x) override {
    a_.dofs().scatter(x, next_);
    return a_.dynamic(k_, s_.prev, s_.curr, next_, s_.dt, true);
  }

 private:
  const Assembler& a_;
  const PointKernel& k_;
  const StatePair& s_;
  FieldCoeffs& next_;
};

}  // namespace

Simulator::Simulator(const SplineSpace& space, const MaterialParams& material, const RunConfig& cfg,
                     std::optional<EnergyModel> energy)
    : space_(space),
      material_(material),
      cfg_(cfg),
      energy_(energy ? *energy : EnergyModel(ThreeWellEnergy(material))),
      assembler_(space, ConstraintSet::boundary_dirichlet(space), assembly_options(material, cfg.threads)),
      solver_(cfg.newton.linear) {
  material_.validate();
  cfg_.validate();
  kernel_ = make_dynamic_kernel(energy_, cfg_.scheme);
  static_kernel_ = make_static_kernel(energy_);
}

void Simulator::start(const InitialCondition& ic) {
  if (ic.u0.dims != space_.dof_dims() || ic.v0.dims != space_.dof_dims())
    throw InvalidParameter("initial condition does not match the space");
  StatePair s = init_states(ic, cfg_.dt);
  restore(s);
}

void Simulator::restore(const StatePair& s) {
  if (s.prev.dims != space_.dof_dims() || s.curr.dims != space_.dof_dims())
    throw InvalidParameter("state does not match the space");
  if (!(s.dt > 0.0)) throw InvalidParameter("state time step must be positive");
  state_ = s;
  assembler_.dofs().apply_constraints(state_.prev);
  assembler_.dofs().apply_constraints(state_.curr);
  ledger_ = {};
  const EnergyParts e = energy(state_);
  ledger_.initial_kinetic = e.kinetic;
  ledger_.initial_internal = e.internal;
  ledger_.initial_total = e.total();
  snapshots_.clear();
  next_snapshot_ = 0;
  armed_ = switched_ = steady_ = false;
  quiet_steps_ = 0;
  // A restored pair at the coarse step has already switched.
  if (s.dt >= cfg_.dt_coarse && cfg_.dt_coarse > cfg_.dt) switched_ = armed_ = true;
  maybe_snapshot();
}

EnergyParts Simulator::energy(const StatePair& s) const {
  EnergyParts e;
  const FieldCoeffs v = s.velocity();
  e.kinetic = 0.5 * material_.rho * assembler_.mass_product(v, v);
  e.internal = assembler_.internal_energy(*static_kernel_, s.midpoint());
  return e;
}

double Simulator::balance_tolerance(double residual_tol, int num_free, double pi_scale) {
  return 10.0 * residual_tol * std::sqrt(static_cast<double>(num_free)) * std::max(1.0, std::abs(pi_scale));
}

const LedgerRecord& Simulator::step() {
  const double dt = state_.dt;
  FieldCoeffs next = lin(2.0, state_.curr, -1.0, state_.prev);
  assembler_.dofs().apply_constraints(next);
  const double pi_minus =
      ledger_.records.empty() ? ledger_.initial_total : ledger_.records.back().total;

  StepProblem problem(assembler_, *kernel_, state_, next);
  Eigen::VectorXd x = assembler_.dofs().gather(next);
  NewtonResult nr;
  try {
    nr = newton_solve(problem, x, cfg_.newton, &solver_);
  } catch (const NonConvergence& e) {
    throw NonConvergence("step " + std::to_string(state_.step + 1) + ": " + e.what(), e.iterations(),
                         e.residual_norm());
  }
  assembler_.dofs().scatter(x, next);

  const FieldCoeffs ud = lin(0.5 / dt, next, -0.5 / dt, state_.prev);
  const double damping_power = material_.c * assembler_.mass_product(ud, ud);

  state_.prev = std::move(state_.curr);
  state_.curr = std::move(next);
  state_.step += 1;
  state_.t_half += dt;

  LedgerRecord r;
  const EnergyParts e = energy(state_);
  r.step = state_.step;
  r.t_half = state_.t_half;
  r.dt = dt;
  r.kinetic = e.kinetic;
  r.internal = e.internal;
  r.total = e.total();
  r.dissipation = dt * damping_power;
  r.newton_iters = nr.iterations;
  r.residual_norm = nr.residual_norm;
  r.residual_history = std::move(nr.history);
  r.balance_error = (r.total - pi_minus) / dt + damping_power;
  r.balance_tol = balance_tolerance(cfg_.newton.residual_tol, assembler_.dofs().num_free(),
                                    std::max(std::abs(r.total), std::abs(pi_minus)));
  ledger_.records.push_back(r);

  // Step-size switch and steady state follow the per-step dissipation once
  // it has first exceeded the threshold; undamped runs never trigger either.
  if (material_.c > 0.0) {
    const double thr = cfg_.dissipation_switch_threshold;
    if (r.dissipation > thr) armed_ = true;
    if (armed_ && r.dissipation < thr) {
      ++quiet_steps_;
      if (cfg_.allow_dt_switch && !switched_ && cfg_.dt_coarse > dt) {
        change_dt(cfg_.dt_coarse);
        switched_ = true;
        quiet_steps_ = 0;
      } else if (quiet_steps_ >= cfg_.steady_steps && static_residual_norm() <= cfg_.steady_residual_tol) {
        steady_ = true;
      }
    } else {
      quiet_steps_ = 0;
    }
  }
  maybe_snapshot();
  return ledger_.records.back();
}

void Simulator::change_dt(double dt) {
  if (!(dt > 0.0)) throw InvalidParameter("time step must be positive");
  const FieldCoeffs mid = state_.midpoint();
  const FieldCoeffs v = state_.velocity();
  state_.curr = lin(1.0, mid, 0.5 * dt, v);
  state_.prev = lin(1.0, mid, -0.5 * dt, v);
  state_.dt = dt;
}

void Simulator::maybe_snapshot() {
  const auto& times = cfg_.snapshot_times;
  while (next_snapshot_ < times.size() && state_.t_half >= times[next_snapshot_] - 1e-9 * state_.dt) {
    Snapshot s = sample_snapshot(space_, state_.midpoint(), material_, cfg_.snapshot_lattice);
    s.time = times[next_snapshot_];
    s.t_half = state_.t_half;
    s.step = state_.step;
    snapshots_.push_back(std::move(s));
    ++next_snapshot_;
  }
}

void Simulator::run(const std::function<void(const LedgerRecord&)>& on_record) {
  while (state_.t_half < cfg_.t_end - 1e-9 * state_.dt) {
    if (steady_ && cfg_.stop_at_steady_state) break;
    const LedgerRecord& r = step();
    if (on_record) on_record(r);
  }
}

double Simulator::static_residual_norm() const {
  return assembler_.static_system(*static_kernel_, state_.midpoint(), false).residual.norm();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidParameter("slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceTable temporal_convergence_study(const SplineSpace& space, const MaterialParams& material,
                                            const InitialCondition& ic, const RunConfig& base,
                                            const std::vector<double>& dts, double dt_reference,
                                            std::vector<FieldCoeffs>* finals) {
  auto advance = [&](double dt) {
    RunConfig cfg = base;
    cfg.dt = dt;
    cfg.dt_coarse = std::max(cfg.dt_coarse, dt);
    cfg.allow_dt_switch = false;
    cfg.stop_at_steady_state = false;
    cfg.snapshot_times.clear();
    const double steps = base.t_end / dt;
    const long n = std::lround(steps);
    if (std::abs(steps - static_cast<double>(n)) > 1e-6 * steps)
      throw InvalidParameter("t_end is not a multiple of dt");
    Simulator sim(space, material, cfg);
    sim.start(ic);
    for (long k = 0; k < n; ++k) sim.step();
    return sim.state().midpoint();
  };

  ConvergenceTable table;
  table.reference = advance(dt_reference);
  std::vector<double> xs, ys;
  for (double dt : dts) {
    ConvergenceRow row;
    row.dt = dt;
    try {
      const FieldCoeffs u = advance(dt);
      row.l2_error = l2_distance(space, u, table.reference);
      if (finals) finals->push_back(u);
      if (row.l2_error > 0.0) {
        xs.push_back(dt);
        ys.push_back(row.l2_error);
      }
    } catch (const NonConvergence& e) {
      row.converged = false;
      row.failure = e.what();
      if (finals) finals->push_back(FieldCoeffs{});
    }
    table.rows.push_back(row);
  }
  table.slope = xs.size() >= 2 ? loglog_slope(xs, ys) : std::nan("");
  return table;
}

namespace {

constexpr char kMagic[8] = {'S', 'G', 'D', 'Y', 'N', 'R', 'S', '1'};

template <class T>
void put(std::string& out, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto b = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(b.begin(), b.end());
    out.append(b.data(), sizeof(T));
  } else {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
  }
}

template <class T>
T get(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("restart file is truncated");
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), in.data() + pos, sizeof(T));
  pos += sizeof(T);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

}  // namespace

void write_restart(const std::string& path, const StatePair& s, bool periodic) {
  if (!s.prev.same_shape(s.curr)) throw InvalidParameter("restart fields differ in shape");
  std::string out(kMagic, 8);
  for (int d = 0; d < 3; ++d) put<int32_t>(out, s.curr.dims[d]);
  put<int32_t>(out, periodic ? 1 : 0);
  put<double>(out, s.dt);
  put<int64_t>(out, s.step);
  put<double>(out, s.t_half);
  for (double v : s.prev.data) put<double>(out, v);
  for (double v : s.curr.data) put<double>(out, v);
  atomic_write(path, out);
}

StatePair read_restart(const std::string& path, bool* periodic) {
  const std::string in = read_file(path);
  if (in.size() < 8 || std::memcmp(in.data(), kMagic, 8) != 0) throw IoError(path + " is not a restart file");
  size_t pos = 8;
  StatePair s;
  std::array<int, 3> dims;
  for (int d = 0; d < 3; ++d) {
    dims[d] = get<int32_t>(in, pos);
    if (dims[d] < 1 || dims[d] > 100000) throw IoError("restart file has invalid dimensions");
  }
  const bool per = get<int32_t>(in, pos) != 0;
  if (periodic) *periodic = per;
  s.dt = get<double>(in, pos);
  s.step = get<int64_t>(in, pos);
  s.t_half = get<double>(in, pos);
  const size_t n = 3 * static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  if (in.size() != pos + 2 * n * sizeof(double)) throw IoError("restart file size does not match its header");
  s.prev.dims = s.curr.dims = dims;
  s.prev.data.resize(n);
  s.curr.data.resize(n);
  for (auto& v : s.prev.data) v = get<double>(in, pos);
  for (auto& v : s.curr.data) v = get<double>(in, pos);
  return s;
}

}  // namespace sgdyn
