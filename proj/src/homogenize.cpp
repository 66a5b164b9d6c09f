#include "sgdyn/homogenize.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/LU>

#include "sgdyn/errors.hpp"

namespace sgdyn {

Mat3 MacroLoading::reference_direction() {
  Mat3 D;
  D << 0.040382, -0.004023, -0.004722,
      -0.004023, -0.003081, 0.001542,
      -0.004722, 0.001542, 0.001676;
  return D;
}

std::vector<double> MacroLoading::reference_eta_values() {
  std::vector<double> v;
  for (int k = 0; k < 26; ++k) v.push_back(-1.5 + 0.1 * k);
  return v;
}

void MacroLoading::validate() const {
  if (!D.allFinite()) throw InvalidParameter("loading direction must be finite");
  if (!(increment > 0.0)) throw InvalidParameter("eta increment must be positive");
  if (eta_values.empty()) throw InvalidParameter("no eta values given");
  if (!std::is_sorted(eta_values.begin(), eta_values.end())) throw InvalidParameter("eta values must be sorted");
  for (double e : eta_values)
    if (!std::isfinite(e)) throw InvalidParameter("eta values must be finite");
}

Mat3 effective_strain(const Mat3& Fbar) { return 0.5 * (Fbar.transpose() * Fbar - Mat3::Identity()); }

namespace {

AssemblyOptions cell_options(int threads) {
  AssemblyOptions o;
  o.threads = threads;
  return o;
}

class StaticProblem final : public NonlinearProblem {
 public:
  StaticProblem(const Assembler& a, const PointKernel& k, FieldCoeffs& u) : a_(a), k_(k), u_(u) {}
  Eigen::VectorXd residual(const Eigen::VectorXd& x) override {
    a_.dofs().scatter(x, u_);
    return a_.static_system(k_, u_, false).residual;
  }
  AssembledSystem system(const Eigen::VectorXd& x) override {
    a_.dofs().scatter(x, u_);
    return a_.static_system(k_, u_, true);
  }

 private:
  const Assembler& a_;
  const PointKernel& k_;
  FieldCoeffs& u_;
};

}  // namespace

PeriodicCell::PeriodicCell(const SplineSpace& space, const EnergyModel& energy, int threads)
    : space_(space),
      open_(std::array<KnotVector, 3>{KnotVector::uniform_open(space.num_elements(0)),
                                      KnotVector::uniform_open(space.num_elements(1)),
                                      KnotVector::uniform_open(space.num_elements(2))}),
      energy_(energy),
      cell_(space, ConstraintSet::translation_pin(space, 0), cell_options(threads)),
      open_cell_(open_, ConstraintSet{}, cell_options(threads)) {
  if (!space.periodic()) throw InvalidParameter("cell problems need a periodic space");
  kernel_ = make_static_kernel(energy_);
  for (int cp = 0; cp < open_.num_control_points(); ++cp) {
    const auto c = open_.cp_coords(cp);
    bool touches = false;
    for (int d = 0; d < 3; ++d) {
      const int n = open_.num_dofs(d);
      touches = touches || c[d] <= 2 || c[d] >= n - 3;
    }
    if (touches) boundary_layer_.push_back(cp);
  }
}

FieldCoeffs PeriodicCell::equilibrium(const Mat3& Fbar, const FieldCoeffs& u_start, const NewtonConfig& cfg,
                                      NewtonResult* info) {
  if (u_start.dims != space_.dof_dims()) throw InvalidParameter("start field does not match the cell");
  if (!(std::abs(Fbar.determinant()) > 0.0)) throw InvalidParameter("Fbar is singular");
  FieldCoeffs u = u_start;
  // Rigid translation: constant coefficient shifts leave F unchanged.
  for (int i = 0; i < 3; ++i) {
    const double shift = u_start.at(0, i);
    for (int cp = 0; cp < u.num_control_points(); ++cp) u.at(cp, i) -= shift;
  }
  cell_.set_F_affine(Fbar);
  StaticProblem problem(cell_, *kernel_, u);
  Eigen::VectorXd x = cell_.dofs().gather(u);
  NewtonResult r = newton_solve(problem, x, cfg, &solver_);
  cell_.dofs().scatter(x, u);
  if (info) *info = r;
  return u;
}

double PeriodicCell::residual_norm(const Mat3& Fbar, const FieldCoeffs& u) {
  cell_.set_F_affine(Fbar);
  return cell_.static_system(*kernel_, u, false).residual.norm();
}

EffectiveStress PeriodicCell::effective_stress(const FieldCoeffs& u, const Mat3& Fbar) {
  const double det = Fbar.determinant();
  if (!(std::abs(det) > 1e-14) || !std::isfinite(det)) throw InvalidParameter("Fbar is singular");
  EffectiveStress out;
  cell_.set_F_affine(Fbar);
  const StressPair total = cell_.integrated_stress(*kernel_, u, &out.psi_bar);
  out.P_volume = total.P_matrix();
  for (int K = 0; K < 3; ++K)
    for (int i = 0; i < 3; ++i)
      for (int J = 0; J < 3; ++J) out.B_average[K](i, J) = total.B(i, J, K);
  out.S = Fbar.inverse() * out.P_volume;

  // The periodic field lies in the open space with the same breakpoints.
  // Testing the open-space residual with w = X_J e_k gives int P_kJ; the rows
  // of interior functions (which are also periodic functions) vanish at
  // equilibrium, so only the boundary layer carries the face tractions.
  const FieldCoeffs uo = transfer(space_, u, open_);
  open_cell_.set_F_affine(Fbar);
  const Eigen::VectorXd R = open_cell_.static_system(*kernel_, uo, false).residual;
  for (int cp : boundary_layer_) {
    const Vec3 g = open_.greville(cp);
    for (int k = 0; k < 3; ++k)
      for (int J = 0; J < 3; ++J) out.P_traction(k, J) += g[J] * R[3 * cp + k];
  }
  return out;
}

FieldCoeffs periodic_equilibrium(const SplineSpace& space, const Mat3& Fbar, const FieldCoeffs& u_start,
                                 const EnergyModel& energy, const NewtonConfig& cfg, NewtonResult* info) {
  PeriodicCell cell(space, energy);
  return cell.equilibrium(Fbar, u_start, cfg, info);
}

EffectiveResponse continuation_sweep(const SplineSpace& space, const MacroLoading& loading,
                                     const EnergyModel& energy, const FieldCoeffs& seed, const NewtonConfig& cfg,
                                     std::vector<FieldCoeffs>* fields) {
  loading.validate();
  PeriodicCell cell(space, energy);
  EffectiveResponse out;
  out.D = loading.D;
  std::map<double, std::pair<EffectiveRecord, FieldCoeffs>> done;

  auto record = [&](double eta, const FieldCoeffs& u, const NewtonResult& nr) {
    EffectiveRecord r;
    r.eta = eta;
    r.Fbar = Mat3::Identity() + eta * loading.D;
    r.Ebar = effective_strain(r.Fbar);
    const EffectiveStress es = cell.effective_stress(u, r.Fbar);
    r.Pbar = es.P_volume;
    r.Pbar_traction = es.P_traction;
    r.Sbar = es.S;
    r.psi_bar = es.psi_bar;
    r.newton_iters = nr.iterations;
    r.residual_norm = nr.residual_norm;
    r.symmetry_error = (r.Sbar - r.Sbar.transpose()).norm() / std::max(1.0, r.Sbar.norm());
    r.route_error = (r.Pbar - r.Pbar_traction).norm() / std::max(1.0, r.Pbar.norm());
    return r;
  };

  // Equilibrium at eta = 0 from the seed.
  NewtonResult nr0;
  FieldCoeffs u0;
  try {
    u0 = cell.equilibrium(Mat3::Identity(), seed, cfg, &nr0);
  } catch (const Error& e) {
    out.failures.push_back("eta=0: " + std::string(e.what()));
    return out;
  }
  const auto& etas = loading.eta_values;
  if (std::find(etas.begin(), etas.end(), 0.0) != etas.end()) done[0.0] = {record(0.0, u0, nr0), u0};

  for (int dir : {+1, -1}) {
    std::vector<double> targets;
    for (double e : etas)
      if ((dir > 0 && e > 0.0) || (dir < 0 && e < 0.0)) targets.push_back(e);
    if (dir < 0) std::reverse(targets.begin(), targets.end());
    FieldCoeffs u = u0;
    double eta = 0.0;
    for (double target : targets) {
      const int sub = std::max(1, static_cast<int>(std::ceil(std::abs(target - eta) / loading.increment - 1e-9)));
      const double from = eta;
      NewtonResult nr;
      try {
        for (int k = 1; k <= sub; ++k) {
          eta = (k == sub) ? target : from + (target - from) * k / sub;
          u = cell.equilibrium(Mat3::Identity() + eta * loading.D, u, cfg, &nr);
        }
      } catch (const Error& e) {
        out.failures.push_back("eta=" + std::to_string(eta) + ": " + e.what());
        break;
      }
      done[target] = {record(target, u, nr), u};
    }
  }
  for (auto& [eta, rf] : done) {
    out.records.push_back(rf.first);
    if (fields) fields->push_back(rf.second);
  }
  return out;
}

}  // namespace sgdyn
