#pragma once

// Global residual and tangent of the time-discrete (or static) weak form over
// the free control-point dofs, plus the linear and Newton solvers.
//
// Dynamic residual for the unknown u^{n+1}:
//   R_a = int rho N_a {u_tt} + N_a c {u_t} + N_a,J {P} + N_a,JK {B}
// The inertia and damping terms use the consistent scalar mass matrix, the
// stress terms come from a PointKernel at every quadrature point.

#include <Eigen/Sparse>
#include <memory>
#include <vector>

#include "sgdyn/integrators.hpp"
#include "sgdyn/spline_space.hpp"

namespace sgdyn {

using SparseMatrixR = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

// Prescribed dof values; a global dof is 3 * control_point + component.
struct ConstraintSet {
  std::vector<int> dofs;  // sorted, unique
  std::vector<double> values;

  void fix(int dof, double value);
  // Every control point on the boundary layer fixed to zero.
  static ConstraintSet boundary_dirichlet(const SplineSpace& s);
  // All three components of one control point fixed to zero.
  static ConstraintSet translation_pin(const SplineSpace& s, int cp = 0);
};

class DofMap {
 public:
  DofMap(int num_global, const ConstraintSet& c);
  int num_global() const { return static_cast<int>(free_index_.size()); }
  int num_free() const { return static_cast<int>(free_to_global_.size()); }
  int free_index(int g) const { return free_index_[g]; }
  const std::vector<int>& free_to_global() const { return free_to_global_; }

  Eigen::VectorXd gather(const FieldCoeffs& u) const;
  void scatter(const Eigen::VectorXd& x, FieldCoeffs& u) const;  // free entries only
  void apply_constraints(FieldCoeffs& u) const;

 private:
  std::vector<int> free_index_;
  std::vector<int> free_to_global_;
  ConstraintSet constraints_;
};

struct AssemblyOptions {
  double rho = 1.0;
  double damping = 0.0;  // C = damping * identity
  Mat3 F_affine = Mat3::Identity();
  int threads = 0;       // 0: OpenMP default
  int chunk = 4;         // elements per work item
};

struct AssembledSystem {
  Eigen::VectorXd residual;
  SparseMatrixR tangent;
  bool has_tangent = false;
  bool symmetric = false;
};

class Assembler {
 public:
  Assembler(const SplineSpace& s, const ConstraintSet& c, const AssemblyOptions& o = {});

  const SplineSpace& space() const { return space_; }
  const DofMap& dofs() const { return dofs_; }
  const AssemblyOptions& options() const { return opt_; }
  void set_F_affine(const Mat3& F) { opt_.F_affine = F; }
  const SparseMatrixR& scalar_mass() const { return mass_; }

  AssembledSystem dynamic(const PointKernel& k, const FieldCoeffs& u_prev, const FieldCoeffs& u_curr,
                          const FieldCoeffs& u_next, double dt, bool with_tangent) const;
  AssembledSystem static_system(const PointKernel& k, const FieldCoeffs& u, bool with_tangent) const;

  // Serial element-by-element versions without the reduced feature algebra
  // or chunked scatter.  Intended for testing on small meshes.
  AssembledSystem dynamic_reference(const PointKernel& k, const FieldCoeffs& u_prev, const FieldCoeffs& u_curr,
                                    const FieldCoeffs& u_next, double dt, bool with_tangent) const;
  AssembledSystem static_reference(const PointKernel& k, const FieldCoeffs& u, bool with_tangent) const;

  // int Psi(zeta(u)) dV.
  double internal_energy(const PointKernel& k, const FieldCoeffs& u) const;
  // int P(zeta(u)) dV, int B dV and int Psi dV (static kernel expected).
  StressPair integrated_stress(const PointKernel& k, const FieldCoeffs& u, double* psi_integral = nullptr) const;
  // sum over components of a_i^T M b_i with the scalar mass matrix M.
  double mass_product(const FieldCoeffs& a, const FieldCoeffs& b) const;

 private:
  struct Pattern;
  void element_rows(int e, int* rows) const;
  AssembledSystem run(const PointKernel& k, const FieldCoeffs& um, const FieldCoeffs& up, bool with_tangent) const;
  AssembledSystem run_reference(const PointKernel& k, const FieldCoeffs& um, const FieldCoeffs& up,
                                const FieldCoeffs* inertia, double mass_coeff, bool with_tangent) const;
  void add_inertia(AssembledSystem& sys, const FieldCoeffs& inertia, double mass_coeff) const;

  SplineSpace space_;
  DofMap dofs_;
  AssemblyOptions opt_;
  SparseMatrixR mass_;
  std::shared_ptr<const Pattern> pattern_;
};

enum class LinearSolverKind { Auto, Cholesky, LDLT, LU, BiCGSTAB };
std::string to_string(LinearSolverKind k);
LinearSolverKind parse_linear_solver(const std::string& s);

// Sparse direct (or iterative) solver that keeps the symbolic analysis of
// the last pattern it saw.  Auto tries supernodal Cholesky (CHOLMOD) and then
// LDLT for symmetric systems, and LU otherwise or when both fail the residual
// check.
class LinearSolver {
 public:
  explicit LinearSolver(LinearSolverKind k = LinearSolverKind::Auto);
  ~LinearSolver();
  LinearSolver(LinearSolver&&) noexcept;
  LinearSolver& operator=(LinearSolver&&) noexcept;

  Eigen::VectorXd solve(const SparseMatrixR& A, const Eigen::VectorXd& b, bool symmetric);
  double last_relative_residual() const { return last_rel_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  LinearSolverKind kind_;
  double last_rel_ = 0.0;
};

Eigen::VectorXd linear_solve(const SparseMatrixR& A, const Eigen::VectorXd& b, bool symmetric);

class NonlinearProblem {
 public:
  virtual ~NonlinearProblem() = default;
  virtual Eigen::VectorXd residual(const Eigen::VectorXd& x) = 0;
  virtual AssembledSystem system(const Eigen::VectorXd& x) = 0;  // with tangent
};

struct NewtonConfig {
  double residual_tol = 1e-10;
  int max_iters = 25;
  LinearSolverKind linear = LinearSolverKind::Auto;
  // Halve the update (up to 10 times) while it does not reduce ||R||.
  bool line_search = false;

  bool operator==(const NewtonConfig&) const = default;
};

struct NewtonResult {
  int iterations = 0;  // number of linear solves / updates
  double residual_norm = 0.0;
  std::vector<double> history;  // residual norm before each update and at exit
};

// Newton iteration on x until ||R||_2 <= tol.  Throws NonConvergence after
// max_iters updates or on a non-finite residual.
NewtonResult newton_solve(NonlinearProblem& p, Eigen::VectorXd& x, const NewtonConfig& cfg,
                          LinearSolver* solver = nullptr);

}  // namespace sgdyn
