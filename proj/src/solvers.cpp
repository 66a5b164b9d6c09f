#include <Eigen/CholmodSupport>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>

#include "sgdyn/assembly.hpp"
#include "sgdyn/errors.hpp"

namespace sgdyn {

std::string to_string(LinearSolverKind k) {
  switch (k) {
    case LinearSolverKind::Auto: return "auto";
    case LinearSolverKind::Cholesky: return "cholesky";
    case LinearSolverKind::LDLT: return "ldlt";
    case LinearSolverKind::LU: return "lu";
    case LinearSolverKind::BiCGSTAB: return "bicgstab";
  }
  return "unknown";
}

LinearSolverKind parse_linear_solver(const std::string& s) {
  if (s == "auto") return LinearSolverKind::Auto;
  if (s == "cholesky") return LinearSolverKind::Cholesky;
  if (s == "ldlt") return LinearSolverKind::LDLT;
  if (s == "lu") return LinearSolverKind::LU;
  if (s == "bicgstab") return LinearSolverKind::BiCGSTAB;
  throw InvalidParameter("unknown linear solver '" + s + "'");
}

namespace {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

constexpr double kTargetResidual = 1e-12;
constexpr double kHardLimit = 1e-10;

struct PatternKey {
  std::vector<int> outer, inner;
  bool matches(const ColMatrix& A) const {
    if (outer.size() != static_cast<size_t>(A.outerSize() + 1) ||
        inner.size() != static_cast<size_t>(A.nonZeros()))
      return false;
    return std::equal(outer.begin(), outer.end(), A.outerIndexPtr()) &&
           std::equal(inner.begin(), inner.end(), A.innerIndexPtr());
  }
  void set(const ColMatrix& A) {
    outer.assign(A.outerIndexPtr(), A.outerIndexPtr() + A.outerSize() + 1);
    inner.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
  }
};

double relative_residual(const ColMatrix& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  const double nb = b.norm();
  const double nr = (b - A * x).norm();
  return nb > 0.0 ? nr / nb : nr;
}

}  // namespace

struct LinearSolver::Impl {
  Eigen::CholmodSupernodalLLT<ColMatrix, Eigen::Lower> llt;
  Eigen::SimplicialLDLT<ColMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu;
  PatternKey llt_key, ldlt_key, lu_key;
  bool llt_ready = false, ldlt_ready = false, lu_ready = false;

  Impl() { llt.cholmod().print = 0; }

  template <class Solver>
  bool factor(Solver& s, PatternKey& key, bool& ready, const ColMatrix& A) {
    if (!ready || !key.matches(A)) {
      s.analyzePattern(A);
      key.set(A);
      ready = true;
    }
    s.factorize(A);
    return s.info() == Eigen::Success;
  }

  // Solve with up to three steps of iterative refinement.
  template <class Solver>
  Eigen::VectorXd refine(Solver& s, const ColMatrix& A, const Eigen::VectorXd& b, double& rel) {
    Eigen::VectorXd x = s.solve(b);
    rel = relative_residual(A, x, b);
    for (int k = 0; k < 3 && std::isfinite(rel) && rel > 0.01 * kTargetResidual; ++k) {
      const Eigen::VectorXd dx = s.solve(b - A * x);
      const Eigen::VectorXd y = x + dx;
      const double r2 = relative_residual(A, y, b);
      if (!(r2 < rel)) break;
      x = y;
      rel = r2;
    }
    return x;
  }
};

LinearSolver::LinearSolver(LinearSolverKind k) : impl_(std::make_unique<Impl>()), kind_(k) {}
LinearSolver::~LinearSolver() = default;
LinearSolver::LinearSolver(LinearSolver&&) noexcept = default;
LinearSolver& LinearSolver::operator=(LinearSolver&&) noexcept = default;

Eigen::VectorXd LinearSolver::solve(const SparseMatrixR& Ar, const Eigen::VectorXd& b, bool symmetric) {
  if (Ar.rows() != Ar.cols() || Ar.rows() != b.size()) throw LinearSolverError("dimension mismatch");
  if (b.size() == 0) return b;
  const ColMatrix A = Ar;
  Impl& m = *impl_;
  double rel = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;

  if (kind_ == LinearSolverKind::BiCGSTAB) {
    Eigen::BiCGSTAB<ColMatrix, Eigen::IncompleteLUT<double>> it;
    it.setTolerance(0.01 * kTargetResidual);
    it.setMaxIterations(10 * static_cast<int>(b.size()));
    it.compute(A);
    x = it.solve(b);
    rel = relative_residual(A, x, b);
  } else {
    const bool sym_path = symmetric && kind_ == LinearSolverKind::Auto;
    if ((sym_path || kind_ == LinearSolverKind::Cholesky) && m.factor(m.llt, m.llt_key, m.llt_ready, A))
      x = m.refine(m.llt, A, b, rel);
    const bool try_ldlt = kind_ == LinearSolverKind::LDLT || (sym_path && !(rel <= kTargetResidual));
    if (try_ldlt && m.factor(m.ldlt, m.ldlt_key, m.ldlt_ready, A)) {
      double rel_ldlt;
      Eigen::VectorXd y = m.refine(m.ldlt, A, b, rel_ldlt);
      if (!(rel <= rel_ldlt)) {
        x = std::move(y);
        rel = rel_ldlt;
      }
    }
    const bool need_lu = !(rel <= kTargetResidual) && kind_ != LinearSolverKind::LDLT &&
                         kind_ != LinearSolverKind::Cholesky;
    if (need_lu) {
      if (!m.factor(m.lu, m.lu_key, m.lu_ready, A)) throw LinearSolverError("sparse LU factorization failed");
      double rel_lu;
      Eigen::VectorXd y = m.refine(m.lu, A, b, rel_lu);
      if (!(rel <= rel_lu)) {
        x = std::move(y);
        rel = rel_lu;
      }
    }
  }
  last_rel_ = rel;
  if (!(rel <= kHardLimit)) throw LinearSolverError("linear solve residual too large: " + std::to_string(rel));
  return x;
}

Eigen::VectorXd linear_solve(const SparseMatrixR& A, const Eigen::VectorXd& b, bool symmetric) {
  LinearSolver s;
  return s.solve(A, b, symmetric);
}

NewtonResult newton_solve(NonlinearProblem& p, Eigen::VectorXd& x, const NewtonConfig& cfg, LinearSolver* solver) {
  LinearSolver local(cfg.linear);
  LinearSolver& ls = solver ? *solver : local;
  NewtonResult res;
  double norm = p.residual(x).norm();
  res.history.push_back(norm);
  while (!(norm <= cfg.residual_tol)) {
    if (!std::isfinite(norm)) throw NonConvergence("non-finite residual", res.iterations, norm);
    if (res.iterations >= cfg.max_iters)
      throw NonConvergence("Newton iteration did not converge", res.iterations, norm);
    AssembledSystem sys = p.system(x);
    const Eigen::VectorXd dx = ls.solve(sys.tangent, -sys.residual, sys.symmetric);
    ++res.iterations;
    Eigen::VectorXd trial = x + dx;
    double trial_norm = p.residual(trial).norm();
    for (int k = 0; cfg.line_search && k < 10 && !(trial_norm < norm); ++k) {
      trial = x + std::ldexp(1.0, -(k + 1)) * dx;
      trial_norm = p.residual(trial).norm();
    }
    x = std::move(trial);
    norm = trial_norm;
    res.history.push_back(norm);
  }
  res.residual_norm = norm;
  return res;
}

}  // namespace sgdyn
