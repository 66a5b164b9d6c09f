#include "doctest.h"

#include <random>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "sgdyn/assembly.hpp"
#include "sgdyn/errors.hpp"

using namespace sgdyn;

namespace {

const MaterialParams kParams;

FieldCoeffs random_field(const SplineSpace& s, const ConstraintSet& c, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  FieldCoeffs u = FieldCoeffs::zeros(s);
  for (auto& v : u.data) v = n(rng);
  DofMap(3 * s.num_control_points(), c).apply_constraints(u);
  return u;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double max_abs(const SparseMatrixR& m) {
  double x = 0.0;
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseMatrixR::InnerIterator it(m, r); it; ++it) x = std::max(x, std::abs(it.value()));
  return x;
}

double bernstein(int a, double x, int d) {
  const double v[3][3] = {{(1 - x) * (1 - x), 2 * x * (1 - x), x * x},
                          {-2 * (1 - x), 2 - 4 * x, 2 * x},
                          {2.0, -4.0, 2.0}};
  return v[d][a];
}

// Dense residual of the time-discrete weak form on the one-element space for a
// quadratic energy, where every scheme reduces to the gradient at the mean state.
Eigen::VectorXd one_element_residual(const QuadraticEnergy& e, const FieldCoeffs& um1, const FieldCoeffs& u0,
                                     const FieldCoeffs& up1, double dt, double rho, double c) {
  const double g = std::sqrt(0.6) / 2.0;
  const double pts[3] = {0.5 - g, 0.5, 0.5 + g};
  const double wts[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  Eigen::VectorXd R = Eigen::VectorXd::Zero(81);
  for (int q0 = 0; q0 < 3; ++q0)
    for (int q1 = 0; q1 < 3; ++q1)
      for (int q2 = 0; q2 < 3; ++q2) {
        const double x[3] = {pts[q0], pts[q1], pts[q2]};
        const double w = wts[q0] * wts[q1] * wts[q2];
        // N, grad N, hess N of all 27 functions.
        double N[27], dN[27][3], ddN[27][3][3];
        for (int a = 0; a < 27; ++a) {
          const int ia[3] = {a / 9, (a / 3) % 3, a % 3};
          N[a] = bernstein(ia[0], x[0], 0) * bernstein(ia[1], x[1], 0) * bernstein(ia[2], x[2], 0);
          for (int J = 0; J < 3; ++J) {
            double p = 1.0;
            for (int d = 0; d < 3; ++d) p *= bernstein(ia[d], x[d], d == J ? 1 : 0);
            dN[a][J] = p;
            for (int K = 0; K < 3; ++K) {
              double r = 1.0;
              for (int d = 0; d < 3; ++d) r *= bernstein(ia[d], x[d], int(d == J) + int(d == K));
              ddN[a][J][K] = r;
            }
          }
        }
        Eigen::Vector3d acc = Eigen::Vector3d::Zero(), vel = Eigen::Vector3d::Zero();
        QuadState z = QuadState::identity();
        for (int a = 0; a < 27; ++a)
          for (int i = 0; i < 3; ++i) {
            const double mean = 0.25 * (um1.at(a, i) + 2.0 * u0.at(a, i) + up1.at(a, i));
            acc[i] += N[a] * (up1.at(a, i) - 2.0 * u0.at(a, i) + um1.at(a, i)) / (dt * dt);
            vel[i] += N[a] * (up1.at(a, i) - um1.at(a, i)) / (2.0 * dt);
            for (int J = 0; J < 3; ++J) {
              z.z[f_index(i, J)] += mean * dN[a][J];
              for (int K = 0; K < 3; ++K) z.z[g_index(i, J, K)] += mean * ddN[a][J][K];
            }
          }
        Eigen::Matrix<double, 36, 1> dz;
        for (int v = 0; v < 36; ++v) dz[v] = z.z[v] - e.center()[v];
        const Eigen::Matrix<double, 36, 1> sigma = e.matrix() * dz;
        for (int a = 0; a < 27; ++a)
          for (int i = 0; i < 3; ++i) {
            double r = rho * N[a] * acc[i] + c * N[a] * vel[i];
            for (int J = 0; J < 3; ++J) {
              r += dN[a][J] * sigma[f_index(i, J)];
              for (int K = 0; K < 3; ++K) r += ddN[a][J][K] * sigma[g_index(i, J, K)];
            }
            R[3 * a + i] += w * r;
          }
      }
  return R;
}

}  // namespace

TEST_CASE("boundary constraints and dof maps") {
  const auto s = SplineSpace::uniform(4, false);
  const auto c = ConstraintSet::boundary_dirichlet(s);
  CHECK(c.dofs.size() == 3u * (216 - 64));
  CHECK(ConstraintSet::boundary_dirichlet(SplineSpace::uniform(4, true)).dofs.empty());
  const DofMap map(3 * s.num_control_points(), c);
  CHECK(map.num_free() == 3 * 64);
  std::mt19937_64 rng(1);
  FieldCoeffs u = random_field(s, c, rng, 1.0);
  const Eigen::VectorXd x = map.gather(u);
  FieldCoeffs v = FieldCoeffs::zeros(s);
  map.scatter(x, v);
  CHECK(v.data == u.data);
  ConstraintSet pin = ConstraintSet::translation_pin(SplineSpace::uniform(4, true));
  CHECK(pin.dofs == std::vector<int>{0, 1, 2});
}

TEST_CASE("consistent mass integrates the unit cube") {
  for (bool periodic : {false, true}) {
    const auto s = SplineSpace::uniform(4, periodic);
    const Assembler a(s, ConstraintSet{});
    FieldCoeffs one = FieldCoeffs::zeros(s);
    for (auto& v : one.data) v = 1.0;
    CHECK(a.mass_product(one, one) == doctest::Approx(3.0).epsilon(1e-12));
    // Linear field x: int x^2 = 1/3.
    const FieldCoeffs lin = interpolate_greville(s, [](const Vec3& X) { return Vec3(X[0], 0, 0); });
    if (!periodic) CHECK(a.mass_product(lin, lin) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  }
}

TEST_CASE("reference state is an equilibrium") {
  const auto s = SplineSpace::uniform(3, false);
  const Assembler a(s, ConstraintSet::boundary_dirichlet(s));
  const auto kernel = make_dynamic_kernel(ThreeWellEnergy(kParams), SchemeConfig::taylor_full());
  const FieldCoeffs z = FieldCoeffs::zeros(s);
  const AssembledSystem sys = a.dynamic(*kernel, z, z, z, 1e-3, true);
  CHECK(max_abs(sys.residual) == 0.0);
  CHECK(sys.symmetric);
}

TEST_CASE("one-element residual against dense quadrature") {
  const auto s = SplineSpace::uniform(1, false);
  const QuadraticEnergy e = QuadraticEnergy::isotropic(1.7, 0.3);
  AssemblyOptions o;
  o.rho = 1.3;
  o.damping = 0.4;
  const Assembler a(s, ConstraintSet{}, o);
  std::mt19937_64 rng(2);
  const FieldCoeffs um1 = random_field(s, {}, rng, 0.01), u0 = random_field(s, {}, rng, 0.01),
                    up1 = random_field(s, {}, rng, 0.01);
  const double dt = 0.01;
  const Eigen::VectorXd ref = one_element_residual(e, um1, u0, up1, dt, o.rho, o.damping);
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full()}) {
    const auto k = make_dynamic_kernel(e, cfg);
    const Eigen::VectorXd r = a.dynamic(*k, um1, u0, up1, dt, false).residual;
    CHECK(max_abs(r - ref) <= 1e-12 * std::max(1.0, max_abs(ref)));
  }
}

TEST_CASE("parallel assembly matches the serial reference") {
  const auto s = SplineSpace::uniform(3, false);
  const auto c = ConstraintSet::boundary_dirichlet(s);
  AssemblyOptions o;
  o.damping = 0.7;
  const Assembler a(s, c, o);
  std::mt19937_64 rng(3);
  const FieldCoeffs u0 = random_field(s, c, rng, 0.02), u1 = random_field(s, c, rng, 0.02),
                    u2 = random_field(s, c, rng, 0.02);
  const EnergyModel e = ThreeWellEnergy(kParams);
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced()}) {
    const auto k = make_dynamic_kernel(e, cfg);
    const AssembledSystem p = a.dynamic(*k, u0, u1, u2, 1e-3, true);
    const AssembledSystem r = a.dynamic_reference(*k, u0, u1, u2, 1e-3, true);
    CHECK(max_abs(p.residual - r.residual) <= 1e-12 * std::max(1.0, max_abs(r.residual)));
    CHECK(max_abs(SparseMatrixR(p.tangent - r.tangent)) <= 1e-12 * max_abs(r.tangent));
    CHECK(p.symmetric == r.symmetric);
  }
  const auto sk = make_static_kernel(e);
  const AssembledSystem p = a.static_system(*sk, u1, true);
  const AssembledSystem r = a.static_reference(*sk, u1, true);
  CHECK(max_abs(p.residual - r.residual) <= 1e-12 * std::max(1.0, max_abs(r.residual)));
  CHECK(max_abs(SparseMatrixR(p.tangent - r.tangent)) <= 1e-12 * max_abs(r.tangent));
}

TEST_CASE("assembly is bitwise reproducible across thread counts") {
  const auto s = SplineSpace::uniform(4, false);
  const auto c = ConstraintSet::boundary_dirichlet(s);
  std::mt19937_64 rng(4);
  const FieldCoeffs u0 = random_field(s, c, rng, 0.02), u1 = random_field(s, c, rng, 0.02);
  const auto k = make_dynamic_kernel(ThreeWellEnergy(kParams), SchemeConfig::taylor_full());
  std::vector<Eigen::VectorXd> res;
  std::vector<SparseMatrixR> tan;
  for (int threads : {1, 2, 4, 4}) {
    AssemblyOptions o;
    o.threads = threads;
    const Assembler a(s, c, o);
    const AssembledSystem sys = a.dynamic(*k, u0, u1, u1, 1e-3, true);
    res.push_back(sys.residual);
    tan.push_back(sys.tangent);
  }
  for (size_t j = 1; j < res.size(); ++j) {
    CHECK(res[j] == res[0]);
    CHECK(Eigen::Map<const Eigen::VectorXd>(tan[j].valuePtr(), tan[j].nonZeros()) ==
          Eigen::Map<const Eigen::VectorXd>(tan[0].valuePtr(), tan[0].nonZeros()));
  }
}

TEST_CASE("tangent matches finite differences of the residual") {
  const auto s = SplineSpace::uniform(2, false);
  const ConstraintSet c;  // all dofs free
  AssemblyOptions o;
  o.damping = 1.0;
  const Assembler a(s, c, o);
  std::mt19937_64 rng(5);
  const FieldCoeffs u0 = random_field(s, c, rng, 0.05), u1 = random_field(s, c, rng, 0.05);
  const FieldCoeffs u2 = random_field(s, c, rng, 0.05);
  const double dt = 1e-2;
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced()}) {
    const auto k = make_dynamic_kernel(ThreeWellEnergy(kParams), cfg);
    const AssembledSystem sys = a.dynamic(*k, u0, u1, u2, dt, true);
    const Eigen::MatrixXd K = Eigen::MatrixXd(sys.tangent);
    double worst = 0.0;
    for (int col = 0; col < K.cols(); col += 7) {
      FieldCoeffs p = u2, m = u2;
      const double h = 1e-6;
      p.data[col] += h;
      m.data[col] -= h;
      const Eigen::VectorXd fd =
          (a.dynamic(*k, u0, u1, p, dt, false).residual - a.dynamic(*k, u0, u1, m, dt, false).residual) / (2 * h);
      worst = std::max(worst, max_abs(fd - K.col(col)) / std::max(1.0, max_abs(K.col(col))));
    }
    INFO(to_string(cfg.kind));
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("Taylor tangents assemble to symmetric matrices") {
  const auto s = SplineSpace::uniform(3, false);
  const auto c = ConstraintSet::boundary_dirichlet(s);
  const Assembler a(s, c);
  std::mt19937_64 rng(6);
  const FieldCoeffs u0 = random_field(s, c, rng, 0.03), u1 = random_field(s, c, rng, 0.03);
  const FieldCoeffs u2 = random_field(s, c, rng, 0.03);
  for (const auto& cfg : {SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced()}) {
    const auto k = make_dynamic_kernel(ThreeWellEnergy(kParams), cfg);
    const SparseMatrixR K = a.dynamic(*k, u0, u1, u2, 1e-3, true).tangent;
    const SparseMatrixR Kt = K.transpose();
    CHECK(max_abs(SparseMatrixR(K - Kt)) <= 1e-12 * max_abs(K));
  }
}

TEST_CASE("linear solvers agree with a dense solve") {
  const auto s = SplineSpace::uniform(3, false);
  const auto c = ConstraintSet::boundary_dirichlet(s);
  const Assembler a(s, c);
  std::mt19937_64 rng(7);
  const FieldCoeffs u = random_field(s, c, rng, 0.01);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const auto& cfg : {SchemeConfig::taylor_full(), SchemeConfig::gonzalez()}) {
    const auto k = make_dynamic_kernel(ThreeWellEnergy(kParams), cfg);
    const AssembledSystem sys = a.dynamic(*k, u, u, u, 1e-3, true);
    Eigen::VectorXd b(sys.residual.size());
    for (auto& v : b) v = n(rng);
    const Eigen::VectorXd ref = Eigen::MatrixXd(sys.tangent).fullPivLu().solve(b);
    std::vector<LinearSolverKind> kinds{LinearSolverKind::Auto, LinearSolverKind::LU, LinearSolverKind::BiCGSTAB};
    if (sys.symmetric) {
      kinds.push_back(LinearSolverKind::Cholesky);
      kinds.push_back(LinearSolverKind::LDLT);
    }
    for (auto kind : kinds) {
      LinearSolver solver(kind);
      const Eigen::VectorXd x = solver.solve(sys.tangent, b, sys.symmetric);
      INFO(to_string(kind));
      CHECK(max_abs(x - ref) <= 1e-8 * max_abs(ref));
    }
  }
  CHECK(parse_linear_solver("cholesky") == LinearSolverKind::Cholesky);
  CHECK_THROWS_AS(parse_linear_solver("magic"), InvalidParameter);
}

namespace {

// R(x) = A x + g x^3 - b on a tridiagonal A.
struct CubicProblem : NonlinearProblem {
  SparseMatrixR A;
  Eigen::VectorXd b;
  double g;
  CubicProblem(int n, double g_) : A(n, n), b(n), g(g_) {
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i) {
      t.emplace_back(i, i, 4.0);
      if (i > 0) t.emplace_back(i, i - 1, -1.0);
      if (i + 1 < n) t.emplace_back(i, i + 1, -1.0);
      b[i] = std::sin(i + 1.0);
    }
    A.setFromTriplets(t.begin(), t.end());
  }
  Eigen::VectorXd residual(const Eigen::VectorXd& x) override {
    return A * x + g * x.array().cube().matrix() - b;
  }
  AssembledSystem system(const Eigen::VectorXd& x) override {
    AssembledSystem s;
    s.residual = residual(x);
    s.tangent = A;
    for (int i = 0; i < x.size(); ++i) s.tangent.coeffRef(i, i) += 3.0 * g * x[i] * x[i];
    s.has_tangent = true;
    s.symmetric = true;
    return s;
  }
};

}  // namespace

TEST_CASE("Newton iteration") {
  SUBCASE("linear problems take one iteration") {
    CubicProblem p(50, 0.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(50);
    const NewtonResult r = newton_solve(p, x, NewtonConfig{});
    CHECK(r.iterations == 1);
    CHECK(r.residual_norm <= 1e-12);
    const NewtonResult again = newton_solve(p, x, NewtonConfig{});
    CHECK(again.iterations == 0);
  }
  SUBCASE("quadratic convergence on a cubic problem") {
    CubicProblem p(50, 2.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(50);
    const NewtonResult r = newton_solve(p, x, NewtonConfig{});
    CHECK(r.residual_norm <= 1e-10);
    CHECK(r.iterations <= 8);
    REQUIRE(r.history.size() >= 4);
    const size_t n = r.history.size();
    // Error ratio r_{k+1} / r_k^2 stays bounded near the solution.
    CHECK(r.history[n - 1] <= 10.0 * r.history[n - 2] * r.history[n - 2] + 1e-14);
  }
  SUBCASE("iteration limit raises NonConvergence") {
    CubicProblem p(50, 2.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(50);
    NewtonConfig cfg;
    cfg.max_iters = 1;
    CHECK_THROWS_AS(newton_solve(p, x, cfg), NonConvergence);
  }
}
