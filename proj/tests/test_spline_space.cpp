#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "sgdyn/errors.hpp"
#include "sgdyn/spline_space.hpp"

using namespace sgdyn;

TEST_CASE("dof counts of uniform spaces") {
  CHECK(SplineSpace::uniform(16, false).num_dofs(0) == 18);
  CHECK(SplineSpace::uniform(64, false).num_dofs(2) == 66);
  CHECK(SplineSpace::uniform(8, true).num_dofs(1) == 8);
  CHECK(SplineSpace::uniform(4, false).num_control_points() == 216);
  CHECK(SplineSpace::uniform(4, false).num_elements() == 64);
  CHECK_THROWS_AS(SplineSpace::uniform(0, false), InvalidMesh);
  CHECK_THROWS_AS(SplineSpace::uniform(2, true), InvalidMesh);
}

TEST_CASE("knot vector validation") {
  CHECK_NOTHROW(KnotVector::open({0, 0, 0, 0.3, 1, 1, 1}));
  CHECK_THROWS_AS(KnotVector::open({0, 0, 0.1, 0.5, 1, 1, 1}), InvalidMesh);
  CHECK_THROWS_AS(KnotVector::open({0, 0, 0, 0.5, 0.5, 1, 1, 1}), InvalidMesh);
  const auto kv = KnotVector::uniform_open(4);
  CHECK(kv.find_element(0.0) == 0);
  CHECK(kv.find_element(1.0) == 3);
  CHECK(kv.find_element(0.25) == 1);
  CHECK_THROWS_AS(kv.find_element(1.5), DomainError);
}

TEST_CASE("basis functions match the Cox-de Boor recursion") {
  for (int n : {1, 3, 4, 7}) {
    const auto kv = KnotVector::uniform_open(n);
    const auto t = oracle::uniform_open_knots(n);
    std::mt19937_64 rng(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < 50; ++s) {
      const double x = s == 0 ? 1.0 : u(rng);
      for (int j = 0; j < kv.num_basis(); ++j)
        for (int d = 0; d < 3; ++d)
          CHECK(kv.eval_basis(j, x, d) == doctest::Approx(oracle::cox_de_boor_deriv(t, j, 2, x, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("element midpoint value on the n = 4 open space") {
  // Centre function of the second element at its midpoint.
  const auto kv = KnotVector::uniform_open(4);
  const auto t = oracle::uniform_open_knots(4);
  const double x = 0.375;
  CHECK(kv.eval_basis(2, x) == doctest::Approx(oracle::cox_de_boor(t, 2, 2, x)).epsilon(1e-15));
  CHECK(kv.eval_basis(2, x) == doctest::Approx(0.75));
}

TEST_CASE("non-uniform open knots") {
  const std::vector<double> t{0, 0, 0, 0.1, 0.45, 0.5, 1, 1, 1};
  const auto kv = KnotVector::open(t);
  for (double x : {0.0, 0.05, 0.1, 0.3, 0.47, 0.5, 0.99, 1.0})
    for (int j = 0; j < kv.num_basis(); ++j)
      CHECK(kv.eval_basis(j, x, 1) == doctest::Approx(oracle::cox_de_boor_deriv(t, j, 2, x, 1)).epsilon(1e-12));
}

TEST_CASE("partition of unity and derivative sums on the open space") {
  const auto s = SplineSpace::uniform(5, false);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 X(u(rng), u(rng), u(rng));
    const auto b = s.eval_basis(X);
    CHECK(b.size() == 27);
    double sum = 0.0, gsum = 0.0, hsum = 0.0;
    Vec3 g = Vec3::Zero();
    std::array<double, 9> h{};
    for (const auto& x : b) {
      sum += x.value;
      for (int d = 0; d < 3; ++d) g[d] += x.grad[d];
      for (int d = 0; d < 9; ++d) h[d] += x.hess[d];
      CHECK(x.hess[1] == x.hess[3]);
    }
    gsum = g.cwiseAbs().maxCoeff();
    for (double v : h) hsum = std::max(hsum, std::abs(v));
    CHECK(std::abs(sum - 1.0) <= 1e-14);
    CHECK(gsum <= 1e-12);
    CHECK(hsum <= 1e-10);
  }
}

TEST_CASE("quadrature tables integrate the unit interval") {
  const auto s = SplineSpace::uniform(6, false);
  for (int d = 0; d < 3; ++d) {
    double w = 0.0, x2 = 0.0;
    const auto& t = s.table(d);
    for (size_t q = 0; q < t.weights.size(); ++q) {
      w += t.weights[q];
      x2 += t.weights[q] * std::pow(t.points[q], 5);
    }
    CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(x2 == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  }
}

TEST_CASE("Greville interpolation reproduces quadratics") {
  {
    const auto s = SplineSpace::uniform(6, false);
    auto f = [](const Vec3& X) {
      return Vec3(0.3 + 0.2 * X[0] - 1.1 * X[0] * X[0] + 0.5 * X[1] * X[2],
                  X[1] * X[1] - 0.4 * X[2], 1.0 - X[0] * X[1] + 0.25 * X[2] * X[2]);
    };
    const FieldCoeffs u = interpolate_greville(s, f);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> r(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      const Vec3 X(r(rng), r(rng), r(rng));
      const FieldSample fs = interpolate_field(s, u, X);
      CHECK((fs.u - f(X)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(fs.hess[0](0, 0) == doctest::Approx(-2.2).epsilon(1e-10));
      CHECK(fs.hess[0](1, 2) == doctest::Approx(0.5).epsilon(1e-10));
      CHECK(fs.grad(1, 2) == doctest::Approx(-0.4).epsilon(1e-10));
    }
  }
}

TEST_CASE("linear field through Greville points") {
  const auto s = SplineSpace::uniform(4, false);
  const FieldCoeffs u = interpolate_greville(s, [](const Vec3& X) { return Vec3(X[0], 0, 0); });
  const FieldSample f = interpolate_field(s, u, Vec3(0.31, 0.77, 0.12));
  CHECK(f.grad(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(f.hess[0](0, 0)) <= 1e-12);
  const FieldSample z = interpolate_field(s, FieldCoeffs::zeros(s), Vec3(0.5, 0.5, 0.5));
  CHECK(z.u.norm() == 0.0);
}

TEST_CASE("second derivatives match finite differences of the gradient") {
  const auto s = SplineSpace::uniform(4, false);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.1, 0.9);
  FieldCoeffs u = FieldCoeffs::zeros(s);
  for (auto& v : u.data) v = n(rng);
  for (int k = 0; k < 20; ++k) {
    const Vec3 X(r(rng), r(rng), r(rng));
    const FieldSample f = interpolate_field(s, u, X);
    const double h = 1e-5;
    for (int K = 0; K < 3; ++K) {
      Vec3 a = X, b = X;
      a[K] += h;
      b[K] -= h;
      // Skip stencils that straddle a knot where second derivatives jump.
      if (std::floor(a[K] * 4) != std::floor(b[K] * 4)) continue;
      const Mat3 d = (interpolate_field(s, u, a).grad - interpolate_field(s, u, b).grad) / (2 * h);
      for (int i = 0; i < 3; ++i)
        for (int J = 0; J < 3; ++J)
          CHECK(d(i, J) == doctest::Approx(f.hess[i](J, K)).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("knot insertion preserves the function") {
  const auto coarse = SplineSpace::uniform(4, false);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  FieldCoeffs u = FieldCoeffs::zeros(coarse);
  for (auto& v : u.data) v = n(rng);
  for (int nf : {8, 12, 16}) {
    const auto fine = SplineSpace::uniform(nf, false);
    const FieldCoeffs uf = knot_insert(coarse, u, fine);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Vec3 X(r(rng), r(rng), r(rng));
      worst = std::max(worst, (interpolate_field(coarse, u, X).u - interpolate_field(fine, uf, X).u).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-13);
  }
  CHECK_THROWS_AS(knot_insert(coarse, u, SplineSpace::uniform(6, false)), RefinementError);
  CHECK_THROWS_AS(knot_insert(coarse, u, SplineSpace::uniform(8, true)), RefinementError);

  FieldCoeffs one = FieldCoeffs::zeros(coarse);
  for (auto& v : one.data) v = 1.0;
  const FieldCoeffs one_f = knot_insert(coarse, one, SplineSpace::uniform(16, false));
  for (double v : one_f.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
  for (double v : knot_insert(coarse, FieldCoeffs::zeros(coarse), SplineSpace::uniform(8, false)).data) CHECK(v == 0.0);
}

TEST_CASE("16 to 64 refinement of a single bump") {
  const auto coarse = SplineSpace::uniform(16, false);
  const auto fine = SplineSpace::uniform(64, false);
  FieldCoeffs u = FieldCoeffs::zeros(coarse);
  u.at(coarse.cp_index(11, 3, 3), 0) = 1e-3;
  const FieldCoeffs uf = knot_insert(coarse, u, fine);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 X(r(rng), r(rng), r(rng));
    CHECK((interpolate_field(coarse, u, X).u - interpolate_field(fine, uf, X).u).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("periodic fields agree across opposite faces") {
  const auto s = SplineSpace::uniform(5, true);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  FieldCoeffs u = FieldCoeffs::zeros(s);
  for (auto& v : u.data) v = n(rng);
  for (int k = 0; k < 50; ++k)
    for (int J = 0; J < 3; ++J) {
      Vec3 a(r(rng), r(rng), r(rng)), b = a;
      a[J] = 0.0;
      b[J] = 1.0;
      const FieldSample fa = interpolate_field(s, u, a), fb = interpolate_field(s, u, b);
      CHECK((fa.u - fb.u).cwiseAbs().maxCoeff() <= 1e-13);
      CHECK((fa.grad - fb.grad).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("periodic refinement and transfer") {
  const auto coarse = SplineSpace::uniform(4, true);
  const auto fine = SplineSpace::uniform(8, true);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  FieldCoeffs u = FieldCoeffs::zeros(coarse);
  for (auto& v : u.data) v = n(rng);
  const FieldCoeffs uf = knot_insert(coarse, u, fine);
  const FieldCoeffs ut = transfer(coarse, u, fine);
  for (int k = 0; k < 50; ++k) {
    const Vec3 X(r(rng), r(rng), r(rng));
    const Vec3 a = interpolate_field(coarse, u, X).u;
    CHECK((a - interpolate_field(fine, uf, X).u).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a - interpolate_field(fine, ut, X).u).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("L2 distance of fields") {
  const auto s = SplineSpace::uniform(3, false);
  FieldCoeffs a = FieldCoeffs::zeros(s), b = FieldCoeffs::zeros(s);
  for (int cp = 0; cp < s.num_control_points(); ++cp) b.at(cp, 1) = 2.0;
  // A constant field of 2 in one component has unit-cube L2 norm 2.
  CHECK(l2_distance(s, a, b) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(l2_distance(s, b, b) == 0.0);
}
