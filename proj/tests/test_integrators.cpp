#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "sgdyn/errors.hpp"
#include "sgdyn/integrators.hpp"
#include "sgdyn/sparse_polynomial.hpp"

using namespace sgdyn;

namespace {

const MaterialParams kParams;

HalfStepStates random_pair(std::mt19937_64& rng, double f_step = 0.05, double g_step = 0.05) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  HalfStepStates h;
  h.minus = QuadState::identity();
  for (int v = 0; v < kNumF; ++v) h.minus.z[v] += 0.3 * u(rng);
  for (int v = kNumF; v < kNumZeta; ++v) h.minus.z[v] += 0.3 * u(rng);
  h.plus = h.minus;
  for (int v = 0; v < kNumF; ++v) h.plus.z[v] += f_step * u(rng);
  for (int v = kNumF; v < kNumZeta; ++v) h.plus.z[v] += g_step * u(rng);
  return h;
}

double identity_gap(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  const double pm = energy_psi(e, h.minus), pp = energy_psi(e, h.plus);
  const StressPair s = scheme_stresses(h, e, cfg);
  return std::abs(dot(s.s, h.delta()) - (pp - pm)) / std::max({1.0, std::abs(pm), std::abs(pp)});
}

// Tangent with respect to zeta(u^{n+1}) by central differences: zeta^+ moves by half.
ZetaMatrix fd_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg, double step) {
  ZetaMatrix T;
  for (int w = 0; w < kNumZeta; ++w) {
    HalfStepStates a = h, b = h;
    a.plus.z[w] += 0.5 * step;
    b.plus.z[w] -= 0.5 * step;
    const StressPair sa = scheme_stresses(a, e, cfg), sb = scheme_stresses(b, e, cfg);
    for (int v = 0; v < kNumZeta; ++v) T(v, w) = (sa.s[v] - sb.s[v]) / (2.0 * step);
  }
  return T;
}

double rel_max(const ZetaMatrix& a, const ZetaMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("kinematic stencils") {
  const double dt = 0.1, t = 0.7;
  auto sq = [](double x) { return x * x; };
  const auto k = kinematic_stencils(sq(t - dt), sq(t), sq(t + dt), dt);
  CHECK(k.acc == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(k.vel == doctest::Approx(2.0 * t).epsilon(1e-14));
  const auto c = kinematic_stencils(3.0, 3.0, 3.0, dt);
  CHECK(c.acc == 0.0);
  CHECK(c.vel == 0.0);
  auto cube = [](double x) { return x * x * x; };
  const auto k3 = kinematic_stencils(cube(-dt), 0.0, cube(dt), dt);
  CHECK(k3.acc == doctest::Approx(0.0).scale(1.0));
  CHECK(k3.vel == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("scheme configuration") {
  CHECK(parse_scheme_kind("gonzalez") == SchemeKind::Gonzalez);
  CHECK(parse_scheme_kind(to_string(SchemeKind::TaylorReduced)) == SchemeKind::TaylorReduced);
  CHECK_THROWS_AS(parse_scheme_kind("euler"), InvalidParameter);
  CHECK_THROWS_AS(SchemeConfig::taylor_reduced(0, 2).validate(), InvalidParameter);
  CHECK_THROWS_AS(SchemeConfig::taylor_reduced(4, 3).validate(), InvalidParameter);
  CHECK_NOTHROW(SchemeConfig::taylor_reduced(4, 2).validate());
  CHECK(TaylorWeights::keep(2, 0, 0, 0));
  CHECK(TaylorWeights::keep(4, 2, 4, 2));
  CHECK_FALSE(TaylorWeights::keep(5, 0, 4, 2));
}

TEST_CASE("discrete gradient identity for the Gonzalez and full Taylor schemes") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(7);
  double worst_gs = 0.0, worst_ts = 0.0;
  for (int k = 0; k < 300; ++k) {
    const HalfStepStates h = random_pair(rng);
    worst_gs = std::max(worst_gs, identity_gap(h, e, SchemeConfig::gonzalez()));
    worst_ts = std::max(worst_ts, identity_gap(h, e, SchemeConfig::taylor_full()));
  }
  CHECK(worst_gs <= 1e-12);
  CHECK(worst_ts <= 1e-12);
}

TEST_CASE("zero increment") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(8);
  const QuadState q = oracle::random_state(rng);
  const HalfStepStates h{q, q};
  const StressPair ref = energy_stresses(e, q);
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced()}) {
    const StressPair s = scheme_stresses(h, e, cfg);
    for (int v = 0; v < kNumZeta; ++v) CHECK(s.s[v] == doctest::Approx(ref.s[v]).epsilon(1e-13).scale(1.0));
  }
}

TEST_CASE("full Taylor stresses equal the line average of the gradient") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 5; ++k) {
    const HalfStepStates h = random_pair(rng, 0.1, 0.2);
    const ZetaVector d = h.delta();
    const StressPair s = taylor_stresses(h, e, SchemeConfig::taylor_full());
    for (int v = 0; v < kNumZeta; ++v) {
      const double ref = oracle::simpson(
          [&](double tau) {
            QuadState q = h.minus;
            for (int w = 0; w < kNumZeta; ++w) q.z[w] += tau * d[w];
            return energy_stresses(e, q).s[v];
          },
          400);
      CHECK(s.s[v] == doctest::Approx(ref).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("Taylor evaluation paths agree") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  const PsiPolynomialSet poly(kParams);
  std::mt19937_64 rng(10);
  for (const auto& cfg : {SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced(4, 2),
                          SchemeConfig::taylor_reduced(3, 1)}) {
    for (int k = 0; k < 10; ++k) {
      const HalfStepStates h = random_pair(rng, 0.1, 0.1);
      const StressPair a = taylor_stresses(h, e, cfg);
      const StressPair b = taylor_stresses_jet(h, e, cfg);
      const StressPair c = taylor_stresses(h, poly, cfg);
      for (int v = 0; v < kNumZeta; ++v) {
        CHECK(a.s[v] == doctest::Approx(b.s[v]).epsilon(1e-11).scale(1.0));
        CHECK(a.s[v] == doctest::Approx(c.s[v]).epsilon(1e-10).scale(1.0));
      }
      const ZetaMatrix Ta = taylor_tangent(h, e, cfg);
      CHECK(rel_max(Ta, taylor_tangent_jet(h, e, cfg)) <= 1e-11);
      if (k < 2) CHECK(rel_max(Ta, taylor_tangent(h, poly, cfg)) <= 1e-10);
    }
  }
}

TEST_CASE("reduced Taylor with caps at the full degrees equals the full scheme") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(11);
  const HalfStepStates h = random_pair(rng);
  const StressPair a = taylor_stresses(h, e, SchemeConfig::taylor_full());
  const StressPair b = taylor_stresses(h, e, SchemeConfig::taylor_reduced(8, 2));
  for (int v = 0; v < kNumZeta; ++v) CHECK(a.s[v] == b.s[v]);
}

TEST_CASE("reduced minus full Taylor stresses shrink with the increment") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(12);
  const HalfStepStates base = random_pair(rng, 0.3, 0.0);
  const ZetaVector d = base.delta();
  std::vector<double> eps, gaps;
  for (double s : {0.2, 0.1, 0.05, 0.025}) {
    HalfStepStates h{base.minus, base.minus};
    for (int v = 0; v < kNumZeta; ++v) h.plus.z[v] += s * d[v];
    const StressPair a = taylor_stresses(h, e, SchemeConfig::taylor_full());
    const StressPair b = taylor_stresses(h, e, SchemeConfig::taylor_reduced(4, 2));
    double g = 0.0;
    for (int v = 0; v < kNumZeta; ++v) g = std::max(g, std::abs(a.s[v] - b.s[v]));
    eps.push_back(s);
    gaps.push_back(g);
  }
  // Dropped terms of kappa_F >= 5 carry at least four increment factors.
  for (size_t k = 1; k < gaps.size(); ++k) {
    const double order = std::log2(gaps[k - 1] / gaps[k]);
    INFO("halving " << k << " observed order " << order);
    CHECK(order >= 3.0);
    CHECK(order <= 4.6);
  }
}

TEST_CASE("second-order consistency of the averaged stresses") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(13);
  const HalfStepStates base = random_pair(rng, 0.2, 0.2);
  const ZetaVector d = base.delta();
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full()}) {
    std::vector<double> err;
    for (double s : {0.02, 0.01, 0.005}) {
      HalfStepStates h{base.minus, base.minus};
      QuadState mid = base.minus;
      for (int v = 0; v < kNumZeta; ++v) {
        h.plus.z[v] += s * d[v];
        mid.z[v] += 0.5 * s * d[v];
      }
      const StressPair a = scheme_stresses(h, e, cfg);
      const StressPair m = energy_stresses(e, mid);
      double g = 0.0;
      for (int v = 0; v < kNumZeta; ++v) g = std::max(g, std::abs(a.s[v] - m.s[v]));
      err.push_back(g);
    }
    INFO(to_string(cfg.kind) << " ratios " << err[0] / err[1] << " " << err[1] / err[2]);
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.15));
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("Taylor tangents are symmetric and match finite differences") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(14);
  for (const auto& cfg : {SchemeConfig::taylor_full(), SchemeConfig::taylor_reduced()}) {
    for (int k = 0; k < 3; ++k) {
      const HalfStepStates h = random_pair(rng);
      const ZetaMatrix T = scheme_tangent(h, e, cfg);
      const double scale = std::max(1.0, T.cwiseAbs().maxCoeff());
      CHECK((T - T.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale);
      // The mixed block dP/dgradF equals dB/dF transposed.
      double mixed = 0.0;
      for (int v = 0; v < kNumF; ++v)
        for (int w = kNumF; w < kNumZeta; ++w) mixed = std::max(mixed, std::abs(T(v, w) - T(w, v)));
      CHECK(mixed <= 1e-12 * scale);
      CHECK(rel_max(T, fd_tangent(h, e, cfg, 1e-6)) <= 1e-5);
    }
  }
}

TEST_CASE("Gonzalez tangent matches finite differences and is not symmetric") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  std::mt19937_64 rng(15);
  for (int k = 0; k < 3; ++k) {
    const HalfStepStates h = random_pair(rng);
    const ZetaMatrix T = gonzalez_tangent(h, e, SchemeConfig::gonzalez());
    CHECK(rel_max(T, fd_tangent(h, e, SchemeConfig::gonzalez(), 1e-6)) <= 1e-5);
    const double asym = (T - T.transpose()).cwiseAbs().maxCoeff();
    MESSAGE("Gonzalez tangent asymmetry " << asym);
    CHECK(asym > 1e-8);
  }
}

TEST_CASE("quadratic energies: midpoint stresses and symmetric tangents") {
  const EnergyModel e = QuadraticEnergy::isotropic(3.0, 0.7);
  std::mt19937_64 rng(16);
  const HalfStepStates h = random_pair(rng, 0.2, 0.2);
  QuadState mid = h.minus;
  for (int v = 0; v < kNumZeta; ++v) mid.z[v] = 0.5 * (h.minus.z[v] + h.plus.z[v]);
  const StressPair m = energy_stresses(e, mid);
  for (const auto& cfg : {SchemeConfig::gonzalez(), SchemeConfig::taylor_full()}) {
    const StressPair s = scheme_stresses(h, e, cfg);
    for (int v = 0; v < kNumZeta; ++v) CHECK(s.s[v] == doctest::Approx(m.s[v]).epsilon(1e-13).scale(1.0));
    const ZetaMatrix T = scheme_tangent(h, e, cfg);
    CHECK((T - T.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  }
  // dP/dzeta^+ is half the Hessian, and zeta^+ moves by half of zeta(u^{n+1}).
  const ZetaMatrix H = energy_hessian(e, mid);
  const HalfStepStates z{h.minus, h.minus};
  CHECK(rel_max(taylor_tangent(z, e, SchemeConfig::taylor_full()), 0.25 * H) <= 1e-14);
}

TEST_CASE("single-variable quadratic F11^2") {
  ZetaMatrix A = ZetaMatrix::Zero();
  A(f_index(0, 0), f_index(0, 0)) = 2.0;
  ZetaVector z0{};
  const EnergyModel e = QuadraticEnergy(A, z0);
  HalfStepStates h{QuadState::identity(), QuadState::identity()};
  h.plus.F(0, 0) = 1.3;
  const StressPair s = gonzalez_stresses(h, e, SchemeConfig::gonzalez());
  CHECK(s.P(0, 0) == doctest::Approx(2.0 * 1.15).epsilon(1e-15));
}

TEST_CASE("point kernels report tangent symmetry") {
  const EnergyModel e = ThreeWellEnergy(kParams);
  CHECK(make_dynamic_kernel(e, SchemeConfig::taylor_full())->symmetric_tangent());
  CHECK(make_dynamic_kernel(e, SchemeConfig::taylor_reduced())->symmetric_tangent());
  CHECK_FALSE(make_dynamic_kernel(e, SchemeConfig::gonzalez())->symmetric_tangent());
  CHECK(make_static_kernel(e)->symmetric_tangent());
}
