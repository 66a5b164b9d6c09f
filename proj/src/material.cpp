#include "sgdyn/material.hpp"

#include <cmath>
#include <limits>

#include "sgdyn/errors.hpp"

namespace sgdyn {

MaterialParams MaterialParams::with_well_radius(double r) {
  if (!(r > 0.0)) throw InvalidParameter("well radius must be positive");
  MaterialParams m;
  m.B2 = -1.5 / (r * r);
  m.B3 = 1.0 / (r * r * r);
  m.B4 = 1.5 / (r * r * r * r);
  return m;
}

// Positive root of the radial stationarity condition along a well direction.
double MaterialParams::well_radius() const {
  return (3.0 * B3 + std::sqrt(9.0 * B3 * B3 - 32.0 * B4 * B2)) / (8.0 * B4);
}

void MaterialParams::validate() const {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(B1) || !finite(B2) || !finite(B3) || !finite(B4) || !finite(B5) || !finite(l) ||
      !finite(rho) || !finite(c))
    throw InvalidParameter("material parameters must be finite");
  if (!(B1 > 0.0)) throw InvalidParameter("B1 must be positive");
  if (!(B4 > 0.0)) throw InvalidParameter("B4 must be positive");
  if (!(B5 > 0.0)) throw InvalidParameter("B5 must be positive");
  if (!(rho > 0.0)) throw InvalidParameter("rho must be positive");
  if (l < 0.0) throw InvalidParameter("gradient length l must be non-negative");
  if (c < 0.0) throw InvalidParameter("damping c must be non-negative");
}

std::string phase_label(Phase p) {
  switch (p) {
    case Phase::X: return "X";
    case Phase::Y: return "Y";
    case Phase::Z: return "Z";
    default: return "none";
  }
}

Mat3 green_lagrange(const Mat3& F) { return 0.5 * (F.transpose() * F - Mat3::Identity()); }

std::array<Mat3, 3> green_lagrange_gradient(const QuadState& q) {
  std::array<Mat3, 3> dE;
  for (int K = 0; K < 3; ++K)
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += q.gradF(k, I, K) * q.F(k, J) + q.F(k, I) * q.gradF(k, J, K);
        dE[K](I, J) = 0.5 * acc;
      }
  return dE;
}

ReparamStrains reparam_strains(const Mat3& E, const std::array<Mat3, 3>& gradE) {
  using detail::kInvSqrt2;
  using detail::kInvSqrt3;
  using detail::kInvSqrt6;
  ReparamStrains r;
  r.e[0] = (E(0, 0) + E(1, 1) + E(2, 2)) * kInvSqrt3;
  r.e[1] = (E(0, 0) - E(1, 1)) * kInvSqrt2;
  r.e[2] = (E(0, 0) + E(1, 1) - 2.0 * E(2, 2)) * kInvSqrt6;
  r.e[3] = E(1, 2);
  r.e[4] = E(0, 2);
  r.e[5] = E(0, 1);
  for (int K = 0; K < 3; ++K) {
    const Mat3& g = gradE[K];
    r.grad_e2[K] = (g(0, 0) - g(1, 1)) * kInvSqrt2;
    r.grad_e3[K] = (g(0, 0) + g(1, 1) - 2.0 * g(2, 2)) * kInvSqrt6;
  }
  return r;
}

ReparamStrains reparam_strains(const QuadState& q) {
  return reparam_strains(green_lagrange(q.F_matrix()), green_lagrange_gradient(q));
}

double nonconvex_part(double e2, double e3, const MaterialParams& m) {
  const double rho2 = e2 * e2 + e3 * e3;
  return m.B2 * rho2 + m.B3 * e3 * (e3 * e3 - 3.0 * e2 * e2) + m.B4 * rho2 * rho2;
}

std::array<std::array<double, 2>, 3> well_points(const MaterialParams& m) {
  const double r = m.well_radius();
  const double s3 = std::sqrt(3.0) / 2.0;
  return {{{s3 * r, 0.5 * r}, {-s3 * r, 0.5 * r}, {0.0, -r}}};
}

Phase classify_phase(double e2, double e3, const MaterialParams& m) {
  if (!(nonconvex_part(e2, e3, m) < -0.5)) return Phase::None;
  const auto wells = well_points(m);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int w = 0; w < 3; ++w) {
    const double dx = e2 - wells[w][0];
    const double dy = e3 - wells[w][1];
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = w;
    }
  }
  return static_cast<Phase>(best + 1);
}

StressPair ThreeWellEnergy::stresses(const QuadState& q) const {
  StressPair out;
  evaluate(q.z, IdentityReducer{}, &out.s, nullptr);
  return out;
}

ZetaMatrix ThreeWellEnergy::hessian(const QuadState& q) const {
  ZetaMatrix H;
  evaluate(q.z, IdentityReducer{}, nullptr, &H);
  return H;
}

double psi(const QuadState& q, const MaterialParams& m) { return ThreeWellEnergy(m).psi(q); }
StressPair stresses(const QuadState& q, const MaterialParams& m) { return ThreeWellEnergy(m).stresses(q); }
ZetaMatrix hessian(const QuadState& q, const MaterialParams& m) { return ThreeWellEnergy(m).hessian(q); }

}  // namespace sgdyn
