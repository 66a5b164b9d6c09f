#include "sgdyn/energy.hpp"

#include "sgdyn/errors.hpp"

namespace sgdyn {

QuadraticEnergy::QuadraticEnergy(const ZetaMatrix& A, const ZetaVector& z0) : A_(A), z0_(z0) {
  if (!A_.isApprox(A_.transpose(), 0.0)) throw InvalidParameter("quadratic energy matrix must be symmetric");
  for (int v = 0; v < kNumZeta; ++v)
    for (int w = 0; w < kNumZeta; ++w)
      if (A_(v, w) != 0.0) entries_.push_back({v, w, A_(v, w)});
}

QuadraticEnergy QuadraticEnergy::isotropic(double mu, double kappa) {
  ZetaMatrix A = ZetaMatrix::Zero();
  for (int v = 0; v < kNumF; ++v) A(v, v) = mu;
  for (int v = kNumF; v < kNumZeta; ++v) A(v, v) = kappa;
  return QuadraticEnergy(A, QuadState::identity().z);
}

double energy_psi(const EnergyModel& e, const QuadState& q) {
  return std::visit([&](const auto& m) { return m.psi(q); }, e);
}

StressPair energy_stresses(const EnergyModel& e, const QuadState& q) {
  StressPair out;
  std::visit([&](const auto& m) { m.evaluate(q.z, IdentityReducer{}, &out.s, nullptr); }, e);
  return out;
}

ZetaMatrix energy_hessian(const EnergyModel& e, const QuadState& q) {
  ZetaMatrix H;
  std::visit([&](const auto& m) { m.evaluate(q.z, IdentityReducer{}, nullptr, &H); }, e);
  return H;
}

}  // namespace sgdyn
