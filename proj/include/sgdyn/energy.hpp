#pragma once

// Energy models accepted by the integrators and the assembler.  Besides the
// three-well material there is a quadratic model 1/2 (z - z0)^T A (z - z0),
// used for exactness checks (constant Hessian) and convex test problems.

#include <variant>
#include <vector>

#include "sgdyn/material.hpp"

namespace sgdyn {

class QuadraticEnergy {
 public:
  QuadraticEnergy(const ZetaMatrix& A, const ZetaVector& z0);

  // mu/2 |F - I|^2 + kappa/2 |grad F|^2.
  static QuadraticEnergy isotropic(double mu, double kappa);

  const ZetaMatrix& matrix() const { return A_; }
  const ZetaVector& center() const { return z0_; }

  template <class T>
  T psi(const ZetaArray<T>& z) const {
    T acc(0.0);
    for (const auto& e : entries_) acc += (0.5 * e.a) * ((z[e.v] - z0_[e.v]) * (z[e.w] - z0_[e.w]));
    return acc;
  }

  // The whole energy counts as one coupled part of degree 2.
  static bool truncates(unsigned, int, int) { return false; }

  template <class T, class Red>
  void evaluate(const ZetaArray<T>& z, const Red& red, ZetaVector* grad, ZetaMatrix* hess,
                unsigned parts = kPartAll) const {
    if (!(parts & kPartGradient)) {
      if (grad) grad->fill(0.0);
      if (hess) hess->setZero();
      return;
    }
    if (grad) {
      ZetaArray<T> g;
      for (auto& x : g) x = T(0.0);
      for (const auto& e : entries_) g[e.v] += e.a * (z[e.w] - z0_[e.w]);
      for (int v = 0; v < kNumZeta; ++v) (*grad)[v] = red.grad(g[v], is_f_var(v));
    }
    if (hess) {
      hess->setZero();
      for (const auto& e : entries_)
        (*hess)(e.v, e.w) = red.hess(T(e.a), int(is_f_var(e.v)) + int(is_f_var(e.w)));
    }
  }

  double psi(const QuadState& q) const { return psi<double>(q.z); }

 private:
  struct Entry {
    int v, w;
    double a;
  };
  ZetaMatrix A_;
  ZetaVector z0_;
  std::vector<Entry> entries_;
};

using EnergyModel = std::variant<ThreeWellEnergy, QuadraticEnergy>;

double energy_psi(const EnergyModel& e, const QuadState& q);
StressPair energy_stresses(const EnergyModel& e, const QuadState& q);
ZetaMatrix energy_hessian(const EnergyModel& e, const QuadState& q);

}  // namespace sgdyn
