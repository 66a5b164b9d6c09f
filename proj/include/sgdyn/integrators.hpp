#pragma once

// Discrete-gradient stress evaluation at a quadrature point.  A step couples
// the half-step states zeta^{n-1/2} (built from u^{n-1}, u^n) and
// zeta^{n+1/2} (built from u^n, u^{n+1}); every scheme returns stresses sigma
// with sigma . (zeta^+ - zeta^-) = Psi(zeta^+) - Psi(zeta^-) and a tangent
// d sigma / d zeta(u^{n+1}).  Since zeta^+ is the average of zeta(u^n) and
// zeta(u^{n+1}), a unit change of zeta(u^{n+1}) moves zeta^+ by one half.

#include <array>
#include <memory>
#include <string>

#include "sgdyn/energy.hpp"
#include "sgdyn/jet.hpp"
#include "sgdyn/zeta.hpp"

namespace sgdyn {

class PsiPolynomialSet;

enum class SchemeKind { Gonzalez, TaylorFull, TaylorReduced };

std::string to_string(SchemeKind k);
SchemeKind parse_scheme_kind(const std::string& s);  // throws InvalidParameter

struct SchemeConfig {
  SchemeKind kind = SchemeKind::TaylorFull;
  double l_gs = 1.0;          // weight of gradient entries in the Gonzalez metric
  int kappa_F_max = 8;        // Taylor truncation caps
  int kappa_gradF_max = 2;

  static SchemeConfig gonzalez(double l_gs = 1.0);
  static SchemeConfig taylor_full();
  static SchemeConfig taylor_reduced(int kappa_F_max = 4, int kappa_gradF_max = 2);
  bool is_taylor() const { return kind != SchemeKind::Gonzalez; }
  void validate() const;  // throws InvalidParameter

  bool operator==(const SchemeConfig&) const = default;
};

struct HalfStepStates {
  QuadState minus;
  QuadState plus;
  ZetaVector delta() const {
    ZetaVector d;
    for (int v = 0; v < kNumZeta; ++v) d[v] = plus.z[v] - minus.z[v];
    return d;
  }
};

// Acceleration, velocity and half-difference of the three-level stencil.
struct KinematicStencil {
  double acc;
  double vel;
  double delta;
};
inline KinematicStencil kinematic_stencils(double u_prev, double u_curr, double u_next, double dt) {
  return {(u_next - 2.0 * u_curr + u_prev) / (dt * dt), (u_next - u_prev) / (2.0 * dt),
          0.5 * (u_next - u_prev)};
}

// Filter and line-integration weights of the Taylor-series stresses.  A term
// c_ab s^a t^b of a first derivative along the line contributes with weight
// 1/(a+b+1); of a second derivative with 1/(a+b+2).  Terms whose total orders
// (kappa_F, kappa_gradF) exceed the caps are dropped unless kappa <= 2.
// The omitted table holds the weights of exactly the dropped terms.
class TaylorWeights {
 public:
  explicit TaylorWeights(const SchemeConfig& cfg);
  static bool keep(int kappa_f, int kappa_g, int cap_f, int cap_g);

  double reduce_grad(const Jet& j, bool f_var, bool omitted = false) const;
  double reduce_hess(const Jet& j, int n_f, bool omitted = false) const;

  struct Reducer {
    const TaylorWeights* w;
    bool omitted;
    double grad(const Jet& j, bool f_var) const { return w->reduce_grad(j, f_var, omitted); }
    double hess(const Jet& j, int n_f) const { return w->reduce_hess(j, n_f, omitted); }
  };
  Reducer reducer() const { return {this, false}; }
  Reducer omitted_reducer() const { return {this, true}; }

 private:
  static constexpr int kS = Jet::kMaxS + 1;
  static constexpr int kT = Jet::kMaxT + 1;
  double grad_w_[2][2][kT][kS];  // [omitted][f_var]
  double hess_w_[2][3][kT][kS];  // [omitted][n_f]
};

// Line expansion zeta^- + s dF + t dgradF as Jets.
ZetaArray<Jet> line_jets(const ZetaVector& base, const ZetaVector& delta);

StressPair gonzalez_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
ZetaMatrix gonzalez_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
// Production Taylor path: the untruncated sums equal the line integrals
// int_0^1 dPsi(zeta^- + tau Delta) dtau and 1/2 int_0^1 tau d2Psi dtau, which
// 4-point Gauss quadrature reproduces exactly (degrees <= 7).  Terms dropped
// by the caps are then subtracted using Jet expansions of the parts of Psi
// that contain them.
StressPair taylor_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
ZetaMatrix taylor_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
// Direct coefficient sums through Jet evaluation of the whole energy.
StressPair taylor_stresses_jet(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
ZetaMatrix taylor_tangent_jet(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);

// Same quantities through the sparse polynomial representation of Psi.
StressPair taylor_stresses(const HalfStepStates& h, const PsiPolynomialSet& poly, const SchemeConfig& cfg);
ZetaMatrix taylor_tangent(const HalfStepStates& h, const PsiPolynomialSet& poly, const SchemeConfig& cfg);

// Dispatch on cfg.kind.
StressPair scheme_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);
ZetaMatrix scheme_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg);

// Point kernel used by the assembler.  Dynamic kernels see both half-step
// states; the static kernel uses `plus` only and returns dPsi and d2Psi.
class PointKernel {
 public:
  virtual ~PointKernel() = default;
  virtual void evaluate(const QuadState& minus, const QuadState& plus, ZetaVector& stress,
                        ZetaMatrix* tangent) const = 0;
  virtual double psi(const QuadState& q) const = 0;
  virtual bool symmetric_tangent() const = 0;
};

std::unique_ptr<PointKernel> make_dynamic_kernel(const EnergyModel& e, const SchemeConfig& cfg);
std::unique_ptr<PointKernel> make_static_kernel(const EnergyModel& e);

}  // namespace sgdyn
