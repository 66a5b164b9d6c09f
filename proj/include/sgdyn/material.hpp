#pragma once

// Three-well strain-gradient energy.  The energy is written in the reparametrized
// Green-Lagrange strains e1..e6 and their material gradients.  The evaluation is
// templated on the scalar type so that the same code produces point values
// (double) and exact polynomial expansions along a line (Jet).

#include <array>
#include <cmath>
#include <string>

#include "sgdyn/zeta.hpp"

namespace sgdyn {

struct MaterialParams {
  double B1 = 500.0;
  double B2 = -24.0;  // -1.5 / r^2
  double B3 = 64.0;   // 1 / r^3
  double B4 = 384.0;  // 1.5 / r^4
  double B5 = 250.0;
  double l = 0.025;
  double rho = 1.0;
  double c = 0.0;  // damping C = c * identity

  // Scales B2..B4 so that the wells sit at radius r with depth -1.
  static MaterialParams with_well_radius(double r);
  double well_radius() const;
  void validate() const;  // throws InvalidParameter

  bool operator==(const MaterialParams&) const = default;
};

enum class Phase { None = 0, X = 1, Y = 2, Z = 3 };
std::string phase_label(Phase p);

struct ReparamStrains {
  std::array<double, 6> e{};
  std::array<double, 3> grad_e2{};
  std::array<double, 3> grad_e3{};
};

Mat3 green_lagrange(const Mat3& F);
// dE_IJ/dX_K = 1/2 (F_kI,K F_kJ + F_kI F_kJ,K), returned as [K](I, J).
std::array<Mat3, 3> green_lagrange_gradient(const QuadState& q);
ReparamStrains reparam_strains(const Mat3& E, const std::array<Mat3, 3>& gradE);
ReparamStrains reparam_strains(const QuadState& q);

// B2 (e2^2+e3^2) + B3 e3 (e3^2 - 3 e2^2) + B4 (e2^2+e3^2)^2.
double nonconvex_part(double e2, double e3, const MaterialParams& m);
// Nearest well when the non-convex part is below -0.5, otherwise None.
Phase classify_phase(double e2, double e3, const MaterialParams& m);
// Well locations in the (e2, e3) plane in X, Y, Z order.
std::array<std::array<double, 2>, 3> well_points(const MaterialParams& m);

// Pass-through reducer for double evaluation.  Reducers receive every
// gradient entry with its variable kind and every Hessian entry with the
// number of F-type variables among its two indices (0, 1 or 2).
struct IdentityReducer {
  double grad(double x, bool /*f_var*/) const { return x; }
  double hess(double x, int /*n_f*/) const { return x; }
};

// Energy parts: the local part W(E) depends on F only (degree 8); the
// gradient part couples F and grad F (degree 2 in each).
enum EnergyPart : unsigned { kPartLocal = 1u, kPartGradient = 2u, kPartAll = 3u };

class ThreeWellEnergy {
 public:
  explicit ThreeWellEnergy(const MaterialParams& m) : m_(m) {}
  const MaterialParams& params() const { return m_; }

  template <class T>
  T psi(const ZetaArray<T>& z) const;

  // Writes the reduced gradient and/or Hessian (either may be null).
  template <class T, class Red>
  void evaluate(const ZetaArray<T>& z, const Red& red, ZetaVector* grad, ZetaMatrix* hess,
                unsigned parts = kPartAll) const;
  // Whether a part contains monomials dropped by Taylor caps (cap_f, cap_g).
  static bool truncates(unsigned part, int cap_f, int cap_g) {
    if (part == kPartLocal) return cap_f < 8;
    return cap_f < 2 || cap_g < 2;
  }

  double psi(const QuadState& q) const { return psi<double>(q.z); }
  StressPair stresses(const QuadState& q) const;
  ZetaMatrix hessian(const QuadState& q) const;

 private:
  MaterialParams m_;
};

double psi(const QuadState& q, const MaterialParams& m);
StressPair stresses(const QuadState& q, const MaterialParams& m);
ZetaMatrix hessian(const QuadState& q, const MaterialParams& m);

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt3 = 0.57735026918962576451;
inline constexpr double kInvSqrt6 = 0.40824829046386301637;

// gamma_IJ = sum over alpha in {2,3} of c_alphaI c_alphaJ (deviatoric projector).
inline constexpr double kGamma[3][3] = {{2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0},
                                        {-1.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0},
                                        {-1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0}};
// Diagonal of A_alpha for alpha = 1, 2, 3 (e_alpha = A_alpha : E).
inline constexpr double kDiagA[3][3] = {{kInvSqrt3, kInvSqrt3, kInvSqrt3},
                                        {kInvSqrt2, -kInvSqrt2, 0.0},
                                        {kInvSqrt6, kInvSqrt6, -2.0 * kInvSqrt6}};

template <class T>
struct StrainTerms {
  T E[3][3];
  T e1, e2, e3, e4, e5, e6;
  T d[3][3];  // d_JK = sum_k F_kJ F_kJ,K = E_JJ,K
  T r[3][3];  // r_IK = sum_J gamma_IJ d_JK
};

template <class T>
void strain_terms(const ZetaArray<T>& z, StrainTerms<T>& s) {
  for (int I = 0; I < 3; ++I)
    for (int J = I; J < 3; ++J) {
      T c = z[f_index(0, I)] * z[f_index(0, J)];
      c += z[f_index(1, I)] * z[f_index(1, J)];
      c += z[f_index(2, I)] * z[f_index(2, J)];
      if (I == J) c -= 1.0;
      c *= 0.5;
      s.E[I][J] = c;
      if (I != J) s.E[J][I] = c;
    }
  s.e1 = (s.E[0][0] + s.E[1][1] + s.E[2][2]) * kInvSqrt3;
  s.e2 = (s.E[0][0] - s.E[1][1]) * kInvSqrt2;
  s.e3 = (s.E[0][0] + s.E[1][1] - 2.0 * s.E[2][2]) * kInvSqrt6;
  s.e4 = s.E[1][2];
  s.e5 = s.E[0][2];
  s.e6 = s.E[0][1];
  for (int J = 0; J < 3; ++J)
    for (int K = 0; K < 3; ++K) {
      T acc = z[f_index(0, J)] * z[g_index(0, J, K)];
      acc += z[f_index(1, J)] * z[g_index(1, J, K)];
      acc += z[f_index(2, J)] * z[g_index(2, J, K)];
      s.d[J][K] = acc;
    }
  for (int I = 0; I < 3; ++I)
    for (int K = 0; K < 3; ++K) {
      T acc = kGamma[I][0] * s.d[0][K];
      acc += kGamma[I][1] * s.d[1][K];
      acc += kGamma[I][2] * s.d[2][K];
      s.r[I][K] = acc;
    }
}

}  // namespace detail

template <class T>
T ThreeWellEnergy::psi(const ZetaArray<T>& z) const {
  detail::StrainTerms<T> s;
  detail::strain_terms(z, s);
  const T rho2 = s.e2 * s.e2 + s.e3 * s.e3;
  T out = m_.B1 * (s.e1 * s.e1);
  out += m_.B2 * rho2;
  out += m_.B3 * (s.e3 * (s.e3 * s.e3 - 3.0 * (s.e2 * s.e2)));
  out += m_.B4 * (rho2 * rho2);
  out += m_.B5 * (s.e4 * s.e4 + s.e5 * s.e5 + s.e6 * s.e6);
  T grad_part = s.d[0][0] * s.r[0][0];
  for (int I = 0; I < 3; ++I)
    for (int K = 0; K < 3; ++K)
      if (I != 0 || K != 0) grad_part += s.d[I][K] * s.r[I][K];
  out += (m_.l * m_.l) * grad_part;
  return out;
}

template <class T, class Red>
void ThreeWellEnergy::evaluate(const ZetaArray<T>& z, const Red& red, ZetaVector* grad, ZetaMatrix* hess,
                               unsigned parts) const {
  using detail::kDiagA;
  using detail::kGamma;
  using detail::kInvSqrt2;
  using detail::kInvSqrt3;
  using detail::kInvSqrt6;

  detail::StrainTerms<T> s;
  detail::strain_terms(z, s);
  const double B1 = m_.B1, B2 = m_.B2, B3 = m_.B3, B4 = m_.B4, B5 = m_.B5;
  const double two_l2 = 2.0 * m_.l * m_.l;

  const T e2sq = s.e2 * s.e2;
  const T e3sq = s.e3 * s.e3;
  const T rho2 = e2sq + e3sq;
  const T four_b4_rho2 = 4.0 * B4 * rho2;

  // dW/de_alpha
  const T w1 = 2.0 * B1 * s.e1;
  const T w2 = s.e2 * (2.0 * B2 - 6.0 * B3 * s.e3 + four_b4_rho2);
  const T w3 = 2.0 * B2 * s.e3 + 3.0 * B3 * (e3sq - e2sq) + four_b4_rho2 * s.e3;

  // S = sum_alpha w_alpha A_alpha, so that the local part of P is F S.
  T S[3][3];
  {
    const T a = w1 * kInvSqrt3;
    const T b = w2 * kInvSqrt2;
    const T c = w3 * kInvSqrt6;
    S[0][0] = a + b + c;
    S[1][1] = a - b + c;
    S[2][2] = a - 2.0 * c;
    S[1][2] = S[2][1] = B5 * s.e4;
    S[0][2] = S[2][0] = B5 * s.e5;
    S[0][1] = S[1][0] = B5 * s.e6;
  }

  auto F = [&z](int i, int J) -> const T& { return z[f_index(i, J)]; };
  auto G = [&z](int i, int J, int K) -> const T& { return z[g_index(i, J, K)]; };

  const bool local = parts & kPartLocal;
  const bool gpart = parts & kPartGradient;

  if (grad) {
    ZetaVector& g = *grad;
    for (int k = 0; k < 3; ++k)
      for (int L = 0; L < 3; ++L) {
        T p(0.0);
        if (local) {
          p = F(k, 0) * S[0][L];
          p += F(k, 1) * S[1][L];
          p += F(k, 2) * S[2][L];
        }
        if (gpart) {
          T pg = s.r[L][0] * G(k, L, 0);
          pg += s.r[L][1] * G(k, L, 1);
          pg += s.r[L][2] * G(k, L, 2);
          p += two_l2 * pg;
        }
        g[f_index(k, L)] = red.grad(p, true);
        for (int K = 0; K < 3; ++K)
          g[g_index(k, L, K)] = gpart ? red.grad(two_l2 * (s.r[L][K] * F(k, L)), false) : 0.0;
      }
  }

  if (!hess) return;
  ZetaMatrix& H = *hess;
  H.setZero();

  // Second derivatives of W in the (e1, e2, e3) block.
  const T W22 = 2.0 * B2 - 6.0 * B3 * s.e3 + four_b4_rho2 + 8.0 * B4 * e2sq;
  const T W33 = 2.0 * B2 + 6.0 * B3 * s.e3 + four_b4_rho2 + 8.0 * B4 * e3sq;
  const T W23 = s.e2 * (8.0 * B4 * s.e3 - 6.0 * B3);
  T Omega[3][3];
  for (int L = 0; L < 3; ++L)
    for (int N = L; N < 3; ++N) {
      T o = W22 * (kDiagA[1][L] * kDiagA[1][N]);
      o += W33 * (kDiagA[2][L] * kDiagA[2][N]);
      o += W23 * (kDiagA[1][L] * kDiagA[2][N] + kDiagA[2][L] * kDiagA[1][N]);
      o += 2.0 * B1 * kDiagA[0][L] * kDiagA[0][N];
      Omega[L][N] = o;
      Omega[N][L] = o;
    }

  // F-F block.
  const double half_b5 = 0.5 * B5;
  for (int k = 0; k < 3; ++k)
    for (int L = 0; L < 3; ++L) {
      const int v = f_index(k, L);
      for (int m = 0; m < 3; ++m)
        for (int N = 0; N < 3; ++N) {
          const int w = f_index(m, N);
          if (w < v) continue;
          T h(0.0);
          if (local) {
            h = (F(k, L) * F(m, N)) * Omega[L][N];
            if (L == N) {
              T sh = F(k, (L + 1) % 3) * F(m, (L + 1) % 3);
              sh += F(k, (L + 2) % 3) * F(m, (L + 2) % 3);
              h += half_b5 * sh;
            } else {
              h += half_b5 * (F(k, N) * F(m, L));
            }
            if (k == m) h += S[L][N];
          }
          if (gpart) {
            T gg = G(k, L, 0) * G(m, N, 0);
            gg += G(k, L, 1) * G(m, N, 1);
            gg += G(k, L, 2) * G(m, N, 2);
            h += (two_l2 * kGamma[L][N]) * gg;
          }
          const double val = red.hess(h, 2);
          H(v, w) = val;
          H(w, v) = val;
        }
    }

  if (!gpart) return;

  // F-gradF block: (F_kI, F_mJ,L) -> 2 l^2 [gamma_IJ F_kI,L F_mJ + d_km d_IJ r_IL].
  for (int k = 0; k < 3; ++k)
    for (int I = 0; I < 3; ++I) {
      const int v = f_index(k, I);
      for (int m = 0; m < 3; ++m)
        for (int J = 0; J < 3; ++J)
          for (int L = 0; L < 3; ++L) {
            const int w = g_index(m, J, L);
            T h = (two_l2 * kGamma[I][J]) * (G(k, I, L) * F(m, J));
            if (k == m && I == J) h += two_l2 * s.r[I][L];
            const double val = red.hess(h, 1);
            H(v, w) = val;
            H(w, v) = val;
          }
    }

  // gradF-gradF block: nonzero only for equal gradient index K.
  for (int k = 0; k < 3; ++k)
    for (int I = 0; I < 3; ++I)
      for (int m = 0; m < 3; ++m)
        for (int J = 0; J < 3; ++J) {
          if (f_index(m, J) < f_index(k, I)) continue;
          const double val = red.hess((two_l2 * kGamma[I][J]) * (F(k, I) * F(m, J)), 0);
          for (int K = 0; K < 3; ++K) {
            H(g_index(k, I, K), g_index(m, J, K)) = val;
            H(g_index(m, J, K), g_index(k, I, K)) = val;
          }
        }
}

}  // namespace sgdyn
