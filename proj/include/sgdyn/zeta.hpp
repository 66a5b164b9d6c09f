#pragma once

// Kinematic state at a quadrature point: the deformation gradient F_iJ and its
// material gradient F_iJ,K packed into one 36-vector.  Entries 0..8 hold F in
// row-major (i, J) order, entries 9..35 hold F_iJ,K with K fastest.

#include <Eigen/Core>
#include <array>

namespace sgdyn {

inline constexpr int kNumF = 9;
inline constexpr int kNumGradF = 27;
inline constexpr int kNumZeta = 36;

constexpr int f_index(int i, int J) { return 3 * i + J; }
constexpr int g_index(int i, int J, int K) { return 9 + 9 * i + 3 * J + K; }
constexpr bool is_f_var(int v) { return v < kNumF; }

template <class T>
using ZetaArray = std::array<T, kNumZeta>;
using ZetaVector = ZetaArray<double>;
using ZetaMatrix = Eigen::Matrix<double, kNumZeta, kNumZeta, Eigen::RowMajor>;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct QuadState {
  ZetaVector z{};

  // Undeformed state: F = I, zero gradient.
  static QuadState identity() {
    QuadState q;
    q.z[f_index(0, 0)] = q.z[f_index(1, 1)] = q.z[f_index(2, 2)] = 1.0;
    return q;
  }

  double& F(int i, int J) { return z[f_index(i, J)]; }
  double F(int i, int J) const { return z[f_index(i, J)]; }
  double& gradF(int i, int J, int K) { return z[g_index(i, J, K)]; }
  double gradF(int i, int J, int K) const { return z[g_index(i, J, K)]; }

  Mat3 F_matrix() const {
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int J = 0; J < 3; ++J) m(i, J) = F(i, J);
    return m;
  }
};

// First Piola stress P_iJ = dPsi/dF_iJ and double stress B_iJK = dPsi/dF_iJ,K,
// stored with the same layout as QuadState.
struct StressPair {
  ZetaVector s{};

  double& P(int i, int J) { return s[f_index(i, J)]; }
  double P(int i, int J) const { return s[f_index(i, J)]; }
  double& B(int i, int J, int K) { return s[g_index(i, J, K)]; }
  double B(int i, int J, int K) const { return s[g_index(i, J, K)]; }

  Mat3 P_matrix() const {
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int J = 0; J < 3; ++J) m(i, J) = P(i, J);
    return m;
  }
};

inline double dot(const ZetaVector& a, const ZetaVector& b) {
  double s = 0.0;
  for (int v = 0; v < kNumZeta; ++v) s += a[v] * b[v];
  return s;
}

}  // namespace sgdyn
