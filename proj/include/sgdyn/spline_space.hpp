#pragma once

// Tensor-product quadratic B-spline space on the unit cube.  Each axis is either
// open (clamped) or periodic; the geometry map is the identity so basis
// derivatives are taken directly in material coordinates.

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "sgdyn/zeta.hpp"

namespace sgdyn {

class KnotVector {
 public:
  static constexpr int kDegree = 2;

  // Open knot vector: (p+1)-fold end knots, simple increasing interior knots on [0, 1].
  static KnotVector open(std::vector<double> knots);
  static KnotVector uniform_open(int n_elem);
  static KnotVector uniform_periodic(int n_elem);

  bool periodic() const { return periodic_; }
  int num_elements() const { return n_elem_; }
  int num_basis() const { return periodic_ ? n_elem_ : n_elem_ + kDegree; }
  // Full knot list; periodic vectors are stored unrolled by p knots on each side.
  const std::vector<double>& knots() const { return knots_; }
  // Distinct breakpoints 0 = x_0 < ... < x_n = 1.
  std::vector<double> breakpoints() const;
  double element_begin(int e) const { return knots_[e + kDegree]; }
  double element_end(int e) const { return knots_[e + kDegree + 1]; }

  // Element containing x in [0, 1]; x == 1 maps to the last element.
  int find_element(double x) const;  // throws DomainError
  // Values, first and second derivatives of the p+1 functions active on
  // element e, out[d][local].  Local function j is global basis index e + j
  // (taken modulo the number of basis functions for periodic axes).
  void eval(int e, double x, double out[3][3]) const;
  int global_index(int e, int local) const {
    const int j = e + local;
    return periodic_ ? j % n_elem_ : j;
  }
  double greville(int j) const;
  double eval_basis(int j, double x, int deriv = 0) const;

  bool operator==(const KnotVector& o) const { return periodic_ == o.periodic_ && knots_ == o.knots_; }

 private:
  std::vector<double> knots_;
  int n_elem_ = 0;
  bool periodic_ = false;
};

struct BasisSample {
  int dof;  // control point index
  double value;
  std::array<double, 3> grad;
  std::array<double, 9> hess;  // row-major (J, K)
};

// One-dimensional per-element quadrature table: 3 Gauss points per element.
struct AxisTable {
  std::vector<double> points;            // [e * 3 + q]
  std::vector<double> weights;           // physical weights
  std::vector<std::array<double, 9>> b;  // [e * 3 + q][d * 3 + local]
  std::vector<std::array<int, 3>> dofs;  // [e][local]
};

class SplineSpace {
 public:
  static constexpr int kQuadPerAxis = 3;
  static constexpr int kLocal = 27;

  explicit SplineSpace(std::array<KnotVector, 3> axes);
  static SplineSpace uniform(int n_elem, bool periodic);  // throws InvalidMesh

  const KnotVector& axis(int d) const { return axes_[d]; }
  bool periodic() const { return axes_[0].periodic(); }
  int num_dofs(int d) const { return axes_[d].num_basis(); }
  std::array<int, 3> dof_dims() const { return {num_dofs(0), num_dofs(1), num_dofs(2)}; }
  int num_control_points() const { return num_dofs(0) * num_dofs(1) * num_dofs(2); }
  int num_elements(int d) const { return axes_[d].num_elements(); }
  int num_elements() const { return num_elements(0) * num_elements(1) * num_elements(2); }
  int cp_index(int i, int j, int k) const { return (i * num_dofs(1) + j) * num_dofs(2) + k; }
  std::array<int, 3> cp_coords(int cp) const;
  std::array<int, 3> element_coords(int e) const;

  // Control points of element e in local order (a0 * 9 + a1 * 3 + a2).
  const std::array<int, kLocal>& connectivity(int e) const { return conn_[e]; }
  const AxisTable& table(int d) const { return tables_[d]; }

  std::vector<BasisSample> eval_basis(const Vec3& X) const;  // throws DomainError
  Vec3 greville(int cp) const;

 private:
  std::array<KnotVector, 3> axes_;
  std::array<AxisTable, 3> tables_;
  std::vector<std::array<int, kLocal>> conn_;
};

// Vector-valued coefficients, index ((i * ny + j) * nz + k) * 3 + component.
struct FieldCoeffs {
  std::array<int, 3> dims{};
  std::vector<double> data;

  static FieldCoeffs zeros(const SplineSpace& s);
  int num_control_points() const { return dims[0] * dims[1] * dims[2]; }
  double& at(int cp, int c) { return data[3 * cp + c]; }
  double at(int cp, int c) const { return data[3 * cp + c]; }
  Eigen::Map<Eigen::VectorXd> vec() { return {data.data(), Eigen::Index(data.size())}; }
  Eigen::Map<const Eigen::VectorXd> vec() const { return {data.data(), Eigen::Index(data.size())}; }
  bool same_shape(const FieldCoeffs& o) const { return dims == o.dims; }
};

struct FieldSample {
  Vec3 u = Vec3::Zero();
  Mat3 grad = Mat3::Zero();        // u_i,J
  std::array<Mat3, 3> hess{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};  // hess[i](J, K) = u_i,JK
};

FieldSample interpolate_field(const SplineSpace& s, const FieldCoeffs& u, const Vec3& X);

// Kinematic state F = F_affine + grad u, gradF = grad grad u.
QuadState quad_state(const FieldSample& f, const Mat3& F_affine = Mat3::Identity());

// 1D refinement operator mapping coarse to fine coefficients by knot insertion.
Eigen::MatrixXd refinement_matrix(const KnotVector& coarse, const KnotVector& fine);
// Knot insertion into an open space; periodic spaces are refined exactly through
// collocation at the fine Greville points.
FieldCoeffs knot_insert(const SplineSpace& coarse, const FieldCoeffs& u, const SplineSpace& fine);

// Coefficients reproducing f at the Greville points of every control point.
FieldCoeffs interpolate_greville(const SplineSpace& s, const std::function<Vec3(const Vec3&)>& f);
// Greville interpolation of a field given on another space.  Exact whenever the
// source function lies in the target space.
FieldCoeffs transfer(const SplineSpace& from, const FieldCoeffs& u, const SplineSpace& to);

// Applies per-axis matrices to every component: out = (Ax (x) Ay (x) Az) u.
FieldCoeffs apply_tensor(const std::array<Eigen::MatrixXd, 3>& A, const FieldCoeffs& u);

// L2 norm of the difference of two fields on the same space.
double l2_distance(const SplineSpace& s, const FieldCoeffs& a, const FieldCoeffs& b);

}  // namespace sgdyn
