#include "sgdyn/spline_space.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>
#include <boost/math/quadrature/gauss.hpp>

#include "sgdyn/errors.hpp"

namespace sgdyn {

namespace {

constexpr int P = KnotVector::kDegree;
constexpr double kDomainTol = 1e-12;

// Nonzero basis functions and their first two derivatives on knot span i
// (Piegl & Tiller, algorithm A2.3, specialised to two derivatives).
void ders_basis_funs(int i, double x, const std::vector<double>& U, double ders[3][3]) {
  double ndu[P + 1][P + 1];
  double left[P + 1], right[P + 1];
  ndu[0][0] = 1.0;
  for (int j = 1; j <= P; ++j) {
    left[j] = x - U[i + 1 - j];
    right[j] = U[i + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  for (int r = 0; r <= P; ++r) ders[0][r] = ndu[r][P];

  double a[2][P + 1];
  for (int r = 0; r <= P; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= 2; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = P - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : P - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double f = P;
  for (int k = 1; k <= 2; ++k) {
    for (int j = 0; j <= P; ++j) ders[k][j] *= f;
    f *= (P - k);
  }
}

}  // namespace

KnotVector KnotVector::open(std::vector<double> knots) {
  const int m = static_cast<int>(knots.size());
  if (m < 2 * (P + 1)) throw InvalidMesh("open knot vector needs at least one element");
  for (int j = 0; j <= P; ++j)
    if (knots[j] != 0.0 || knots[m - 1 - j] != 1.0)
      throw InvalidMesh("open knot vector must be clamped to [0, 1]");
  for (int j = P; j < m - P - 1; ++j)
    if (!(knots[j] < knots[j + 1])) throw InvalidMesh("interior knots must be strictly increasing");
  KnotVector kv;
  kv.knots_ = std::move(knots);
  kv.n_elem_ = m - 2 * P - 1;
  kv.periodic_ = false;
  return kv;
}

KnotVector KnotVector::uniform_open(int n_elem) {
  if (n_elem < 1) throw InvalidMesh("element count must be positive");
  std::vector<double> k(n_elem + 2 * P + 1);
  for (int j = 0; j < static_cast<int>(k.size()); ++j)
    k[j] = std::clamp(static_cast<double>(j - P) / n_elem, 0.0, 1.0);
  return open(std::move(k));
}

KnotVector KnotVector::uniform_periodic(int n_elem) {
  if (n_elem < P + 1) throw InvalidMesh("periodic axis needs at least 3 elements");
  KnotVector kv;
  kv.knots_.resize(n_elem + 2 * P + 1);
  for (int j = 0; j < static_cast<int>(kv.knots_.size()); ++j)
    kv.knots_[j] = static_cast<double>(j - P) / n_elem;
  kv.n_elem_ = n_elem;
  kv.periodic_ = true;
  return kv;
}

std::vector<double> KnotVector::breakpoints() const {
  return std::vector<double>(knots_.begin() + P, knots_.begin() + P + n_elem_ + 1);
}

int KnotVector::find_element(double x) const {
  if (!(x >= -kDomainTol && x <= 1.0 + kDomainTol)) throw DomainError("point outside the unit interval");
  const auto first = knots_.begin() + P + 1;
  const auto last = knots_.begin() + P + n_elem_;
  const int e = static_cast<int>(std::upper_bound(first, last, x) - first);
  return std::min(e, n_elem_ - 1);
}

void KnotVector::eval(int e, double x, double out[3][3]) const { ders_basis_funs(e + P, x, knots_, out); }

double KnotVector::greville(int j) const {
  const double g = 0.5 * (knots_[j + 1] + knots_[j + 2]);
  if (!periodic_) return g;
  return g < 0.0 ? g + 1.0 : g;
}

double KnotVector::eval_basis(int j, double x, int deriv) const {
  const int e = find_element(x);
  double b[3][3];
  eval(e, x, b);
  double v = 0.0;
  for (int l = 0; l <= P; ++l)
    if (global_index(e, l) == j) v += b[deriv][l];
  return v;
}

SplineSpace::SplineSpace(std::array<KnotVector, 3> axes) : axes_(std::move(axes)) {
  for (int d = 1; d < 3; ++d)
    if (axes_[d].periodic() != axes_[0].periodic())
      throw InvalidMesh("all axes must share the same periodicity");

  using Gauss = boost::math::quadrature::gauss<double, kQuadPerAxis>;
  const auto& abs = Gauss::abscissa();  // non-negative half, centre first
  const auto& wts = Gauss::weights();
  const double xi[3] = {-abs[1], abs[0], abs[1]};
  const double wi[3] = {wts[1], wts[0], wts[1]};

  for (int d = 0; d < 3; ++d) {
    const KnotVector& kv = axes_[d];
    AxisTable& t = tables_[d];
    const int ne = kv.num_elements();
    t.points.resize(ne * 3);
    t.weights.resize(ne * 3);
    t.b.resize(ne * 3);
    t.dofs.resize(ne);
    for (int e = 0; e < ne; ++e) {
      const double a = kv.element_begin(e), b = kv.element_end(e);
      const double h = b - a;
      for (int q = 0; q < 3; ++q) {
        const double x = a + 0.5 * (xi[q] + 1.0) * h;
        t.points[e * 3 + q] = x;
        t.weights[e * 3 + q] = 0.5 * h * wi[q];
        double ders[3][3];
        kv.eval(e, x, ders);
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) t.b[e * 3 + q][k * 3 + l] = ders[k][l];
      }
      for (int l = 0; l < 3; ++l) t.dofs[e][l] = kv.global_index(e, l);
    }
  }

  conn_.resize(num_elements());
  for (int e = 0; e < num_elements(); ++e) {
    const auto ec = element_coords(e);
    for (int a0 = 0; a0 < 3; ++a0)
      for (int a1 = 0; a1 < 3; ++a1)
        for (int a2 = 0; a2 < 3; ++a2)
          conn_[e][a0 * 9 + a1 * 3 + a2] =
              cp_index(tables_[0].dofs[ec[0]][a0], tables_[1].dofs[ec[1]][a1], tables_[2].dofs[ec[2]][a2]);
  }
}

SplineSpace SplineSpace::uniform(int n_elem, bool periodic) {
  const KnotVector kv = periodic ? KnotVector::uniform_periodic(n_elem) : KnotVector::uniform_open(n_elem);
  return SplineSpace({kv, kv, kv});
}

std::array<int, 3> SplineSpace::cp_coords(int cp) const {
  const int nz = num_dofs(2), ny = num_dofs(1);
  return {cp / (ny * nz), (cp / nz) % ny, cp % nz};
}

std::array<int, 3> SplineSpace::element_coords(int e) const {
  const int nz = num_elements(2), ny = num_elements(1);
  return {e / (ny * nz), (e / nz) % ny, e % nz};
}

Vec3 SplineSpace::greville(int cp) const {
  const auto c = cp_coords(cp);
  return {axes_[0].greville(c[0]), axes_[1].greville(c[1]), axes_[2].greville(c[2])};
}

std::vector<BasisSample> SplineSpace::eval_basis(const Vec3& X) const {
  int e[3];
  double b[3][3][3];
  for (int d = 0; d < 3; ++d) {
    e[d] = axes_[d].find_element(X[d]);
    axes_[d].eval(e[d], std::clamp(X[d], 0.0, 1.0), b[d]);
  }
  std::vector<BasisSample> out(kLocal);
  for (int a0 = 0; a0 < 3; ++a0)
    for (int a1 = 0; a1 < 3; ++a1)
      for (int a2 = 0; a2 < 3; ++a2) {
        BasisSample& s = out[a0 * 9 + a1 * 3 + a2];
        s.dof = cp_index(axes_[0].global_index(e[0], a0), axes_[1].global_index(e[1], a1),
                         axes_[2].global_index(e[2], a2));
        const int a[3] = {a0, a1, a2};
        auto f = [&](int k0, int k1, int k2) { return b[0][k0][a[0]] * b[1][k1][a[1]] * b[2][k2][a[2]]; };
        s.value = f(0, 0, 0);
        s.grad = {f(1, 0, 0), f(0, 1, 0), f(0, 0, 1)};
        s.hess = {f(2, 0, 0), f(1, 1, 0), f(1, 0, 1), f(1, 1, 0), f(0, 2, 0),
                  f(0, 1, 1), f(1, 0, 1), f(0, 1, 1), f(0, 0, 2)};
      }
  return out;
}

FieldCoeffs FieldCoeffs::zeros(const SplineSpace& s) {
  FieldCoeffs f;
  f.dims = s.dof_dims();
  f.data.assign(3 * s.num_control_points(), 0.0);
  return f;
}

FieldSample interpolate_field(const SplineSpace& s, const FieldCoeffs& u, const Vec3& X) {
  if (u.dims != s.dof_dims()) throw DomainError("field does not match the spline space");
  FieldSample f;
  for (const BasisSample& b : s.eval_basis(X))
    for (int i = 0; i < 3; ++i) {
      const double c = u.at(b.dof, i);
      f.u[i] += c * b.value;
      for (int J = 0; J < 3; ++J) {
        f.grad(i, J) += c * b.grad[J];
        for (int K = 0; K < 3; ++K) f.hess[i](J, K) += c * b.hess[3 * J + K];
      }
    }
  return f;
}

QuadState quad_state(const FieldSample& f, const Mat3& F_affine) {
  QuadState q;
  for (int i = 0; i < 3; ++i)
    for (int J = 0; J < 3; ++J) {
      q.F(i, J) = F_affine(i, J) + f.grad(i, J);
      for (int K = 0; K < 3; ++K) q.gradF(i, J, K) = f.hess[i](J, K);
    }
  return q;
}

namespace {

bool contains_breakpoints(const KnotVector& coarse, const KnotVector& fine) {
  const auto fb = fine.breakpoints();
  for (double x : coarse.breakpoints()) {
    const auto it = std::lower_bound(fb.begin(), fb.end(), x - 1e-14);
    if (it == fb.end() || std::abs(*it - x) > 1e-14) return false;
  }
  return true;
}

Eigen::MatrixXd collocation_matrix(const KnotVector& kv) {
  const int n = kv.num_basis();
  Eigen::MatrixXd C(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = kv.eval_basis(j, kv.greville(i));
  return C;
}

}  // namespace

Eigen::MatrixXd refinement_matrix(const KnotVector& coarse, const KnotVector& fine) {
  if (coarse.periodic() != fine.periodic()) throw RefinementError("periodicity of the two spaces differs");
  if (!contains_breakpoints(coarse, fine)) throw RefinementError("fine knots do not contain the coarse knots");

  if (coarse.periodic()) {
    const int nc = coarse.num_basis(), nf = fine.num_basis();
    Eigen::MatrixXd S(nf, nc);
    for (int i = 0; i < nf; ++i)
      for (int j = 0; j < nc; ++j) S(i, j) = coarse.eval_basis(j, fine.greville(i));
    return collocation_matrix(fine).partialPivLu().solve(S);
  }

  // Boehm insertion of every missing knot, applied to the identity.
  std::vector<double> U = coarse.knots();
  Eigen::MatrixXd Pm = Eigen::MatrixXd::Identity(coarse.num_basis(), coarse.num_basis());
  const auto cb = coarse.breakpoints();
  for (double x : fine.breakpoints()) {
    const bool present = std::any_of(cb.begin(), cb.end(), [&](double c) { return std::abs(c - x) <= 1e-14; });
    if (present) continue;
    const int k = static_cast<int>(std::upper_bound(U.begin(), U.end(), x) - U.begin()) - 1;
    const int n = static_cast<int>(Pm.rows());
    Eigen::MatrixXd Q(n + 1, Pm.cols());
    for (int i = 0; i <= n; ++i) {
      if (i <= k - P) {
        Q.row(i) = Pm.row(i);
      } else if (i >= k + 1) {
        Q.row(i) = Pm.row(i - 1);
      } else {
        const double alpha = (x - U[i]) / (U[i + P] - U[i]);
        Q.row(i) = alpha * Pm.row(i) + (1.0 - alpha) * Pm.row(i - 1);
      }
    }
    U.insert(U.begin() + k + 1, x);
    Pm = std::move(Q);
  }
  return Pm;
}

FieldCoeffs apply_tensor(const std::array<Eigen::MatrixXd, 3>& A, const FieldCoeffs& u) {
  for (int d = 0; d < 3; ++d)
    if (A[d].cols() != u.dims[d]) throw RefinementError("operator does not match the field shape");
  // Contract one axis at a time; the data is viewed as [n0][n1][n2][3].
  std::array<int, 3> dims = u.dims;
  std::vector<double> cur = u.data;
  for (int d = 0; d < 3; ++d) {
    std::array<int, 3> nd = dims;
    nd[d] = static_cast<int>(A[d].rows());
    std::vector<double> next(3 * static_cast<size_t>(nd[0]) * nd[1] * nd[2], 0.0);
    auto idx = [](const std::array<int, 3>& n, int i, int j, int k) { return ((i * n[1] + j) * n[2] + k) * 3; };
    for (int i = 0; i < nd[0]; ++i)
      for (int j = 0; j < nd[1]; ++j)
        for (int k = 0; k < nd[2]; ++k) {
          const int o[3] = {i, j, k};
          double* out = &next[idx(nd, i, j, k)];
          for (int m = 0; m < dims[d]; ++m) {
            const double a = A[d](o[d], m);
            if (a == 0.0) continue;
            int s[3] = {i, j, k};
            s[d] = m;
            const double* in = &cur[idx(dims, s[0], s[1], s[2])];
            for (int c = 0; c < 3; ++c) out[c] += a * in[c];
          }
        }
    cur = std::move(next);
    dims = nd;
  }
  FieldCoeffs out;
  out.dims = dims;
  out.data = std::move(cur);
  return out;
}

FieldCoeffs knot_insert(const SplineSpace& coarse, const FieldCoeffs& u, const SplineSpace& fine) {
  if (u.dims != coarse.dof_dims()) throw RefinementError("field does not match the coarse space");
  std::array<Eigen::MatrixXd, 3> R;
  for (int d = 0; d < 3; ++d) R[d] = refinement_matrix(coarse.axis(d), fine.axis(d));
  return apply_tensor(R, u);
}

FieldCoeffs interpolate_greville(const SplineSpace& s, const std::function<Vec3(const Vec3&)>& f) {
  FieldCoeffs vals = FieldCoeffs::zeros(s);
  for (int cp = 0; cp < s.num_control_points(); ++cp) {
    const Vec3 v = f(s.greville(cp));
    for (int c = 0; c < 3; ++c) vals.at(cp, c) = v[c];
  }
  std::array<Eigen::MatrixXd, 3> Cinv;
  for (int d = 0; d < 3; ++d) Cinv[d] = collocation_matrix(s.axis(d)).inverse();
  return apply_tensor(Cinv, vals);
}

FieldCoeffs transfer(const SplineSpace& from, const FieldCoeffs& u, const SplineSpace& to) {
  return interpolate_greville(to, [&](const Vec3& X) { return interpolate_field(from, u, X).u; });
}

double l2_distance(const SplineSpace& s, const FieldCoeffs& a, const FieldCoeffs& b) {
  if (a.dims != s.dof_dims() || b.dims != s.dof_dims()) throw DomainError("field does not match the spline space");
  long double acc = 0.0L;
  const auto& t0 = s.table(0);
  const auto& t1 = s.table(1);
  const auto& t2 = s.table(2);
  for (int e = 0; e < s.num_elements(); ++e) {
    const auto ec = s.element_coords(e);
    const auto& conn = s.connectivity(e);
    for (int q0 = 0; q0 < 3; ++q0)
      for (int q1 = 0; q1 < 3; ++q1)
        for (int q2 = 0; q2 < 3; ++q2) {
          const int i0 = ec[0] * 3 + q0, i1 = ec[1] * 3 + q1, i2 = ec[2] * 3 + q2;
          const double w = t0.weights[i0] * t1.weights[i1] * t2.weights[i2];
          double d[3] = {0.0, 0.0, 0.0};
          for (int l = 0; l < SplineSpace::kLocal; ++l) {
            const double N = t0.b[i0][l / 9] * t1.b[i1][(l / 3) % 3] * t2.b[i2][l % 3];
            for (int c = 0; c < 3; ++c) d[c] += N * (a.at(conn[l], c) - b.at(conn[l], c));
          }
          acc += w * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        }
  }
  return std::sqrt(static_cast<double>(acc));
}

}  // namespace sgdyn
