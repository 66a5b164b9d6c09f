#include "sgdyn/assembly.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "sgdyn/errors.hpp"

namespace sgdyn {

void ConstraintSet::fix(int dof, double value) {
  const auto it = std::lower_bound(dofs.begin(), dofs.end(), dof);
  const auto pos = it - dofs.begin();
  if (it != dofs.end() && *it == dof) {
    values[pos] = value;
    return;
  }
  dofs.insert(it, dof);
  values.insert(values.begin() + pos, value);
}

ConstraintSet ConstraintSet::boundary_dirichlet(const SplineSpace& s) {
  ConstraintSet c;
  if (s.periodic()) return c;
  const auto n = s.dof_dims();
  for (int cp = 0; cp < s.num_control_points(); ++cp) {
    const auto x = s.cp_coords(cp);
    bool boundary = false;
    for (int d = 0; d < 3; ++d) boundary = boundary || x[d] == 0 || x[d] == n[d] - 1;
    if (!boundary) continue;
    for (int i = 0; i < 3; ++i) {
      c.dofs.push_back(3 * cp + i);
      c.values.push_back(0.0);
    }
  }
  return c;
}

ConstraintSet ConstraintSet::translation_pin(const SplineSpace& s, int cp) {
  if (cp < 0 || cp >= s.num_control_points()) throw InvalidParameter("pinned control point out of range");
  ConstraintSet c;
  for (int i = 0; i < 3; ++i) c.fix(3 * cp + i, 0.0);
  return c;
}

DofMap::DofMap(int num_global, const ConstraintSet& c) : free_index_(num_global, 0), constraints_(c) {
  for (int g : c.dofs) {
    if (g < 0 || g >= num_global) throw InvalidParameter("constrained dof out of range");
    free_index_[g] = -1;
  }
  for (int g = 0; g < num_global; ++g) {
    if (free_index_[g] < 0) continue;
    free_index_[g] = static_cast<int>(free_to_global_.size());
    free_to_global_.push_back(g);
  }
}

Eigen::VectorXd DofMap::gather(const FieldCoeffs& u) const {
  Eigen::VectorXd x(num_free());
  for (int r = 0; r < num_free(); ++r) x[r] = u.data[free_to_global_[r]];
  return x;
}

void DofMap::scatter(const Eigen::VectorXd& x, FieldCoeffs& u) const {
  for (int r = 0; r < num_free(); ++r) u.data[free_to_global_[r]] = x[r];
}

void DofMap::apply_constraints(FieldCoeffs& u) const {
  for (size_t j = 0; j < constraints_.dofs.size(); ++j) u.data[constraints_.dofs[j]] = constraints_.values[j];
}

namespace {

// Symmetric second-derivative slot of the reduced feature vector
// [d1, d2, d3, d11, d22, d33, d23, d13, d12].
constexpr int kSym[3][3] = {{3, 8, 7}, {8, 4, 6}, {7, 6, 5}};
constexpr int kFeat = 9;
constexpr int kLoc = SplineSpace::kLocal;

using Phi = Eigen::Matrix<double, kFeat, kLoc>;
using ElemVec = Eigen::Matrix<double, 3 * kLoc, 1>;
using ElemMat = Eigen::Matrix<double, 3 * kLoc, 3 * kLoc, Eigen::RowMajor>;
using RedMat = Eigen::Matrix<double, 3 * kFeat, 3 * kFeat, Eigen::RowMajor>;

// zeta entries that feed reduced feature (i, x).
struct FeatureMap {
  int n[3 * kFeat];
  int v[3 * kFeat][2];
  FeatureMap() {
    for (int i = 0; i < 3; ++i) {
      for (int J = 0; J < 3; ++J) {
        n[i * kFeat + J] = 1;
        v[i * kFeat + J][0] = f_index(i, J);
      }
      for (int J = 0; J < 3; ++J)
        for (int K = J; K < 3; ++K) {
          const int x = i * kFeat + kSym[J][K];
          n[x] = (J == K) ? 1 : 2;
          v[x][0] = g_index(i, J, K);
          v[x][1] = g_index(i, K, J);
        }
    }
  }
};
const FeatureMap kFeatures;

struct QuadBasis {
  Phi phi;
  Eigen::Matrix<double, kLoc, 1> N;
  double w;
};

void quad_basis(const SplineSpace& s, const std::array<int, 3>& ec, int q0, int q1, int q2, QuadBasis& qb) {
  const auto& t0 = s.table(0);
  const auto& t1 = s.table(1);
  const auto& t2 = s.table(2);
  const int i0 = ec[0] * 3 + q0, i1 = ec[1] * 3 + q1, i2 = ec[2] * 3 + q2;
  qb.w = t0.weights[i0] * t1.weights[i1] * t2.weights[i2];
  const auto& b0 = t0.b[i0];
  const auto& b1 = t1.b[i1];
  const auto& b2 = t2.b[i2];
  for (int a0 = 0; a0 < 3; ++a0)
    for (int a1 = 0; a1 < 3; ++a1)
      for (int a2 = 0; a2 < 3; ++a2) {
        const int a = a0 * 9 + a1 * 3 + a2;
        const double x0 = b0[a0], x1 = b1[a1], x2 = b2[a2];
        const double d0 = b0[3 + a0], d1 = b1[3 + a1], d2 = b2[3 + a2];
        qb.N[a] = x0 * x1 * x2;
        qb.phi(0, a) = d0 * x1 * x2;
        qb.phi(1, a) = x0 * d1 * x2;
        qb.phi(2, a) = x0 * x1 * d2;
        qb.phi(3, a) = b0[6 + a0] * x1 * x2;
        qb.phi(4, a) = x0 * b1[6 + a1] * x2;
        qb.phi(5, a) = x0 * x1 * b2[6 + a2];
        qb.phi(6, a) = x0 * d1 * d2;
        qb.phi(7, a) = d0 * x1 * d2;
        qb.phi(8, a) = d0 * d1 * x2;
      }
}

void state_from_features(const Eigen::Matrix<double, 3, kFeat>& z, const Mat3& F_affine, QuadState& q) {
  for (int i = 0; i < 3; ++i) {
    for (int J = 0; J < 3; ++J) q.F(i, J) = F_affine(i, J) + z(i, J);
    for (int J = 0; J < 3; ++J)
      for (int K = 0; K < 3; ++K) q.gradF(i, J, K) = z(i, kSym[J][K]);
  }
}

void gather_element(const FieldCoeffs& u, const std::array<int, kLoc>& conn, Eigen::Matrix<double, 3, kLoc>& c) {
  for (int a = 0; a < kLoc; ++a)
    for (int i = 0; i < 3; ++i) c(i, a) = u.data[3 * conn[a] + i];
}

int find_position(const SparseMatrixR& A, int row, int col) {
  const int* begin = A.innerIndexPtr() + A.outerIndexPtr()[row];
  const int* end = A.innerIndexPtr() + A.outerIndexPtr()[row + 1];
  const int* it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) throw AssemblyError("entry outside the sparsity pattern");
  return static_cast<int>(it - A.innerIndexPtr());
}

FieldCoeffs combine(double a, const FieldCoeffs& x, double b, const FieldCoeffs& y) {
  if (!x.same_shape(y)) throw AssemblyError("field shapes differ");
  FieldCoeffs out;
  out.dims = x.dims;
  out.data.resize(x.data.size());
  for (size_t j = 0; j < x.data.size(); ++j) out.data[j] = a * x.data[j] + b * y.data[j];
  return out;
}

}  // namespace

struct Assembler::Pattern {
  SparseMatrixR empty;  // free-dof tangent pattern with zero values
  // Value index of every element-matrix entry (-1 for constrained rows or
  // columns), element-major; empty when the table would be too large.
  std::vector<int> positions;
};

namespace {
constexpr size_t kMaxPositionTable = size_t(1) << 25;
}

Assembler::Assembler(const SplineSpace& s, const ConstraintSet& c, const AssemblyOptions& o)
    : space_(s), dofs_(3 * s.num_control_points(), c), opt_(o) {
  if (!(opt_.rho > 0.0)) throw InvalidParameter("rho must be positive");
  if (opt_.damping < 0.0) throw InvalidParameter("damping must be non-negative");
  if (opt_.chunk < 1) opt_.chunk = 1;

  const int ncp = s.num_control_points();
  std::vector<std::vector<int>> nb(ncp);
  for (int e = 0; e < s.num_elements(); ++e) {
    const auto& conn = s.connectivity(e);
    for (int a = 0; a < kLoc; ++a)
      for (int b = 0; b < kLoc; ++b) nb[conn[a]].push_back(conn[b]);
  }
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  // Scalar consistent mass matrix.
  {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(s.num_elements()) * kLoc * kLoc);
    for (int e = 0; e < s.num_elements(); ++e) {
      const auto ec = s.element_coords(e);
      const auto& conn = s.connectivity(e);
      Eigen::Matrix<double, kLoc, kLoc> Me = Eigen::Matrix<double, kLoc, kLoc>::Zero();
      QuadBasis qb;
      for (int q0 = 0; q0 < 3; ++q0)
        for (int q1 = 0; q1 < 3; ++q1)
          for (int q2 = 0; q2 < 3; ++q2) {
            quad_basis(s, ec, q0, q1, q2, qb);
            Me.noalias() += qb.w * qb.N * qb.N.transpose();
          }
      for (int a = 0; a < kLoc; ++a)
        for (int b = 0; b < kLoc; ++b) trip.emplace_back(conn[a], conn[b], Me(a, b));
    }
    mass_.resize(ncp, ncp);
    mass_.setFromTriplets(trip.begin(), trip.end());
    mass_.makeCompressed();
  }

  auto pat = std::make_shared<Pattern>();
  const int nf = dofs_.num_free();
  SparseMatrixR& A = pat->empty;
  A.resize(nf, nf);
  Eigen::VectorXi counts(nf);
  for (int r = 0; r < nf; ++r) {
    const int cp = dofs_.free_to_global()[r] / 3;
    int cnt = 0;
    for (int cq : nb[cp])
      for (int k = 0; k < 3; ++k) cnt += dofs_.free_index(3 * cq + k) >= 0;
    counts[r] = cnt;
  }
  A.reserve(counts);
  for (int r = 0; r < nf; ++r) {
    const int cp = dofs_.free_to_global()[r] / 3;
    for (int cq : nb[cp])
      for (int k = 0; k < 3; ++k) {
        const int c = dofs_.free_index(3 * cq + k);
        if (c >= 0) A.insert(r, c) = 0.0;
      }
  }
  A.makeCompressed();

  const size_t per = size_t(3 * kLoc) * (3 * kLoc);
  if (per * s.num_elements() <= kMaxPositionTable) {
    pat->positions.resize(per * s.num_elements());
    for (int e = 0; e < s.num_elements(); ++e) {
      int rows[3 * kLoc];
      element_rows(e, rows);
      int* out = pat->positions.data() + per * e;
      for (int x = 0; x < 3 * kLoc; ++x)
        for (int y = 0; y < 3 * kLoc; ++y)
          out[x * 3 * kLoc + y] = (rows[x] < 0 || rows[y] < 0) ? -1 : find_position(A, rows[x], rows[y]);
    }
  }
  pattern_ = std::move(pat);
}

AssembledSystem Assembler::run(const PointKernel& kernel, const FieldCoeffs& um, const FieldCoeffs& up,
                               bool with_tangent) const {
  const SplineSpace& s = space_;
  if (um.dims != s.dof_dims() || up.dims != s.dof_dims()) throw AssemblyError("field does not match the space");

  AssembledSystem sys;
  sys.residual = Eigen::VectorXd::Zero(dofs_.num_free());
  sys.has_tangent = with_tangent;
  sys.symmetric = kernel.symmetric_tangent();
  if (with_tangent) sys.tangent = pattern_->empty;

  const int ne = s.num_elements();
  const int threads = opt_.threads > 0 ? opt_.threads : omp_get_max_threads();
  const int chunk = opt_.chunk;
  const int batch = std::max(1, threads) * chunk;

  std::vector<ElemVec> rbuf(batch);
  std::vector<ElemMat> kbuf(with_tangent ? batch : 0);
  const Mat3 Faff = opt_.F_affine;

  for (int e0 = 0; e0 < ne; e0 += batch) {
    const int nb = std::min(batch, ne - e0);
    bool failed = false;
#pragma omp parallel for schedule(static, 1) num_threads(threads) reduction(|| : failed)
    for (int ci = 0; ci < (nb + chunk - 1) / chunk; ++ci) {
      QuadBasis qb;
      Eigen::Matrix<double, 3, kLoc> cm, cp;
      Eigen::Matrix<double, 3, kFeat> zm, zp;
      QuadState sm, sp;
      ZetaVector sigma;
      ZetaMatrix Kz;
      Eigen::Matrix<double, kNumZeta, 3 * kFeat> Kc;
      RedMat Kr;
      // Quadrature-stacked basis features and Kr * phi products, so each
      // component block of the element matrix is one GEMM per element.
      Eigen::MatrixXd phi_all(27 * kFeat, kLoc);
      Eigen::MatrixXd Y[9];
      const bool sym = sys.symmetric;
      if (with_tangent)
        for (auto& y : Y) y.resize(27 * kFeat, kLoc);
      for (int j = ci * chunk; j < std::min(nb, (ci + 1) * chunk); ++j) {
        const int e = e0 + j;
        const auto ec = s.element_coords(e);
        const auto& conn = s.connectivity(e);
        gather_element(um, conn, cm);
        gather_element(up, conn, cp);
        ElemVec& re = rbuf[j];
        re.setZero();
        int qi = 0;
        for (int q0 = 0; q0 < 3; ++q0)
          for (int q1 = 0; q1 < 3; ++q1)
            for (int q2 = 0; q2 < 3; ++q2, ++qi) {
              quad_basis(s, ec, q0, q1, q2, qb);
              zm.noalias() = cm * qb.phi.transpose();
              zp.noalias() = cp * qb.phi.transpose();
              state_from_features(zm, Faff, sm);
              state_from_features(zp, Faff, sp);
              kernel.evaluate(sm, sp, sigma, with_tangent ? &Kz : nullptr);
              for (int v = 0; v < kNumZeta; ++v) failed = failed || !std::isfinite(sigma[v]);

              Eigen::Matrix<double, 3 * kFeat, 1> sr;
              for (int x = 0; x < 3 * kFeat; ++x) {
                double acc = sigma[kFeatures.v[x][0]];
                if (kFeatures.n[x] == 2) acc += sigma[kFeatures.v[x][1]];
                sr[x] = qb.w * acc;
              }
              for (int i = 0; i < 3; ++i)
                re.segment<kLoc>(i * kLoc).noalias() += qb.phi.transpose() * sr.segment<kFeat>(i * kFeat);

              if (!with_tangent) continue;
              for (int y = 0; y < 3 * kFeat; ++y) {
                Kc.col(y) = Kz.col(kFeatures.v[y][0]);
                if (kFeatures.n[y] == 2) Kc.col(y) += Kz.col(kFeatures.v[y][1]);
              }
              for (int x = 0; x < 3 * kFeat; ++x) {
                Kr.row(x) = Kc.row(kFeatures.v[x][0]);
                if (kFeatures.n[x] == 2) Kr.row(x) += Kc.row(kFeatures.v[x][1]);
              }
              Kr *= qb.w;
              phi_all.middleRows<kFeat>(qi * kFeat) = qb.phi;
              // Symmetric kernels: upper component blocks only, mirrored below.
              for (int i = 0; i < 3; ++i)
                for (int k = sym ? i : 0; k < 3; ++k)
                  Y[i * 3 + k].middleRows<kFeat>(qi * kFeat).noalias() =
                      Kr.block<kFeat, kFeat>(i * kFeat, k * kFeat) * qb.phi;
            }
        if (!with_tangent) continue;
        ElemMat& Ke = kbuf[j];
        for (int i = 0; i < 3; ++i)
          for (int k = sym ? i : 0; k < 3; ++k)
            Ke.block<kLoc, kLoc>(i * kLoc, k * kLoc).noalias() = phi_all.transpose() * Y[i * 3 + k];
        if (!sym) continue;
        for (int i = 0; i < 3; ++i) {
          auto d = Ke.block<kLoc, kLoc>(i * kLoc, i * kLoc);
          const Eigen::Matrix<double, kLoc, kLoc> avg = 0.5 * (d + d.transpose());
          d = avg;
          for (int k = i + 1; k < 3; ++k)
            Ke.block<kLoc, kLoc>(k * kLoc, i * kLoc) = Ke.block<kLoc, kLoc>(i * kLoc, k * kLoc).transpose();
        }
      }
    }
    if (failed) throw AssemblyError("non-finite stress at a quadrature point");

    // Serial scatter in element order keeps the sums independent of threading.
    const auto& positions = pattern_->positions;
    for (int j = 0; j < nb; ++j) {
      const int e = e0 + j;
      int rows[3 * kLoc];
      element_rows(e, rows);
      for (int x = 0; x < 3 * kLoc; ++x)
        if (rows[x] >= 0) sys.residual[rows[x]] += rbuf[j][x];
      if (!with_tangent) continue;
      double* vals = sys.tangent.valuePtr();
      const double* ke = kbuf[j].data();
      if (!positions.empty()) {
        const int* pos = positions.data() + size_t(e) * (3 * kLoc) * (3 * kLoc);
        for (int x = 0; x < (3 * kLoc) * (3 * kLoc); ++x)
          if (pos[x] >= 0) vals[pos[x]] += ke[x];
        continue;
      }
      for (int x = 0; x < 3 * kLoc; ++x) {
        if (rows[x] < 0) continue;
        for (int y = 0; y < 3 * kLoc; ++y) {
          if (rows[y] < 0) continue;
          vals[find_position(sys.tangent, rows[x], rows[y])] += ke[x * 3 * kLoc + y];
        }
      }
    }
  }
  return sys;
}

void Assembler::element_rows(int e, int* rows) const {
  const auto& conn = space_.connectivity(e);
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < kLoc; ++a) rows[i * kLoc + a] = dofs_.free_index(3 * conn[a] + i);
}

void Assembler::add_inertia(AssembledSystem& sys, const FieldCoeffs& inertia, double mass_coeff) const {
  const int ncp = space_.num_control_points();
  for (int cp = 0; cp < ncp; ++cp) {
    double acc[3] = {0.0, 0.0, 0.0};
    for (SparseMatrixR::InnerIterator it(mass_, cp); it; ++it)
      for (int i = 0; i < 3; ++i) acc[i] += it.value() * inertia.at(static_cast<int>(it.col()), i);
    for (int i = 0; i < 3; ++i) {
      const int r = dofs_.free_index(3 * cp + i);
      if (r >= 0) sys.residual[r] += acc[i];
    }
  }
  if (!sys.has_tangent || mass_coeff == 0.0) return;
  double* vals = sys.tangent.valuePtr();
  for (int cp = 0; cp < ncp; ++cp)
    for (int i = 0; i < 3; ++i) {
      const int r = dofs_.free_index(3 * cp + i);
      if (r < 0) continue;
      for (SparseMatrixR::InnerIterator it(mass_, cp); it; ++it) {
        const int c = dofs_.free_index(3 * static_cast<int>(it.col()) + i);
        if (c >= 0) vals[find_position(sys.tangent, r, c)] += mass_coeff * it.value();
      }
    }
}

AssembledSystem Assembler::dynamic(const PointKernel& k, const FieldCoeffs& u_prev, const FieldCoeffs& u_curr,
                                   const FieldCoeffs& u_next, double dt, bool with_tangent) const {
  if (!(dt > 0.0)) throw InvalidParameter("time step must be positive");
  const FieldCoeffs um = combine(0.5, u_curr, 0.5, u_prev);
  const FieldCoeffs up = combine(0.5, u_next, 0.5, u_curr);
  AssembledSystem sys = run(k, um, up, with_tangent);
  const double a = opt_.rho / (dt * dt), b = opt_.damping / (2.0 * dt);
  FieldCoeffs inertia = u_next;
  for (size_t j = 0; j < inertia.data.size(); ++j)
    inertia.data[j] = a * (u_next.data[j] - 2.0 * u_curr.data[j] + u_prev.data[j]) +
                      b * (u_next.data[j] - u_prev.data[j]);
  add_inertia(sys, inertia, a + b);
  return sys;
}

AssembledSystem Assembler::static_system(const PointKernel& k, const FieldCoeffs& u, bool with_tangent) const {
  return run(k, u, u, with_tangent);
}

AssembledSystem Assembler::run_reference(const PointKernel& kernel, const FieldCoeffs& um, const FieldCoeffs& up,
                                         const FieldCoeffs* inertia, double mass_coeff, bool with_tangent) const {
  const SplineSpace& s = space_;
  const int nf = dofs_.num_free();
  AssembledSystem sys;
  sys.residual = Eigen::VectorXd::Zero(nf);
  sys.has_tangent = with_tangent;
  sys.symmetric = kernel.symmetric_tangent();
  std::vector<Eigen::Triplet<double>> trip;

  for (int e = 0; e < s.num_elements(); ++e) {
    const auto ec = s.element_coords(e);
    for (int q0 = 0; q0 < 3; ++q0)
      for (int q1 = 0; q1 < 3; ++q1)
        for (int q2 = 0; q2 < 3; ++q2) {
          const int i0 = ec[0] * 3 + q0, i1 = ec[1] * 3 + q1, i2 = ec[2] * 3 + q2;
          const Vec3 X(s.table(0).points[i0], s.table(1).points[i1], s.table(2).points[i2]);
          const double w = s.table(0).weights[i0] * s.table(1).weights[i1] * s.table(2).weights[i2];
          const std::vector<BasisSample> basis = s.eval_basis(X);

          QuadState sm, sp;
          Vec3 acc = Vec3::Zero();
          for (int i = 0; i < 3; ++i)
            for (int J = 0; J < 3; ++J) {
              sm.F(i, J) = sp.F(i, J) = opt_.F_affine(i, J);
              for (int K = 0; K < 3; ++K) sm.gradF(i, J, K) = sp.gradF(i, J, K) = 0.0;
            }
          for (const auto& b : basis)
            for (int i = 0; i < 3; ++i) {
              const double cmv = um.at(b.dof, i), cpv = up.at(b.dof, i);
              if (inertia) acc[i] += b.value * inertia->at(b.dof, i);
              for (int J = 0; J < 3; ++J) {
                sm.F(i, J) += cmv * b.grad[J];
                sp.F(i, J) += cpv * b.grad[J];
                for (int K = 0; K < 3; ++K) {
                  sm.gradF(i, J, K) += cmv * b.hess[3 * J + K];
                  sp.gradF(i, J, K) += cpv * b.hess[3 * J + K];
                }
              }
            }
          ZetaVector sigma;
          ZetaMatrix Kz;
          kernel.evaluate(sm, sp, sigma, with_tangent ? &Kz : nullptr);

          // Variation of zeta caused by a unit coefficient (a, i).
          auto variation = [&](const BasisSample& b, int i) {
            ZetaVector d{};
            for (int J = 0; J < 3; ++J) {
              d[f_index(i, J)] = b.grad[J];
              for (int K = 0; K < 3; ++K) d[g_index(i, J, K)] = b.hess[3 * J + K];
            }
            return d;
          };
          for (const auto& ba : basis)
            for (int i = 0; i < 3; ++i) {
              const int r = dofs_.free_index(3 * ba.dof + i);
              if (r < 0) continue;
              const ZetaVector da = variation(ba, i);
              sys.residual[r] += w * (dot(da, sigma) + ba.value * acc[i]);
              if (!with_tangent) continue;
              for (const auto& bb : basis)
                for (int k = 0; k < 3; ++k) {
                  const int c = dofs_.free_index(3 * bb.dof + k);
                  if (c < 0) continue;
                  const ZetaVector db = variation(bb, k);
                  double v = 0.0;
                  for (int x = 0; x < kNumZeta; ++x) {
                    if (da[x] == 0.0) continue;
                    for (int y = 0; y < kNumZeta; ++y) v += da[x] * Kz(x, y) * db[y];
                  }
                  if (i == k) v += mass_coeff * ba.value * bb.value;
                  trip.emplace_back(r, c, w * v);
                }
            }
        }
  }
  if (with_tangent) {
    sys.tangent.resize(nf, nf);
    sys.tangent.setFromTriplets(trip.begin(), trip.end());
    sys.tangent.makeCompressed();
  }
  return sys;
}

AssembledSystem Assembler::dynamic_reference(const PointKernel& k, const FieldCoeffs& u_prev,
                                             const FieldCoeffs& u_curr, const FieldCoeffs& u_next, double dt,
                                             bool with_tangent) const {
  const FieldCoeffs um = combine(0.5, u_curr, 0.5, u_prev);
  const FieldCoeffs up = combine(0.5, u_next, 0.5, u_curr);
  const double a = opt_.rho / (dt * dt), b = opt_.damping / (2.0 * dt);
  FieldCoeffs inertia = u_next;
  for (size_t j = 0; j < inertia.data.size(); ++j)
    inertia.data[j] = a * (u_next.data[j] - 2.0 * u_curr.data[j] + u_prev.data[j]) +
                      b * (u_next.data[j] - u_prev.data[j]);
  return run_reference(k, um, up, &inertia, a + b, with_tangent);
}

AssembledSystem Assembler::static_reference(const PointKernel& k, const FieldCoeffs& u, bool with_tangent) const {
  return run_reference(k, u, u, nullptr, 0.0, with_tangent);
}

namespace {

void integrate_states(const SplineSpace& s, const Mat3& F_affine, const PointKernel& k, const FieldCoeffs& u,
                      bool with_stress, ZetaVector& total, double& psi) {
  if (u.dims != s.dof_dims()) throw AssemblyError("field does not match the space");
  total.fill(0.0);
  psi = 0.0;
  QuadBasis qb;
  Eigen::Matrix<double, 3, kLoc> c;
  Eigen::Matrix<double, 3, kFeat> z;
  QuadState q;
  ZetaVector sigma;
  for (int e = 0; e < s.num_elements(); ++e) {
    const auto ec = s.element_coords(e);
    gather_element(u, s.connectivity(e), c);
    for (int q0 = 0; q0 < 3; ++q0)
      for (int q1 = 0; q1 < 3; ++q1)
        for (int q2 = 0; q2 < 3; ++q2) {
          quad_basis(s, ec, q0, q1, q2, qb);
          z.noalias() = c * qb.phi.transpose();
          state_from_features(z, F_affine, q);
          psi += qb.w * k.psi(q);
          if (!with_stress) continue;
          k.evaluate(q, q, sigma, nullptr);
          for (int v = 0; v < kNumZeta; ++v) total[v] += qb.w * sigma[v];
        }
  }
}

}  // namespace

double Assembler::internal_energy(const PointKernel& k, const FieldCoeffs& u) const {
  ZetaVector total;
  double psi;
  integrate_states(space_, opt_.F_affine, k, u, false, total, psi);
  return psi;
}

StressPair Assembler::integrated_stress(const PointKernel& k, const FieldCoeffs& u, double* psi_integral) const {
  StressPair out;
  double psi;
  integrate_states(space_, opt_.F_affine, k, u, true, out.s, psi);
  if (psi_integral) *psi_integral = psi;
  return out;
}

double Assembler::mass_product(const FieldCoeffs& a, const FieldCoeffs& b) const {
  double acc = 0.0;
  for (int cp = 0; cp < mass_.rows(); ++cp)
    for (SparseMatrixR::InnerIterator it(mass_, cp); it; ++it) {
      const int cq = static_cast<int>(it.col());
      acc += it.value() * (a.at(cp, 0) * b.at(cq, 0) + a.at(cp, 1) * b.at(cq, 1) + a.at(cp, 2) * b.at(cq, 2));
    }
  return acc;
}

}  // namespace sgdyn
