#include "sgdyn/sparse_polynomial.hpp"

#include <algorithm>
#include <cmath>

#include "sgdyn/errors.hpp"

namespace sgdyn {

std::size_t SparsePolynomial::Hash::operator()(const Exponents& e) const noexcept {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : e) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

void SparsePolynomial::add_term(const Exponents& e, double c) {
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(e, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

SparsePolynomial SparsePolynomial::constant(double c) {
  SparsePolynomial p;
  p.add_term(Exponents{}, c);
  return p;
}

SparsePolynomial SparsePolynomial::variable(int v) {
  SparsePolynomial p;
  Exponents e{};
  e[v] = 1;
  p.add_term(e, 1.0);
  return p;
}

SparsePolynomial& SparsePolynomial::operator+=(const SparsePolynomial& o) {
  for (const auto& [e, c] : o.terms_) add_term(e, c);
  return *this;
}

SparsePolynomial& SparsePolynomial::operator-=(const SparsePolynomial& o) {
  for (const auto& [e, c] : o.terms_) add_term(e, -c);
  return *this;
}

SparsePolynomial& SparsePolynomial::operator*=(double k) {
  if (k == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& kv : terms_) kv.second *= k;
  return *this;
}

SparsePolynomial operator*(const SparsePolynomial& a, const SparsePolynomial& b) {
  SparsePolynomial r;
  for (const auto& [ea, ca] : a.terms_)
    for (const auto& [eb, cb] : b.terms_) {
      SparsePolynomial::Exponents e;
      for (int v = 0; v < kNumZeta; ++v) e[v] = static_cast<std::uint8_t>(ea[v] + eb[v]);
      r.add_term(e, ca * cb);
    }
  return r;
}

SparsePolynomial SparsePolynomial::derivative(int v) const {
  SparsePolynomial r;
  for (const auto& [e, c] : terms_) {
    if (e[v] == 0) continue;
    Exponents d = e;
    d[v] = static_cast<std::uint8_t>(e[v] - 1);
    r.add_term(d, c * e[v]);
  }
  return r;
}

double SparsePolynomial::evaluate(const ZetaVector& z) const {
  long double acc = 0.0L;
  for (const auto& [e, c] : terms_) {
    long double m = c;
    for (int v = 0; v < kNumZeta; ++v)
      for (int p = 0; p < e[v]; ++p) m *= z[v];
    acc += m;
  }
  return static_cast<double>(acc);
}

Jet SparsePolynomial::along_line(const ZetaVector& base, const ZetaVector& delta) const {
  std::array<Jet, kNumZeta> lin;
  for (int v = 0; v < kNumZeta; ++v)
    lin[v] = is_f_var(v) ? Jet::linear_s(base[v], delta[v]) : Jet::linear_t(base[v], delta[v]);
  Jet acc;
  for (const auto& [e, c] : terms_) {
    Jet m(c);
    for (int v = 0; v < kNumZeta; ++v)
      for (int p = 0; p < e[v]; ++p) m = m * lin[v];
    acc += m;
  }
  return acc;
}

int SparsePolynomial::degree_F() const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int v = 0; v < kNumF; ++v) s += e[v];
    d = std::max(d, s);
  }
  return d;
}

int SparsePolynomial::degree_gradF() const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int v = kNumF; v < kNumZeta; ++v) s += e[v];
    d = std::max(d, s);
  }
  return d;
}

std::vector<SparsePolynomial::Term> SparsePolynomial::terms() const {
  std::vector<Term> out;
  out.reserve(terms_.size());
  for (const auto& [e, c] : terms_) out.push_back({e, c});
  std::sort(out.begin(), out.end(), [](const Term& a, const Term& b) { return a.exps < b.exps; });
  return out;
}

SparsePolynomial build_psi_polynomial(const MaterialParams& m) {
  using P = SparsePolynomial;
  const double is2 = 1.0 / std::sqrt(2.0);
  const double is3 = 1.0 / std::sqrt(3.0);
  const double is6 = 1.0 / std::sqrt(6.0);

  auto F = [](int i, int J) { return P::variable(f_index(i, J)); };
  auto G = [](int i, int J, int K) { return P::variable(g_index(i, J, K)); };

  P E[3][3];
  for (int I = 0; I < 3; ++I)
    for (int J = 0; J < 3; ++J) {
      P c;
      for (int k = 0; k < 3; ++k) c += F(k, I) * F(k, J);
      if (I == J) c -= P::constant(1.0);
      E[I][J] = 0.5 * c;
    }
  const P e1 = is3 * (E[0][0] + E[1][1] + E[2][2]);
  const P e2 = is2 * (E[0][0] - E[1][1]);
  const P e3 = is6 * (E[0][0] + E[1][1] - 2.0 * E[2][2]);
  const P rho2 = e2 * e2 + e3 * e3;

  P psi = m.B1 * (e1 * e1);
  psi += m.B2 * rho2;
  psi += m.B3 * (e3 * (e3 * e3 - 3.0 * (e2 * e2)));
  psi += m.B4 * (rho2 * rho2);
  psi += m.B5 * (E[1][2] * E[1][2] + E[0][2] * E[0][2] + E[0][1] * E[0][1]);

  // Gradient part: l^2 sum_K (e2,K^2 + e3,K^2) with E_II,K = sum_k F_kI F_kI,K.
  P grad_part;
  for (int K = 0; K < 3; ++K) {
    P dE[3];
    for (int I = 0; I < 3; ++I)
      for (int k = 0; k < 3; ++k) dE[I] += F(k, I) * G(k, I, K);
    const P q2 = is2 * (dE[0] - dE[1]);
    const P q3 = is6 * (dE[0] + dE[1] - 2.0 * dE[2]);
    grad_part += q2 * q2 + q3 * q3;
  }
  psi += (m.l * m.l) * grad_part;
  return psi;
}

PsiPolynomialSet::PsiPolynomialSet(const MaterialParams& m) : psi_(build_psi_polynomial(m)) {
  for (int v = 0; v < kNumZeta; ++v) grad_[v] = psi_.derivative(v);
  hess_.resize(kNumZeta);
}

const SparsePolynomial& PsiPolynomialSet::hess(int v, int w) const {
  if (v > w) std::swap(v, w);
  auto& row = hess_[v];
  if (row.empty()) {
    row.resize(kNumZeta);
    for (int x = v; x < kNumZeta; ++x) row[x] = grad_[v].derivative(x);
  }
  return row[w];
}

}  // namespace sgdyn
