#pragma once

// Sparse multivariate polynomial in the 36 kinematic variables.  Built by
// symbolic composition of the strain measures, it serves as the reference
// representation of Psi: the along-line expansion of its derivatives gives
// the Taylor-series stresses without going through the analytic code path.

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "sgdyn/jet.hpp"
#include "sgdyn/material.hpp"
#include "sgdyn/zeta.hpp"

namespace sgdyn {

class SparsePolynomial {
 public:
  using Exponents = std::array<std::uint8_t, kNumZeta>;
  struct Term {
    Exponents exps;
    double coeff;
  };

  SparsePolynomial() = default;
  static SparsePolynomial constant(double c);
  static SparsePolynomial variable(int v);

  SparsePolynomial& operator+=(const SparsePolynomial& o);
  SparsePolynomial& operator-=(const SparsePolynomial& o);
  SparsePolynomial& operator*=(double k);
  friend SparsePolynomial operator+(SparsePolynomial a, const SparsePolynomial& b) { return a += b; }
  friend SparsePolynomial operator-(SparsePolynomial a, const SparsePolynomial& b) { return a -= b; }
  friend SparsePolynomial operator*(SparsePolynomial a, double k) { return a *= k; }
  friend SparsePolynomial operator*(double k, SparsePolynomial a) { return a *= k; }
  friend SparsePolynomial operator*(const SparsePolynomial& a, const SparsePolynomial& b);

  SparsePolynomial derivative(int v) const;
  // Evaluation with extended-precision accumulation.
  double evaluate(const ZetaVector& z) const;
  // Expansion of p(base + s * delta_F + t * delta_gradF): F variables move
  // with s, gradient variables with t.
  Jet along_line(const ZetaVector& base, const ZetaVector& delta) const;

  int degree_F() const;
  int degree_gradF() const;
  std::size_t num_terms() const { return terms_.size(); }
  std::vector<Term> terms() const;  // sorted by exponent vector

 private:
  struct Hash {
    std::size_t operator()(const Exponents& e) const noexcept;
  };
  void add_term(const Exponents& e, double c);
  std::unordered_map<Exponents, double, Hash> terms_;
};

// Psi and its first derivatives as polynomials, plus lazily built second
// derivatives for reference tangents.
class PsiPolynomialSet {
 public:
  explicit PsiPolynomialSet(const MaterialParams& m);
  const SparsePolynomial& psi() const { return psi_; }
  const SparsePolynomial& grad(int v) const { return grad_[v]; }
  const SparsePolynomial& hess(int v, int w) const;

 private:
  SparsePolynomial psi_;
  std::array<SparsePolynomial, kNumZeta> grad_;
  mutable std::vector<std::vector<SparsePolynomial>> hess_;
};

SparsePolynomial build_psi_polynomial(const MaterialParams& m);

}  // namespace sgdyn
