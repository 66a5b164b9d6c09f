#pragma once

// Bivariate polynomial in (s, t) with s-degree <= 8 and t-degree <= 2.
// Used as the scalar type when the energy is evaluated along the line
// zeta(s, t) = zeta_minus + s * dF + t * dgradF, which yields the exact
// coefficients c_ab of every derivative of Psi along that line.  Products that
// would exceed the degree bounds throw instead of silently truncating.
// Only the coefficient box [0, ds] x [0, dt] is kept initialised.

#include <array>
#include <stdexcept>

namespace sgdyn {

class Jet {
 public:
  static constexpr int kMaxS = 8;
  static constexpr int kMaxT = 2;
  static constexpr int kStride = kMaxS + 1;

  Jet() { c_[0] = 0.0; }
  Jet(double v) { c_[0] = v; }  // NOLINT: implicit promotion of constants is intended

  static Jet linear_s(double c0, double c1) {
    Jet j(c0);
    j.c_[1] = c1;
    j.ds_ = 1;
    return j;
  }
  static Jet linear_t(double c0, double c1) {
    Jet j(c0);
    j.c_[kStride] = c1;
    j.dt_ = 1;
    return j;
  }

  // Coefficient of s^a t^b.
  double coeff(int a, int b) const { return (a <= ds_ && b <= dt_) ? c_[b * kStride + a] : 0.0; }
  void set_coeff(int a, int b, double v) {
    if (a > kMaxS || b > kMaxT) throw std::overflow_error("Jet degree bound exceeded");
    extend(a > ds_ ? a : ds_, b > dt_ ? b : dt_);
    c_[b * kStride + a] = v;
  }
  int degree_s() const { return ds_; }
  int degree_t() const { return dt_; }

  // Value at (s, t).
  double operator()(double s, double t) const {
    double acc = 0.0;
    for (int b = dt_; b >= 0; --b) {
      double row = 0.0;
      for (int a = ds_; a >= 0; --a) row = row * s + c_[b * kStride + a];
      acc = acc * t + row;
    }
    return acc;
  }

  Jet& operator+=(const Jet& o) {
    if (o.ds_ > ds_ || o.dt_ > dt_) extend(o.ds_ > ds_ ? o.ds_ : ds_, o.dt_ > dt_ ? o.dt_ : dt_);
    for (int b = 0; b <= o.dt_; ++b)
      for (int a = 0; a <= o.ds_; ++a) c_[b * kStride + a] += o.c_[b * kStride + a];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    if (o.ds_ > ds_ || o.dt_ > dt_) extend(o.ds_ > ds_ ? o.ds_ : ds_, o.dt_ > dt_ ? o.dt_ : dt_);
    for (int b = 0; b <= o.dt_; ++b)
      for (int a = 0; a <= o.ds_; ++a) c_[b * kStride + a] -= o.c_[b * kStride + a];
    return *this;
  }
  Jet& operator*=(double k) {
    for (int b = 0; b <= dt_; ++b)
      for (int a = 0; a <= ds_; ++a) c_[b * kStride + a] *= k;
    return *this;
  }
  Jet& operator+=(double k) {
    c_[0] += k;
    return *this;
  }
  Jet& operator-=(double k) {
    c_[0] -= k;
    return *this;
  }

  friend Jet operator*(const Jet& x, const Jet& y) {
    const int ds = x.ds_ + y.ds_;
    const int dt = x.dt_ + y.dt_;
    if (ds > kMaxS || dt > kMaxT) throw std::overflow_error("Jet degree bound exceeded");
    Jet r;
    r.ds_ = static_cast<signed char>(ds);
    r.dt_ = static_cast<signed char>(dt);
    for (int b = 0; b <= dt; ++b)
      for (int a = 0; a <= ds; ++a) r.c_[b * kStride + a] = 0.0;
    for (int b1 = 0; b1 <= x.dt_; ++b1)
      for (int a1 = 0; a1 <= x.ds_; ++a1) {
        const double xa = x.c_[b1 * kStride + a1];
        for (int b2 = 0; b2 <= y.dt_; ++b2) {
          double* out = &r.c_[(b1 + b2) * kStride + a1];
          const double* in = &y.c_[b2 * kStride];
          for (int a2 = 0; a2 <= y.ds_; ++a2) out[a2] += xa * in[a2];
        }
      }
    return r;
  }

  friend Jet operator+(Jet x, const Jet& y) { return x += y; }
  friend Jet operator-(Jet x, const Jet& y) { return x -= y; }
  friend Jet operator*(Jet x, double k) { return x *= k; }
  friend Jet operator*(double k, Jet x) { return x *= k; }
  friend Jet operator+(Jet x, double k) { return x += k; }
  friend Jet operator+(double k, Jet x) { return x += k; }
  friend Jet operator-(Jet x, double k) { return x -= k; }
  friend Jet operator-(double k, Jet x) {
    x *= -1.0;
    x += k;
    return x;
  }
  friend Jet operator-(Jet x) { return x *= -1.0; }

 private:
  void extend(int ds, int dt) {
    for (int b = 0; b <= dt; ++b)
      for (int a = (b <= dt_ ? ds_ + 1 : 0); a <= ds; ++a) c_[b * kStride + a] = 0.0;
    ds_ = static_cast<signed char>(ds);
    dt_ = static_cast<signed char>(dt);
  }

  std::array<double, (kMaxS + 1) * (kMaxT + 1)> c_;
  signed char ds_ = 0;
  signed char dt_ = 0;
};

}  // namespace sgdyn
