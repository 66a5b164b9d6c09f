#include "sgdyn/integrators.hpp"

#include <cmath>

#include <boost/math/quadrature/gauss.hpp>

#include "sgdyn/errors.hpp"
#include "sgdyn/sparse_polynomial.hpp"

namespace sgdyn {

std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Gonzalez: return "gonzalez";
    case SchemeKind::TaylorFull: return "taylor_full";
    case SchemeKind::TaylorReduced: return "taylor_reduced";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(const std::string& s) {
  if (s == "gonzalez" || s == "gs") return SchemeKind::Gonzalez;
  if (s == "taylor_full" || s == "ts") return SchemeKind::TaylorFull;
  if (s == "taylor_reduced" || s == "ts_reduced") return SchemeKind::TaylorReduced;
  throw InvalidParameter("unknown scheme kind '" + s + "'");
}

SchemeConfig SchemeConfig::gonzalez(double l_gs) {
  SchemeConfig c;
  c.kind = SchemeKind::Gonzalez;
  c.l_gs = l_gs;
  return c;
}

SchemeConfig SchemeConfig::taylor_full() { return SchemeConfig{}; }

SchemeConfig SchemeConfig::taylor_reduced(int kappa_F_max, int kappa_gradF_max) {
  SchemeConfig c;
  c.kind = SchemeKind::TaylorReduced;
  c.kappa_F_max = kappa_F_max;
  c.kappa_gradF_max = kappa_gradF_max;
  return c;
}

void SchemeConfig::validate() const {
  if (!(l_gs > 0.0) || !std::isfinite(l_gs)) throw InvalidParameter("l_GS must be positive");
  if (kappa_F_max < 1 || kappa_F_max > 8) throw InvalidParameter("kappa_F_max must lie in [1, 8]");
  if (kappa_gradF_max < 0 || kappa_gradF_max > 2)
    throw InvalidParameter("kappa_gradF_max must lie in [0, 2]");
  if (kind == SchemeKind::TaylorFull && (kappa_F_max != 8 || kappa_gradF_max != 2))
    throw InvalidParameter("taylor_full requires caps (8, 2)");
}

bool TaylorWeights::keep(int kappa_f, int kappa_g, int cap_f, int cap_g) {
  return kappa_f + kappa_g <= 2 || (kappa_f <= cap_f && kappa_g <= cap_g);
}

TaylorWeights::TaylorWeights(const SchemeConfig& cfg) {
  const int cf = cfg.kappa_F_max;
  const int cg = cfg.kappa_gradF_max;
  for (int b = 0; b < kT; ++b)
    for (int a = 0; a < kS; ++a) {
      const bool kf = keep(a + 1, b, cf, cg), kg = keep(a, b + 1, cf, cg);
      const double w1 = 1.0 / (a + b + 1), w2 = 1.0 / (a + b + 2);
      grad_w_[0][1][b][a] = kf ? w1 : 0.0;
      grad_w_[1][1][b][a] = kf ? 0.0 : w1;
      grad_w_[0][0][b][a] = kg ? w1 : 0.0;
      grad_w_[1][0][b][a] = kg ? 0.0 : w1;
      for (int nf = 0; nf < 3; ++nf) {
        const bool k2 = keep(a + nf, b + 2 - nf, cf, cg);
        hess_w_[0][nf][b][a] = k2 ? w2 : 0.0;
        hess_w_[1][nf][b][a] = k2 ? 0.0 : w2;
      }
    }
}

double TaylorWeights::reduce_grad(const Jet& j, bool f_var, bool omitted) const {
  const auto& w = grad_w_[omitted ? 1 : 0][f_var ? 1 : 0];
  double acc = 0.0;
  for (int b = 0; b <= j.degree_t(); ++b)
    for (int a = 0; a <= j.degree_s(); ++a) acc += w[b][a] * j.coeff(a, b);
  return acc;
}

double TaylorWeights::reduce_hess(const Jet& j, int n_f, bool omitted) const {
  const auto& w = hess_w_[omitted ? 1 : 0][n_f];
  double acc = 0.0;
  for (int b = 0; b <= j.degree_t(); ++b)
    for (int a = 0; a <= j.degree_s(); ++a) acc += w[b][a] * j.coeff(a, b);
  return acc;
}

ZetaArray<Jet> line_jets(const ZetaVector& base, const ZetaVector& delta) {
  ZetaArray<Jet> z;
  for (int v = 0; v < kNumZeta; ++v)
    z[v] = is_f_var(v) ? Jet::linear_s(base[v], delta[v]) : Jet::linear_t(base[v], delta[v]);
  return z;
}

namespace {

template <class E>
class GonzalezKernel final : public PointKernel {
 public:
  GonzalezKernel(const E& e, const SchemeConfig& cfg) : e_(e) {
    for (int v = 0; v < kNumZeta; ++v) w_[v] = is_f_var(v) ? 1.0 : cfg.l_gs * cfg.l_gs;
  }

  void evaluate(const QuadState& minus, const QuadState& plus, ZetaVector& stress,
                ZetaMatrix* tangent) const override {
    ZetaVector zm, delta, wd;
    for (int v = 0; v < kNumZeta; ++v) {
      zm[v] = 0.5 * (plus.z[v] + minus.z[v]);
      delta[v] = plus.z[v] - minus.z[v];
      wd[v] = w_[v] * delta[v];
    }
    ZetaVector gm;
    ZetaMatrix Hm;
    e_.evaluate(zm, IdentityReducer{}, &gm, tangent ? &Hm : nullptr);
    const double D = dot(delta, wd);
    if (D < kDegenerate) {
      stress = gm;
      if (tangent) *tangent = 0.25 * Hm;
      return;
    }
    const double N = e_.psi(plus.z) - e_.psi(minus.z) - dot(gm, delta);
    const double alpha = N / D;
    for (int v = 0; v < kNumZeta; ++v) stress[v] = gm[v] + alpha * wd[v];
    if (!tangent) return;

    ZetaVector gp;
    e_.evaluate(plus.z, IdentityReducer{}, &gp, nullptr);
    Eigen::Map<const Eigen::Matrix<double, kNumZeta, 1>> dv(delta.data());
    const Eigen::Matrix<double, kNumZeta, 1> hd = Hm * dv;
    Eigen::Matrix<double, kNumZeta, 1> q, wdv;
    for (int v = 0; v < kNumZeta; ++v) {
      q[v] = (0.5 * (gp[v] - gm[v]) - 0.25 * hd[v] - alpha * wd[v]) / D;
      wdv[v] = wd[v];
    }
    ZetaMatrix& K = *tangent;
    K = 0.25 * Hm;
    K.noalias() += wdv * q.transpose();
    for (int v = 0; v < kNumZeta; ++v) K(v, v) += 0.5 * alpha * w_[v];
  }

  double psi(const QuadState& q) const override { return e_.psi(q.z); }
  bool symmetric_tangent() const override { return false; }

 private:
  static constexpr double kDegenerate = 1e-28;
  E e_;
  ZetaVector w_;
};

// 4-point Gauss rule on [0, 1].
struct LineRule {
  double tau[4], w[4];
  LineRule() {
    using Gauss = boost::math::quadrature::gauss<double, 4>;
    const auto& x = Gauss::abscissa();
    const auto& wt = Gauss::weights();
    for (int j = 0; j < 2; ++j) {
      tau[2 * j] = 0.5 * (1.0 - x[j]);
      tau[2 * j + 1] = 0.5 * (1.0 + x[j]);
      w[2 * j] = w[2 * j + 1] = 0.5 * wt[j];
    }
  }
};
const LineRule kLine;

template <class E>
class TaylorKernel final : public PointKernel {
 public:
  TaylorKernel(const E& e, const SchemeConfig& cfg) : e_(e), weights_(cfg) {
    for (unsigned part : {kPartLocal, kPartGradient})
      if (E::truncates(part, cfg.kappa_F_max, cfg.kappa_gradF_max)) omitted_parts_ |= part;
  }

  void evaluate(const QuadState& minus, const QuadState& plus, ZetaVector& stress,
                ZetaMatrix* tangent) const override {
    ZetaVector delta, z, g;
    for (int v = 0; v < kNumZeta; ++v) delta[v] = plus.z[v] - minus.z[v];
    stress.fill(0.0);
    if (tangent) tangent->setZero();
    ZetaMatrix H;
    for (int q = 0; q < 4; ++q) {
      for (int v = 0; v < kNumZeta; ++v) z[v] = minus.z[v] + kLine.tau[q] * delta[v];
      e_.evaluate(z, IdentityReducer{}, &g, tangent ? &H : nullptr);
      for (int v = 0; v < kNumZeta; ++v) stress[v] += kLine.w[q] * g[v];
      if (tangent) *tangent += (0.5 * kLine.w[q] * kLine.tau[q]) * H;
    }
    if (!omitted_parts_) return;
    const ZetaArray<Jet> zj = line_jets(minus.z, delta);
    e_.evaluate(zj, weights_.omitted_reducer(), &g, tangent ? &H : nullptr, omitted_parts_);
    for (int v = 0; v < kNumZeta; ++v) stress[v] -= g[v];
    if (tangent) *tangent -= 0.5 * H;
  }

  double psi(const QuadState& q) const override { return e_.psi(q.z); }
  bool symmetric_tangent() const override { return true; }

 private:
  E e_;
  TaylorWeights weights_;
  unsigned omitted_parts_ = 0;
};

// Coefficient sums taken directly from the Jet expansion of the whole energy.
template <class E>
class TaylorJetKernel final : public PointKernel {
 public:
  TaylorJetKernel(const E& e, const SchemeConfig& cfg) : e_(e), weights_(cfg) {}

  void evaluate(const QuadState& minus, const QuadState& plus, ZetaVector& stress,
                ZetaMatrix* tangent) const override {
    ZetaVector delta;
    for (int v = 0; v < kNumZeta; ++v) delta[v] = plus.z[v] - minus.z[v];
    const ZetaArray<Jet> z = line_jets(minus.z, delta);
    e_.evaluate(z, weights_.reducer(), &stress, tangent);
    if (tangent) *tangent *= 0.5;
  }

  double psi(const QuadState& q) const override { return e_.psi(q.z); }
  bool symmetric_tangent() const override { return true; }

 private:
  E e_;
  TaylorWeights weights_;
};

template <class E>
class StaticKernel final : public PointKernel {
 public:
  explicit StaticKernel(const E& e) : e_(e) {}
  void evaluate(const QuadState&, const QuadState& plus, ZetaVector& stress,
                ZetaMatrix* tangent) const override {
    e_.evaluate(plus.z, IdentityReducer{}, &stress, tangent);
  }
  double psi(const QuadState& q) const override { return e_.psi(q.z); }
  bool symmetric_tangent() const override { return true; }

 private:
  E e_;
};

}  // namespace

std::unique_ptr<PointKernel> make_dynamic_kernel(const EnergyModel& e, const SchemeConfig& cfg) {
  cfg.validate();
  return std::visit(
      [&](const auto& model) -> std::unique_ptr<PointKernel> {
        using E = std::decay_t<decltype(model)>;
        if (cfg.kind == SchemeKind::Gonzalez) return std::make_unique<GonzalezKernel<E>>(model, cfg);
        return std::make_unique<TaylorKernel<E>>(model, cfg);
      },
      e);
}

std::unique_ptr<PointKernel> make_static_kernel(const EnergyModel& e) {
  return std::visit(
      [&](const auto& model) -> std::unique_ptr<PointKernel> {
        using E = std::decay_t<decltype(model)>;
        return std::make_unique<StaticKernel<E>>(model);
      },
      e);
}

namespace {

StressPair kernel_stresses(const HalfStepStates& h, const EnergyModel& e, SchemeConfig cfg) {
  StressPair out;
  make_dynamic_kernel(e, cfg)->evaluate(h.minus, h.plus, out.s, nullptr);
  return out;
}

ZetaMatrix kernel_tangent(const HalfStepStates& h, const EnergyModel& e, SchemeConfig cfg) {
  StressPair out;
  ZetaMatrix K;
  make_dynamic_kernel(e, cfg)->evaluate(h.minus, h.plus, out.s, &K);
  return K;
}

template <template <class> class Kernel>
std::unique_ptr<PointKernel> make_taylor_variant(const EnergyModel& e, const SchemeConfig& cfg) {
  cfg.validate();
  return std::visit(
      [&](const auto& model) -> std::unique_ptr<PointKernel> {
        using E = std::decay_t<decltype(model)>;
        return std::make_unique<Kernel<E>>(model, cfg);
      },
      e);
}

SchemeConfig as_gonzalez(SchemeConfig cfg) {
  cfg.kind = SchemeKind::Gonzalez;
  return cfg;
}

SchemeConfig as_taylor(SchemeConfig cfg) {
  if (cfg.kind == SchemeKind::Gonzalez)
    cfg.kind = (cfg.kappa_F_max == 8 && cfg.kappa_gradF_max == 2) ? SchemeKind::TaylorFull
                                                                   : SchemeKind::TaylorReduced;
  return cfg;
}

}  // namespace

StressPair gonzalez_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_stresses(h, e, as_gonzalez(cfg));
}
ZetaMatrix gonzalez_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_tangent(h, e, as_gonzalez(cfg));
}
StressPair taylor_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_stresses(h, e, as_taylor(cfg));
}
ZetaMatrix taylor_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_tangent(h, e, as_taylor(cfg));
}
StressPair taylor_stresses_jet(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  StressPair out;
  make_taylor_variant<TaylorJetKernel>(e, as_taylor(cfg))->evaluate(h.minus, h.plus, out.s, nullptr);
  return out;
}
ZetaMatrix taylor_tangent_jet(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  StressPair out;
  ZetaMatrix K;
  make_taylor_variant<TaylorJetKernel>(e, as_taylor(cfg))->evaluate(h.minus, h.plus, out.s, &K);
  return K;
}
StressPair scheme_stresses(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_stresses(h, e, cfg);
}
ZetaMatrix scheme_tangent(const HalfStepStates& h, const EnergyModel& e, const SchemeConfig& cfg) {
  return kernel_tangent(h, e, cfg);
}

StressPair taylor_stresses(const HalfStepStates& h, const PsiPolynomialSet& poly, const SchemeConfig& cfg) {
  const TaylorWeights w(as_taylor(cfg));
  const ZetaVector delta = h.delta();
  StressPair out;
  for (int v = 0; v < kNumZeta; ++v)
    out.s[v] = w.reduce_grad(poly.grad(v).along_line(h.minus.z, delta), is_f_var(v));
  return out;
}

ZetaMatrix taylor_tangent(const HalfStepStates& h, const PsiPolynomialSet& poly, const SchemeConfig& cfg) {
  const TaylorWeights w(as_taylor(cfg));
  const ZetaVector delta = h.delta();
  ZetaMatrix K;
  for (int v = 0; v < kNumZeta; ++v)
    for (int x = v; x < kNumZeta; ++x) {
      const int nf = int(is_f_var(v)) + int(is_f_var(x));
      const double val = 0.5 * w.reduce_hess(poly.hess(v, x).along_line(h.minus.z, delta), nf);
      K(v, x) = val;
      K(x, v) = val;
    }
  return K;
}

}  // namespace sgdyn
