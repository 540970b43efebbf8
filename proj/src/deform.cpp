#include "g2/deform.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace g2::deform {

using fields::StructureField;
using fields::TensorField;

namespace {

Vec7 raise_vec(const Vec7& lo, const Metric7& m) {
  Vec7 up{};
  for (int a = 0; a < kDim; ++a) {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) acc += m.g_inv(a, e) * lo[static_cast<std::size_t>(e)];
    up[static_cast<std::size_t>(a)] = acc;
  }
  return up;
}

Vec7 lower_vec(const Vec7& up, const Metric7& m) {
  Vec7 lo{};
  for (int a = 0; a < kDim; ++a) {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) acc += m.g(a, e) * up[static_cast<std::size_t>(e)];
    lo[static_cast<std::size_t>(a)] = acc;
  }
  return lo;
}

void require_close(double diff, double scale, double rel_tol, const char* what) {
  if (diff > rel_tol * std::max(1.0, scale))
    throw std::runtime_error(std::string("deformation cross-check failed: ") + what +
                             " (residual " + std::to_string(diff) + ")");
}

// Quartic gamma blocks A^a_{bcd} B^m_{pqr} C^{bcp} D^{dqr}, factored through
// rank-3 intermediates.
Mat7 quartic_block(const Tensor7& a_up0, const Tensor7& b_up0, const Tensor7& c_up,
                   const Tensor7& d_up) {
  // e1(a, p, d) = A^a_{bcd} C^{bcp}
  Tensor7 e1(3);
  for (int a = 0; a < kDim; ++a)
    for (int p = 0; p < kDim; ++p)
      for (int d = 0; d < kDim; ++d) {
        double acc = 0.0;
        for (int b = 0; b < kDim; ++b)
          for (int c = 0; c < kDim; ++c) acc += a_up0(a, b, c, d) * c_up(b, c, p);
        e1(a, p, d) = acc;
      }
  // e2(m, p, d) = B^m_{pqr} D^{dqr}
  Tensor7 e2(3);
  for (int m = 0; m < kDim; ++m)
    for (int p = 0; p < kDim; ++p)
      for (int d = 0; d < kDim; ++d) {
        double acc = 0.0;
        for (int q = 0; q < kDim; ++q)
          for (int r = 0; r < kDim; ++r) acc += b_up0(m, p, q, r) * d_up(d, q, r);
        e2(m, p, d) = acc;
      }
  Mat7 out;
  for (int a = 0; a < kDim; ++a)
    for (int m = 0; m < kDim; ++m) {
      double acc = 0.0;
      for (int p = 0; p < kDim; ++p)
        for (int d = 0; d < kDim; ++d) acc += e1(a, p, d) * e2(m, p, d);
      out(a, m) = acc;
    }
  return out;
}

Mat7 symmetrize(const Mat7& m) {
  Mat7 r;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) r(i, j) = 0.5 * (m(i, j) + m(j, i));
  return r;
}

}  // namespace

GeneralDeformation build_general(const G2Structure& base, const Tensor7& chi) {
  GeneralDeformation d;
  d.chi = chi;
  d.chi.set_hint(SymmetryHint::FullyAntisymmetric);
  d.star_chi = hodge_star(d.chi, base.metric);

  // independent route: rebuild the whole structure from phi + chi
  d.deformed = metric_from_phi(base.phi + d.chi);

  const Metric7& g = base.metric;
  const Tensor7 psi_up = raise_all(base.psi, g);
  const Tensor7 chi_up = raise_all(d.chi, g);
  const Tensor7 sc_up = raise_all(d.star_chi, g);
  const Tensor7 phi_up = raise_all(base.phi, g);
  const Tensor7 phi_up12 = raise_slot(raise_slot(base.phi, 1, g), 2, g);  // phi_b^{mn}

  // s_ab = g_ab + (1/2) chi_mn(a phi_b)^mn + (1/8) chi_amn chi_bpq psi^mnpq
  //        + (1/24) chi_amn chi_bpq (*chi)^mnpq
  {
    Tensor7 dpsi(3);  // D_a(p,q) = chi_amn psi^{mnpq}
    Tensor7 dsc(3);
    for (int a = 0; a < kDim; ++a)
      for (int p = 0; p < kDim; ++p)
        for (int q = 0; q < kDim; ++q) {
          double acc1 = 0.0, acc2 = 0.0;
          for (int m = 0; m < kDim; ++m)
            for (int n = 0; n < kDim; ++n) {
              const double c = d.chi(a, m, n);
              if (c == 0.0) continue;
              acc1 += c * psi_up(m, n, p, q);
              acc2 += c * sc_up(m, n, p, q);
            }
          dpsi(a, p, q) = acc1;
          dsc(a, p, q) = acc2;
        }
    for (int a = 0; a < kDim; ++a)
      for (int b = a; b < kDim; ++b) {
        double lin = 0.0;
        for (int m = 0; m < kDim; ++m)
          for (int n = 0; n < kDim; ++n)
            lin += 0.5 * (d.chi(m, n, a) * phi_up12(b, m, n) + d.chi(m, n, b) * phi_up12(a, m, n));
        double quad = 0.0, cubic = 0.0;
        for (int p = 0; p < kDim; ++p)
          for (int q = 0; q < kDim; ++q) {
            quad += dpsi(a, p, q) * d.chi(b, p, q);
            cubic += dsc(a, p, q) * d.chi(b, p, q);
          }
        const double val = g.g(a, b) + 0.5 * lin + quad / 8.0 + cubic / 24.0;
        d.s(a, b) = val;
        d.s(b, a) = val;
      }
  }

  // gamma^am, term by term
  {
    const Tensor7 sc_up0 = raise_slot(d.star_chi, 0, g);  // *chi^a_{bcd}
    const Tensor7 psi_up0 = raise_slot(base.psi, 0, g);
    d.gamma = g.g_inv;
    d.gamma -= (1.0 / 96.0) * quartic_block(sc_up0, sc_up0, phi_up, phi_up);
    d.gamma -= (1.0 / 48.0) * symmetrize(quartic_block(sc_up0, sc_up0, phi_up, chi_up));
    d.gamma -= (1.0 / 48.0) * symmetrize(quartic_block(sc_up0, psi_up0, chi_up, chi_up));
    d.gamma -= (1.0 / 96.0) * quartic_block(psi_up0, psi_up0, chi_up, chi_up);
    d.gamma -= (1.0 / 96.0) * quartic_block(sc_up0, sc_up0, chi_up, chi_up);
    {
      const Tensor7 chi_up0 = raise_slot(d.chi, 0, g);
      Mat7 t6;
      for (int a = 0; a < kDim; ++a)
        for (int m = 0; m < kDim; ++m) {
          double acc = 0.0;
          for (int b = 0; b < kDim; ++b)
            for (int c = 0; c < kDim; ++c) acc += chi_up0(a, b, c) * phi_up(m, b, c);
          t6(a, m) = acc;
        }
      d.gamma -= 0.25 * symmetrize(t6);
    }
    {
      // (1/6) *chi^(a_{bcd} phi^{m)b}_e chi^{cde}
      const Tensor7 phi_up01 = raise_slot(raise_slot(base.phi, 0, g), 1, g);  // phi^{mb}_e
      Mat7 t7;
      for (int a = 0; a < kDim; ++a)
        for (int m = 0; m < kDim; ++m) {
          double acc = 0.0;
          for (int b = 0; b < kDim; ++b)
            for (int e = 0; e < kDim; ++e) {
              double k = 0.0;
              for (int c = 0; c < kDim; ++c)
                for (int dd = 0; dd < kDim; ++dd) k += sc_up0(a, b, c, dd) * chi_up(c, dd, e);
              acc += k * phi_up01(m, b, e);
            }
          t7(a, m) = acc;
        }
      d.gamma += (1.0 / 6.0) * symmetrize(t7);
    }
    {
      Mat7 t8;
      for (int a = 0; a < kDim; ++a)
        for (int m = 0; m < kDim; ++m) {
          double acc = 0.0;
          for (int b = 0; b < kDim; ++b)
            for (int c = 0; c < kDim; ++c)
              for (int dd = 0; dd < kDim; ++dd) acc += sc_up0(a, b, c, dd) * psi_up(m, b, c, dd);
          t8(a, m) = acc;
        }
      d.gamma += (1.0 / 12.0) * symmetrize(t8);
    }
    {
      double cphi = 0.0;
      for (int b = 0; b < kDim; ++b)
        for (int c = 0; c < kDim; ++c)
          for (int e = 0; e < kDim; ++e) cphi += chi_up(b, c, e) * base.phi(b, c, e);
      d.gamma += (cphi / 12.0) * g.g_inv;
    }
  }

  // det ratio from (1/7) gamma^am s_am, then g~ = ratio^{-1/2} s
  {
    double gs = 0.0;
    for (int a = 0; a < kDim; ++a)
      for (int m = 0; m < kDim; ++m) gs += d.gamma(a, m) * d.s(a, m);
    gs /= 7.0;
    if (!(gs > 0.0)) throw std::runtime_error("deformation: gamma.s trace not positive");
    d.det_ratio = std::pow(gs, 2.0 / 3.0);
  }
  d.g_tilde = Metric7::from_matrix(std::pow(d.det_ratio, -0.5) * d.s);

  // cross checks: two routes to the metric, inverse and determinant
  require_close(max_abs(d.g_tilde.g - d.deformed.metric.g), max_abs(d.g_tilde.g), 1e-9,
                "g-tilde vs reconstruction");
  require_close(max_abs(std::pow(d.det_ratio, -1.0) * d.gamma - d.g_tilde.g_inv),
                max_abs(d.g_tilde.g_inv), 1e-9, "closed-form inverse metric");
  {
    const double ratio_direct = (d.deformed.metric.sqrt_det * d.deformed.metric.sqrt_det) /
                                (base.metric.sqrt_det * base.metric.sqrt_det);
    require_close(std::abs(d.det_ratio - ratio_direct), ratio_direct, 1e-9, "determinant ratio");
  }

  // psi~ lowered and raised
  {
    Tensor7 up = std::pow(d.det_ratio, -0.5) * (psi_up + sc_up);
    for (int s = 0; s < 4; ++s) up.set_variance(s, Variance::Up);
    d.psi_tilde_up = up;
    Tensor7 lowered = up;
    for (int s = 0; s < 4; ++s) lowered = lower_slot(lowered, s, d.g_tilde);
    d.psi_tilde = lowered;
    d.psi_tilde.set_hint(SymmetryHint::FullyAntisymmetric);
    require_close(max_abs(d.psi_tilde - d.deformed.psi), max_abs(d.deformed.psi), 1e-9,
                  "psi-tilde vs reconstruction");
    require_close(max_abs(raise_all(d.psi_tilde, d.g_tilde) - d.psi_tilde_up),
                  max_abs(d.psi_tilde_up), 1e-9, "raised psi-tilde");
  }
  return d;
}

Tensor7 phi_tilde_raised(const G2Structure& base, const GeneralDeformation& def) {
  const Metric7& g = base.metric;
  const Tensor7 phi_up12 = raise_slot(raise_slot(base.phi, 1, g), 2, g);
  const Tensor7 psi_up = raise_all(base.psi, g);
  const Tensor7 sc_up = raise_all(def.star_chi, g);
  Tensor7 out(3, {Variance::Lo, Variance::Up, Variance::Up});
  const double factor = 0.25 * std::pow(def.det_ratio, -0.5);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c) {
        double acc = 4.0 * phi_up12(a, b, c);
        for (int m = 0; m < kDim; ++m)
          for (int n = 0; n < kDim; ++n) {
            const double p = base.phi(a, m, n);
            const double x = def.chi(a, m, n);
            if (p != 0.0) acc += p * sc_up(m, n, b, c);
            if (x != 0.0) acc += x * (psi_up(m, n, b, c) + sc_up(m, n, b, c));
          }
        out(a, b, c) = factor * acc;
      }
  return out;
}

DeformationField::DeformationField(const StructureField& base, TensorField chi)
    : base_(&base), chi_(std::move(chi)), s_(base.spec(), 2) {
  if (chi_.rank() != 3) throw std::invalid_argument("DeformationField: chi must be a 3-form field");
  const int npts = base.point_count();
  pts_.reserve(static_cast<std::size_t>(npts));
  for (int p = 0; p < npts; ++p) {
    pts_.push_back(build_general(base.at(p), chi_.value(p)));
    s_.set_value(p, tensor_from_mat(pts_.back().s));
  }
}

fields::StructureField DeformationField::deformed_structure_field() const {
  TensorField phi_tilde(base_->spec(), 3);
  for (int p = 0; p < base_->point_count(); ++p)
    phi_tilde.set_value(p, base_->at(p).phi + pts_[static_cast<std::size_t>(p)].chi);
  return StructureField::from_phi(phi_tilde);
}

Tensor7 DeformationField::delta_christoffel(int p) const {
  const GeneralDeformation& d = pts_[static_cast<std::size_t>(p)];
  const Tensor7 grad_s = base_->covariant_derivative(s_, p);  // (c; a d) = nabla_c s_ad
  const Mat7& gti = d.g_tilde.g_inv;
  const Mat7& gt = d.g_tilde.g;
  // trace part: tr_e = g~^mn nabla_e s_mn
  Vec7 tr{};
  for (int e = 0; e < kDim; ++e) {
    double acc = 0.0;
    for (int m = 0; m < kDim; ++m)
      for (int n = 0; n < kDim; ++n) acc += gti(m, n) * grad_s(e, m, n);
    tr[static_cast<std::size_t>(e)] = acc;
  }
  const double factor = 0.5 * std::pow(d.det_ratio, -0.5);
  Tensor7 out(3, {Variance::Lo, Variance::Up, Variance::Lo});
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c) {
        double acc = 0.0;
        for (int dd = 0; dd < kDim; ++dd)
          acc += gti(b, dd) * (grad_s(c, a, dd) + grad_s(a, c, dd) - grad_s(dd, a, c));
        double trace_part = 0.0;
        if (a == b) trace_part += tr[static_cast<std::size_t>(c)];
        if (c == b) trace_part += tr[static_cast<std::size_t>(a)];
        for (int e = 0; e < kDim; ++e) trace_part -= gt(a, c) * gti(b, e) * tr[static_cast<std::size_t>(e)];
        out(a, b, c) = factor * (acc - trace_part / 9.0);
      }
  return out;
}

Mat7 DeformationField::deformed_torsion_general(const Mat7& base_t, int p) const {
  const GeneralDeformation& d = pts_[static_cast<std::size_t>(p)];
  const G2Structure& s = base_->at(p);
  const Metric7& g = s.metric;
  const Tensor7 grad_chi = base_->covariant_derivative(chi_, p);  // (a; b c d)
  const Tensor7 psi_up = raise_all(s.psi, g);
  const Tensor7 sc_up = raise_all(d.star_chi, g);

  Mat7 t_mixed;  // T_a^e
  for (int a = 0; a < kDim; ++a)
    for (int e = 0; e < kDim; ++e) {
      double acc = 0.0;
      for (int c = 0; c < kDim; ++c) acc += base_t(a, c) * g.g_inv(c, e);
      t_mixed(a, e) = acc;
    }

  // F(e, m) = psi_ebcd *chi^{mbcd}
  Mat7 f;
  for (int e = 0; e < kDim; ++e)
    for (int m = 0; m < kDim; ++m) {
      double acc = 0.0;
      for (int b = 0; b < kDim; ++b)
        for (int c = 0; c < kDim; ++c)
          for (int dd = 0; dd < kDim; ++dd) acc += s.psi(e, b, c, dd) * sc_up(m, b, c, dd);
      f(e, m) = acc;
    }

  const Tensor7 phit = phi_tilde_raised(s, d);      // phi~_e^{mb}
  const Tensor7 dgamma = delta_christoffel(p);      // (a, e, b)
  const double ratio_m12 = std::pow(d.det_ratio, -0.5);

  Mat7 t_tilde_mixed;  // T~_a^m
  for (int a = 0; a < kDim; ++a)
    for (int m = 0; m < kDim; ++m) {
      double acc = 24.0 * t_mixed(a, m);
      for (int e = 0; e < kDim; ++e) acc += t_mixed(a, e) * f(e, m);
      for (int b = 0; b < kDim; ++b)
        for (int c = 0; c < kDim; ++c)
          for (int dd = 0; dd < kDim; ++dd)
            acc += grad_chi(a, b, c, dd) * (psi_up(m, b, c, dd) + sc_up(m, b, c, dd));
      acc *= ratio_m12 / 24.0;
      double conn = 0.0;
      for (int e = 0; e < kDim; ++e)
        for (int b = 0; b < kDim; ++b) conn += dgamma(a, e, b) * phit(e, m, b);
      t_tilde_mixed(a, m) = acc - 0.5 * conn;
    }

  Mat7 t_tilde;
  for (int a = 0; a < kDim; ++a)
    for (int n = 0; n < kDim; ++n) {
      double acc = 0.0;
      for (int m = 0; m < kDim; ++m) acc += t_tilde_mixed(a, m) * d.g_tilde.g(m, n);
      t_tilde(a, n) = acc;
    }
  return t_tilde;
}

double DeformationField::deformed_tau1(const Mat7& base_t, int p) const {
  const GeneralDeformation& d = pts_[static_cast<std::size_t>(p)];
  const G2Structure& s = base_->at(p);
  const Metric7& g = s.metric;
  const Tensor7 grad_chi = base_->covariant_derivative(chi_, p);
  const Tensor7 psi_up = raise_all(s.psi, g);
  const Tensor7 sc_up = raise_all(d.star_chi, g);
  double tau1 = 0.0;  // (1/7) T_a^a
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b) tau1 += base_t(a, b) * g.g_inv(a, b);
  tau1 /= 7.0;
  double acc = 0.0;
  for (int a = 0; a < kDim; ++a)
    for (int e = 0; e < kDim; ++e) {
      double t_ae = 0.0;  // T_a^e
      for (int c = 0; c < kDim; ++c) t_ae += base_t(a, c) * g.g_inv(c, e);
      if (t_ae == 0.0) continue;
      double f = 0.0;  // psi_ebcd *chi^{abcd}
      for (int b = 0; b < kDim; ++b)
        for (int c = 0; c < kDim; ++c)
          for (int dd = 0; dd < kDim; ++dd) f += s.psi(e, b, c, dd) * sc_up(a, b, c, dd);
      acc += t_ae * f;
    }
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c)
        for (int dd = 0; dd < kDim; ++dd)
          acc += grad_chi(a, b, c, dd) * (psi_up(a, b, c, dd) + sc_up(a, b, c, dd));
  return std::pow(d.det_ratio, -0.5) * (tau1 + acc / 168.0);
}

Tensor7 v7_chi(const G2Structure& base, const Vec7& v_up) {
  Tensor7 chi(3);
  for (int b = 0; b < kDim; ++b)
    for (int c = 0; c < kDim; ++c)
      for (int dd = 0; dd < kDim; ++dd) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += base.psi(b, c, dd, e) * v_up[static_cast<std::size_t>(e)];
        chi(b, c, dd) = acc;
      }
  chi.set_hint(SymmetryHint::FullyAntisymmetric);
  return chi;
}

fields::TensorField v7_chi_field(const StructureField& base, const TensorField& v) {
  TensorField chi(base.spec(), 3);
  for (int p = 0; p < base.point_count(); ++p)
    chi.set_value(p, v7_chi(base.at(p), vector_from_form(v.value(p))));
  return chi;
}

V7Deformation v7_deform(const StructureField& base, const TensorField& v) {
  if (v.rank() != 1 || v.variance()[0] != Variance::Up)
    throw std::invalid_argument("v7_deform: v must be a vector field with an upper index");
  V7Deformation out{v, TensorField(base.spec(), 0), StructureField()};
  TensorField phi_tilde(base.spec(), 3);
  for (int p = 0; p < base.point_count(); ++p) {
    const G2Structure& s = base.at(p);
    const Vec7 vu = vector_from_form(v.value(p));
    phi_tilde.set_value(p, s.phi + v7_chi(s, vu));
    Tensor7 m2(0);
    const Vec7 vl = lower_vec(vu, s.metric);
    m2.at_flat(0) = dot(vu, vl);
    out.m2.set_value(p, m2);
  }
  // positivity holds for every v; from_phi would throw otherwise
  out.deformed = StructureField::from_phi(phi_tilde);
  return out;
}

fields::TensorField v7_inverse_vector(const StructureField& base, const TensorField& v) {
  TensorField out(base.spec(), 1, Variance::Up);
  for (int p = 0; p < base.point_count(); ++p) {
    const G2Structure& s = base.at(p);
    const Vec7 vu = vector_from_form(v.value(p));
    const double m2 = dot(vu, lower_vec(vu, s.metric));
    const double factor = -std::pow(1.0 + m2, -2.0 / 3.0);
    Tensor7 t(1, Variance::Up);
    for (int i = 0; i < kDim; ++i) t(i) = factor * vu[static_cast<std::size_t>(i)];
    out.set_value(p, t);
  }
  return out;
}

TwoTensorDecomposition grad_v_decompose(const StructureField& base, const TensorField& v, int p) {
  const G2Structure& s = base.at(p);
  // nabla_a v_b with v_b = g_bc v^c, via the product rule on the tabulated
  // upper components so no lowered field has to be materialized.
  Mat7 grad;
  const Tensor7 gamma = base.christoffel_field().value(p);
  const Tensor7 vv = v.value(p);
  for (int axis : base.spec().active_axes) {
    const Tensor7 dv = fields::partial_derivative(v, axis, p);
    const Tensor7 dg = fields::partial_derivative(base.metric_field(), axis, p);
    for (int b = 0; b < kDim; ++b) {
      double acc = 0.0;
      for (int c = 0; c < kDim; ++c) acc += dg(b, c) * vv(c) + s.metric.g(b, c) * dv(c);
      grad(axis, b) += acc;
    }
  }
  Vec7 v_lo = lower_vec(vector_from_form(vv), s.metric);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += gamma(a, e, b) * v_lo[static_cast<std::size_t>(e)];
      grad(a, b) -= acc;
    }
  return decompose_2tensor(grad, s);
}

double v7_inverse_gradient_residual(const StructureField& base, const TensorField& v,
                                    const V7Deformation& def, int p) {
  const G2Structure& s = base.at(p);
  const Vec7 vu = vector_from_form(v.value(p));
  const Vec7 vl = lower_vec(vu, s.metric);
  const double m2 = dot(vu, vl);
  const TwoTensorDecomposition gv = grad_v_decompose(base, v, p);
  const Tensor7& v14 = gv.tau14;
  const Mat7& v27 = gv.tau27;
  const double v1 = gv.tau1;
  Vec7 v7_up = raise_vec(gv.tau7, s.metric);

  // direct FD route on the deformed structure
  const TensorField vt = v7_inverse_vector(base, v);
  Mat7 direct;
  {
    const StructureField& dsf = def.deformed;
    const Tensor7 gamma = dsf.christoffel_field().value(p);
    const Tensor7 vtv = vt.value(p);
    const G2Structure& ds = dsf.at(p);
    for (int axis : base.spec().active_axes) {
      const Tensor7 dv = fields::partial_derivative(vt, axis, p);
      const Tensor7 dg = fields::partial_derivative(dsf.metric_field(), axis, p);
      for (int b = 0; b < kDim; ++b) {
        double acc = 0.0;
        for (int c = 0; c < kDim; ++c) acc += dg(b, c) * vtv(c) + ds.metric.g(b, c) * dv(c);
        direct(axis, b) += acc;
      }
    }
    Vec7 vt_lo = lower_vec(vector_from_form(vtv), ds.metric);
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += gamma(a, e, b) * vt_lo[static_cast<std::size_t>(e)];
        direct(a, b) -= acc;
      }
  }

  // closed form
  const double q27 = [&] {
    double acc = 0.0;
    for (int m = 0; m < kDim; ++m)
      for (int n = 0; n < kDim; ++n)
        acc += v27(m, n) * vu[static_cast<std::size_t>(m)] * vu[static_cast<std::size_t>(n)];
    return acc;
  }();
  Vec7 yv{};  // v^b (v27)_b.
  Vec7 wv{};  // v^b (v14)_b.
  for (int c = 0; c < kDim; ++c) {
    double a27 = 0.0, a14 = 0.0;
    for (int b = 0; b < kDim; ++b) {
      a27 += vu[static_cast<std::size_t>(b)] * v27(b, c);
      a14 += vu[static_cast<std::size_t>(b)] * v14(b, c);
    }
    yv[static_cast<std::size_t>(c)] = a27;
    wv[static_cast<std::size_t>(c)] = a14;
  }
  const double p1 = std::pow(1.0 + m2, -1.0 / 3.0);
  const double p4 = std::pow(1.0 + m2, -4.0 / 3.0);
  const double p7 = std::pow(1.0 + m2, -7.0 / 3.0);
  double worst = 0.0;
  for (int a = 0; a < kDim; ++a)
    for (int c = 0; c < kDim; ++c) {
      const double va = vl[static_cast<std::size_t>(a)];
      const double vc = vl[static_cast<std::size_t>(c)];
      double rhs = (2.0 / 3.0) * p7 * va * vc * ((5.0 + 2.0 * m2) * v1 - q27);
      rhs -= p1 * v27(a, c);
      rhs -= (1.0 / 3.0) * p4 * s.metric.g(a, c) * ((3.0 + 4.0 * m2) * v1 + q27);
      rhs -= p4 * v14(a, c);
      // the first pairing carries 9 + 3M, not a bare 3; forced by the
      // direct recomputation with exact linear vector fields
      rhs += (1.0 / 3.0) * p7 *
             ((9.0 + 3.0 * m2) * yv[static_cast<std::size_t>(a)] * vc +
              (1.0 + 3.0 * m2) * yv[static_cast<std::size_t>(c)] * va);
      {
        double phabd = 0.0, phcbd = 0.0;
        for (int b = 0; b < kDim; ++b)
          for (int dd = 0; dd < kDim; ++dd) {
            phabd += s.phi(a, b, dd) * vu[static_cast<std::size_t>(b)] * v7_up[static_cast<std::size_t>(dd)];
            phcbd += s.phi(c, b, dd) * vu[static_cast<std::size_t>(b)] * v7_up[static_cast<std::size_t>(dd)];
          }
        rhs += (2.0 / 3.0) * p7 * (3.0 * phabd * vc - phcbd * va);
      }
      rhs += (2.0 / 3.0) * p7 *
             (va * wv[static_cast<std::size_t>(c)] - 3.0 * vc * wv[static_cast<std::size_t>(a)]);
      {
        double phbac = 0.0;
        for (int b = 0; b < kDim; ++b) phbac += v7_up[static_cast<std::size_t>(b)] * s.phi(b, a, c);
        rhs -= p4 * phbac;
      }
      worst = std::max(worst, std::abs(direct(a, c) - rhs));
    }
  return worst;
}

fields::TensorField v7_plus_v14_field(const StructureField& base, const TensorField& v) {
  TensorField out(base.spec(), 2);
  for (int p = 0; p < base.point_count(); ++p) {
    const TwoTensorDecomposition gv = grad_v_decompose(base, v, p);
    const Mat7 seven = vector_into_phi(gv.tau7, base.at(p));
    Tensor7 t(2);
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j) t(i, j) = seven(i, j) + gv.tau14(i, j);
    t.set_hint(SymmetryHint::FullyAntisymmetric);
    out.set_value(p, t);
  }
  return out;
}

double dv_consistency_residual(const TensorField& two_form_field, int p) {
  return max_abs(fields::exterior_derivative(two_form_field, p));
}

double dv1_residual(const StructureField& base, const TensorField& v, int p) {
  // d(v-flat) = 2 (v7 . phi) + 2 v14
  TensorField v_flat(base.spec(), 1);
  for (int q = 0; q < base.point_count(); ++q) {
    const Vec7 lo = lower_vec(vector_from_form(v.value(q)), base.at(q).metric);
    v_flat.set_value(q, form_from_vector(lo));
  }
  const Tensor7 d = fields::exterior_derivative(v_flat, p);
  const TwoTensorDecomposition gv = grad_v_decompose(base, v, p);
  const Mat7 seven = vector_into_phi(gv.tau7, base.at(p));
  double worst = 0.0;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      worst = std::max(worst, std::abs(d(i, j) - 2.0 * (seven(i, j) + gv.tau14(i, j))));
  return worst;
}

namespace {

// Shared scratch for the closed-form torsion formulas: every contraction of
// v, the grad-v split and the torsion components against phi/psi that the
// theorems use, raised once with the base metric.
struct V7Scratch {
  const G2Structure& s;
  Vec7 v_up, v_lo;
  double m2, om;  // M and 1+M

  V7Scratch(const G2Structure& base, const Vec7& vup) : s(base), v_up(vup) {
    v_lo = lower_vec(v_up, s.metric);
    m2 = dot(v_up, v_lo);
    om = 1.0 + m2;
  }

  // sum_e phi(e, a, b) x^e
  double phiV(int a, int b, const Vec7& x) const {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) acc += s.phi(e, a, b) * x[static_cast<std::size_t>(e)];
    return acc;
  }
  // sum_{e,f} phi(a, e, f) x^e y^f
  double phi3(int a, const Vec7& x, const Vec7& y) const {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) {
      const double xe = x[static_cast<std::size_t>(e)];
      if (xe == 0.0) continue;
      for (int f = 0; f < kDim; ++f) acc += s.phi(a, e, f) * xe * y[static_cast<std::size_t>(f)];
    }
    return acc;
  }
  // sum_{e,f} psi(a, n, e, f) x^e y^f
  double psi4(int a, int n, const Vec7& x, const Vec7& y) const {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) {
      const double xe = x[static_cast<std::size_t>(e)];
      if (xe == 0.0) continue;
      for (int f = 0; f < kDim; ++f) acc += s.psi(a, n, e, f) * xe * y[static_cast<std::size_t>(f)];
    }
    return acc;
  }
  // q(h) = h_mn v^m v^n
  double quad(const Mat7& h) const {
    double acc = 0.0;
    for (int m = 0; m < kDim; ++m)
      for (int n = 0; n < kDim; ++n)
        acc += h(m, n) * v_up[static_cast<std::size_t>(m)] * v_up[static_cast<std::size_t>(n)];
    return acc;
  }
  // (h . v)_a = v^e h_ea and its raised version
  Vec7 contract_lo(const Mat7& h) const {
    Vec7 r{};
    for (int a = 0; a < kDim; ++a) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += v_up[static_cast<std::size_t>(e)] * h(e, a);
      r[static_cast<std::size_t>(a)] = acc;
    }
    return r;
  }
  Vec7 contract_lo(const Tensor7& t) const {
    Vec7 r{};
    for (int a = 0; a < kDim; ++a) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += v_up[static_cast<std::size_t>(e)] * t(e, a);
      r[static_cast<std::size_t>(a)] = acc;
    }
    return r;
  }
  // X(a, b) = sum_{e,f} phi(a, e, f) v^e (h)^f_b  (h mixed on its first slot)
  Mat7 phi_v_mixed(const Mat7& h_mixed_first) const {
    Mat7 r;
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) {
          const double ve = v_up[static_cast<std::size_t>(e)];
          if (ve == 0.0) continue;
          for (int f = 0; f < kDim; ++f) acc += s.phi(a, e, f) * ve * h_mixed_first(f, b);
        }
        r(a, b) = acc;
      }
    return r;
  }
  Mat7 mixed_first(const Mat7& h) const {  // h^f_b = g^{fe} h_eb
    Mat7 r;
    for (int f = 0; f < kDim; ++f)
      for (int b = 0; b < kDim; ++b) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += s.metric.g_inv(f, e) * h(e, b);
        r(f, b) = acc;
      }
    return r;
  }
  Mat7 mixed_first(const Tensor7& t) const {
    Mat7 r;
    for (int f = 0; f < kDim; ++f)
      for (int b = 0; b < kDim; ++b) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += s.metric.g_inv(f, e) * t(e, b);
        r(f, b) = acc;
      }
    return r;
  }
};

}  // namespace

V7TorsionResult v7_torsion_formula(const G2Structure& base, const torsion::TorsionData& tau,
                                   const Vec7& v_up, const TwoTensorDecomposition& grad_v) {
  const Metric7& g = base.metric;
  const V7Scratch sc(base, v_up);
  const double om = sc.om;
  const double m2 = sc.m2;
  const double pa = std::pow(om, -4.0 / 3.0);
  const double pb = std::pow(om, -1.0 / 3.0);

  const double v1 = grad_v.tau1;
  const Vec7& v7_lo = grad_v.tau7;
  const Vec7 v7_up = raise_vec(v7_lo, g);
  const Tensor7& v14 = grad_v.tau14;
  const Mat7& v27 = grad_v.tau27;
  const double tau1 = tau.tau1;
  const Vec7& t7_lo = tau.tau7;
  const Vec7 t7_up = raise_vec(t7_lo, g);
  const Tensor7& t14 = tau.tau14;
  const Mat7& t27 = tau.tau27;
  const Vec7& v_lo = sc.v_lo;

  const double v7v = dot(v7_lo, v_up);
  const double t7v = dot(t7_lo, v_up);
  const double q27 = sc.quad(v27);
  const double qt27 = sc.quad(t27);
  const Vec7 w = sc.contract_lo(v14);     // v^e v14_ea
  const Vec7 y = sc.contract_lo(v27);     // v^e v27_ea
  const Vec7 wt14 = sc.contract_lo(t14);  // v^e tau14_ea
  const Vec7 yt27 = sc.contract_lo(t27);
  const Vec7 w_up = raise_vec(w, g);
  const Vec7 y_up = raise_vec(y, g);
  const Mat7 mv27 = sc.mixed_first(v27);
  const Mat7 m14 = sc.mixed_first(t14);
  const Mat7 m27 = sc.mixed_first(t27);

  V7TorsionResult out;
  for (int a = 0; a < kDim; ++a)
    for (int n = 0; n < kDim; ++n) {
      const double va = v_lo[static_cast<std::size_t>(a)];
      const double vn = v_lo[static_cast<std::size_t>(n)];
      double ga = 0.0;  // (1+M)^{-4/3} group
      ga += v1 * (va * vn - om * g.g(a, n));
      // phi_anm x^m = phi_man x^m by cyclicity, which is phiV(a, n, x)
      ga -= (4.0 / 3.0) * om * v1 * sc.phiV(a, n, v_up);
      ga -= (1.0 + (4.0 / 3.0) * m2) * sc.phiV(a, n, v7_up);
      ga -= (1.0 / 3.0) * sc.psi4(a, n, v_up, v7_up);
      ga += (5.0 / 3.0) * va * sc.phi3(n, v_up, v7_up);
      ga += (4.0 / 3.0) * vn * sc.phi3(a, v_up, v7_up);
      ga += (1.0 / 3.0) * v7v * sc.phiV(a, n, v_up);
      ga += (1.0 / 3.0) * vn * v7_lo[static_cast<std::size_t>(a)];
      ga += (8.0 / 3.0) * va * v7_lo[static_cast<std::size_t>(n)];
      ga -= om * v14(a, n);
      ga -= w[static_cast<std::size_t>(a)] * vn - w[static_cast<std::size_t>(n)] * va;
      // the phi term takes the contraction v14^{pm} v_p = +w_up^m while the
      // psi term right after takes the opposite order; both pinned by the
      // direct recomputation
      ga += (1.0 / 3.0) * sc.phiV(a, n, w_up);
      ga -= (1.0 / 3.0) * sc.psi4(a, n, v_up, w_up);
      ga -= om * v27(a, n);
      ga += y[static_cast<std::size_t>(a)] * vn;
      {  // -(1+M) phi^{mp} (v27)_p. v_m with free slots in the (n, a)
         // order; the transposed order fails the direct recomputation
        double x = 0.0;
        for (int e = 0; e < kDim; ++e) {
          const double ve = v_up[static_cast<std::size_t>(e)];
          if (ve == 0.0) continue;
          for (int f = 0; f < kDim; ++f) x += base.phi(n, e, f) * ve * mv27(f, a);
        }
        ga -= om * x;
      }
      ga -= (1.0 / 3.0) * sc.phiV(a, n, y_up);  // phi_anm v27^{mp} v_p
      ga += (1.0 / 3.0) * sc.psi4(a, n, v_up, y_up);
      ga += va * sc.phi3(n, v_up, y_up);
      ga -= (1.0 / 3.0) * sc.phiV(a, n, v_up) * q27;

      double gb = 0.0;  // (1+M)^{-1/3} group
      gb += tau1 * g.g(a, n);
      gb += tau1 * sc.phiV(a, n, v_up);
      gb += sc.phiV(a, n, t7_up);
      gb += va * t7_lo[static_cast<std::size_t>(n)];
      gb -= g.g(a, n) * t7v;
      gb += sc.psi4(a, n, t7_up, v_up);
      gb += t14(a, n);
      {  // - phi_nmp v^m (tau14)^p_a + phi_nmp v^m (tau27)^p_a
        double x14 = 0.0, x27 = 0.0;
        for (int m = 0; m < kDim; ++m) {
          const double vm = v_up[static_cast<std::size_t>(m)];
          if (vm == 0.0) continue;
          for (int p = 0; p < kDim; ++p) {
            x14 += base.phi(n, m, p) * vm * m14(p, a);
            x27 += base.phi(n, m, p) * vm * m27(p, a);
          }
        }
        gb -= x14;
        gb += x27;
      }
      gb += t27(a, n);

      out.T(a, n) = pa * ga + pb * gb;
    }

  // tau~1
  out.tau1 = std::pow(om, -2.0 / 3.0) *
             ((1.0 + m2 / 7.0) * tau1 - v1 - (6.0 / 7.0) * t7v + (3.0 / 7.0) * v7v + qt27 / 7.0);

  // tau~7
  for (int c = 0; c < kDim; ++c) {
    double acc = t7_lo[static_cast<std::size_t>(c)];
    acc -= (1.0 / 6.0) * sc.phi3(c, t7_up, v_up);
    acc -= (1.0 / 6.0) * yt27[static_cast<std::size_t>(c)];
    acc -= (1.0 / 6.0) * wt14[static_cast<std::size_t>(c)];
    acc += v_lo[static_cast<std::size_t>(c)] / (6.0 * om) *
           (qt27 + 6.0 * tau1 - 6.0 * t7v - 8.0 * v1 + 3.0 * v7v);
    double tail = 3.0 * (m2 + 2.0) * v7_lo[static_cast<std::size_t>(c)];
    tail += y[static_cast<std::size_t>(c)];
    tail += sc.phi3(c, v_up, y_up);
    tail += 3.0 * sc.phi3(c, v_up, v7_up);
    acc -= tail / (6.0 * om);
    out.tau7[static_cast<std::size_t>(c)] = acc;
  }

  // tau~14
  const Vec7 s_vec = [&] {  // S_n = phi(n, v, v7)
    Vec7 r{};
    for (int n = 0; n < kDim; ++n) r[static_cast<std::size_t>(n)] = sc.phi3(n, v_up, v7_up);
    return r;
  }();
  const Mat7 x_v27 = sc.phi_v_mixed(mv27);   // phi(a, v, .) against v27
  const Mat7 x_t14 = sc.phi_v_mixed(m14);    // ... against tau14
  const Mat7 x_t27 = sc.phi_v_mixed(m27);    // ... against tau27
  const Vec7 z_vec = [&] {  // Z_n = phi(n, v, y)
    Vec7 r{};
    for (int n = 0; n < kDim; ++n) r[static_cast<std::size_t>(n)] = sc.phi3(n, v_up, y_up);
    return r;
  }();
  const Vec7 w_t7 = [&] {  // phi(n, tau7, v)
    Vec7 r{};
    for (int n = 0; n < kDim; ++n) r[static_cast<std::size_t>(n)] = sc.phi3(n, t7_up, v_up);
    return r;
  }();
  const Vec7 wt14_up = raise_vec(wt14, g);
  const Vec7 yt27_up = raise_vec(yt27, g);
  out.tau14 = Tensor7(2);
  for (int a = 0; a < kDim; ++a)
    for (int n = 0; n < kDim; ++n) {
      if (a == n) continue;
      const double va = v_lo[static_cast<std::size_t>(a)];
      const double vn = v_lo[static_cast<std::size_t>(n)];
      double ga = 0.0;
      // -(10/3) (v7)_[a v_n]: the sign is pinned by the direct
      // recomputation (the opposite one is a frequent convention slip)
      ga -= (5.0 / 3.0) * (v7_lo[static_cast<std::size_t>(a)] * vn - v7_lo[static_cast<std::size_t>(n)] * va);
      ga += (2.0 / 3.0) * (va * s_vec[static_cast<std::size_t>(n)] - vn * s_vec[static_cast<std::size_t>(a)]);
      ga -= (5.0 / 6.0 + 0.5 * m2) * sc.psi4(a, n, v_up, v7_up);
      ga += (1.0 / 3.0) * v7v * sc.phiV(a, n, v_up);
      ga -= (m2 / 3.0) * sc.phiV(a, n, v7_up);
      ga -= om * v14(a, n);
      ga -= w[static_cast<std::size_t>(a)] * vn - w[static_cast<std::size_t>(n)] * va;
      ga += (1.0 / 3.0) * sc.phiV(a, n, w_up);
      ga -= (1.0 / 3.0) * sc.psi4(a, n, v_up, w_up);
      ga -= (1.0 / 3.0) * sc.phiV(a, n, v_up) * q27;
      ga += (m2 + 1.0) * 0.5 * (x_v27(a, n) - x_v27(n, a));
      ga += ((m2 - 1.0) / 6.0) * sc.phiV(a, n, y_up);
      ga += (1.0 / 3.0) * (y[static_cast<std::size_t>(a)] * vn - y[static_cast<std::size_t>(n)] * va);
      ga -= (2.0 / 3.0) * (z_vec[static_cast<std::size_t>(a)] * vn - z_vec[static_cast<std::size_t>(n)] * va);
      ga += (1.0 / 3.0) * sc.psi4(a, n, v_up, y_up);

      double gb = 0.0;
      gb -= (m2 / 6.0) * sc.phiV(a, n, t7_up);
      gb += (1.0 / 6.0) * sc.psi4(a, n, t7_up, v_up);
      gb -= (1.0 / 6.0) * (w_t7[static_cast<std::size_t>(a)] * vn - w_t7[static_cast<std::size_t>(n)] * va);
      gb += (1.0 / 3.0) * (va * t7_lo[static_cast<std::size_t>(n)] - vn * t7_lo[static_cast<std::size_t>(a)]);
      gb += (1.0 / 6.0) * sc.phiV(a, n, v_up) * t7v;
      gb += t14(a, n);
      gb += (1.0 / 6.0) * sc.psi4(a, n, wt14_up, v_up);
      gb -= (1.0 / 3.0) * sc.phiV(a, n, wt14_up);
      gb -= 0.5 * (x_t27(a, n) - x_t27(n, a));
      gb += (1.0 / 6.0) * sc.phiV(a, n, yt27_up);
      gb += (1.0 / 6.0) * sc.psi4(a, n, yt27_up, v_up);
      out.tau14(a, n) = pa * ga + pb * gb;
    }
  out.tau14.set_hint(SymmetryHint::FullyAntisymmetric);

  // tau~27
  for (int a = 0; a < kDim; ++a)
    for (int n = a; n < kDim; ++n) {
      const double va = v_lo[static_cast<std::size_t>(a)];
      const double vn = v_lo[static_cast<std::size_t>(n)];
      double ga = 0.0;
      ga -= (3.0 / 7.0) * (om * g.g(a, n) - va * vn) * v7v;
      ga += 1.5 * (va * s_vec[static_cast<std::size_t>(n)] + vn * s_vec[static_cast<std::size_t>(a)]);
      ga += 1.5 * (va * v7_lo[static_cast<std::size_t>(n)] + vn * v7_lo[static_cast<std::size_t>(a)]);
      ga -= om * v27(a, n);
      ga += 0.5 * (y[static_cast<std::size_t>(a)] * vn + y[static_cast<std::size_t>(n)] * va);
      ga -= om * 0.5 * (x_v27(a, n) + x_v27(n, a));
      ga += 0.5 * (va * z_vec[static_cast<std::size_t>(n)] + vn * z_vec[static_cast<std::size_t>(a)]);
      ga += (1.0 + m2 / 7.0) * tau1 * va * vn;
      ga -= (6.0 / 7.0) * t7v * va * vn;
      ga += (qt27 / 7.0) * va * vn;

      double gb = 0.0;
      gb -= (m2 / 7.0) * tau1 * g.g(a, n);
      gb += 0.5 * (va * t7_lo[static_cast<std::size_t>(n)] + vn * t7_lo[static_cast<std::size_t>(a)]);
      gb -= (1.0 / 7.0) * g.g(a, n) * t7v;
      gb -= 0.5 * (x_t14(a, n) + x_t14(n, a));
      gb += t27(a, n);
      gb += 0.5 * (x_t27(a, n) + x_t27(n, a));
      gb -= (qt27 / 7.0) * g.g(a, n);

      out.tau27(a, n) = pa * ga + pb * gb;
      out.tau27(n, a) = out.tau27(a, n);
    }
  return out;
}

TwoTensorDecomposition solve_grad_v(const G2Structure& base, const torsion::TorsionData& tau,
                                    const torsion::TorsionData& tau_tilde, const Vec7& v_up) {
  const Metric7& g = base.metric;
  const V7Scratch sc(base, v_up);
  const double om = sc.om;
  const double m2 = sc.m2;
  const double om13 = std::pow(om, 1.0 / 3.0);
  const Vec7& v_lo = sc.v_lo;

  const double tau1 = tau.tau1;
  const Vec7& t7_lo = tau.tau7;
  const Vec7 t7_up = raise_vec(t7_lo, g);
  const double tt1 = tau_tilde.tau1;
  const Vec7& tt7_lo = tau_tilde.tau7;
  const Vec7 tt7_up = raise_vec(tt7_lo, g);

  const double t7v = dot(t7_lo, v_up);
  const double tt7v = dot(tt7_lo, v_up);
  const double qt27 = sc.quad(tau.tau27);
  const double qtt27 = sc.quad(tau_tilde.tau27);
  const Vec7 wt14 = sc.contract_lo(tau.tau14);
  const Vec7 yt27 = sc.contract_lo(tau.tau27);
  const Vec7 wtt14 = sc.contract_lo(tau_tilde.tau14);
  const Vec7 ytt27 = sc.contract_lo(tau_tilde.tau27);
  const Vec7 wt14_up = raise_vec(wt14, g);
  const Vec7 yt27_up = raise_vec(yt27, g);
  const Vec7 wtt14_up = raise_vec(wtt14, g);
  const Vec7 ytt27_up = raise_vec(ytt27, g);
  const Mat7 mt27 = sc.mixed_first(tau_tilde.tau27);

  TwoTensorDecomposition out;

  // v1
  out.tau1 = tau1 - (3.0 / 7.0) * t7v - ((7.0 + 3.0 * m2) / (7.0 * om13)) * tt1 -
             (3.0 / 7.0) * tt7v + (om13 / 14.0) * qtt27;

  // v7 (lowered)
  for (int c = 0; c < kDim; ++c) {
    double acc = t7_lo[static_cast<std::size_t>(c)];
    acc -= (1.0 / 3.0) * tau1 * v_lo[static_cast<std::size_t>(c)];
    acc += (1.0 / 3.0) * sc.phi3(c, t7_up, v_up);
    acc -= (1.0 / 6.0) * wt14[static_cast<std::size_t>(c)];
    acc -= (1.0 / 3.0) * yt27[static_cast<std::size_t>(c)];
    acc += (4.0 / 3.0) * (tt1 / om13) * v_lo[static_cast<std::size_t>(c)];
    acc -= tt7_lo[static_cast<std::size_t>(c)];
    acc -= 0.5 * sc.phi3(c, tt7_up, v_up);
    acc += (om13 / 6.0) * ytt27[static_cast<std::size_t>(c)];
    out.tau7[static_cast<std::size_t>(c)] = acc;
  }

  // v14
  out.tau14 = Tensor7(2);
  {
    Vec7 w_t7{}, w_tt7{}, v14a{}, v27a{}, vt14a{}, vt27a{};
    for (int i = 0; i < kDim; ++i) {
      w_t7[static_cast<std::size_t>(i)] = sc.phi3(i, t7_up, v_up);
      w_tt7[static_cast<std::size_t>(i)] = sc.phi3(i, tt7_up, v_up);
      v14a[static_cast<std::size_t>(i)] = sc.phi3(i, wt14_up, v_up);
      v27a[static_cast<std::size_t>(i)] = sc.phi3(i, yt27_up, v_up);
      vt14a[static_cast<std::size_t>(i)] = sc.phi3(i, wtt14_up, v_up);
      vt27a[static_cast<std::size_t>(i)] = sc.phi3(i, ytt27_up, v_up);
    }
    const Mat7 xt_tilde = sc.phi_v_mixed(mt27);
    Mat7 pl;  // pl(a, n) = phi(a, e, n) v^e
    for (int a = 0; a < kDim; ++a)
      for (int n = 0; n < kDim; ++n) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += base.phi(a, e, n) * v_up[static_cast<std::size_t>(e)];
        pl(a, n) = acc;
      }
    Mat7 t14_uu;  // tau14 with both indices raised
    for (int n = 0; n < kDim; ++n)
      for (int q = 0; q < kDim; ++q) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e)
          for (int f = 0; f < kDim; ++f) acc += g.g_inv(n, e) * g.g_inv(q, f) * tau.tau14(e, f);
        t14_uu(n, q) = acc;
      }
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        if (a == b) continue;
        const double va = v_lo[static_cast<std::size_t>(a)];
        const double vb = v_lo[static_cast<std::size_t>(b)];
        double acc = 0.0;
        acc += (2.0 / 3.0) * (m2 - 27.0) *
               (t7_lo[static_cast<std::size_t>(a)] * vb - t7_lo[static_cast<std::size_t>(b)] * va);
        acc -= ((m2 - 27.0) / 3.0) * sc.psi4(a, b, t7_up, v_up);
        acc -= 4.0 * m2 * sc.phiV(a, b, t7_up);
        acc += 4.0 * t7v * sc.phiV(a, b, v_up);
        acc -= 12.0 * (w_t7[static_cast<std::size_t>(a)] * vb - w_t7[static_cast<std::size_t>(b)] * va);
        acc += 0.5 * (m2 + 2.0) * (m2 + 9.0) * tau.tau14(a, b);
        {  // (1/2)(M+9) phi_a^{mn} phi_b^{pq} v_m v_p tau14_nq
          double inner = 0.0;
          for (int n = 0; n < kDim; ++n)
            for (int q = 0; q < kDim; ++q) inner += pl(a, n) * pl(b, q) * t14_uu(n, q);
          acc += 0.5 * (m2 + 9.0) * inner;
        }
        acc += 0.5 * (m2 - 7.0) *
               (wt14[static_cast<std::size_t>(a)] * vb - wt14[static_cast<std::size_t>(b)] * va);
        acc -= 4.0 * (v14a[static_cast<std::size_t>(a)] * vb - v14a[static_cast<std::size_t>(b)] * va);
        acc -= (4.0 / 3.0) * m2 * sc.phiV(a, b, wt14_up);
        acc += 4.0 * sc.psi4(a, b, wt14_up, v_up);
        acc += 8.0 * (yt27[static_cast<std::size_t>(a)] * vb - yt27[static_cast<std::size_t>(b)] * va);
        acc -= (4.0 / 3.0) * sc.phiV(a, b, v_up) * qt27;
        acc += (4.0 / 3.0) * m2 * sc.phiV(a, b, yt27_up);
        acc -= 4.0 * sc.psi4(a, b, yt27_up, v_up);
        acc += 4.0 * (v27a[static_cast<std::size_t>(a)] * vb - v27a[static_cast<std::size_t>(b)] * va);
        acc += ((m2 + 17.0) * om13 * qtt27 / 6.0 - 4.0 * tt7v) * sc.phiV(a, b, v_up);
        acc += 12.0 * (w_tt7[static_cast<std::size_t>(a)] * vb - w_tt7[static_cast<std::size_t>(b)] * va);
        acc -= (m2 - 15.0) *
               (tt7_lo[static_cast<std::size_t>(a)] * vb - tt7_lo[static_cast<std::size_t>(b)] * va);
        acc += 0.5 * (m2 - 15.0) * sc.psi4(a, b, tt7_up, v_up);
        acc += 4.0 * m2 * sc.phiV(a, b, tt7_up);
        acc -= om13 * (m2 + 9.0) *
               (tau_tilde.tau14(a, b) + 0.5 * (xt_tilde(a, b) - xt_tilde(b, a)));
        acc += 8.0 * om13 *
               (wtt14[static_cast<std::size_t>(a)] * vb - wtt14[static_cast<std::size_t>(b)] * va);
        acc += 4.0 * om13 *
               (vt14a[static_cast<std::size_t>(a)] * vb - vt14a[static_cast<std::size_t>(b)] * va);
        acc += (m2 - 3.0) * om13 * sc.phiV(a, b, wtt14_up);
        acc -= 4.0 * om13 * sc.psi4(a, b, wtt14_up, v_up);
        acc -= 4.0 * om13 *
               (vt27a[static_cast<std::size_t>(a)] * vb - vt27a[static_cast<std::size_t>(b)] * va);
        acc -= 8.0 * om13 *
               (ytt27[static_cast<std::size_t>(a)] * vb - ytt27[static_cast<std::size_t>(b)] * va);
        acc -= ((7.0 * m2 - 9.0) / 6.0) * om13 * sc.phiV(a, b, ytt27_up);
        acc += 4.0 * om13 * sc.psi4(a, b, ytt27_up, v_up);
        out.tau14(a, b) = acc / (m2 + 9.0);
      }
  }
  out.tau14.set_hint(SymmetryHint::FullyAntisymmetric);

  // v27
  {
    const Mat7 xt_tilde = sc.phi_v_mixed(mt27);
    // phi(a,e,f) v^e (tau14)^f_b on the base tau14; the roundtrip oracle
    // rejects both the tilde variant and the other tau14 slot order here
    const Mat7 x14 = sc.phi_v_mixed(sc.mixed_first(tau.tau14));
    const double om_m23 = std::pow(om, -2.0 / 3.0);
    Vec7 vt27a{};
    for (int i = 0; i < kDim; ++i) vt27a[static_cast<std::size_t>(i)] = sc.phi3(i, ytt27_up, v_up);
    Mat7 rl;  // rl(a, m) = phi(a, m, f) v^f
    for (int a = 0; a < kDim; ++a)
      for (int m = 0; m < kDim; ++m) {
        double acc = 0.0;
        for (int f = 0; f < kDim; ++f) acc += base.phi(a, m, f) * v_up[static_cast<std::size_t>(f)];
        rl(a, m) = acc;
      }
    Mat7 tt27_uu;
    for (int m = 0; m < kDim; ++m)
      for (int p = 0; p < kDim; ++p) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e)
          for (int f = 0; f < kDim; ++f) acc += g.g_inv(m, e) * g.g_inv(p, f) * tau_tilde.tau27(e, f);
        tt27_uu(m, p) = acc;
      }
    for (int a = 0; a < kDim; ++a)
      for (int b = a; b < kDim; ++b) {
        const double va = v_lo[static_cast<std::size_t>(a)];
        const double vb = v_lo[static_cast<std::size_t>(b)];
        double acc = tau.tau27(a, b);
        acc += 2.0 * (t7_lo[static_cast<std::size_t>(a)] * vb + t7_lo[static_cast<std::size_t>(b)] * va);
        acc += (4.0 * tt1 / om13 - 0.5 * om_m23 * qtt27) * va * vb;
        acc -= (1.0 / 7.0) * (4.0 * t7v - 3.0 * tt7v + 4.0 * m2 * tt1 / om13 + 0.5 * qtt27 * om13) *
               g.g(a, b);
        acc -= 1.5 * (tt7_lo[static_cast<std::size_t>(a)] * vb + tt7_lo[static_cast<std::size_t>(b)] * va);
        acc -= 0.5 * (x14(a, b) + x14(b, a));
        {  // -(1/2)(1+M)^{-2/3} phi_a^{mn} phi_b^{pq} (tau~27)_{mp} v_n v_q
          double inner = 0.0;
          for (int m = 0; m < kDim; ++m)
            for (int p = 0; p < kDim; ++p) inner += rl(a, m) * rl(b, p) * tt27_uu(m, p);
          acc -= 0.5 * om_m23 * inner;
        }
        double tail = 0.5 * (2.0 + m2) * tau_tilde.tau27(a, b);
        tail += 0.5 * (ytt27[static_cast<std::size_t>(a)] * vb + ytt27[static_cast<std::size_t>(b)] * va);
        tail -= 0.5 * (xt_tilde(a, b) + xt_tilde(b, a));
        tail += 0.5 * (vt27a[static_cast<std::size_t>(a)] * vb + vt27a[static_cast<std::size_t>(b)] * va);
        acc -= om_m23 * tail;
        out.tau27(a, b) = acc;
        out.tau27(b, a) = acc;
      }
  }
  return out;
}

Mat7 lambda27_s(const G2Structure& base, const Mat7& h) {
  // s_ab = g_ab + (2/3) h_ab + (2/9) h_a^c h_cb - (1/18) Tr(h^2) g_ab
  //        - (1/18) phi_amn phi_bpq h^mp h^nq + (1/27) phi_amn phi_bpq h^mr h_r^p h^nq
  //        + (1/81) Tr(h^3) g_ab
  // (both phi phi h h pairings and the cubic sign are pinned by the general
  // bilinear-form route evaluated on chi = i_phi(h))
  const Metric7& g = base.metric;
  Mat7 h_mixed;  // h_a^c
  for (int a = 0; a < kDim; ++a)
    for (int c = 0; c < kDim; ++c) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += h(a, e) * g.g_inv(e, c);
      h_mixed(a, c) = acc;
    }
  Mat7 h_up;  // h^{mp}
  for (int m = 0; m < kDim; ++m)
    for (int p = 0; p < kDim; ++p) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += g.g_inv(m, e) * h_mixed(e, p);
      h_up(m, p) = acc;
    }
  const Mat7 h2 = matmul(h_mixed, h_mixed);  // (h^2)_a^b
  double tr_h2 = trace(h2);
  const Mat7 h3 = matmul(h2, h_mixed);
  double tr_h3 = trace(h3);
  // hh^{mp,nq} := h^{mp} h^{nq} and the cubic chain h^{mr} h_r^p h^{nq}
  Mat7 hh_up;  // (h h)^{mp} = h^{mr} h_r^p
  for (int m = 0; m < kDim; ++m)
    for (int p = 0; p < kDim; ++p) {
      double acc = 0.0;
      for (int r = 0; r < kDim; ++r) acc += h_up(m, r) * h(r, p);
      // h^{mr} h_{rp} then raise p
      hh_up(m, p) = acc;
    }
  {
    Mat7 raised;
    for (int m = 0; m < kDim; ++m)
      for (int p = 0; p < kDim; ++p) {
        double acc = 0.0;
        for (int e = 0; e < kDim; ++e) acc += hh_up(m, e) * g.g_inv(e, p);
        raised(m, p) = acc;
      }
    hh_up = raised;
  }
  Mat7 s;
  for (int a = 0; a < kDim; ++a)
    for (int b = a; b < kDim; ++b) {
      double quad = 0.0, cubic = 0.0;
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n) {
          const double pa = base.phi(a, m, n);
          if (pa == 0.0) continue;
          for (int p = 0; p < kDim; ++p)
            for (int q = 0; q < kDim; ++q) {
              const double pb = base.phi(b, p, q);
              if (pb == 0.0) continue;
              quad += pa * pb * h_up(m, p) * h_up(n, q);
              cubic += pa * pb * hh_up(m, p) * h_up(n, q);
            }
        }
      double hsq_ab = 0.0;  // h_a^c h_cb
      for (int c = 0; c < kDim; ++c) hsq_ab += h_mixed(a, c) * h(c, b);
      double val = g.g(a, b) + (2.0 / 3.0) * h(a, b) + (2.0 / 9.0) * hsq_ab -
                   tr_h2 * g.g(a, b) / 18.0 - quad / 18.0 + cubic / 27.0 +
                   tr_h3 * g.g(a, b) / 81.0;
      s(a, b) = val;
      s(b, a) = val;
    }
  return s;
}

ConformalGaugeResult conformal_gauge_w1w7(const StructureField& base,
                                          const torsion::TorsionField& tf) {
  const fields::GridSpec& spec = base.spec();
  const double threshold = torsion::classification_threshold(spec);
  // precondition: class within W1+W7 and tau1 bounded away from zero
  {
    double n14 = 0.0, n27 = 0.0, min_tau1 = std::numeric_limits<double>::infinity();
    for (int p = 0; p < spec.point_count(); ++p) {
      n14 = std::max(n14, max_abs(tf.tau14.value(p)));
      n27 = std::max(n27, max_abs(tf.tau27.value(p)));
      min_tau1 = std::min(min_tau1, std::abs(tf.tau1.component(p, 0)));
    }
    if (n14 > threshold || n27 > threshold)
      throw std::invalid_argument("conformal gauge: torsion class is not within W1+W7");
    if (min_tau1 <= threshold)
      throw std::invalid_argument("conformal gauge: tau1 vanishes somewhere");
  }

  ConformalGaugeResult out{TensorField(spec, 0), TensorField(spec, 3), {}, {}};
  for (int p = 0; p < spec.point_count(); ++p) {
    const double f = tf.tau1.component(p, 0);
    Tensor7 fv(0);
    fv.at_flat(0) = f;
    out.factor.set_value(p, fv);
    out.phi_tilde.set_value(p, (f * f * f) * base.at(p).phi);
  }
  const StructureField transformed = StructureField::from_phi(out.phi_tilde);

  // T~ = f T - df . phi, then re-split under the transformed structure
  torsion::TorsionField nt{TensorField(spec, 2), TensorField(spec, 0), TensorField(spec, 1),
                           TensorField(spec, 2), TensorField(spec, 2)};
  for (int p = 0; p < spec.point_count(); ++p) {
    const G2Structure& s = base.at(p);
    const double f = tf.tau1.component(p, 0);
    Vec7 df{};
    for (int axis : spec.active_axes)
      df[static_cast<std::size_t>(axis)] = fields::partial_derivative(out.factor, axis, p).at_flat(0);
    const Mat7 df_phi = vector_into_phi(df, s);
    Mat7 t_new = mat_from_tensor(tf.T.value(p));
    t_new *= f;
    t_new -= df_phi;
    nt.T.set_value(p, tensor_from_mat(t_new));
    const TwoTensorDecomposition d = decompose_2tensor(t_new, transformed.at(p));
    Tensor7 t1(0);
    t1.at_flat(0) = d.tau1;
    nt.tau1.set_value(p, t1);
    nt.tau7.set_value(p, form_from_vector(d.tau7));
    nt.tau14.set_value(p, d.tau14);
    nt.tau27.set_value(p, tensor_from_mat(d.tau27));
  }
  out.report = torsion::classify(transformed, nt);
  out.new_torsion = std::move(nt);
  return out;
}

}  // namespace g2::deform
