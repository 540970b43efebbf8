#include "g2/algebra.hpp"

#include <cmath>
#include <mutex>

namespace g2 {

namespace {

Tensor7 sum_of_basis_forms(std::initializer_list<std::pair<std::initializer_list<int>, double>> terms,
                           int rank) {
  Tensor7 out(rank);
  for (const auto& [idx, coeff] : terms) {
    Tensor7 b = basis_form(idx);
    b *= coeff;
    out += b;
  }
  out.set_hint(SymmetryHint::FullyAntisymmetric);
  return out;
}

}  // namespace

Tensor7 canonical_phi0() {
  // e^123 + e^145 + e^167 + e^246 - e^257 - e^347 - e^356 (1-based labels)
  return sum_of_basis_forms(
      {
          {{0, 1, 2}, 1.0},
          {{0, 3, 4}, 1.0},
          {{0, 5, 6}, 1.0},
          {{1, 3, 5}, 1.0},
          {{1, 4, 6}, -1.0},
          {{2, 3, 6}, -1.0},
          {{2, 4, 5}, -1.0},
      },
      3);
}

Tensor7 canonical_psi0() {
  // e^4567 + e^2367 + e^2345 + e^1357 - e^1346 - e^1256 - e^1247
  return sum_of_basis_forms(
      {
          {{3, 4, 5, 6}, 1.0},
          {{1, 2, 5, 6}, 1.0},
          {{1, 2, 3, 4}, 1.0},
          {{0, 2, 4, 6}, 1.0},
          {{0, 2, 3, 5}, -1.0},
          {{0, 1, 4, 5}, -1.0},
          {{0, 1, 3, 6}, -1.0},
      },
      4);
}

Mat7 phi_bilinear_s(const Tensor7& phi) {
  // E_mnpq = phi_rst eps^{mnpq rst}
  Tensor7 e(4);
  for (const Perm& perm : permutations(7)) {
    e(perm.p[0], perm.p[1], perm.p[2], perm.p[3]) +=
        perm.sign * phi(perm.p[4], perm.p[5], perm.p[6]);
  }
  Mat7 s;
  for (int a = 0; a < kDim; ++a) {
    for (int b = a; b < kDim; ++b) {
      double acc = 0.0;
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n) {
          const double pa = phi(a, m, n);
          if (pa == 0.0) continue;
          for (int p = 0; p < kDim; ++p)
            for (int q = 0; q < kDim; ++q) acc += pa * phi(b, p, q) * e(m, n, p, q);
        }
      s(a, b) = acc / 144.0;
      s(b, a) = s(a, b);
    }
  }
  return s;
}

std::optional<G2Structure> try_metric_from_phi(const Tensor7& phi, Positivity* why) {
  Mat7 s = phi_bilinear_s(phi);
  const double det_s = determinant(s);
  double frob = 0.0;
  for (double x : s.m) frob += x * x;
  const double scale = std::sqrt(frob / kDim);
  double scale7 = 1.0;
  for (int i = 0; i < kDim; ++i) scale7 *= scale;
  if (std::abs(det_s) <= 1e-10 * scale7) {
    if (why) *why = Positivity::Degenerate;
    return std::nullopt;
  }
  if (det_s < 0.0) {
    if (why) *why = Positivity::Indefinite;
    return std::nullopt;
  }
  const double factor = std::pow(det_s, -1.0 / 9.0);
  Mat7 g = factor * s;
  if (!is_positive_definite(g)) {
    if (why) *why = Positivity::Indefinite;
    return std::nullopt;
  }
  G2Structure out;
  out.phi = phi;
  out.phi.set_hint(SymmetryHint::FullyAntisymmetric);
  out.s = s;
  out.det_s = det_s;
  out.metric = Metric7::from_matrix(g);
  out.psi = hodge_star(out.phi, out.metric);
  if (why) *why = Positivity::Positive;
  return out;
}

G2Structure metric_from_phi(const Tensor7& phi) {
  Positivity why = Positivity::Positive;
  auto s = try_metric_from_phi(phi, &why);
  if (!s) {
    throw NotPositiveError(why, why == Positivity::Degenerate
                                    ? "metric_from_phi: 3-form is degenerate (det s ~ 0)"
                                    : "metric_from_phi: induced metric is indefinite (split orbit)");
  }
  return *std::move(s);
}

const G2Structure& canonical_structure() {
  static const G2Structure s = metric_from_phi(canonical_phi0());
  return s;
}

namespace detail {

namespace {

int parity4(const std::array<std::uint8_t, 4>& seq) {
  int inv = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      if (seq[static_cast<std::size_t>(i)] > seq[static_cast<std::size_t>(j)]) ++inv;
  return inv % 2 == 0 ? 1 : -1;
}

PsiPsiTables build_tables() {
  PsiPsiTables t;
  for (const Perm& rho : permutations(4)) {
    PsiPsiTables::DeltaTerm d;
    for (int k = 0; k < 4; ++k) d.up[static_cast<std::size_t>(k)] = rho.p[static_cast<std::size_t>(k)];
    d.sign = rho.sign;
    t.delta_terms.push_back(d);
  }
  // psi delta delta: choose lower pair, upper pair, and one of two pairings
  // of the leftover slots; sign is the product of arrangement parities.
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      std::array<std::uint8_t, 2> lo_rest{};
      int w = 0;
      for (int k = 0; k < 4; ++k)
        if (k != i && k != j) lo_rest[static_cast<std::size_t>(w++)] = static_cast<std::uint8_t>(k);
      for (int k = 0; k < 4; ++k)
        for (int l = k + 1; l < 4; ++l) {
          std::array<std::uint8_t, 2> up_rest{};
          w = 0;
          for (int z = 0; z < 4; ++z)
            if (z != k && z != l) up_rest[static_cast<std::size_t>(w++)] = static_cast<std::uint8_t>(z);
          for (int crossed = 0; crossed < 2; ++crossed) {
            PsiPsiTables::PsiDDTerm term;
            term.lo0 = static_cast<std::uint8_t>(i);
            term.lo1 = static_cast<std::uint8_t>(j);
            term.up0 = static_cast<std::uint8_t>(k);
            term.up1 = static_cast<std::uint8_t>(l);
            term.dlo0 = lo_rest[0];
            term.dlo1 = lo_rest[1];
            term.dup0 = crossed ? up_rest[1] : up_rest[0];
            term.dup1 = crossed ? up_rest[0] : up_rest[1];
            const int sl = parity4({term.lo0, term.lo1, term.dlo0, term.dlo1});
            const int su = parity4({term.up0, term.up1, term.dup0, term.dup1});
            term.sign = static_cast<std::int8_t>(sl * su);
            t.psi_dd_terms.push_back(term);
          }
        }
    }
  // phi phi delta: choose lower triple and upper triple; leftover slots pair up.
  for (int r = 0; r < 4; ++r)
    for (int s = 0; s < 4; ++s) {
      PsiPsiTables::PhiPhiDTerm term;
      int w = 0;
      std::array<std::uint8_t, 4> lo_seq{}, up_seq{};
      for (int k = 0; k < 4; ++k)
        if (k != r) {
          term.lo[static_cast<std::size_t>(w)] = static_cast<std::uint8_t>(k);
          lo_seq[static_cast<std::size_t>(w)] = static_cast<std::uint8_t>(k);
          ++w;
        }
      lo_seq[3] = static_cast<std::uint8_t>(r);
      w = 0;
      for (int k = 0; k < 4; ++k)
        if (k != s) {
          term.up[static_cast<std::size_t>(w)] = static_cast<std::uint8_t>(k);
          up_seq[static_cast<std::size_t>(w)] = static_cast<std::uint8_t>(k);
          ++w;
        }
      up_seq[3] = static_cast<std::uint8_t>(s);
      term.dlo = static_cast<std::uint8_t>(r);
      term.dup = static_cast<std::uint8_t>(s);
      term.sign = static_cast<std::int8_t>(parity4(lo_seq) * parity4(up_seq));
      t.phi_phi_terms.push_back(term);
    }
  return t;
}

}  // namespace

const PsiPsiTables& psipsi_tables() {
  static const PsiPsiTables t = build_tables();
  return t;
}

}  // namespace detail

ContractionResiduals verify_contractions(const G2Structure& s) {
  ContractionResiduals res;
  const Tensor7& phi = s.phi;
  const Tensor7& psi = s.psi;
  const Mat7& g = s.metric.g;

  // phi_abc phi_mn^c = g_am g_bn - g_an g_bm + psi_abmn
  const Tensor7 phi_up2 = raise_slot(phi, 2, s.metric);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n) {
          double lhs = 0.0;
          for (int c = 0; c < kDim; ++c) lhs += phi(a, b, c) * phi_up2(m, n, c);
          const double rhs = g(a, m) * g(b, n) - g(a, n) * g(b, m) + psi(a, b, m, n);
          res.phiphi = std::max(res.phiphi, std::abs(lhs - rhs));
        }

  // phi_abc psi_mnp^c = -3 (g_a[m phi_np]b - g_b[m phi_np]a).  The +3
  // version belongs to the opposite psi sign convention; with the canonical
  // phi0, psi0 pair above only the -3 form holds (exactly).
  const Tensor7 psi_up3 = raise_slot(psi, 3, s.metric);
  const auto& s3 = permutations(3);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n)
          for (int p = 0; p < kDim; ++p) {
            double lhs = 0.0;
            for (int c = 0; c < kDim; ++c) lhs += phi(a, b, c) * psi_up3(m, n, p, c);
            const int mnp[3] = {m, n, p};
            double rhs = 0.0;
            for (const Perm& perm : s3) {
              const int sm = mnp[perm.p[0]];
              const int sn = mnp[perm.p[1]];
              const int sp = mnp[perm.p[2]];
              rhs += perm.sign * (g(a, sm) * phi(sn, sp, b) - g(b, sm) * phi(sn, sp, a));
            }
            rhs *= -0.5;  // -3 * (1/3!)
            res.phipsi = std::max(res.phipsi, std::abs(lhs - rhs));
          }

  // psi_abcd psi^mnpq = 24 d[..] + 72 psi[..]dd - 16 phi[..]phi[..]d,
  // streamed one slice of the leading index at a time.
  const Tensor7 psi_up = raise_all(psi, s.metric);
  Tensor7 psi_mixed = raise_slot(raise_slot(psi, 3, s.metric), 2, s.metric);  // psi_ab^{mn}
  const Tensor7 phi_up = raise_all(phi, s.metric);
  const auto& tables = detail::psipsi_tables();
  for (int a = 0; a < kDim; ++a) {
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c)
        for (int d = 0; d < kDim; ++d) {
          const int lo[4] = {a, b, c, d};
          const double psi_lo_val = psi(a, b, c, d);
          for (int m = 0; m < kDim; ++m)
            for (int n = 0; n < kDim; ++n)
              for (int p = 0; p < kDim; ++p)
                for (int q = 0; q < kDim; ++q) {
                  const int up[4] = {m, n, p, q};
                  const double lhs = psi_lo_val * psi_up(m, n, p, q);
                  double rhs = 0.0;
                  for (const auto& t : tables.delta_terms) {
                    if (lo[0] == up[t.up[0]] && lo[1] == up[t.up[1]] && lo[2] == up[t.up[2]] &&
                        lo[3] == up[t.up[3]])
                      rhs += t.sign;
                  }
                  for (const auto& t : tables.psi_dd_terms) {
                    if (lo[t.dlo0] != up[t.dup0] || lo[t.dlo1] != up[t.dup1]) continue;
                    rhs += t.sign * psi_mixed(lo[t.lo0], lo[t.lo1], up[t.up0], up[t.up1]);
                  }
                  for (const auto& t : tables.phi_phi_terms) {
                    if (lo[t.dlo] != up[t.dup]) continue;
                    rhs -= t.sign * phi(lo[t.lo[0]], lo[t.lo[1]], lo[t.lo[2]]) *
                           phi_up(up[t.up[0]], up[t.up[1]], up[t.up[2]]);
                  }
                  res.psipsi = std::max(res.psipsi, std::abs(lhs - rhs));
                }
        }
  }
  return res;
}

Decomposition2 project_2form(const Tensor7& omega, const G2Structure& s) {
  Decomposition2 d;
  const Tensor7 alpha = contract_form_into_form(omega, s.phi, s.metric);
  for (int i = 0; i < kDim; ++i) d.alpha[static_cast<std::size_t>(i)] = alpha(i) / 6.0;
  Tensor7 alpha_form = form_from_vector(d.alpha);
  d.pi7 = contract_form_into_form(alpha_form, s.phi, s.metric);
  // pi14 = (2/3) omega - (1/6) omega . psi
  Tensor7 wpsi = contract_form_into_form(omega, s.psi, s.metric);
  d.pi14 = (2.0 / 3.0) * omega - (1.0 / 6.0) * wpsi;
  d.pi14.set_hint(SymmetryHint::FullyAntisymmetric);
  return d;
}

Decomposition3 project_3form(const Tensor7& chi, const G2Structure& s) {
  Decomposition3 d;
  const Tensor7 chi_phi = contract_form_into_form(chi, s.phi, s.metric);  // scalar
  d.a = chi_phi.at_flat(0) / 42.0;
  d.pi1 = d.a * s.phi;
  const Tensor7 chi_psi = contract_form_into_form(chi, s.psi, s.metric);  // 1-form
  for (int i = 0; i < kDim; ++i) d.omega[static_cast<std::size_t>(i)] = -chi_psi(i) / 24.0;
  d.pi7 = contract_form_into_form(form_from_vector(d.omega), s.psi, s.metric);
  // h_ab = (3/4) chi_mn(a phi_b)^mn - (3/28) (chi.phi) g_ab
  const Tensor7 phi_up01 = raise_slot(raise_slot(s.phi, 0, s.metric), 1, s.metric);  // phi^{mn}_b
  for (int a = 0; a < kDim; ++a)
    for (int b = a; b < kDim; ++b) {
      double acc = 0.0;
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n)
          acc += 0.5 * (chi(m, n, a) * phi_up01(m, n, b) + chi(m, n, b) * phi_up01(m, n, a));
      double val = 0.75 * acc - (3.0 / 28.0) * chi_phi.at_flat(0) * s.metric.g(a, b);
      d.h(a, b) = val;
      d.h(b, a) = val;
    }
  d.pi27 = i_phi(d.h, s);
  return d;
}

Decomposition4 project_4form(const Tensor7& chi, const G2Structure& s) {
  Decomposition4 d;
  const Tensor7 chi_psi = contract_form_into_form(chi, s.psi, s.metric);  // scalar
  d.a = chi_psi.at_flat(0) / 168.0;
  d.pi1 = d.a * s.psi;
  const Tensor7 phi_chi = contract_form_into_form(s.phi, chi, s.metric);  // 1-form
  for (int i = 0; i < kDim; ++i) d.omega[static_cast<std::size_t>(i)] = -phi_chi(i) / 24.0;
  d.pi7 = wedge(form_from_vector(d.omega), s.phi);
  // h_ab = -(1/3) chi_mnp(a psi_b)^mnp + (1/21) (chi.psi) g_ab
  const Tensor7 psi_up012 =
      raise_slot(raise_slot(raise_slot(s.psi, 0, s.metric), 1, s.metric), 2, s.metric);
  for (int a = 0; a < kDim; ++a)
    for (int b = a; b < kDim; ++b) {
      double acc = 0.0;
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n)
          for (int p = 0; p < kDim; ++p)
            acc += 0.5 * (chi(m, n, p, a) * psi_up012(m, n, p, b) +
                          chi(m, n, p, b) * psi_up012(m, n, p, a));
      double val = -acc / 3.0 + chi_psi.at_flat(0) * s.metric.g(a, b) / 21.0;
      d.h(a, b) = val;
      d.h(b, a) = val;
    }
  d.pi27 = i_psi(d.h, s);
  return d;
}

Decomposition5 project_5form(const Tensor7& eta, const G2Structure& s) {
  Decomposition5 d;
  const Tensor7 psi_eta = contract_form_into_form(s.psi, eta, s.metric);  // 1-form
  for (int i = 0; i < kDim; ++i) d.alpha[static_cast<std::size_t>(i)] = psi_eta(i) / 72.0;
  d.pi7 = wedge(form_from_vector(d.alpha), s.psi);
  const Tensor7 phi_eta = contract_form_into_form(s.phi, eta, s.metric);  // 2-form
  const Tensor7 phi_eta_psi = contract_form_into_form(phi_eta, s.psi, s.metric);
  d.omega14 = (1.0 / 9.0) * phi_eta - (1.0 / 36.0) * phi_eta_psi;
  d.omega14.set_hint(SymmetryHint::FullyAntisymmetric);
  d.pi14 = wedge(d.omega14, s.phi);
  return d;
}

Tensor7 i_phi(const Mat7& h, const G2Structure& s) {
  // (i_phi h)_abc = h_[a^d phi_bc]d
  Mat7 h_up;  // h_a^d
  for (int a = 0; a < kDim; ++a)
    for (int d = 0; d < kDim; ++d) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += h(a, e) * s.metric.g_inv(e, d);
      h_up(a, d) = acc;
    }
  Tensor7 x(3);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c) {
        double acc = 0.0;
        for (int d = 0; d < kDim; ++d) acc += h_up(a, d) * s.phi(b, c, d);
        x(a, b, c) = acc;
      }
  return antisymmetrize(x);
}

Tensor7 i_psi(const Mat7& h, const G2Structure& s) {
  // (i_psi h)_abcd = h_[a^e psi_bcd]e
  Mat7 h_up;
  for (int a = 0; a < kDim; ++a)
    for (int d = 0; d < kDim; ++d) {
      double acc = 0.0;
      for (int e = 0; e < kDim; ++e) acc += h(a, e) * s.metric.g_inv(e, d);
      h_up(a, d) = acc;
    }
  Tensor7 x(4);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c)
        for (int d = 0; d < kDim; ++d) {
          double acc = 0.0;
          for (int e = 0; e < kDim; ++e) acc += h_up(a, e) * s.psi(b, c, d, e);
          x(a, b, c, d) = acc;
        }
  return antisymmetrize(x);
}

Mat7 vector_into_phi(const Vec7& tau7, const G2Structure& s) {
  Vec7 up{};
  for (int c = 0; c < kDim; ++c) {
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) acc += s.metric.g_inv(c, e) * tau7[static_cast<std::size_t>(e)];
    up[static_cast<std::size_t>(c)] = acc;
  }
  Mat7 out;
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b) {
      double acc = 0.0;
      for (int c = 0; c < kDim; ++c) acc += up[static_cast<std::size_t>(c)] * s.phi(c, a, b);
      out(a, b) = acc;
    }
  return out;
}

TwoTensorDecomposition decompose_2tensor(const Mat7& a, const G2Structure& s) {
  TwoTensorDecomposition d;
  double tr = 0.0;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) tr += a(i, j) * s.metric.g_inv(i, j);
  d.tau1 = tr / 7.0;
  // symmetric traceless part
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      d.tau27(i, j) = 0.5 * (a(i, j) + a(j, i)) - d.tau1 * s.metric.g(i, j);
  // antisymmetric part splits along Lambda^2_7 + Lambda^2_14
  Tensor7 w(2);
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) w(i, j) = 0.5 * (a(i, j) - a(j, i));
  w.set_hint(SymmetryHint::FullyAntisymmetric);
  Decomposition2 d2 = project_2form(w, s);
  d.tau7 = d2.alpha;
  d.tau14 = d2.pi14;
  return d;
}

Mat7 reassemble_2tensor(const TwoTensorDecomposition& d, const G2Structure& s) {
  Mat7 out = vector_into_phi(d.tau7, s);
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      out(i, j) += d.tau1 * s.metric.g(i, j) + d.tau14(i, j) + d.tau27(i, j);
  return out;
}

}  // namespace g2
