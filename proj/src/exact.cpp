#include "g2/exact.hpp"

#include <array>
#include <chrono>
#include <future>
#include <span>

#include "g2/algebra.hpp"

namespace g2::exact {

CertificationFailure::CertificationFailure(std::string identity_, std::vector<int> tuple_,
                                           std::int64_t residual_)
    : std::runtime_error("certification failed: " + identity_),
      identity(std::move(identity_)),
      tuple(std::move(tuple_)),
      residual(residual_) {}

std::string Certificate::to_json() const {
  std::string s = "{\"identity\":\"" + identity + "\",\"residual\":" + std::to_string(max_abs_residual) +
                  ",\"tuples\":" + std::to_string(tuples) + ",\"seconds\":" + std::to_string(seconds) + "}";
  return s;
}

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Dense integer tensor over indices 0..6; all metric operations here are at
// the identity metric so no raising is ever needed.
struct IntForm {
  int rank = 0;
  std::vector<std::int64_t> v;

  explicit IntForm(int r) : rank(r), v(pow7(r), 0) {}

  static std::size_t offset(std::span<const int> idx) {
    std::size_t off = 0;
    for (int i : idx) off = off * kDim + static_cast<std::size_t>(i);
    return off;
  }
  std::int64_t at(std::span<const int> idx) const { return v[offset(idx)]; }
  std::int64_t& at(std::span<const int> idx) { return v[offset(idx)]; }
  template <class... I>
  std::int64_t operator()(I... idx) const {
    std::size_t off = 0;
    ((off = off * kDim + static_cast<std::size_t>(idx)), ...);
    return v[off];
  }
};

void scatter_basis(IntForm& f, std::initializer_list<int> idx, std::int64_t coeff) {
  const int r = static_cast<int>(idx.size());
  std::array<int, 7> base{};
  int w = 0;
  for (int i : idx) base[static_cast<std::size_t>(w++)] = i;
  std::array<int, 7> dst{};
  for (const Perm& perm : permutations(r)) {
    for (int s = 0; s < r; ++s) dst[static_cast<std::size_t>(s)] = base[perm.p[static_cast<std::size_t>(s)]];
    f.at(std::span<const int>(dst.data(), static_cast<std::size_t>(r))) = perm.sign * coeff;
  }
}

const IntForm& iphi0() {
  static const IntForm f = [] {
    IntForm t(3);
    scatter_basis(t, {0, 1, 2}, 1);
    scatter_basis(t, {0, 3, 4}, 1);
    scatter_basis(t, {0, 5, 6}, 1);
    scatter_basis(t, {1, 3, 5}, 1);
    scatter_basis(t, {1, 4, 6}, -1);
    scatter_basis(t, {2, 3, 6}, -1);
    scatter_basis(t, {2, 4, 5}, -1);
    return t;
  }();
  return f;
}

const IntForm& ipsi0() {
  static const IntForm f = [] {
    IntForm t(4);
    scatter_basis(t, {3, 4, 5, 6}, 1);
    scatter_basis(t, {1, 2, 5, 6}, 1);
    scatter_basis(t, {1, 2, 3, 4}, 1);
    scatter_basis(t, {0, 2, 4, 6}, 1);
    scatter_basis(t, {0, 2, 3, 5}, -1);
    scatter_basis(t, {0, 1, 4, 5}, -1);
    scatter_basis(t, {0, 1, 3, 6}, -1);
    return t;
  }();
  return f;
}

// (alpha . beta)_B = alpha^A beta_{A B} at the identity metric.
IntForm contract_int(const IntForm& alpha, const IntForm& beta) {
  const int p = alpha.rank;
  const int q = beta.rank - p;
  IntForm out(q);
  const std::size_t np = pow7(p);
  const std::size_t nq = pow7(q);
  for (std::size_t b = 0; b < nq; ++b) {
    std::int64_t acc = 0;
    for (std::size_t a = 0; a < np; ++a) acc += alpha.v[a] * beta.v[a * nq + b];
    out.v[b] = acc;
  }
  return out;
}

// Shuffle-sum wedge for antisymmetric integer inputs, same normalization as
// the floating-point wedge.
IntForm wedge_int(const IntForm& a, const IntForm& b) {
  const int p = a.rank;
  const int q = b.rank;
  const int r = p + q;
  IntForm out(r);
  std::array<int, 8> ia{}, ib{}, dst{};
  for (const auto& comb : combinations7(r)) {
    std::int64_t val = 0;
    for (const auto& sel : combinations7(p)) {
      bool in_range = true;
      for (int k = 0; k < p; ++k)
        if (sel[static_cast<std::size_t>(k)] >= r) {
          in_range = false;
          break;
        }
      if (!in_range) continue;
      std::array<bool, 8> used{};
      for (int k = 0; k < p; ++k) used[sel[static_cast<std::size_t>(k)]] = true;
      std::array<int, 8> order{};
      int w = 0;
      for (int k = 0; k < p; ++k) order[static_cast<std::size_t>(w++)] = sel[static_cast<std::size_t>(k)];
      for (int k = 0; k < r; ++k)
        if (!used[static_cast<std::size_t>(k)]) order[static_cast<std::size_t>(w++)] = k;
      int inv = 0;
      for (int x = 0; x < r; ++x)
        for (int y = x + 1; y < r; ++y)
          if (order[static_cast<std::size_t>(x)] > order[static_cast<std::size_t>(y)]) ++inv;
      int wa = 0, wb = 0;
      for (int k = 0; k < p; ++k) ia[static_cast<std::size_t>(wa++)] = comb[sel[static_cast<std::size_t>(k)]];
      for (int k = 0; k < r; ++k)
        if (!used[static_cast<std::size_t>(k)]) ib[static_cast<std::size_t>(wb++)] = comb[static_cast<std::size_t>(k)];
      const std::int64_t term = a.at(std::span<const int>(ia.data(), static_cast<std::size_t>(p))) *
                                b.at(std::span<const int>(ib.data(), static_cast<std::size_t>(q)));
      val += (inv % 2 == 0) ? term : -term;
    }
    for (const Perm& perm : permutations(r)) {
      for (int s = 0; s < r; ++s) dst[static_cast<std::size_t>(s)] = comb[perm.p[static_cast<std::size_t>(s)]];
      out.at(std::span<const int>(dst.data(), static_cast<std::size_t>(r))) = perm.sign * val;
    }
  }
  return out;
}

IntForm add(const IntForm& a, const IntForm& b, std::int64_t cb = 1) {
  IntForm out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += cb * b.v[i];
  return out;
}

IntForm scale(const IntForm& a, std::int64_t c) {
  IntForm out = a;
  for (auto& x : out.v) x *= c;
  return out;
}

std::int64_t max_abs_diff(const IntForm& a, const IntForm& b, std::size_t* where = nullptr) {
  std::int64_t worst = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const std::int64_t d = a.v[i] > b.v[i] ? a.v[i] - b.v[i] : b.v[i] - a.v[i];
    if (d > worst) {
      worst = d;
      if (where) *where = i;
    }
  }
  return worst;
}

std::vector<int> decode(std::size_t flat, int rank) {
  std::vector<int> idx(static_cast<std::size_t>(rank));
  for (std::size_t k = idx.size(); k-- > 0;) {
    idx[k] = static_cast<int>(flat % kDim);
    flat /= kDim;
  }
  return idx;
}

}  // namespace

Certificate certify_phiphi(const PhiPhiCoefficients& c) {
  const auto t0 = clock_type::now();
  const IntForm& phi = iphi0();
  const IntForm& psi = ipsi0();
  Certificate cert{"phiphi1", 0, 0, 0.0};
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n) {
          std::int64_t lhs = 0;
          for (int k = 0; k < kDim; ++k) lhs += phi(a, b, k) * phi(m, n, k);
          const std::int64_t rhs =
              c.gg * ((a == m && b == n ? 1 : 0) - (a == n && b == m ? 1 : 0)) + c.psi * psi(a, b, m, n);
          ++cert.tuples;
          const std::int64_t res = lhs > rhs ? lhs - rhs : rhs - lhs;
          if (res != 0) throw CertificationFailure("phiphi1", {a, b, m, n}, res);
        }
  cert.seconds = elapsed(t0);
  return cert;
}

Certificate certify_phipsi(const PhiPsiCoefficients& c) {
  const auto t0 = clock_type::now();
  const IntForm& phi = iphi0();
  const IntForm& psi = ipsi0();
  Certificate cert{"phipsi", 0, 0, 0.0};
  const auto& s3 = permutations(3);
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int m = 0; m < kDim; ++m)
        for (int n = 0; n < kDim; ++n)
          for (int p = 0; p < kDim; ++p) {
            std::int64_t lhs = 0;
            for (int k = 0; k < kDim; ++k) lhs += phi(a, b, k) * psi(m, n, p, k);
            const int mnp[3] = {m, n, p};
            std::int64_t asym = 0;  // 3! * (g_a[m phi_np]b - g_b[m phi_np]a)
            for (const Perm& perm : s3) {
              const int sm = mnp[perm.p[0]], sn = mnp[perm.p[1]], sp = mnp[perm.p[2]];
              asym += perm.sign * ((a == sm ? phi(sn, sp, b) : 0) - (b == sm ? phi(sn, sp, a) : 0));
            }
            // identity scaled by 6: 6 lhs = rhs_coeff * asym
            const std::int64_t lhs6 = 6 * lhs;
            const std::int64_t rhs6 = c.rhs * asym;
            ++cert.tuples;
            const std::int64_t res = lhs6 > rhs6 ? lhs6 - rhs6 : rhs6 - lhs6;
            if (res != 0) throw CertificationFailure("phipsi", {a, b, m, n, p}, res);
          }
  cert.seconds = elapsed(t0);
  return cert;
}

Certificate certify_psipsi(const PsiPsiCoefficients& c) {
  const auto t0 = clock_type::now();
  const IntForm& phi = iphi0();
  const IntForm& psi = ipsi0();
  const auto& tables = detail::psipsi_tables();

  // One 7^7 slice of the 7^8 index space per task, streamed.
  auto run_slice = [&](int a) -> std::pair<std::int64_t, std::vector<int>> {
    for (int b = 0; b < kDim; ++b)
      for (int cc = 0; cc < kDim; ++cc)
        for (int d = 0; d < kDim; ++d) {
          const int lo[4] = {a, b, cc, d};
          const std::int64_t psi_lo = psi(a, b, cc, d);
          for (int m = 0; m < kDim; ++m)
            for (int n = 0; n < kDim; ++n)
              for (int p = 0; p < kDim; ++p)
                for (int q = 0; q < kDim; ++q) {
                  const int up[4] = {m, n, p, q};
                  std::int64_t t24 = 0, t72 = 0, t16 = 0;
                  for (const auto& t : tables.delta_terms)
                    if (lo[0] == up[t.up[0]] && lo[1] == up[t.up[1]] && lo[2] == up[t.up[2]] &&
                        lo[3] == up[t.up[3]])
                      t24 += t.sign;
                  for (const auto& t : tables.psi_dd_terms)
                    if (lo[t.dlo0] == up[t.dup0] && lo[t.dlo1] == up[t.dup1])
                      t72 += t.sign * psi(lo[t.lo0], lo[t.lo1], up[t.up0], up[t.up1]);
                  for (const auto& t : tables.phi_phi_terms)
                    if (lo[t.dlo] == up[t.dup])
                      t16 += t.sign * phi(lo[t.lo[0]], lo[t.lo[1]], lo[t.lo[2]]) *
                             phi(up[t.up[0]], up[t.up[1]], up[t.up[2]]);
                  // identity scaled by 144 = lcm(24, 72, 16)
                  const std::int64_t lhs = 144 * psi_lo * psi(m, n, p, q);
                  const std::int64_t rhs = 6 * c.delta4 * t24 + 2 * c.psi_dd * t72 + 9 * c.phi_phi_d * t16;
                  if (lhs != rhs)
                    return {lhs > rhs ? lhs - rhs : rhs - lhs, {a, b, cc, d, m, n, p, q}};
                }
        }
    return {0, {}};
  };

  std::vector<std::future<std::pair<std::int64_t, std::vector<int>>>> futures;
  for (int a = 0; a < kDim; ++a)
    futures.push_back(std::async(std::launch::async, run_slice, a));
  Certificate cert{"psipsi0", pow7(8), 0, 0.0};
  for (auto& f : futures) {
    auto [res, tuple] = f.get();
    if (res != 0) throw CertificationFailure("psipsi0", tuple, res);
  }
  cert.seconds = elapsed(t0);
  return cert;
}

namespace {

// Scaled integer projector maps at the canonical structure.  Scales chosen so
// every paper coefficient clears its denominator: Lambda^2 x6, Lambda^3 x672,
// Lambda^4 x504, Lambda^5 x72.
struct ScaledProjectors {
  const ProjectorCoefficients& c;

  IntForm l2_p7(const IntForm& w) const {  // 6 pi7
    const IntForm alpha = contract_int(w, iphi0());
    IntForm out(2);
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        std::int64_t acc = 0;
        for (int k = 0; k < kDim; ++k) acc += alpha.v[static_cast<std::size_t>(k)] * iphi0()(k, a, b);
        out.v[static_cast<std::size_t>(a * kDim + b)] = acc;
      }
    return out;
  }
  IntForm l2_p14(const IntForm& w) const {  // 6 pi14 = 4 w - w . psi
    return add(scale(w, 4), contract_int(w, ipsi0()), -1);
  }

  IntForm l3_p1(const IntForm& chi) const {  // 672 pi1 = (672/42) (chi.phi) phi
    const std::int64_t a = contract_int(chi, iphi0()).v[0];
    return scale(iphi0(), c.lambda3_pi1_num * a);
  }
  IntForm l3_p7(const IntForm& chi) const {  // 672 pi7 = -(672/24) (chi.psi) . psi
    const IntForm w = contract_int(chi, ipsi0());
    IntForm out(3);
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b)
        for (int d = 0; d < kDim; ++d) {
          std::int64_t acc = 0;
          for (int k = 0; k < kDim; ++k) acc += w.v[static_cast<std::size_t>(k)] * ipsi0()(k, a, b, d);
          out.v[static_cast<std::size_t>((a * kDim + b) * kDim + d)] = c.lambda3_pi7_num * acc;
        }
    return out;
  }
  IntForm l3_p27(const IntForm& chi) const {
    // 672 pi27 = i_phi(672 h), 672 h_ab = 252 sym(chi::phi) - 72 (chi.phi) g
    const std::int64_t cphi = contract_int(chi, iphi0()).v[0];
    std::array<std::int64_t, 49> big{};
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        std::int64_t acc = 0;
        for (int m = 0; m < kDim; ++m)
          for (int n = 0; n < kDim; ++n)
            acc += chi(m, n, a) * iphi0()(m, n, b) + chi(m, n, b) * iphi0()(m, n, a);
        big[static_cast<std::size_t>(a * kDim + b)] = 252 * acc - (a == b ? 72 * cphi : 0);
      }
    IntForm out(3);
    std::array<int, 3> dst{};
    const auto& s3 = permutations(3);
    for (const auto& comb : combinations7(3)) {
      std::int64_t acc = 0;
      for (const Perm& perm : s3) {
        const int a = comb[perm.p[0]], b = comb[perm.p[1]], d = comb[perm.p[2]];
        std::int64_t inner = 0;
        for (int e = 0; e < kDim; ++e) inner += big[static_cast<std::size_t>(a * kDim + e)] * iphi0()(b, d, e);
        acc += perm.sign * inner;
      }
      if (acc % 6 != 0)
        throw CertificationFailure("projectors/lambda3-pi27-divisibility", {comb[0], comb[1], comb[2]}, acc % 6);
      acc /= 6;
      for (const Perm& perm : s3) {
        for (int s = 0; s < 3; ++s) dst[static_cast<std::size_t>(s)] = comb[perm.p[static_cast<std::size_t>(s)]];
        out.at(std::span<const int>(dst.data(), 3)) = perm.sign * acc;
      }
    }
    return out;
  }

  IntForm l4_p1(const IntForm& chi) const {  // 504 pi1 = 3 (chi.psi) psi
    const std::int64_t a = contract_int(chi, ipsi0()).v[0];
    return scale(ipsi0(), 3 * a);
  }
  IntForm l4_p7(const IntForm& chi) const {  // 504 pi7 = -21 (phi.chi) ^ phi
    const IntForm w = contract_int(iphi0(), chi);
    return scale(wedge_int(w, iphi0()), -21);
  }
  IntForm l4_p27(const IntForm& chi) const {
    // 504 pi27 = i_psi(504 h), 504 h_ab = -84 sym(chi:::psi) + 24 (chi.psi) g
    const std::int64_t cpsi = contract_int(chi, ipsi0()).v[0];
    std::array<std::int64_t, 49> big{};
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        std::int64_t acc = 0;
        for (int m = 0; m < kDim; ++m)
          for (int n = 0; n < kDim; ++n)
            for (int p = 0; p < kDim; ++p)
              acc += chi(m, n, p, a) * ipsi0()(m, n, p, b) + chi(m, n, p, b) * ipsi0()(m, n, p, a);
        big[static_cast<std::size_t>(a * kDim + b)] = -84 * acc + (a == b ? 24 * cpsi : 0);
      }
    IntForm out(4);
    std::array<int, 4> dst{};
    const auto& s4 = permutations(4);
    for (const auto& comb : combinations7(4)) {
      std::int64_t acc = 0;
      for (const Perm& perm : s4) {
        const int a = comb[perm.p[0]], b = comb[perm.p[1]], d = comb[perm.p[2]], e2 = comb[perm.p[3]];
        std::int64_t inner = 0;
        for (int e = 0; e < kDim; ++e)
          inner += big[static_cast<std::size_t>(a * kDim + e)] * ipsi0()(b, d, e2, e);
        acc += perm.sign * inner;
      }
      if (acc % 24 != 0)
        throw CertificationFailure("projectors/lambda4-pi27-divisibility",
                                   {comb[0], comb[1], comb[2], comb[3]}, acc % 24);
      acc /= 24;
      for (const Perm& perm : s4) {
        for (int s = 0; s < 4; ++s) dst[static_cast<std::size_t>(s)] = comb[perm.p[static_cast<std::size_t>(s)]];
        out.at(std::span<const int>(dst.data(), 4)) = perm.sign * acc;
      }
    }
    return out;
  }

  IntForm l5_p7(const IntForm& eta) const {  // 72 pi7 = (72/72)(psi.eta) ^ psi
    const IntForm alpha = contract_int(ipsi0(), eta);
    return scale(wedge_int(alpha, ipsi0()), c.lambda5_pi7_num);
  }
  IntForm l5_p14(const IntForm& eta) const {  // 72 pi14 = (8 phi.eta - 2 (phi.eta).psi) ^ phi
    const IntForm pe = contract_int(iphi0(), eta);
    const IntForm w = add(scale(pe, 8), contract_int(pe, ipsi0()), -2);
    return wedge_int(w, iphi0());
  }
};

std::vector<IntForm> int_form_basis(int rank) {
  std::vector<IntForm> basis;
  std::array<int, 7> idx{};
  for (const auto& comb : combinations7(rank)) {
    IntForm b(rank);
    for (const Perm& perm : permutations(rank)) {
      for (int k = 0; k < rank; ++k) idx[static_cast<std::size_t>(k)] = comb[perm.p[static_cast<std::size_t>(k)]];
      b.at(std::span<const int>(idx.data(), static_cast<std::size_t>(rank))) = perm.sign;
    }
    basis.push_back(std::move(b));
  }
  return basis;
}

// coefficient of the basis form at this increasing combination
std::int64_t basis_coefficient(const IntForm& f, const std::array<std::uint8_t, 7>& comb) {
  std::array<int, 7> idx{};
  for (int k = 0; k < f.rank; ++k) idx[static_cast<std::size_t>(k)] = comb[static_cast<std::size_t>(k)];
  return f.at(std::span<const int>(idx.data(), static_cast<std::size_t>(f.rank)));
}

}  // namespace

Certificate certify_projectors(const ProjectorCoefficients& coeffs) {
  const auto t0 = clock_type::now();
  Certificate cert{"projectors", 0, 0, 0.0};
  ScaledProjectors pr{coeffs};

  auto expect_zero = [&cert](const IntForm& f, const char* what) {
    std::size_t where = 0;
    const std::int64_t d = max_abs_diff(f, IntForm(f.rank), &where);
    ++cert.tuples;
    if (d != 0) throw CertificationFailure(what, decode(where, f.rank), d);
  };
  auto expect_equal = [&cert](const IntForm& a, const IntForm& b, const char* what) {
    std::size_t where = 0;
    const std::int64_t d = max_abs_diff(a, b, &where);
    ++cert.tuples;
    if (d != 0) throw CertificationFailure(what, decode(where, a.rank), d);
  };

  // ranks come out of traces: an idempotent map (certified below) has
  // rank = trace, and the trace of the scaled map is scale * rank.
  std::int64_t tr2_7 = 0, tr2_14 = 0, tr3_1 = 0, tr3_7 = 0, tr3_27 = 0;
  std::int64_t tr4_1 = 0, tr4_7 = 0, tr4_27 = 0, tr5_7 = 0, tr5_14 = 0;

  {  // Lambda^2, scale 6
    const auto basis = int_form_basis(2);
    const auto& combs = combinations7(2);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const IntForm& w = basis[i];
      const IntForm p7 = pr.l2_p7(w);
      const IntForm p14 = pr.l2_p14(w);
      expect_equal(add(p7, p14), scale(w, 6), "projectors/lambda2-completeness");
      expect_equal(pr.l2_p7(p7), scale(p7, 6), "projectors/lambda2-pi7-idempotent");
      expect_equal(pr.l2_p14(p14), scale(p14, 6), "projectors/lambda2-pi14-idempotent");
      expect_zero(pr.l2_p7(p14), "projectors/lambda2-pi7-pi14-orthogonal");
      expect_zero(pr.l2_p14(p7), "projectors/lambda2-pi14-pi7-orthogonal");
      tr2_7 += basis_coefficient(p7, combs[i]);
      tr2_14 += basis_coefficient(p14, combs[i]);
    }
    if (tr2_7 != 6 * 7) throw CertificationFailure("projectors/lambda2-rank7", {}, tr2_7 - 42);
    if (tr2_14 != 6 * 14) throw CertificationFailure("projectors/lambda2-rank14", {}, tr2_14 - 84);
  }

  {  // Lambda^3, scale 672
    const auto basis = int_form_basis(3);
    const auto& combs = combinations7(3);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const IntForm& chi = basis[i];
      const IntForm p1 = pr.l3_p1(chi);
      const IntForm p7 = pr.l3_p7(chi);
      const IntForm p27 = pr.l3_p27(chi);
      expect_equal(add(add(p1, p7), p27), scale(chi, 672), "projectors/lambda3-completeness");
      expect_equal(pr.l3_p1(p1), scale(p1, 672), "projectors/lambda3-pi1-idempotent");
      expect_equal(pr.l3_p7(p7), scale(p7, 672), "projectors/lambda3-pi7-idempotent");
      expect_equal(pr.l3_p27(p27), scale(p27, 672), "projectors/lambda3-pi27-idempotent");
      expect_zero(pr.l3_p1(p7), "projectors/lambda3-pi1-pi7-orthogonal");
      expect_zero(pr.l3_p1(p27), "projectors/lambda3-pi1-pi27-orthogonal");
      expect_zero(pr.l3_p7(p1), "projectors/lambda3-pi7-pi1-orthogonal");
      expect_zero(pr.l3_p7(p27), "projectors/lambda3-pi7-pi27-orthogonal");
      tr3_1 += basis_coefficient(p1, combs[i]);
      tr3_7 += basis_coefficient(p7, combs[i]);
      tr3_27 += basis_coefficient(p27, combs[i]);
    }
    if (tr3_1 != 672 * 1) throw CertificationFailure("projectors/lambda3-rank1", {}, tr3_1 - 672);
    if (tr3_7 != 672 * 7) throw CertificationFailure("projectors/lambda3-rank7", {}, tr3_7 - 4704);
    if (tr3_27 != 672 * 27) throw CertificationFailure("projectors/lambda3-rank27", {}, tr3_27 - 18144);
  }

  {  // Lambda^4, scale 504
    const auto basis = int_form_basis(4);
    const auto& combs = combinations7(4);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const IntForm& chi = basis[i];
      const IntForm p1 = pr.l4_p1(chi);
      const IntForm p7 = pr.l4_p7(chi);
      const IntForm p27 = pr.l4_p27(chi);
      expect_equal(add(add(p1, p7), p27), scale(chi, 504), "projectors/lambda4-completeness");
      expect_equal(pr.l4_p1(p1), scale(p1, 504), "projectors/lambda4-pi1-idempotent");
      expect_equal(pr.l4_p7(p7), scale(p7, 504), "projectors/lambda4-pi7-idempotent");
      expect_equal(pr.l4_p27(p27), scale(p27, 504), "projectors/lambda4-pi27-idempotent");
      expect_zero(pr.l4_p1(p7), "projectors/lambda4-pi1-pi7-orthogonal");
      expect_zero(pr.l4_p7(p27), "projectors/lambda4-pi7-pi27-orthogonal");
      tr4_1 += basis_coefficient(p1, combs[i]);
      tr4_7 += basis_coefficient(p7, combs[i]);
      tr4_27 += basis_coefficient(p27, combs[i]);
    }
    if (tr4_1 != 504 * 1) throw CertificationFailure("projectors/lambda4-rank1", {}, tr4_1 - 504);
    if (tr4_7 != 504 * 7) throw CertificationFailure("projectors/lambda4-rank7", {}, tr4_7 - 3528);
    if (tr4_27 != 504 * 27) throw CertificationFailure("projectors/lambda4-rank27", {}, tr4_27 - 13608);
  }

  {  // Lambda^5, scale 72
    const auto basis = int_form_basis(5);
    const auto& combs = combinations7(5);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const IntForm& eta = basis[i];
      const IntForm p7 = pr.l5_p7(eta);
      const IntForm p14 = pr.l5_p14(eta);
      expect_equal(add(p7, p14), scale(eta, 72), "projectors/lambda5-completeness");
      expect_equal(pr.l5_p7(p7), scale(p7, 72), "projectors/lambda5-pi7-idempotent");
      expect_equal(pr.l5_p14(p14), scale(p14, 72), "projectors/lambda5-pi14-idempotent");
      expect_zero(pr.l5_p7(p14), "projectors/lambda5-pi7-pi14-orthogonal");
      expect_zero(pr.l5_p14(p7), "projectors/lambda5-pi14-pi7-orthogonal");
      tr5_7 += basis_coefficient(p7, combs[i]);
      tr5_14 += basis_coefficient(p14, combs[i]);
    }
    if (tr5_7 != 72 * 7) throw CertificationFailure("projectors/lambda5-rank7", {}, tr5_7 - 504);
    if (tr5_14 != 72 * 14) throw CertificationFailure("projectors/lambda5-rank14", {}, tr5_14 - 1008);
  }

  {  // psi . (alpha ^ psi) = 72 alpha, exactly, on covector basis elements
    for (int i = 0; i < kDim; ++i) {
      IntForm alpha(1);
      alpha.v[static_cast<std::size_t>(i)] = 1;
      const IntForm eta = wedge_int(alpha, ipsi0());
      const IntForm back = contract_int(ipsi0(), eta);
      expect_equal(back, scale(alpha, 72), "projectors/lambda5-72alpha");
    }
  }

  cert.seconds = elapsed(t0);
  return cert;
}

std::vector<Certificate> certify_all() {
  return {certify_phiphi(), certify_phipsi(), certify_psipsi(), certify_projectors()};
}

}  // namespace g2::exact
