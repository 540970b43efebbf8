#include "g2/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace g2 {

Mat7 Mat7::identity() {
  Mat7 r;
  for (int i = 0; i < kDim; ++i) r(i, i) = 1.0;
  return r;
}

Mat7& Mat7::operator+=(const Mat7& o) {
  for (std::size_t i = 0; i < m.size(); ++i) m[i] += o.m[i];
  return *this;
}
Mat7& Mat7::operator-=(const Mat7& o) {
  for (std::size_t i = 0; i < m.size(); ++i) m[i] -= o.m[i];
  return *this;
}
Mat7& Mat7::operator*=(double c) {
  for (double& x : m) x *= c;
  return *this;
}

Mat7 operator+(Mat7 a, const Mat7& b) { return a += b; }
Mat7 operator-(Mat7 a, const Mat7& b) { return a -= b; }
Mat7 operator*(double c, Mat7 a) { return a *= c; }

Mat7 matmul(const Mat7& a, const Mat7& b) {
  Mat7 r;
  for (int i = 0; i < kDim; ++i)
    for (int k = 0; k < kDim; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < kDim; ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Mat7 transpose(const Mat7& a) {
  Mat7 r;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) r(i, j) = a(j, i);
  return r;
}

double trace(const Mat7& a) {
  double t = 0.0;
  for (int i = 0; i < kDim; ++i) t += a(i, i);
  return t;
}

namespace {

// LU with partial pivoting; returns false if (numerically) singular.
bool lu_decompose(const Mat7& a, Mat7& lu, std::array<int, 7>& piv, double& det) {
  lu = a;
  det = 1.0;
  for (int i = 0; i < kDim; ++i) piv[static_cast<std::size_t>(i)] = i;
  for (int col = 0; col < kDim; ++col) {
    int best = col;
    double best_abs = std::abs(lu(col, col));
    for (int r = col + 1; r < kDim; ++r) {
      if (std::abs(lu(r, col)) > best_abs) {
        best = r;
        best_abs = std::abs(lu(r, col));
      }
    }
    if (best_abs == 0.0) {
      det = 0.0;
      return false;
    }
    if (best != col) {
      for (int j = 0; j < kDim; ++j) std::swap(lu(col, j), lu(best, j));
      std::swap(piv[static_cast<std::size_t>(col)], piv[static_cast<std::size_t>(best)]);
      det = -det;
    }
    det *= lu(col, col);
    const double inv_pivot = 1.0 / lu(col, col);
    for (int r = col + 1; r < kDim; ++r) {
      const double f = lu(r, col) * inv_pivot;
      lu(r, col) = f;
      for (int j = col + 1; j < kDim; ++j) lu(r, j) -= f * lu(col, j);
    }
  }
  return true;
}

}  // namespace

double determinant(const Mat7& a) {
  Mat7 lu;
  std::array<int, 7> piv;
  double det = 0.0;
  lu_decompose(a, lu, piv, det);
  return det;
}

Mat7 inverse(const Mat7& a) {
  Mat7 lu;
  std::array<int, 7> piv;
  double det = 0.0;
  if (!lu_decompose(a, lu, piv, det)) throw std::invalid_argument("Mat7 inverse: singular matrix");
  Mat7 inv;
  for (int col = 0; col < kDim; ++col) {
    std::array<double, 7> x{};
    // forward substitution on permuted unit vector
    for (int i = 0; i < kDim; ++i) {
      double s = (piv[static_cast<std::size_t>(i)] == col) ? 1.0 : 0.0;
      for (int j = 0; j < i; ++j) s -= lu(i, j) * x[static_cast<std::size_t>(j)];
      x[static_cast<std::size_t>(i)] = s;
    }
    for (int i = kDim - 1; i >= 0; --i) {
      double s = x[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < kDim; ++j) s -= lu(i, j) * x[static_cast<std::size_t>(j)];
      x[static_cast<std::size_t>(i)] = s / lu(i, i);
    }
    for (int i = 0; i < kDim; ++i) inv(i, col) = x[static_cast<std::size_t>(i)];
  }
  return inv;
}

bool is_positive_definite(const Mat7& a) {
  // Cholesky attempt; also require symmetry relative to the matrix scale.
  double scale = max_abs(a);
  if (!(scale > 0.0) || !std::isfinite(scale)) return false;
  for (int i = 0; i < kDim; ++i)
    for (int j = i + 1; j < kDim; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale) return false;
  Mat7 l;
  for (int i = 0; i < kDim; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return true;
}

double max_abs(const Mat7& a) {
  double r = 0.0;
  for (double x : a.m) r = std::max(r, std::abs(x));
  return r;
}

double max_abs(const Vec7& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

double dot(const Vec7& a, const Vec7& b) {
  double s = 0.0;
  for (int i = 0; i < kDim; ++i)
    s += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i)];
  return s;
}

Tensor7::Tensor7(int rank, Variance v)
    : rank_(rank), variance_(static_cast<std::size_t>(rank), v), data_(pow7(rank), 0.0) {}

Tensor7::Tensor7(int rank, std::vector<Variance> variance)
    : rank_(rank), variance_(std::move(variance)), data_(pow7(rank), 0.0) {
  if (variance_.size() != static_cast<std::size_t>(rank_))
    throw std::invalid_argument("Tensor7: variance list does not match rank");
}

Tensor7& Tensor7::operator+=(const Tensor7& o) {
  if (o.rank_ != rank_) throw std::invalid_argument("Tensor7 +=: rank mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}
Tensor7& Tensor7::operator-=(const Tensor7& o) {
  if (o.rank_ != rank_) throw std::invalid_argument("Tensor7 -=: rank mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}
Tensor7& Tensor7::operator*=(double c) {
  for (double& x : data_) x *= c;
  return *this;
}

Tensor7 operator+(Tensor7 a, const Tensor7& b) { return a += b; }
Tensor7 operator-(Tensor7 a, const Tensor7& b) { return a -= b; }
Tensor7 operator*(double c, Tensor7 a) { return a *= c; }

double max_abs(const Tensor7& t) {
  double r = 0.0;
  for (double x : t.data()) r = std::max(r, std::abs(x));
  return r;
}

void decode_index(std::size_t flat, std::span<int> idx) {
  for (std::size_t k = idx.size(); k-- > 0;) {
    idx[k] = static_cast<int>(flat % kDim);
    flat /= kDim;
  }
}

namespace {

std::vector<Perm> make_permutations(int n) {
  std::vector<Perm> out;
  std::array<std::uint8_t, 7> p{};
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  do {
    int inversions = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(j)]) ++inversions;
    out.push_back(Perm{p, static_cast<std::int8_t>(inversions % 2 == 0 ? 1 : -1)});
  } while (std::next_permutation(p.begin(), p.begin() + n));
  return out;
}

std::vector<std::array<std::uint8_t, 7>> make_combinations(int r) {
  std::vector<std::array<std::uint8_t, 7>> out;
  std::array<std::uint8_t, 7> c{};
  for (int i = 0; i < r; ++i) c[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  if (r == 0) {
    out.push_back(c);
    return out;
  }
  while (true) {
    out.push_back(c);
    int i = r - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == kDim - r + i) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < r; ++j)
      c[static_cast<std::size_t>(j)] = static_cast<std::uint8_t>(c[static_cast<std::size_t>(j - 1)] + 1);
  }
  return out;
}

}  // namespace

const std::vector<Perm>& permutations(int n) {
  static std::array<std::vector<Perm>, 8> cache;
  static std::once_flag flag;
  std::call_once(flag, [] {
    for (int k = 0; k <= kDim; ++k) cache[static_cast<std::size_t>(k)] = make_permutations(k);
  });
  return cache[static_cast<std::size_t>(n)];
}

const std::vector<std::array<std::uint8_t, 7>>& combinations7(int r) {
  static std::array<std::vector<std::array<std::uint8_t, 7>>, 8> cache;
  static std::once_flag flag;
  std::call_once(flag, [] {
    for (int k = 0; k <= kDim; ++k) cache[static_cast<std::size_t>(k)] = make_combinations(k);
  });
  return cache[static_cast<std::size_t>(r)];
}

Metric7 Metric7::from_matrix(const Mat7& g) {
  if (!is_positive_definite(g))
    throw std::invalid_argument("Metric7: matrix is not symmetric positive definite");
  Metric7 m;
  m.g = g;
  m.g_inv = inverse(g);
  m.sqrt_det = std::sqrt(determinant(g));
  return m;
}

Tensor7 alternating_symbol() {
  Tensor7 eps(7);
  for (const Perm& perm : permutations(7)) {
    std::array<int, 7> idx;
    for (int i = 0; i < 7; ++i) idx[static_cast<std::size_t>(i)] = perm.p[static_cast<std::size_t>(i)];
    eps.at(idx) = perm.sign;
  }
  eps.set_hint(SymmetryHint::FullyAntisymmetric);
  return eps;
}

Tensor7 antisymmetrize(const Tensor7& t) {
  const int r = t.rank();
  if (r < 2) return t;
  Tensor7 out(r, t.variance());
  const auto& perms = permutations(r);
  const double inv_fact = 1.0 / static_cast<double>(perms.size());
  std::array<int, 8> src{};
  std::array<int, 8> dst{};
  for (const auto& comb : combinations7(r)) {
    double acc = 0.0;
    for (const Perm& perm : perms) {
      for (int k = 0; k < r; ++k)
        src[static_cast<std::size_t>(k)] = comb[perm.p[static_cast<std::size_t>(k)]];
      acc += perm.sign * t.at(std::span<const int>(src.data(), static_cast<std::size_t>(r)));
    }
    acc *= inv_fact;
    for (const Perm& perm : perms) {
      for (int k = 0; k < r; ++k)
        dst[static_cast<std::size_t>(k)] = comb[perm.p[static_cast<std::size_t>(k)]];
      out.at(std::span<const int>(dst.data(), static_cast<std::size_t>(r))) = perm.sign * acc;
    }
  }
  out.set_hint(SymmetryHint::FullyAntisymmetric);
  return out;
}

Tensor7 basis_form(std::initializer_list<int> idx) {
  const int r = static_cast<int>(idx.size());
  Tensor7 out(r);
  std::array<int, 7> base{};
  int k = 0;
  for (int i : idx) base[static_cast<std::size_t>(k++)] = i;
  std::array<int, 7> dst{};
  for (const Perm& perm : permutations(r)) {
    for (int s = 0; s < r; ++s)
      dst[static_cast<std::size_t>(s)] = base[perm.p[static_cast<std::size_t>(s)]];
    out.at(std::span<const int>(dst.data(), static_cast<std::size_t>(r))) = perm.sign;
  }
  out.set_hint(SymmetryHint::FullyAntisymmetric);
  return out;
}

Tensor7 form_from_vector(const Vec7& v, Variance var) {
  Tensor7 out(1, var);
  for (int i = 0; i < kDim; ++i) out(i) = v[static_cast<std::size_t>(i)];
  return out;
}

Vec7 vector_from_form(const Tensor7& t) {
  Vec7 v{};
  for (int i = 0; i < kDim; ++i) v[static_cast<std::size_t>(i)] = t(i);
  return v;
}

Mat7 mat_from_tensor(const Tensor7& t) {
  Mat7 m;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) m(i, j) = t(i, j);
  return m;
}

Tensor7 tensor_from_mat(const Mat7& m, Variance v0, Variance v1) {
  Tensor7 t(2, std::vector<Variance>{v0, v1});
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j) t(i, j) = m(i, j);
  return t;
}

Tensor7 wedge(const Tensor7& a, const Tensor7& b) {
  const int p = a.rank();
  const int q = b.rank();
  if (p + q > kDim) throw std::invalid_argument("wedge: result rank exceeds 7");
  const Tensor7& aa = (a.hint() == SymmetryHint::FullyAntisymmetric || p < 2) ? a : antisymmetrize(a);
  const Tensor7& bb = (b.hint() == SymmetryHint::FullyAntisymmetric || q < 2) ? b : antisymmetrize(b);

  const int r = p + q;
  Tensor7 out(r);
  if (r == 0) {
    out.at_flat(0) = aa.at_flat(0) * bb.at_flat(0);
    return out;
  }

  // Shuffle sum over each increasing index combination, then scatter.
  std::array<int, 8> ia{};
  std::array<int, 8> ib{};
  std::array<int, 8> dst{};
  const auto& pos_combs = combinations7(p);  // positions within the r-tuple
  for (const auto& comb : combinations7(r)) {
    double val = 0.0;
    for (const auto& sel : pos_combs) {
      bool in_range = true;
      for (int k = 0; k < p; ++k)
        if (sel[static_cast<std::size_t>(k)] >= r) {
          in_range = false;
          break;
        }
      if (!in_range) continue;
      std::array<bool, 8> used{};
      for (int k = 0; k < p; ++k) used[sel[static_cast<std::size_t>(k)]] = true;
      int inv = 0;  // parity of [sel..., rest...] as a permutation of 0..r-1
      {
        std::array<int, 8> order{};
        int w = 0;
        for (int k = 0; k < p; ++k) order[static_cast<std::size_t>(w++)] = sel[static_cast<std::size_t>(k)];
        for (int k = 0; k < r; ++k)
          if (!used[static_cast<std::size_t>(k)]) order[static_cast<std::size_t>(w++)] = k;
        for (int x = 0; x < r; ++x)
          for (int y = x + 1; y < r; ++y)
            if (order[static_cast<std::size_t>(x)] > order[static_cast<std::size_t>(y)]) ++inv;
      }
      int wa = 0, wb = 0;
      for (int k = 0; k < p; ++k)
        ia[static_cast<std::size_t>(wa++)] = comb[sel[static_cast<std::size_t>(k)]];
      for (int k = 0; k < r; ++k)
        if (!used[static_cast<std::size_t>(k)]) ib[static_cast<std::size_t>(wb++)] = comb[static_cast<std::size_t>(k)];
      const double term = aa.at(std::span<const int>(ia.data(), static_cast<std::size_t>(p))) *
                          bb.at(std::span<const int>(ib.data(), static_cast<std::size_t>(q)));
      val += (inv % 2 == 0 ? term : -term);
    }
    for (const Perm& perm : permutations(r)) {
      for (int s = 0; s < r; ++s)
        dst[static_cast<std::size_t>(s)] = comb[perm.p[static_cast<std::size_t>(s)]];
      out.at(std::span<const int>(dst.data(), static_cast<std::size_t>(r))) = perm.sign * val;
    }
  }
  out.set_hint(SymmetryHint::FullyAntisymmetric);
  return out;
}

Tensor7 raise_slot(const Tensor7& t, int slot, const Metric7& m) {
  if (slot < 0 || slot >= t.rank()) throw std::invalid_argument("raise_slot: slot out of range");
  Tensor7 out(t.rank(), t.variance());
  out.set_variance(slot, Variance::Up);
  out.set_hint(t.hint());
  const int r = t.rank();
  const std::size_t n = out.size();
  std::vector<int> idx(static_cast<std::size_t>(r));
  std::vector<int> src(static_cast<std::size_t>(r));
  for (std::size_t flat = 0; flat < n; ++flat) {
    decode_index(flat, idx);
    for (int k = 0; k < r; ++k) src[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k)];
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) {
      src[static_cast<std::size_t>(slot)] = e;
      acc += m.g_inv(idx[static_cast<std::size_t>(slot)], e) * t.at(src);
    }
    out.at_flat(flat) = acc;
  }
  return out;
}

Tensor7 lower_slot(const Tensor7& t, int slot, const Metric7& m) {
  if (slot < 0 || slot >= t.rank()) throw std::invalid_argument("lower_slot: slot out of range");
  Tensor7 out(t.rank(), t.variance());
  out.set_variance(slot, Variance::Lo);
  out.set_hint(t.hint());
  const int r = t.rank();
  const std::size_t n = out.size();
  std::vector<int> idx(static_cast<std::size_t>(r));
  std::vector<int> src(static_cast<std::size_t>(r));
  for (std::size_t flat = 0; flat < n; ++flat) {
    decode_index(flat, idx);
    for (int k = 0; k < r; ++k) src[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k)];
    double acc = 0.0;
    for (int e = 0; e < kDim; ++e) {
      src[static_cast<std::size_t>(slot)] = e;
      acc += m.g(idx[static_cast<std::size_t>(slot)], e) * t.at(src);
    }
    out.at_flat(flat) = acc;
  }
  return out;
}

Tensor7 raise_all(const Tensor7& t, const Metric7& m) {
  Tensor7 out = t;
  for (int s = 0; s < t.rank(); ++s) out = raise_slot(out, s, m);
  return out;
}

Tensor7 contract_form_into_form(const Tensor7& alpha, const Tensor7& beta, const Metric7& m) {
  const int p = alpha.rank();
  const int pq = beta.rank();
  if (p > pq) throw std::invalid_argument("contract_form_into_form: rank of alpha exceeds rank of beta");
  const int q = pq - p;
  const Tensor7 alpha_up = raise_all(alpha, m);
  Tensor7 out(q);
  const std::size_t nq = pow7(q);
  const std::size_t np = pow7(p);
  const auto ad = alpha_up.data();
  const auto bd = beta.data();
  for (std::size_t b = 0; b < nq; ++b) {
    double acc = 0.0;
    for (std::size_t a = 0; a < np; ++a) acc += ad[a] * bd[a * nq + b];
    out.at_flat(b) = acc;
  }
  out.set_hint(beta.hint());
  return out;
}

Tensor7 hodge_star(const Tensor7& omega, const Metric7& m) {
  const int p = omega.rank();
  if (p < 0 || p > kDim) throw std::invalid_argument("hodge_star: invalid rank");
  const Tensor7 up = raise_all(omega, m);
  Tensor7 out(kDim - p);
  // One representative permutation per contracted set (increasing prefix)
  // instead of p! equal 1/p!-weighted copies; keeps integer inputs exact.
  std::array<int, 7> src{};
  std::array<int, 7> dst{};
  for (const Perm& perm : permutations(7)) {
    bool increasing = true;
    for (int k = 0; k + 1 < p; ++k)
      if (perm.p[static_cast<std::size_t>(k)] > perm.p[static_cast<std::size_t>(k + 1)]) {
        increasing = false;
        break;
      }
    if (!increasing) continue;
    for (int k = 0; k < p; ++k) src[static_cast<std::size_t>(k)] = perm.p[static_cast<std::size_t>(k)];
    for (int k = p; k < kDim; ++k) dst[static_cast<std::size_t>(k - p)] = perm.p[static_cast<std::size_t>(k)];
    out.at(std::span<const int>(dst.data(), static_cast<std::size_t>(kDim - p))) +=
        m.sqrt_det * perm.sign * up.at(std::span<const int>(src.data(), static_cast<std::size_t>(p)));
  }
  out.set_hint(SymmetryHint::FullyAntisymmetric);
  return out;
}

double form_inner(const Tensor7& a, const Tensor7& b, const Metric7& m) {
  if (a.rank() != b.rank()) throw std::invalid_argument("form_inner: rank mismatch");
  const Tensor7 au = raise_all(a, m);
  double fact = 1.0;
  for (int k = 2; k <= a.rank(); ++k) fact *= k;
  double acc = 0.0;
  for (std::size_t i = 0; i < au.size(); ++i) acc += au.at_flat(i) * b.at_flat(i);
  return acc / fact;
}

}  // namespace g2
