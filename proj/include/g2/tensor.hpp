#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

// Dense multilinear algebra in dimension 7: storage, (anti)symmetrization,
// wedge, metric contraction, Hodge star, index raising/lowering.  Everything
// here is pointwise and pure; values are safe to share across threads.
namespace g2 {

inline constexpr int kDim = 7;

constexpr std::size_t pow7(int rank) {
  std::size_t n = 1;
  for (int i = 0; i < rank; ++i) n *= static_cast<std::size_t>(kDim);
  return n;
}

enum class Variance : std::uint8_t { Up, Lo };

enum class SymmetryHint : std::uint8_t { None, FullyAntisymmetric, SymmetricPairs };

using Vec7 = std::array<double, 7>;

struct Mat7 {
  std::array<double, 49> m{};

  double& operator()(int i, int j) { return m[static_cast<std::size_t>(i * kDim + j)]; }
  double operator()(int i, int j) const { return m[static_cast<std::size_t>(i * kDim + j)]; }

  static Mat7 identity();

  Mat7& operator+=(const Mat7& o);
  Mat7& operator-=(const Mat7& o);
  Mat7& operator*=(double c);
};

Mat7 operator+(Mat7 a, const Mat7& b);
Mat7 operator-(Mat7 a, const Mat7& b);
Mat7 operator*(double c, Mat7 a);
Mat7 matmul(const Mat7& a, const Mat7& b);
Mat7 transpose(const Mat7& a);
double trace(const Mat7& a);
double determinant(const Mat7& a);
Mat7 inverse(const Mat7& a);  // throws std::invalid_argument on singular input
bool is_positive_definite(const Mat7& a);

double max_abs(const Mat7& a);
double max_abs(const Vec7& v);
double dot(const Vec7& a, const Vec7& b);

// Dense real tensor over index range 0..6 with per-slot variance.
// data is stored row-major, 7^rank entries; rank 0 is a scalar.
class Tensor7 {
 public:
  Tensor7() : Tensor7(0) {}
  explicit Tensor7(int rank, Variance v = Variance::Lo);
  Tensor7(int rank, std::vector<Variance> variance);

  int rank() const { return rank_; }
  const std::vector<Variance>& variance() const { return variance_; }
  Variance variance(int slot) const { return variance_[static_cast<std::size_t>(slot)]; }
  void set_variance(int slot, Variance v) { variance_[static_cast<std::size_t>(slot)] = v; }

  SymmetryHint hint() const { return hint_; }
  void set_hint(SymmetryHint h) { hint_ = h; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::size_t size() const { return data_.size(); }

  double at_flat(std::size_t i) const { return data_[i]; }
  double& at_flat(std::size_t i) { return data_[i]; }

  double at(std::span<const int> idx) const { return data_[offset(idx)]; }
  double& at(std::span<const int> idx) { return data_[offset(idx)]; }

  template <class... I>
  double operator()(I... idx) const {
    return data_[offset_of(idx...)];
  }
  template <class... I>
  double& operator()(I... idx) {
    return data_[offset_of(idx...)];
  }

  Tensor7& operator+=(const Tensor7& o);
  Tensor7& operator-=(const Tensor7& o);
  Tensor7& operator*=(double c);

 private:
  static std::size_t offset(std::span<const int> idx) {
    std::size_t off = 0;
    for (int i : idx) off = off * kDim + static_cast<std::size_t>(i);
    return off;
  }
  template <class... I>
  static std::size_t offset_of(I... idx) {
    std::size_t off = 0;
    ((off = off * kDim + static_cast<std::size_t>(idx)), ...);
    return off;
  }

  int rank_ = 0;
  std::vector<Variance> variance_;
  std::vector<double> data_;
  SymmetryHint hint_ = SymmetryHint::None;
};

Tensor7 operator+(Tensor7 a, const Tensor7& b);
Tensor7 operator-(Tensor7 a, const Tensor7& b);
Tensor7 operator*(double c, Tensor7 a);
double max_abs(const Tensor7& t);

// Decodes a flat offset into per-slot indices (idx.size() == rank).
void decode_index(std::size_t flat, std::span<int> idx);

struct Perm {
  std::array<std::uint8_t, 7> p;
  std::int8_t sign;
};

// All permutations of {0..n-1} with parity, n <= 7; cached after first use.
const std::vector<Perm>& permutations(int n);

// Strictly increasing r-tuples from {0..6}.
const std::vector<std::array<std::uint8_t, 7>>& combinations7(int r);

struct Metric7 {
  Mat7 g = Mat7::identity();
  Mat7 g_inv = Mat7::identity();
  double sqrt_det = 1.0;

  static Metric7 identity() { return Metric7{}; }
  // Throws std::invalid_argument unless g is symmetric positive definite.
  static Metric7 from_matrix(const Mat7& g);
};

// The alternating symbol as a rank-7 tensor, entry +1 at (0,1,...,6).
Tensor7 alternating_symbol();

// Full antisymmetrization A(t), weight 1/rank!.  A is a projector.
Tensor7 antisymmetrize(const Tensor7& t);

// e^{i1...ip}: the antisymmetric tensor with value +1 at the given tuple.
Tensor7 basis_form(std::initializer_list<int> idx);

Tensor7 form_from_vector(const Vec7& v, Variance var = Variance::Lo);
Vec7 vector_from_form(const Tensor7& t);
Mat7 mat_from_tensor(const Tensor7& t);
Tensor7 tensor_from_mat(const Mat7& m, Variance v0 = Variance::Lo, Variance v1 = Variance::Lo);

// Wedge product, normalized so that (e^i ^ e^j ^ ...) has component +1 at
// (i,j,...).  Inputs that are not marked fully antisymmetric are
// antisymmetrized first.  Throws if the result rank exceeds 7.
Tensor7 wedge(const Tensor7& a, const Tensor7& b);

// (alpha . beta)_{b1..bq} = alpha^{a1..ap} beta_{a1..ap b1..bq}; indices on
// alpha raised with the metric.  Throws if rank(alpha) > rank(beta).
Tensor7 contract_form_into_form(const Tensor7& alpha, const Tensor7& beta, const Metric7& m);

// Hodge star of a p-form; ** = id for every p in Riemannian signature.
Tensor7 hodge_star(const Tensor7& omega, const Metric7& m);

Tensor7 raise_slot(const Tensor7& t, int slot, const Metric7& m);
Tensor7 lower_slot(const Tensor7& t, int slot, const Metric7& m);
Tensor7 raise_all(const Tensor7& t, const Metric7& m);

// Metric pairing of two p-forms with the 1/p! normalization.
double form_inner(const Tensor7& a, const Tensor7& b, const Metric7& m);

}  // namespace g2
