#include "g2/fields.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>

namespace g2::fields {

std::array<double, 7> GridSpec::coords(int p) const {
  std::array<double, 7> x{};
  const double h = spacing();
  if (axis_count() == 1) {
    x[static_cast<std::size_t>(active_axes[0])] = h * p;
  } else {
    x[static_cast<std::size_t>(active_axes[0])] = h * (p / n);
    x[static_cast<std::size_t>(active_axes[1])] = h * (p % n);
  }
  return x;
}

int GridSpec::shift(int p, int pos, int offset) const {
  auto wrap = [this](int i) {
    i %= n;
    return i < 0 ? i + n : i;
  };
  if (axis_count() == 1) return wrap(p + offset);
  int i = p / n, j = p % n;
  if (pos == 0)
    i = wrap(i + offset);
  else
    j = wrap(j + offset);
  return i * n + j;
}

void GridSpec::validate() const {
  if (axis_count() < 1 || axis_count() > 2) throw GridError("grid: need 1 or 2 active axes");
  for (int a : active_axes)
    if (a < 0 || a >= kDim) throw GridError("grid: active axis out of range");
  if (axis_count() == 2 && active_axes[0] == active_axes[1])
    throw GridError("grid: duplicate active axis");
  if (n < 8) throw GridError("grid: need at least 8 points per axis");
  if (n % 2 != 0) throw GridError("grid: point count must be even");
  if (!(period > 0.0)) throw GridError("grid: period must be positive");
  if (fd_order != 2 && fd_order != 4) throw GridError("grid: fd_order must be 2 or 4");
}

double fd_tolerance(const GridSpec& spec, double field_scale) {
  const double h = 2.0 * std::numbers::pi / spec.n;
  return 50.0 * std::pow(h, spec.fd_order) * std::max(field_scale, 1.0);
}

TensorField::TensorField(GridSpec spec, int rank, Variance v)
    : TensorField(std::move(spec), rank, std::vector<Variance>(static_cast<std::size_t>(rank), v)) {}

TensorField::TensorField(GridSpec spec, int rank, std::vector<Variance> variance)
    : spec_(std::move(spec)), rank_(rank), variance_(std::move(variance)), stride_(pow7(rank)) {
  spec_.validate();
  if (variance_.size() != static_cast<std::size_t>(rank_))
    throw GridError("tensor field: variance list does not match rank");
  data_.assign(static_cast<std::size_t>(spec_.point_count()) * stride_, 0.0);
}

TensorField TensorField::tabulate(const GridSpec& spec, int rank, std::vector<Variance> variance,
                                  const std::function<Tensor7(const std::array<double, 7>&)>& fn) {
  TensorField f(spec, rank, std::move(variance));
  for (int p = 0; p < spec.point_count(); ++p) {
    const Tensor7 v = fn(spec.coords(p));
    if (v.rank() != rank) throw GridError("tabulate: value rank mismatch");
    f.set_value(p, v);
  }
  return f;
}

Tensor7 TensorField::value(int p) const {
  Tensor7 t(rank_, variance_);
  const double* src = data_.data() + static_cast<std::size_t>(p) * stride_;
  std::copy(src, src + stride_, t.data().begin());
  return t;
}

void TensorField::set_value(int p, const Tensor7& t) {
  std::copy(t.data().begin(), t.data().end(), data_.begin() + static_cast<std::size_t>(p) * stride_);
}

Tensor7 partial_derivative(const TensorField& f, int axis, int p) {
  const GridSpec& spec = f.spec();
  Tensor7 out(f.rank(), f.variance());
  const int pos = spec.active_pos(axis);
  if (pos < 0) return out;  // constant along inactive axes
  const double h = spec.spacing();
  const std::size_t stride = f.stride();
  auto row = [&](int offset) {
    return f.raw().subspan(static_cast<std::size_t>(spec.shift(p, pos, offset)) * stride, stride);
  };
  auto d = out.data();
  if (spec.fd_order == 2) {
    const auto fp = row(1), fm = row(-1);
    const double c = 1.0 / (2.0 * h);
    for (std::size_t i = 0; i < stride; ++i) d[i] = c * (fp[i] - fm[i]);
  } else {
    const auto fp1 = row(1), fm1 = row(-1), fp2 = row(2), fm2 = row(-2);
    const double c = 1.0 / (12.0 * h);
    for (std::size_t i = 0; i < stride; ++i)
      d[i] = c * (-fp2[i] + 8.0 * fp1[i] - 8.0 * fm1[i] + fm2[i]);
  }
  return out;
}

Tensor7 exterior_derivative(const TensorField& form_field, int p) {
  const int r = form_field.rank();
  if (r >= kDim) throw GridError("exterior derivative: rank must be at most 6");
  Tensor7 grad(r + 1);  // d_{a} w_{...}
  std::vector<int> idx(static_cast<std::size_t>(r) + 1);
  for (int axis : form_field.spec().active_axes) {
    const Tensor7 da = partial_derivative(form_field, axis, p);
    idx[0] = axis;
    const std::size_t sub = pow7(r);
    for (std::size_t flat = 0; flat < sub; ++flat) {
      decode_index(flat, std::span<int>(idx.data() + 1, static_cast<std::size_t>(r)));
      grad.at(idx) = da.at_flat(flat);
    }
  }
  Tensor7 d = antisymmetrize(grad);
  d *= static_cast<double>(r + 1);
  d.set_hint(SymmetryHint::FullyAntisymmetric);
  return d;
}

Tensor7 christoffels_at(const TensorField& metric, int p) {
  Mat7 g;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      g(i, j) = metric.component(p, static_cast<std::size_t>(i * kDim + j));
  const Mat7 ginv = inverse(g);
  std::array<Mat7, 7> dg{};  // dg[c] = d_c g
  for (int axis : metric.spec().active_axes) {
    const Tensor7 d = partial_derivative(metric, axis, p);
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j) dg[static_cast<std::size_t>(axis)](i, j) = d(i, j);
  }
  Tensor7 gamma(3, {Variance::Lo, Variance::Up, Variance::Lo});
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b)
      for (int c = 0; c < kDim; ++c) {
        double acc = 0.0;
        for (int d = 0; d < kDim; ++d)
          acc += ginv(b, d) * (dg[static_cast<std::size_t>(c)](d, a) + dg[static_cast<std::size_t>(a)](d, c) -
                               dg[static_cast<std::size_t>(d)](a, c));
        gamma(a, b, c) = 0.5 * acc;
      }
  return gamma;
}

TensorField christoffel_field_of(const TensorField& metric) {
  TensorField out(metric.spec(), 3, {Variance::Lo, Variance::Up, Variance::Lo});
  for (int p = 0; p < metric.spec().point_count(); ++p) out.set_value(p, christoffels_at(metric, p));
  return out;
}

Tensor7 covariant_derivative_at(const TensorField& t, const TensorField& christoffel, int p) {
  const int r = t.rank();
  std::vector<Variance> var;
  var.reserve(static_cast<std::size_t>(r) + 1);
  var.push_back(Variance::Lo);
  for (const Variance v : t.variance()) var.push_back(v);
  Tensor7 out(r + 1, std::move(var));

  // partial term
  std::vector<int> idx(static_cast<std::size_t>(r) + 1);
  for (int axis : t.spec().active_axes) {
    const Tensor7 da = partial_derivative(t, axis, p);
    idx[0] = axis;
    for (std::size_t flat = 0; flat < da.size(); ++flat) {
      decode_index(flat, std::span<int>(idx.data() + 1, static_cast<std::size_t>(r)));
      out.at(idx) = da.at_flat(flat);
    }
  }
  if (r == 0) return out;

  // connection terms, one per slot
  const Tensor7 gamma = christoffel.value(p);
  const Tensor7 tv = t.value(p);
  std::vector<int> src(static_cast<std::size_t>(r));
  const std::size_t nout = out.size();
  const std::size_t sub = pow7(r);
  for (std::size_t flat = 0; flat < nout; ++flat) {
    const int a = static_cast<int>(flat / sub);
    decode_index(flat % sub, std::span<int>(idx.data() + 1, static_cast<std::size_t>(r)));
    double acc = out.at_flat(flat);
    for (int slot = 0; slot < r; ++slot) {
      const int is = idx[static_cast<std::size_t>(slot) + 1];
      for (int k = 0; k < r; ++k) src[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k) + 1];
      if (t.variance()[static_cast<std::size_t>(slot)] == Variance::Up) {
        for (int e = 0; e < kDim; ++e) {
          src[static_cast<std::size_t>(slot)] = e;
          acc += gamma(a, is, e) * tv.at(src);
        }
      } else {
        for (int e = 0; e < kDim; ++e) {
          src[static_cast<std::size_t>(slot)] = e;
          acc -= gamma(a, e, is) * tv.at(src);
        }
      }
    }
    out.at_flat(flat) = acc;
  }
  return out;
}

Mat7 ricci_from_metric(const TensorField& christoffel, int p) {
  // R_ab = d_c G^c_ab - d_a G^c_cb + G^c_cd G^d_ab - G^c_ad G^d_cb
  // with G^b_ac stored as christoffel(a, b, c).
  const Tensor7 gamma = christoffel.value(p);
  std::array<Tensor7, 7> dgamma;
  for (int axis : christoffel.spec().active_axes)
    dgamma[static_cast<std::size_t>(axis)] = partial_derivative(christoffel, axis, p);
  auto dG = [&](int c, int b, int a1, int a2) -> double {
    // d_c Gamma^b_{a1 a2}
    const Tensor7& t = dgamma[static_cast<std::size_t>(c)];
    if (t.rank() == 0) return 0.0;
    return t(a1, b, a2);
  };
  Mat7 r;
  for (int a = 0; a < kDim; ++a)
    for (int b = 0; b < kDim; ++b) {
      double acc = 0.0;
      for (int c = 0; c < kDim; ++c) {
        acc += dG(c, c, a, b) - dG(a, c, c, b);
        for (int d = 0; d < kDim; ++d)
          acc += gamma(d, c, c) * gamma(a, d, b) - gamma(a, c, d) * gamma(c, d, b);
      }
      r(a, b) = acc;
    }
  return r;
}

StructureField StructureField::from_phi(const TensorField& phi) {
  if (phi.rank() != 3) throw GridError("structure field: need a rank-3 field");
  StructureField sf;
  sf.phi_ = phi;
  const int npts = phi.spec().point_count();
  sf.points_.reserve(static_cast<std::size_t>(npts));
  sf.psi_ = TensorField(phi.spec(), 4);
  sf.metric_ = TensorField(phi.spec(), 2);
  sf.metric_inv_ = TensorField(phi.spec(), 2, Variance::Up);
  for (int p = 0; p < npts; ++p) {
    Positivity why = Positivity::Positive;
    auto s = try_metric_from_phi(phi.value(p), &why);
    if (!s)
      throw NotPositiveError(why, "structure field: 3-form not positive at grid point " +
                                      std::to_string(p));
    sf.psi_.set_value(p, s->psi);
    sf.metric_.set_value(p, tensor_from_mat(s->metric.g));
    sf.metric_inv_.set_value(p, tensor_from_mat(s->metric.g_inv, Variance::Up, Variance::Up));
    sf.points_.push_back(*std::move(s));
  }
  sf.christoffel_ = christoffel_field_of(sf.metric_);
  return sf;
}

namespace {

template <class T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw GridError("snapshot: truncated file");
  return v;
}

}  // namespace

void save_snapshot(const TensorField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw GridError("snapshot: cannot open " + path + " for writing");
  os.write("G2F1", 4);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(f.rank()));
  std::uint32_t mask = 0;
  for (int s = 0; s < f.rank(); ++s)
    if (f.variance()[static_cast<std::size_t>(s)] == Variance::Up) mask |= (1u << s);
  write_pod(os, mask);
  const GridSpec& spec = f.spec();
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.axis_count()));
  for (int k = 0; k < 2; ++k)
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(k < spec.axis_count()
                                                                ? spec.active_axes[static_cast<std::size_t>(k)]
                                                                : 0));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.n));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.fd_order));
  write_pod<double>(os, spec.period);
  const auto raw = f.raw();
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
  if (!os) throw GridError("snapshot: write failed for " + path);
}

TensorField load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw GridError("snapshot: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "G2F1", 4) != 0) throw GridError("snapshot: bad magic");
  const auto rank = static_cast<int>(read_pod<std::uint32_t>(is));
  const auto mask = read_pod<std::uint32_t>(is);
  GridSpec spec;
  const auto axis_count = static_cast<int>(read_pod<std::uint32_t>(is));
  std::uint32_t axes[2];
  axes[0] = read_pod<std::uint32_t>(is);
  axes[1] = read_pod<std::uint32_t>(is);
  spec.active_axes.assign(1, static_cast<int>(axes[0]));
  if (axis_count == 2) spec.active_axes.push_back(static_cast<int>(axes[1]));
  spec.n = static_cast<int>(read_pod<std::uint32_t>(is));
  spec.fd_order = static_cast<int>(read_pod<std::uint32_t>(is));
  spec.period = read_pod<double>(is);
  if (rank < 0 || rank > 7) throw GridError("snapshot: bad rank");
  std::vector<Variance> var;
  for (int s = 0; s < rank; ++s) var.push_back((mask >> s) & 1u ? Variance::Up : Variance::Lo);
  TensorField f(spec, rank, std::move(var));
  auto raw = f.raw();
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(double)));
  if (!is) throw GridError("snapshot: truncated data section");
  return f;
}

void export_jsonl(const TensorField& f, std::ostream& os) {
  const GridSpec& spec = f.spec();
  for (int p = 0; p < spec.point_count(); ++p) {
    const auto x = spec.coords(p);
    os << "{\"point\":" << p << ",\"x\":[";
    for (int k = 0; k < kDim; ++k) os << (k ? "," : "") << x[static_cast<std::size_t>(k)];
    os << "],\"values\":[";
    for (std::size_t i = 0; i < f.stride(); ++i) os << (i ? "," : "") << f.component(p, i);
    os << "]}\n";
  }
}

}  // namespace g2::fields
