#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "g2/algebra.hpp"
#include "g2/tensor.hpp"

// Discretized tensor fields on a flat periodic 7-torus that vary along a
// small set of active axes, with central finite-difference partial,
// exterior, and covariant derivatives.
namespace g2::fields {

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  std::vector<int> active_axes;  // 0-based axis ids, 1 or 2 of them
  int n = 256;                   // points per active axis
  double period = 1.0;
  int fd_order = 4;  // 2 or 4

  int axis_count() const { return static_cast<int>(active_axes.size()); }
  int point_count() const { return axis_count() == 1 ? n : n * n; }
  double spacing() const { return period / n; }

  // position of axis among the active ones, or -1
  int active_pos(int axis) const {
    for (int k = 0; k < axis_count(); ++k)
      if (active_axes[static_cast<std::size_t>(k)] == axis) return k;
    return -1;
  }

  std::array<double, 7> coords(int p) const;
  // periodic neighbor: move `offset` steps along the active axis in slot `pos`
  int shift(int p, int pos, int offset) const;

  void validate() const;  // throws GridError
};

// Declared comparison tolerance for finite-difference residuals:
// 50 (2 pi / N)^order * field scale.
double fd_tolerance(const GridSpec& spec, double field_scale);

// A tensor field: one Tensor7 value per grid point, uniform rank/variance,
// stored contiguously.  Immutable in spirit; set_value exists for builders.
class TensorField {
 public:
  TensorField() = default;
  TensorField(GridSpec spec, int rank, Variance v = Variance::Lo);
  TensorField(GridSpec spec, int rank, std::vector<Variance> variance);

  static TensorField tabulate(const GridSpec& spec, int rank, std::vector<Variance> variance,
                              const std::function<Tensor7(const std::array<double, 7>&)>& fn);

  const GridSpec& spec() const { return spec_; }
  int rank() const { return rank_; }
  const std::vector<Variance>& variance() const { return variance_; }

  Tensor7 value(int p) const;
  void set_value(int p, const Tensor7& t);
  double component(int p, std::size_t flat) const {
    return data_[static_cast<std::size_t>(p) * stride_ + flat];
  }

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }
  std::size_t stride() const { return stride_; }

 private:
  GridSpec spec_;
  int rank_ = 0;
  std::vector<Variance> variance_;
  std::size_t stride_ = 1;
  std::vector<double> data_;
};

// Central FD partial along one coordinate axis (zero on inactive axes).
Tensor7 partial_derivative(const TensorField& f, int axis, int p);

// (d w)_{a0..ap} = (p+1) d_[a0 w_{a1..ap]}
Tensor7 exterior_derivative(const TensorField& form_field, int p);

// Gamma_a^b_c = (1/2) g^bd (g_da,c + g_dc,a - g_ac,d), stored with the
// derivative index first: christoffel(a, b, c).
Tensor7 christoffels_at(const TensorField& metric, int p);
TensorField christoffel_field_of(const TensorField& metric);

// nabla of an arbitrary field given the connection; new derivative slot first.
Tensor7 covariant_derivative_at(const TensorField& t, const TensorField& christoffel, int p);

// R_ab from dGamma + Gamma Gamma of a cached Christoffel field.
Mat7 ricci_from_metric(const TensorField& christoffel, int p);

// A positive 3-form field with every pointwise structure quantity cached,
// plus the Levi-Civita connection of its own metric.
class StructureField {
 public:
  static StructureField from_phi(const TensorField& phi);  // NotPositiveError carries the point

  const GridSpec& spec() const { return phi_.spec(); }
  int point_count() const { return phi_.spec().point_count(); }
  const G2Structure& at(int p) const { return points_[static_cast<std::size_t>(p)]; }
  const TensorField& phi_field() const { return phi_; }
  const TensorField& psi_field() const { return psi_; }
  const TensorField& metric_field() const { return metric_; }
  const TensorField& christoffel_field() const { return christoffel_; }

  Tensor7 covariant_derivative(const TensorField& t, int p) const {
    return covariant_derivative_at(t, christoffel_, p);
  }
  Mat7 ricci_of_own_metric(int p) const { return ricci_from_metric(christoffel_, p); }

 private:
  TensorField phi_;
  TensorField psi_;
  TensorField metric_;
  TensorField metric_inv_;
  TensorField christoffel_;
  std::vector<G2Structure> points_;
};

// Binary snapshot: magic "G2F1", header (rank, variance mask, grid), then
// row-major doubles per point.  Values are constant along inactive axes by
// construction; only the active-axes lattice is stored.
void save_snapshot(const TensorField& f, const std::string& path);
TensorField load_snapshot(const std::string& path);
void export_jsonl(const TensorField& f, std::ostream& os);

}  // namespace g2::fields
