#pragma once

#include "g2/algebra.hpp"
#include "g2/fields.hpp"

// Full torsion tensor from nabla phi, its four G2 components, the dphi/dpsi
// route, the consistency conditions, torsion Ricci, and the class verdict.
namespace g2::torsion {

inline constexpr unsigned kW1 = 1u;
inline constexpr unsigned kW7 = 2u;
inline constexpr unsigned kW14 = 4u;
inline constexpr unsigned kW27 = 8u;

struct TorsionData {
  Mat7 T;  // T_ab, fully lowered
  double tau1 = 0.0;
  Vec7 tau7{};
  Tensor7 tau14{2};  // 2-form in Lambda^2_14
  Mat7 tau27;        // traceless symmetric
  unsigned class_mask = 0;  // components above the classification threshold
};

// T_a^m = (1/24) (nabla_a phi_bcd) psi^{mbcd}, lowered and split.
TorsionData full_torsion(const fields::StructureField& sf, int p);

// Recovers the components from d phi and d psi via the projection formulas,
// then reassembles T.  The primary two-path oracle against full_torsion.
TorsionData torsion_from_exterior(const fields::StructureField& sf, int p);

struct TorsionField {
  fields::TensorField T;      // rank 2
  fields::TensorField tau1;   // rank 0
  fields::TensorField tau7;   // rank 1
  fields::TensorField tau14;  // rank 2
  fields::TensorField tau27;  // rank 2

  TorsionData at(const fields::StructureField& sf, int p) const;
};

TorsionField compute_torsion_field(const fields::StructureField& sf);

// max-abs residual of nabla_a psi_bcde = -4 T_a[b phi_cde]
double nabla_psi_residual(const fields::StructureField& sf, const Mat7& t_at_p, int p);

struct ConsistencyResiduals {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double max() const { return c1 > c2 ? (c1 > c3 ? c1 : c3) : (c2 > c3 ? c2 : c3); }
};

// The three consistency conditions on the full torsion tensor.
ConsistencyResiduals consistency_conditions_T(const fields::StructureField& sf,
                                              const fields::TensorField& t_field, int p);

// The same conditions phrased in the four components.
ConsistencyResiduals consistency_conditions_components(const fields::StructureField& sf,
                                                       const TorsionField& tf, int p);

// Class-table simplifications.
double dtau7_residual(const fields::StructureField& sf, const TorsionField& tf, int p);
double tau7_dlog_tau1_residual(const fields::StructureField& sf, const TorsionField& tf, int p);

// R_ab from the torsion tensor and its first derivatives.  grad_t must be
// the covariant derivative of T under the structure's own connection (for a
// synthetic torsion field that means including the nabla-phi backreaction).
Mat7 ricci_from_torsion_point(const G2Structure& s, const Mat7& t, const Tensor7& grad_t);
Mat7 ricci_from_torsion(const fields::StructureField& sf, const fields::TensorField& t_field, int p);

// Ricci of a W1+W7 structure straight from tau1, tau7.
Mat7 ricci_w1w7(const fields::StructureField& sf, const TorsionField& tf, int p);

struct TorsionClassReport {
  unsigned class_mask = 0;
  std::array<double, 4> component_norms{};      // tau1, tau7, tau14, tau27 sup norms
  std::array<double, 3> consistency_residuals{};  // component conditions, max over samples
  double threshold = 0.0;
};

unsigned classify_mask(const std::array<double, 4>& norms, double threshold);
double classification_threshold(const fields::GridSpec& spec);
TorsionClassReport classify(const fields::StructureField& sf, const TorsionField& tf);

}  // namespace g2::torsion
