#pragma once

#include "g2/algebra.hpp"
#include "g2/fields.hpp"
#include "g2/torsion.hpp"

// Deformation machinery: the general-chi deformed metric, inverse metric,
// 4-form and connection difference; conformal and Lambda^7 specializations;
// closed-form deformed torsion; and the inverse (grad v) system.
namespace g2::deform {

// Everything the closed forms expose for phi -> phi + chi, plus an
// independent reconstruction of the deformed structure for cross-checks.
struct GeneralDeformation {
  Tensor7 chi;       // 3-form
  Tensor7 star_chi;  // *chi under the base metric
  Mat7 s;            // deformed bilinear form
  Mat7 gamma;        // gamma^am (upper indices), closed form
  double det_ratio = 1.0;  // det g-tilde / det g
  Metric7 g_tilde;
  Tensor7 psi_tilde;     // 4-form, lowered
  Tensor7 psi_tilde_up;  // raised with g-tilde
  G2Structure deformed;  // metric_from_phi(phi + chi), the independent route
};

// Builds all closed forms and cross-checks them against the independent
// reconstruction (throws NotPositiveError / std::runtime_error on failure).
GeneralDeformation build_general(const G2Structure& base, const Tensor7& chi);

// phi~_a^{bc} with the two raised slots taken with g-tilde.
Tensor7 phi_tilde_raised(const G2Structure& base, const GeneralDeformation& def);

// A chi-field over a base structure field, with the FD machinery needed for
// connection and torsion deformations.
class DeformationField {
 public:
  DeformationField(const fields::StructureField& base, fields::TensorField chi);

  const fields::StructureField& base() const { return *base_; }
  const GeneralDeformation& at(int p) const { return pts_[static_cast<std::size_t>(p)]; }
  const fields::TensorField& chi_field() const { return chi_; }
  const fields::TensorField& s_field() const { return s_; }

  // Tabulates phi + chi and rebuilds every pointwise structure from scratch.
  fields::StructureField deformed_structure_field() const;

  // delta Gamma_a^b_c of the closed form (FD of the s field).
  Tensor7 delta_christoffel(int p) const;

  // T~_an (lowered) for base torsion T_ab at the same point.
  Mat7 deformed_torsion_general(const Mat7& base_t, int p) const;

  // The W1 component of the deformed torsion straight from the trace
  // (coefficient set 1/168); must agree with the g~-trace of the full T~.
  double deformed_tau1(const Mat7& base_t, int p) const;

 private:
  const fields::StructureField* base_;
  fields::TensorField chi_;
  fields::TensorField s_;
  std::vector<GeneralDeformation> pts_;
};

// ---- Lambda^7 (vector) deformations ----

// chi_bcd = v^e psi_bcde
Tensor7 v7_chi(const G2Structure& base, const Vec7& v_up);
fields::TensorField v7_chi_field(const fields::StructureField& base, const fields::TensorField& v);

struct V7Deformation {
  fields::TensorField v;   // vector field, upper index
  fields::TensorField m2;  // M = |v|^2 scalar field
  fields::StructureField deformed;
};

// phi -> phi + v^e psi_..e; positivity holds for every v and is asserted.
V7Deformation v7_deform(const fields::StructureField& base, const fields::TensorField& v);

// v~^a = -(1+M)^{-2/3} v^a, the vector undoing the deformation.
fields::TensorField v7_inverse_vector(const fields::StructureField& base, const fields::TensorField& v);

// Residual of the closed form for grad-tilde of v-tilde on the deformed
// structure against its direct FD evaluation.
double v7_inverse_gradient_residual(const fields::StructureField& base,
                                    const fields::TensorField& v, const V7Deformation& def, int p);

// nabla_a v_b decomposed into (v1, v7, v14, v27) under the base structure.
TwoTensorDecomposition grad_v_decompose(const fields::StructureField& base,
                                        const fields::TensorField& v, int p);

struct V7TorsionResult {
  Mat7 T;  // T~_an, lowered
  double tau1 = 0.0;
  Vec7 tau7{};
  Tensor7 tau14{2};
  Mat7 tau27;
};

// The closed-form torsion of the deformed structure in terms of the base
// torsion components and the grad-v decomposition.
V7TorsionResult v7_torsion_formula(const G2Structure& base, const torsion::TorsionData& tau,
                                   const Vec7& v_up, const TwoTensorDecomposition& grad_v);

// The inverse system: grad-v components realizing given target components.
TwoTensorDecomposition solve_grad_v(const G2Structure& base, const torsion::TorsionData& tau,
                                    const torsion::TorsionData& tau_tilde, const Vec7& v_up);

// 2-form field (v7 . phi) + v14 built from the pointwise grad-v split.
fields::TensorField v7_plus_v14_field(const fields::StructureField& base,
                                      const fields::TensorField& v);

// FD residual of d((v7 . phi) + v14) = 0.
double dv_consistency_residual(const fields::TensorField& two_form_field, int p);

// Residual of d(v-flat) = 2 (v7 . phi) + 2 v14.
double dv1_residual(const fields::StructureField& base, const fields::TensorField& v, int p);

// ---- Lambda^27 deformations: the closed form for s ----
Mat7 lambda27_s(const G2Structure& base, const Mat7& h);

// ---- conformal gauge for W1 + W7 ----
struct ConformalGaugeResult {
  fields::TensorField factor;     // f = tau1
  fields::TensorField phi_tilde;  // f^3 phi
  torsion::TorsionField new_torsion;
  torsion::TorsionClassReport report;
};

// Removes the W7 component of a strict W1+W7 torsion field by the conformal
// change phi -> tau1^3 phi.  Torsion transforms by T~ = f T - df . phi.
// Throws std::invalid_argument if tau1 vanishes somewhere (or the class is
// not within W1+W7).
ConformalGaugeResult conformal_gauge_w1w7(const fields::StructureField& base,
                                          const torsion::TorsionField& tf);

}  // namespace g2::deform
