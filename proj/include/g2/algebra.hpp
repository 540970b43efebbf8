#pragma once

#include <optional>
#include <stdexcept>

#include "g2/tensor.hpp"

// Pointwise G2-structure constructions: the canonical forms, the metric
// induced by a positive 3-form, contraction-identity residuals, and the
// representation-theoretic projections of p-forms.
namespace g2 {

// A positive 3-form bundled with its induced metric and 4-form psi = *phi,
// plus the intermediate bilinear form s and det s that produced the metric.
struct G2Structure {
  Tensor7 phi;  // rank 3, antisymmetric
  Tensor7 psi;  // rank 4, antisymmetric
  Metric7 metric;
  Mat7 s;
  double det_s = 1.0;
};

Tensor7 canonical_phi0();
Tensor7 canonical_psi0();

// s_ab = (1/144) phi_amn phi_bpq phi_rst eps^{mnpqrst}
Mat7 phi_bilinear_s(const Tensor7& phi);

enum class Positivity { Positive, Degenerate, Indefinite };

class NotPositiveError : public std::runtime_error {
 public:
  NotPositiveError(Positivity kind, const std::string& what) : std::runtime_error(what), kind(kind) {}
  Positivity kind;
};

// Builds the full structure from a 3-form, or reports why it is not positive.
std::optional<G2Structure> try_metric_from_phi(const Tensor7& phi, Positivity* why = nullptr);
G2Structure metric_from_phi(const Tensor7& phi);  // throws NotPositiveError

const G2Structure& canonical_structure();  // (phi0, identity) singleton

// Max-abs residuals of the three contraction identities between phi and psi,
// enumerated over all free-index tuples.
struct ContractionResiduals {
  double phiphi = 0.0;
  double phipsi = 0.0;
  double psipsi = 0.0;
  double max() const { return phiphi > phipsi ? (phiphi > psipsi ? phiphi : psipsi) : (phipsi > psipsi ? phipsi : psipsi); }
};
ContractionResiduals verify_contractions(const G2Structure& s);

struct Decomposition2 {
  Vec7 alpha;    // pi7 datum: pi7 = alpha # . phi
  Tensor7 pi7;   // 2-form
  Tensor7 pi14;  // 2-form with pi14 . phi = 0
};

struct Decomposition3 {
  double a = 0.0;  // pi1 coefficient: pi1 = a phi
  Vec7 omega;      // pi7 datum: pi7 = omega # . psi
  Mat7 h;          // pi27 datum, traceless symmetric
  Tensor7 pi1, pi7, pi27;
};

struct Decomposition4 {
  double a = 0.0;  // pi1 = a psi
  Vec7 omega;      // pi7 = omega ^ phi
  Mat7 h;          // pi27 datum
  Tensor7 pi1, pi7, pi27;
};

struct Decomposition5 {
  Vec7 alpha;       // pi7 = alpha ^ psi
  Tensor7 omega14;  // pi14 datum in Lambda^2_14
  Tensor7 pi7, pi14;
};

Decomposition2 project_2form(const Tensor7& omega, const G2Structure& s);
Decomposition3 project_3form(const Tensor7& chi, const G2Structure& s);
Decomposition4 project_4form(const Tensor7& chi, const G2Structure& s);
Decomposition5 project_5form(const Tensor7& eta, const G2Structure& s);

// Embeddings of symmetric 2-tensors into Lambda^3 and Lambda^4.
Tensor7 i_phi(const Mat7& h, const G2Structure& s);
Tensor7 i_psi(const Mat7& h, const G2Structure& s);

// Split of a full 2-tensor A into A = tau1 g + tau7 # . phi + tau14 + tau27.
struct TwoTensorDecomposition {
  double tau1 = 0.0;
  Vec7 tau7{};
  Tensor7 tau14;  // 2-form in Lambda^2_14
  Mat7 tau27;     // traceless symmetric
};

TwoTensorDecomposition decompose_2tensor(const Mat7& a, const G2Structure& s);
Mat7 reassemble_2tensor(const TwoTensorDecomposition& d, const G2Structure& s);

// (tau7 # . phi)_ab = tau7^c phi_cab
Mat7 vector_into_phi(const Vec7& tau7, const G2Structure& s);

namespace detail {

// Shared expansion tables for the psi*psi identity.  Each term lists slot
// assignments and the parity-derived sign; see the proposition's
// antisymmetrized right-hand side.
struct PsiPsiTables {
  struct DeltaTerm {
    std::array<std::uint8_t, 4> up;  // upper slot assignment per lower slot
    std::int8_t sign;
  };
  struct PsiDDTerm {
    std::uint8_t lo0, lo1, up0, up1;  // slots fed to psi
    std::uint8_t dlo0, dup0, dlo1, dup1;
    std::int8_t sign;
  };
  struct PhiPhiDTerm {
    std::array<std::uint8_t, 3> lo, up;
    std::uint8_t dlo, dup;
    std::int8_t sign;
  };
  std::vector<DeltaTerm> delta_terms;      // 24
  std::vector<PsiDDTerm> psi_dd_terms;     // 72
  std::vector<PhiPhiDTerm> phi_phi_terms;  // 16
};

const PsiPsiTables& psipsi_tables();

}  // namespace detail

}  // namespace g2
