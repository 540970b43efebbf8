#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Integer-arithmetic certificates for the pointwise identities at the
// canonical structure (phi0, identity metric).  All residuals are exact
// integers; a passing certificate has residual exactly 0.
namespace g2::exact {

struct Certificate {
  std::string identity;
  std::uint64_t tuples = 0;
  std::int64_t max_abs_residual = 0;
  double seconds = 0.0;
  bool passed() const { return max_abs_residual == 0; }
  std::string to_json() const;
};

class CertificationFailure : public std::runtime_error {
 public:
  CertificationFailure(std::string identity_, std::vector<int> tuple_, std::int64_t residual_);
  std::string identity;
  std::vector<int> tuple;  // first offending index tuple
  std::int64_t residual;
};

// Coefficient knobs exist so the mutation harness can perturb a single
// transcription constant and watch certification fail.
struct PhiPhiCoefficients {
  std::int64_t gg = 1;   // g_am g_bn - g_an g_bm term
  std::int64_t psi = 1;  // psi_abmn term
};

// phi_abc psi_mnp^c = rhs * (g_a[m phi_np]b - g_b[m phi_np]a).
// rhs = -3 in this artifact's conventions (see verify_contractions).
struct PhiPsiCoefficients {
  std::int64_t rhs = -3;
};

struct PsiPsiCoefficients {
  std::int64_t delta4 = 24;
  std::int64_t psi_dd = 72;
  std::int64_t phi_phi_d = -16;
};

// Scaled-integer multipliers (scale / paper denominator); the remaining
// constants are fixed inside the implementation.
struct ProjectorCoefficients {
  std::int64_t lambda3_pi1_num = 16;    // 672 * (1/42): a = (1/42) chi . phi
  std::int64_t lambda3_pi7_num = -28;   // 672 * (-1/24): omega = -(1/24) chi . psi
  std::int64_t lambda5_pi7_num = 1;     // 72 * (1/72): alpha = (1/72) psi . eta
};

Certificate certify_phiphi(const PhiPhiCoefficients& c = {});
Certificate certify_phipsi(const PhiPsiCoefficients& c = {});
Certificate certify_psipsi(const PsiPsiCoefficients& c = {});
Certificate certify_projectors(const ProjectorCoefficients& c = {});

std::vector<Certificate> certify_all();

}  // namespace g2::exact
