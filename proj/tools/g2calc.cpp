// g2calc: command-line front end.  Loads a JSON config describing a grid and
// a structure field, runs identity certificates, torsion classification,
// deformations, or verification suites, and emits machine-readable reports.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>

#include "g2/deform.hpp"
#include "g2/exact.hpp"
#include "g2/fieldexpr.hpp"
#include "g2/fields.hpp"
#include "g2/torsion.hpp"

using json = nlohmann::json;
using namespace g2;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitConfigError = 2;

// Hash of the sign/orientation conventions this build uses, embedded in every
// report so results are comparable across builds.
std::string convention_hash() {
  const std::string sheet =
      "phi0=+123+145+167+246-257-347-356;psi0=+4567+2367+2345+1357-1346-1256-1247;"
      "eps(1..7)=+1;wedge(e^i^e^j)(ij)=+1;star(e123)=e4567;T=(1/24)dphi.psi;"
      "dphi=4t1psi-3t7^phi-*t27;dpsi=-4t7^psi-2*t14;phipsi=-3;conftors=fT-df.phi";
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : sheet) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct LoadedConfig {
  fields::GridSpec grid;
  json structure;
  std::vector<std::string> suites;
  std::uint64_t seed = 1;
  std::string output;
};

fields::GridSpec grid_from_json(const json& j) {
  fields::GridSpec spec;
  spec.active_axes = {0};
  if (j.contains("axes")) {
    spec.active_axes.clear();
    for (int a : j.at("axes")) spec.active_axes.push_back(a - 1);  // 1-based in configs
  }
  spec.n = j.value("n", 256);
  spec.period = j.value("period", 1.0);
  spec.fd_order = j.value("fd_order", 4);
  spec.validate();
  return spec;
}

LoadedConfig load_config(const std::string& path, int grid_override, int order_override,
                         std::uint64_t seed_override) {
  LoadedConfig cfg;
  json j;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    is >> j;
  } else {
    j = json::object();
  }
  cfg.grid = grid_from_json(j.value("grid", json::object()));
  cfg.structure = j.value("structure", json{{"type", "flat"}});
  if (j.contains("suites"))
    for (const auto& s : j.at("suites")) cfg.suites.push_back(s.get<std::string>());
  cfg.seed = j.value("seed", 1);
  cfg.output = j.value("output", "");
  if (grid_override > 0) cfg.grid.n = grid_override;
  if (order_override > 0) cfg.grid.fd_order = order_override;
  if (seed_override != 0) cfg.seed = seed_override;
  cfg.grid.validate();
  return cfg;
}

// Builds the structure field described by the config (recursively for v7).
fields::StructureField build_structure(const json& structure, const fields::GridSpec& spec) {
  const std::string type = structure.value("type", "flat");
  if (type == "flat") {
    const Tensor7 phi0 = canonical_phi0();
    return fields::StructureField::from_phi(fields::TensorField::tabulate(
        spec, 3, {Variance::Lo, Variance::Lo, Variance::Lo},
        [&](const std::array<double, 7>&) { return phi0; }));
  }
  if (type == "conformal") {
    const auto expr = fieldexpr::parse(structure.at("f").get<std::string>());
    const Tensor7 phi0 = canonical_phi0();
    return fields::StructureField::from_phi(fields::TensorField::tabulate(
        spec, 3, {Variance::Lo, Variance::Lo, Variance::Lo}, [&](const std::array<double, 7>& x) {
          const double f = fieldexpr::evaluate(expr, x);
          return (f * f * f) * phi0;
        }));
  }
  if (type == "v7") {
    fields::StructureField base = build_structure(structure.value("base", json{{"type", "flat"}}), spec);
    std::array<fieldexpr::ExprPtr, 7> comps;
    const auto& vj = structure.at("v");
    if (vj.size() != 7) throw std::runtime_error("v7 structure: need 7 component expressions");
    for (int i = 0; i < 7; ++i) comps[static_cast<std::size_t>(i)] = fieldexpr::parse(vj[i].get<std::string>());
    fields::TensorField v(spec, 1, Variance::Up);
    for (int p = 0; p < spec.point_count(); ++p) {
      const auto x = spec.coords(p);
      Tensor7 t(1, Variance::Up);
      for (int i = 0; i < 7; ++i) t(i) = fieldexpr::evaluate(comps[static_cast<std::size_t>(i)], x);
      v.set_value(p, t);
    }
    return deform::v7_deform(base, v).deformed;
  }
  if (type == "custom-file") {
    return fields::StructureField::from_phi(fields::load_snapshot(structure.at("path").get<std::string>()));
  }
  throw std::runtime_error("unknown structure type '" + type + "'");
}

fields::TensorField v_field_from_config(const json& structure, const fields::GridSpec& spec) {
  std::array<fieldexpr::ExprPtr, 7> comps;
  const auto& vj = structure.at("v");
  for (int i = 0; i < 7; ++i) comps[static_cast<std::size_t>(i)] = fieldexpr::parse(vj[i].get<std::string>());
  fields::TensorField v(spec, 1, Variance::Up);
  for (int p = 0; p < spec.point_count(); ++p) {
    const auto x = spec.coords(p);
    Tensor7 t(1, Variance::Up);
    for (int i = 0; i < 7; ++i) t(i) = fieldexpr::evaluate(comps[static_cast<std::size_t>(i)], x);
    v.set_value(p, t);
  }
  return v;
}

void emit(const json& report, const std::string& out) {
  if (out.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream os(out);
    os << report.dump(2) << "\n";
    std::cout << "report written to " << out << "\n";
  }
}

const char* mask_name(unsigned mask) {
  switch (mask) {
    case 0: return "W0";
    case torsion::kW1: return "W1";
    case torsion::kW7: return "W7";
    case torsion::kW14: return "W14";
    case torsion::kW27: return "W27";
    case torsion::kW1 | torsion::kW7: return "W1+W7";
    default: return "";
  }
}

json mask_json(unsigned mask) {
  json parts = json::array();
  if (mask & torsion::kW1) parts.push_back(1);
  if (mask & torsion::kW7) parts.push_back(7);
  if (mask & torsion::kW14) parts.push_back(14);
  if (mask & torsion::kW27) parts.push_back(27);
  return parts;
}

json torsion_report(const fields::StructureField& sf) {
  const torsion::TorsionField tf = torsion::compute_torsion_field(sf);
  const torsion::TorsionClassReport rep = torsion::classify(sf, tf);
  json per_point = json::array();
  const int stride = std::max(1, sf.point_count() / 16);
  for (int p = 0; p < sf.point_count(); p += stride) {
    const torsion::TorsionData d = tf.at(sf, p);
    per_point.push_back({{"point", p},
                         {"tau1", d.tau1},
                         {"tau7_max", max_abs(d.tau7)},
                         {"tau14_max", max_abs(d.tau14)},
                         {"tau27_max", max_abs(d.tau27)}});
  }
  json j;
  j["component_norms"] = {{"tau1", rep.component_norms[0]},
                          {"tau7", rep.component_norms[1]},
                          {"tau14", rep.component_norms[2]},
                          {"tau27", rep.component_norms[3]}};
  j["class_mask"] = mask_json(rep.class_mask);
  const char* name = mask_name(rep.class_mask);
  if (*name) j["class"] = name;
  j["consistency_residuals"] = {rep.consistency_residuals[0], rep.consistency_residuals[1],
                                rep.consistency_residuals[2]};
  j["classification_threshold"] = rep.threshold;
  j["fd_tolerance"] = fields::fd_tolerance(sf.spec(), 1.0);
  j["points_sampled"] = per_point;
  return j;
}

int cmd_identities(const std::string& only, bool mutate, const std::string& out) {
  json report;
  report["convention_hash"] = convention_hash();
  json certs = json::array();
  bool ok = true;
  auto run = [&](const std::string& name, auto&& fn) {
    if (!only.empty() && only != name) return;
    try {
      const exact::Certificate c = fn();
      certs.push_back(json::parse(c.to_json()));
    } catch (const exact::CertificationFailure& f) {
      ok = false;
      certs.push_back({{"identity", f.identity}, {"residual", f.residual}, {"tuple", f.tuple}});
    }
  };
  // the mutation flag corrupts one transcription constant to prove the
  // certificates can fail
  run("phiphi", [&] { return exact::certify_phiphi(mutate ? exact::PhiPhiCoefficients{1, -1}
                                                          : exact::PhiPhiCoefficients{}); });
  run("phipsi", [&] { return exact::certify_phipsi(); });
  run("psipsi", [&] {
    return exact::certify_psipsi(mutate ? exact::PsiPsiCoefficients{23, 72, -16}
                                        : exact::PsiPsiCoefficients{});
  });
  run("projectors", [&] { return exact::certify_projectors(); });
  report["certificates"] = certs;
  report["pass"] = ok;
  emit(report, out);
  return ok ? kExitPass : kExitVerificationFailure;
}

int cmd_torsion(const LoadedConfig& cfg, const std::string& out) {
  const fields::StructureField sf = build_structure(cfg.structure, cfg.grid);
  json report = torsion_report(sf);
  report["convention_hash"] = convention_hash();
  emit(report, out.empty() ? cfg.output : out);
  return kExitPass;
}

int cmd_deform(const LoadedConfig& cfg, const std::string& out, const std::string& snapshot) {
  if (cfg.structure.value("type", "") != "v7")
    throw std::runtime_error("deform needs a structure of type v7");
  const fields::StructureField base =
      build_structure(cfg.structure.value("base", json{{"type", "flat"}}), cfg.grid);
  const fields::TensorField v = v_field_from_config(cfg.structure, cfg.grid);
  const deform::V7Deformation def = deform::v7_deform(base, v);

  json report;
  report["convention_hash"] = convention_hash();
  double ratio_min = std::numeric_limits<double>::infinity(), ratio_max = 0.0;
  for (int p = 0; p < cfg.grid.point_count(); ++p) {
    const double ratio = determinant(def.deformed.at(p).metric.g) /
                         determinant(base.at(p).metric.g);
    ratio_min = std::min(ratio_min, ratio);
    ratio_max = std::max(ratio_max, ratio);
  }
  report["det_ratio"] = {{"min", ratio_min}, {"max", ratio_max}};
  report["positive_everywhere"] = true;  // from_phi would have thrown otherwise
  report["torsion_before"] = torsion_report(base);
  report["torsion_after"] = torsion_report(def.deformed);

  // round trip through the inverse vector: the 7-component cancels exactly;
  // the full 3-form keeps the lambda-1 + lambda-27 remainder of chi
  {
    const fields::TensorField vt = deform::v7_inverse_vector(base, v);
    const deform::V7Deformation back = deform::v7_deform(def.deformed, vt);
    double residual = 0.0, residual7 = 0.0;
    for (int p = 0; p < cfg.grid.point_count(); p += std::max(1, cfg.grid.point_count() / 32)) {
      const Tensor7 diff = back.deformed.at(p).phi - base.at(p).phi;
      residual = std::max(residual, max_abs(diff));
      const Tensor7 chi = def.deformed.at(p).phi - base.at(p).phi;
      const Tensor7 chi_hat = back.deformed.at(p).phi - def.deformed.at(p).phi;
      const Decomposition3 d = project_3form(chi + chi_hat, def.deformed.at(p));
      residual7 = std::max(residual7, max_abs(d.pi7));
    }
    report["roundtrip"] = {{"phi_residual", residual}, {"phi_residual_pi7", residual7}};
  }

  const std::string snap = snapshot.empty() ? "deformed.g2f" : snapshot;
  fields::save_snapshot(def.deformed.phi_field(), snap);
  report["snapshot"] = snap;
  emit(report, out.empty() ? cfg.output : out);
  return kExitPass;
}

int cmd_verify(const LoadedConfig& cfg, const std::string& out) {
  const fields::StructureField sf = build_structure(cfg.structure, cfg.grid);
  const double tol = fields::fd_tolerance(cfg.grid, 1.0);
  std::vector<std::string> suites = cfg.suites;
  if (suites.empty()) suites = {"torsion-two-path", "ricci-two-path", "consistency"};

  json report;
  report["convention_hash"] = convention_hash();
  json results = json::array();
  bool all_pass = true;

  for (const std::string& suite : suites) {
    json r;
    r["suite"] = suite;
    if (suite == "torsion-two-path") {
      double worst = 0.0;
      for (int p = 0; p < sf.point_count(); ++p) {
        const torsion::TorsionData a = torsion::full_torsion(sf, p);
        const torsion::TorsionData b = torsion::torsion_from_exterior(sf, p);
        worst = std::max(worst, max_abs(a.T - b.T));
      }
      r["residual"] = worst;
      r["tolerance"] = tol;
      r["pass"] = worst <= tol;
    } else if (suite == "ricci-two-path") {
      const torsion::TorsionField tf = torsion::compute_torsion_field(sf);
      const double rtol = fields::fd_tolerance(cfg.grid, 4.0 * std::numbers::pi * std::numbers::pi);
      double worst = 0.0;
      const int stride = std::max(1, sf.point_count() / 64);
      for (int p = 0; p < sf.point_count(); p += stride) {
        const Mat7 rt = torsion::ricci_from_torsion(sf, tf.T, p);
        const Mat7 rm = sf.ricci_of_own_metric(p);
        worst = std::max(worst, max_abs(rt - rm));
      }
      r["residual"] = worst;
      r["tolerance"] = rtol;
      r["pass"] = worst <= rtol;
    } else if (suite == "consistency") {
      const torsion::TorsionField tf = torsion::compute_torsion_field(sf);
      const double ctol = fields::fd_tolerance(cfg.grid, 10.0);
      double worst = 0.0;
      const int stride = std::max(1, sf.point_count() / 32);
      for (int p = 0; p < sf.point_count(); p += stride) {
        worst = std::max(worst, torsion::consistency_conditions_T(sf, tf.T, p).max());
        worst = std::max(worst, torsion::consistency_conditions_components(sf, tf, p).max());
      }
      r["residual"] = worst;
      r["tolerance"] = ctol;
      bool pass = worst <= ctol;
      // negative control: random constant torsion fields must violate
      // condition 1
      std::mt19937_64 rng(cfg.seed);
      int fired = 0;
      const int trials = 100;
      for (int k = 0; k < trials; ++k) {
        Mat7 t;
        for (double& x : t.m) x = std::uniform_real_distribution<double>(-1, 1)(rng);
        fields::TensorField tfield(cfg.grid, 2);
        for (int p = 0; p < cfg.grid.point_count(); ++p) tfield.set_value(p, tensor_from_mat(t));
        if (torsion::consistency_conditions_T(sf, tfield, 0).c1 > 1e-3) ++fired;
      }
      r["negative_control_fired"] = fired;
      pass = pass && fired >= 99;
      r["pass"] = pass;
    } else if (suite == "convergence-order") {
      // two-path torsion error under grid refinement
      std::vector<double> errs;
      json levels = json::array();
      for (int n : {cfg.grid.n / 2, cfg.grid.n, cfg.grid.n * 2}) {
        fields::GridSpec spec = cfg.grid;
        spec.n = n;
        const fields::StructureField s2 = build_structure(cfg.structure, spec);
        double worst = 0.0;
        for (int p = 0; p < s2.point_count(); ++p) {
          const torsion::TorsionData a = torsion::full_torsion(s2, p);
          const torsion::TorsionData b = torsion::torsion_from_exterior(s2, p);
          worst = std::max(worst, max_abs(a.T - b.T));
        }
        errs.push_back(worst);
        levels.push_back({{"n", n}, {"error", worst}});
      }
      const double order = std::log2(errs.front() / errs.back()) / 2.0;
      r["levels"] = levels;
      r["empirical_order"] = order;
      r["pass"] = order >= cfg.grid.fd_order - 0.5;
    } else {
      throw std::runtime_error("unknown suite '" + suite + "'");
    }
    all_pass = all_pass && r["pass"].get<bool>();
    results.push_back(r);
  }
  report["suites"] = results;
  report["pass"] = all_pass;
  emit(report, out.empty() ? cfg.output : out);
  return all_pass ? kExitPass : kExitVerificationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"g2calc: G2-structure torsion and deformation calculus"};
  app.require_subcommand(1);

  std::string config_path, out_path, only, snapshot;
  int grid_n = 0, fd_order = 0;
  std::uint64_t seed = 0;
  bool mutate = false;

  auto* identities = app.add_subcommand("identities", "run the exact integer certificates");
  identities->add_option("--only", only, "run a single certificate (phiphi|phipsi|psipsi|projectors)");
  identities->add_flag("--mutate", mutate, "corrupt one coefficient (certification must fail)");
  identities->add_option("--out", out_path, "write the JSON report here");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_path, "write the JSON report here");
    cmd->add_option("--grid", grid_n, "override points per axis");
    cmd->add_option("--order", fd_order, "override FD order (2 or 4)")->check(CLI::IsMember({2, 4}));
    cmd->add_option("--seed", seed, "seed for randomized checks");
  };
  auto* torsion_cmd = app.add_subcommand("torsion", "classify the torsion of a structure field");
  add_common(torsion_cmd);
  auto* deform_cmd = app.add_subcommand("deform", "apply a v7 deformation and report");
  add_common(deform_cmd);
  deform_cmd->add_option("--snapshot", snapshot, "path for the deformed field snapshot");
  auto* verify_cmd = app.add_subcommand("verify", "run property suites");
  add_common(verify_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (identities->parsed()) return cmd_identities(only, mutate, out_path);
    const LoadedConfig cfg = load_config(config_path, grid_n, fd_order, seed);
    if (torsion_cmd->parsed()) return cmd_torsion(cfg, out_path);
    if (deform_cmd->parsed()) return cmd_deform(cfg, out_path, snapshot);
    if (verify_cmd->parsed()) return cmd_verify(cfg, out_path);
  } catch (const fieldexpr::ParseError& e) {
    std::cerr << "config expression error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const fields::GridError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const NotPositiveError& e) {
    std::cerr << "structure error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}
