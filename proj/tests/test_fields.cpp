#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "g2/fields.hpp"
#include "test_support.hpp"

using namespace g2;
using namespace g2::fields;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

GridSpec grid1d(int n, int order = 4, int axis = 0) {
  GridSpec spec;
  spec.active_axes = {axis};
  spec.n = n;
  spec.period = 1.0;
  spec.fd_order = order;
  return spec;
}

TensorField scalar_field(const GridSpec& spec, const std::function<double(const std::array<double, 7>&)>& f) {
  return TensorField::tabulate(spec, 0, {}, [&](const std::array<double, 7>& x) {
    Tensor7 t(0);
    t.at_flat(0) = f(x);
    return t;
  });
}

// f^3 phi0, the conformal structure field used throughout
TensorField conformal_phi_field(const GridSpec& spec, const std::function<double(double)>& f) {
  const Tensor7 phi0 = canonical_phi0();
  const int axis = spec.active_axes[0];
  return TensorField::tabulate(spec, 3, {Variance::Lo, Variance::Lo, Variance::Lo},
                               [&](const std::array<double, 7>& x) {
                                 const double fv = f(x[static_cast<std::size_t>(axis)]);
                                 return (fv * fv * fv) * phi0;
                               });
}

}  // namespace

TEST_SUITE_BEGIN("fields");

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(TensorField(GridSpec{{0}, 7, 1.0, 4}, 0), GridError);   // odd
  CHECK_THROWS_AS(TensorField(GridSpec{{0}, 6, 1.0, 4}, 0), GridError);   // too small
  CHECK_THROWS_AS(TensorField(GridSpec{{7}, 16, 1.0, 4}, 0), GridError);  // bad axis
  CHECK_THROWS_AS(TensorField(GridSpec{{0}, 16, 1.0, 3}, 0), GridError);  // bad order
  CHECK_THROWS_AS(TensorField(GridSpec{{0, 0}, 16, 1.0, 2}, 0), GridError);
  CHECK_THROWS_AS(TensorField(GridSpec{{}, 16, 1.0, 2}, 0), GridError);
}

TEST_CASE("partial derivative accuracy and convergence") {
  // constant field
  const GridSpec spec = grid1d(64);
  const TensorField c = scalar_field(spec, [](const auto&) { return 3.5; });
  for (int p = 0; p < spec.point_count(); p += 7) CHECK(partial_derivative(c, 0, p).at_flat(0) == 0.0);

  // sin(2 pi x1), N = 256, order 4: max error <= 1e-7
  double err256 = 0.0;
  {
    const GridSpec s = grid1d(256);
    const TensorField f = scalar_field(s, [](const auto& x) { return std::sin(kTwoPi * x[0]); });
    for (int p = 0; p < s.point_count(); ++p) {
      const double d = partial_derivative(f, 0, p).at_flat(0);
      const double exact = kTwoPi * std::cos(kTwoPi * s.coords(p)[0]);
      err256 = std::max(err256, std::abs(d - exact));
    }
    CHECK(err256 <= 1e-7);
  }

  // halving h scales the error by about 2^order
  for (int order : {2, 4}) {
    double errs[2];
    int k = 0;
    for (int n : {128, 256}) {
      const GridSpec s = grid1d(n, order);
      const TensorField f = scalar_field(s, [](const auto& x) { return std::sin(kTwoPi * x[0]); });
      double e = 0.0;
      for (int p = 0; p < s.point_count(); ++p) {
        const double d = partial_derivative(f, 0, p).at_flat(0);
        e = std::max(e, std::abs(d - kTwoPi * std::cos(kTwoPi * s.coords(p)[0])));
      }
      errs[k++] = e;
    }
    const double ratio = errs[0] / errs[1];
    const double expected = std::pow(2.0, order);
    CHECK(ratio > 0.8 * expected);
    CHECK(ratio < 1.2 * expected);
  }
}

TEST_CASE("inactive axes and periodicity") {
  const GridSpec spec = grid1d(32);
  const TensorField f = scalar_field(spec, [](const auto& x) { return std::sin(kTwoPi * x[0]); });
  for (int p = 0; p < spec.point_count(); ++p) {
    for (int axis = 1; axis < kDim; ++axis) CHECK(partial_derivative(f, axis, p).at_flat(0) == 0.0);
  }
  // wrapping a full period is the identity, exactly
  for (int p = 0; p < spec.point_count(); ++p) {
    CHECK(spec.shift(p, 0, spec.n) == p);
    CHECK(spec.shift(p, 0, -spec.n) == p);
  }
  // stencil wraparound: derivative at 0 sees the far edge (a broken wrap
  // would be off by O(N f'), not by truncation error)
  CHECK(partial_derivative(f, 0, 0).at_flat(0) ==
        doctest::Approx(kTwoPi).epsilon(1e-3));
}

TEST_CASE("christoffels of a conformal metric") {
  const GridSpec spec = grid1d(128);
  auto f = [](double t) { return 1.0 + 0.1 * std::sin(kTwoPi * t); };
  auto df = [](double t) { return 0.1 * kTwoPi * std::cos(kTwoPi * t); };
  const TensorField metric =
      TensorField::tabulate(spec, 2, {Variance::Lo, Variance::Lo}, [&](const auto& x) {
        const double fv = f(x[0]);
        return tensor_from_mat((fv * fv) * Mat7::identity());
      });

  // constant metric first
  const TensorField flat = TensorField::tabulate(spec, 2, {Variance::Lo, Variance::Lo},
                                                 [&](const auto&) { return tensor_from_mat(Mat7::identity()); });
  CHECK(max_abs(christoffels_at(flat, 3)) == 0.0);

  // Gamma^b_ac = delta^b_a d_c u + delta^b_c d_a u - delta_ac d^b u, u = log f
  const double tol = fd_tolerance(spec, 1.0);
  for (int p = 0; p < spec.point_count(); p += 5) {
    const Tensor7 gamma = christoffels_at(metric, p);
    const double du = df(spec.coords(p)[0]) / f(spec.coords(p)[0]);
    double worst = 0.0;
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b)
        for (int c = 0; c < kDim; ++c) {
          double expect = 0.0;
          if (b == a && c == 0) expect += du;
          if (b == c && a == 0) expect += du;
          if (a == c && b == 0) expect -= du;
          worst = std::max(worst, std::abs(gamma(a, b, c) - expect));
        }
    CHECK(worst < tol);
  }
}

TEST_CASE("covariant derivative") {
  const GridSpec spec = grid1d(128);
  auto f = [](double t) { return 1.0 + 0.1 * std::sin(kTwoPi * t); };
  const TensorField phi = conformal_phi_field(spec, f);
  const StructureField sf = StructureField::from_phi(phi);

  // metricity: nabla g = 0 to FD tolerance
  const double tol = fd_tolerance(spec, 1.0);
  for (int p = 0; p < spec.point_count(); p += 11) {
    const Tensor7 dg = sf.covariant_derivative(sf.metric_field(), p);
    CHECK(max_abs(dg) < tol);
  }

  // flat connection: nabla = partial
  const TensorField flatphi = conformal_phi_field(spec, [](double) { return 1.0; });
  const StructureField flat = StructureField::from_phi(flatphi);
  const TensorField w = TensorField::tabulate(spec, 1, {Variance::Lo}, [&](const auto& x) {
    Tensor7 t(1);
    for (int i = 0; i < kDim; ++i) t(i) = std::cos(kTwoPi * x[0] + i);
    return t;
  });
  for (int p = 0; p < spec.point_count(); p += 17) {
    const Tensor7 cd = flat.covariant_derivative(w, p);
    const Tensor7 pd = partial_derivative(w, 0, p);
    for (int i = 0; i < kDim; ++i) {
      CHECK(cd(0, i) == pd(i));
      CHECK(cd(1, i) == 0.0);
    }
  }

  // product rule: nabla(h g) = dh (x) g for scalar h and parallel g
  const TensorField hg = TensorField::tabulate(spec, 2, {Variance::Lo, Variance::Lo}, [&](const auto& x) {
    const double h = std::sin(kTwoPi * x[0]);
    return tensor_from_mat(h * Mat7::identity());
  });
  for (int p = 0; p < spec.point_count(); p += 13) {
    const Tensor7 cd = flat.covariant_derivative(hg, p);
    const double dh = kTwoPi * std::cos(kTwoPi * spec.coords(p)[0]);
    double worst = 0.0;
    for (int a = 0; a < kDim; ++a)
      for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j)
          worst = std::max(worst, std::abs(cd(a, i, j) - (a == 0 && i == j ? dh : 0.0)));
    CHECK(worst < tol);
  }
}

TEST_CASE("exterior derivative") {
  const GridSpec spec = grid1d(128);

  // constant form
  const TensorField cf = TensorField::tabulate(spec, 2, {Variance::Lo, Variance::Lo},
                                               [](const auto&) { return basis_form({0, 1}); });
  CHECK(max_abs(exterior_derivative(cf, 5)) == 0.0);

  // d(f phi0) = df ^ phi0
  auto f = [](double t) { return 1.0 + 0.3 * std::sin(kTwoPi * t); };
  auto df = [](double t) { return 0.3 * kTwoPi * std::cos(kTwoPi * t); };
  const Tensor7 phi0 = canonical_phi0();
  const TensorField fphi = TensorField::tabulate(spec, 3, {Variance::Lo, Variance::Lo, Variance::Lo},
                                                 [&](const auto& x) { return f(x[0]) * phi0; });
  const double tol = fd_tolerance(spec, 1.0);
  for (int p = 0; p < spec.point_count(); p += 9) {
    const Tensor7 d = exterior_derivative(fphi, p);
    Tensor7 dfform(1);
    dfform(0) = df(spec.coords(p)[0]);
    const Tensor7 expect = wedge(dfform, phi0);
    CHECK(max_abs(d - expect) < tol);
  }

  // d(d w) = 0 for a smooth 1-form field, including a 2-axis grid
  GridSpec spec2;
  spec2.active_axes = {0, 2};
  spec2.n = 48;
  spec2.period = 1.0;
  spec2.fd_order = 4;
  const TensorField w2 = TensorField::tabulate(spec2, 1, {Variance::Lo}, [](const auto& x) {
    Tensor7 t(1);
    for (int i = 0; i < kDim; ++i)
      t(i) = std::sin(kTwoPi * x[0] + 0.2 * i) * std::cos(kTwoPi * x[2] - 0.1 * i);
    return t;
  });
  TensorField dw(spec2, 2);
  for (int p = 0; p < spec2.point_count(); ++p) dw.set_value(p, exterior_derivative(w2, p));
  const double tol2 = fd_tolerance(spec2, kTwoPi * kTwoPi);
  for (int p = 0; p < spec2.point_count(); p += 101) {
    CHECK(max_abs(exterior_derivative(dw, p)) < tol2);
  }
}

TEST_CASE("ricci of a conformal metric") {
  const GridSpec spec = grid1d(256);
  auto f = [](double t) { return 1.0 + 0.1 * std::sin(kTwoPi * t); };
  auto df = [](double t) { return 0.1 * kTwoPi * std::cos(kTwoPi * t); };
  auto d2f = [](double t) { return -0.1 * kTwoPi * kTwoPi * std::sin(kTwoPi * t); };

  const StructureField flat = StructureField::from_phi(conformal_phi_field(spec, [](double) { return 1.0; }));
  CHECK(max_abs(flat.ricci_of_own_metric(31)) == 0.0);

  const StructureField sf = StructureField::from_phi(conformal_phi_field(spec, f));
  // g = e^{2u} delta with u = log f:
  // R_ab = -5 (u'' - u'^2) E_ab - (u'' + 5 u'^2) delta_ab where E = e_1 x e_1
  const double tol = fd_tolerance(spec, kTwoPi * kTwoPi);
  for (int p = 0; p < spec.point_count(); p += 23) {
    const double t = spec.coords(p)[0];
    const double u1 = df(t) / f(t);
    const double u2 = d2f(t) / f(t) - u1 * u1;
    const Mat7 r = sf.ricci_of_own_metric(p);
    double worst = 0.0;
    for (int a = 0; a < kDim; ++a)
      for (int b = 0; b < kDim; ++b) {
        double expect = 0.0;
        if (a == 0 && b == 0) expect -= 5.0 * (u2 - u1 * u1);
        if (a == b) expect -= u2 + 5.0 * u1 * u1;
        worst = std::max(worst, std::abs(r(a, b) - expect));
      }
    CHECK(worst < tol);
  }
}

TEST_CASE("snapshot round-trip and jsonl export") {
  const GridSpec spec = grid1d(16);
  auto rng = test::make_rng(71);
  TensorField f(spec, 2, {Variance::Up, Variance::Lo});
  for (double& x : f.raw()) x = test::uniform(rng);

  const std::string path = "/tmp/g2_snapshot_test.g2f";
  save_snapshot(f, path);
  const TensorField g = load_snapshot(path);
  CHECK(g.rank() == 2);
  CHECK(g.variance()[0] == Variance::Up);
  CHECK(g.variance()[1] == Variance::Lo);
  CHECK(g.spec().n == 16);
  CHECK(g.spec().active_axes == spec.active_axes);
  REQUIRE(g.raw().size() == f.raw().size());
  for (std::size_t i = 0; i < f.raw().size(); ++i) CHECK(f.raw()[i] == g.raw()[i]);
  std::remove(path.c_str());

  std::ostringstream os;
  export_jsonl(g, os);
  CHECK(os.str().find("\"point\":0") != std::string::npos);
  CHECK(os.str().find("\"values\":[") != std::string::npos);

  CHECK_THROWS_AS(load_snapshot("/tmp/does_not_exist.g2f"), GridError);

  // a structure field survives the snapshot: save the 3-form field of a
  // conformal structure, reload, and rebuild everything from it
  {
    const GridSpec cspec = grid1d(64);
    auto cf = [](double t) { return 1.0 + 0.1 * std::sin(kTwoPi * t); };
    const TensorField phi = conformal_phi_field(cspec, cf);
    const std::string fpath = "/tmp/g2_structure_test.g2f";
    save_snapshot(phi, fpath);
    const StructureField sf = StructureField::from_phi(load_snapshot(fpath));
    const double fv = cf(cspec.coords(5)[0]);
    CHECK(max_abs(sf.at(5).metric.g - (fv * fv) * Mat7::identity()) < 1e-12);
    std::remove(fpath.c_str());
  }
}

TEST_SUITE_END();
