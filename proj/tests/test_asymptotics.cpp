#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "prl/psi.hpp"
#include "prl/sigma_limit.hpp"
#include "prl/vec.hpp"

using namespace prl;

namespace {

// Midpoint Riemann sum, deliberately unrelated to the Simpson panels and
// kink splitting used by the implementation.
double riemann(const std::function<double(double)>& f, double a, double b,
               int n) {
  double acc = 0.0;
  const double h = (b - a) / n;
  for (int i = 0; i < n; ++i) acc += f(a + (i + 0.5) * h);
  return acc * h;
}

}  // namespace

TEST_CASE("kernel halfspace mass: uniform closed form and symmetry") {
  const RadialProfile uni = RadialProfile::uniform_ball();
  CHECK(kernel_halfspace_mass(0.0, uni) == Catch::Approx(0.5).margin(1e-15));
  CHECK(kernel_halfspace_mass(1.0, uni) == 0.0);
  CHECK(kernel_halfspace_mass(-1.0, uni) == 1.0);
  CHECK(kernel_halfspace_mass(2.0, uni) == 0.0);
  for (double t : {0.1, 0.25, 0.5, 0.9}) {
    CHECK(kernel_halfspace_mass(t, uni) ==
          Catch::Approx(unit_disk_tail_fraction(t)).margin(1e-15));
    CHECK(kernel_halfspace_mass(-t, uni) + kernel_halfspace_mass(t, uni) ==
          Catch::Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("kernel halfspace mass: cone profile against angular quadrature") {
  // for a radial density k the chord mass is
  //   int_t^1 k(r) r 2 acos(t / r) dr / (2 pi int_0^1 k(r) r dr);
  // for k(r) = 1 - r the normalizer is pi / 3
  const RadialProfile cone = RadialProfile::cone();
  CHECK(kernel_halfspace_mass(0.0, cone) == Catch::Approx(0.5).margin(1e-12));
  for (double t : {0.15, 0.4, 0.75}) {
    const double raw = riemann(
        [&](double r) { return (1.0 - r) * r * 2.0 * std::acos(t / r); }, t,
        1.0, 200000);
    const double want = raw / (kPi / 3.0);
    CHECK(kernel_halfspace_mass(t, cone) ==
          Catch::Approx(want).margin(1e-6));
  }
}

TEST_CASE("surface tension: closed forms") {
  // identity: int_0^1 F(t) dt = E[(z_1)_+] = 2 / (3 pi) for the uniform disk
  CHECK(sigma_psi(PsiSpec::identity()) ==
        Catch::Approx(2.0 / (3.0 * kPi)).margin(1e-8));

  // F never exceeds one half, so the half-level ramp is exactly 2 F
  CHECK(sigma_psi(PsiSpec::cvar_ramp(0.5)) ==
        Catch::Approx(4.0 / (3.0 * kPi)).margin(1e-8));

  // cone kernel: E[(z_1)_+] = (int r^2 (1 - r) dr * 2) / (pi / 3) = 1 / (2 pi)
  CHECK(sigma_psi(PsiSpec::identity(), RadialProfile::cone()) ==
        Catch::Approx(1.0 / (2.0 * kPi)).margin(1e-6));
}

TEST_CASE("surface tension: indicator reduces to the level boundary of F") {
  const double s = sigma_psi(PsiSpec::indicator_gt(0.25));
  CHECK(s == Catch::Approx(0.4039727533).margin(1e-9));
  CHECK(unit_disk_tail_fraction(s) == Catch::Approx(0.25).margin(1e-9));

  // F peaks at one half, so any threshold at or above it kills the tension
  CHECK(sigma_psi(PsiSpec::indicator_gt(0.5)) == 0.0);
  CHECK(sigma_psi(PsiSpec::indicator_gt(0.7)) == 0.0);

  // at p = 0 every positive mass counts and the tension saturates
  CHECK(sigma_psi(PsiSpec::indicator_gt(0.0)) ==
        Catch::Approx(1.0).margin(1e-9));
  CHECK(sigma_psi(PsiSpec::esssup_zero()) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("surface tension: kinked penalties against a blind Riemann sum") {
  for (const PsiSpec& psi :
       {PsiSpec::cvar_ramp(0.25), PsiSpec::cvar_ramp(0.05),
        PsiSpec::piecewise_linear({{0.0, 0.0}, {0.3, 0.9}, {1.0, 1.0}})}) {
    const double want = riemann(
        [&](double t) { return psi(unit_disk_tail_fraction(t)); }, 0.0, 1.0,
        1000000);
    CHECK(sigma_psi(psi) == Catch::Approx(want).margin(1e-7));
  }
}

TEST_CASE("boundary integral: circles") {
  const SmoothSet2D disk = SmoothSet2D::disk({0.3, -0.2}, 1.7);
  CHECK(boundary_integral(disk, DensityField::constant(0.4, 0.6)) ==
        Catch::Approx(2.0 * kPi * 1.7).margin(1e-9));

  // x^2 integrates to pi R^3 over a centered circle; the midpoint rule on
  // uniform angles is exact for this harmonic
  const SmoothSet2D unit = SmoothSet2D::disk({0.0, 0.0}, 2.0);
  DensityField f{[](const Vec& p) { return p[0] * p[0]; },
                 [](const Vec&) { return 0.0; }};
  CHECK(boundary_integral(unit, f) ==
        Catch::Approx(kPi * 8.0).margin(1e-9));
}

TEST_CASE("boundary integral: clipped half-plane chords") {
  // vertical boundary x = 0.5 inside the default box spans length 6;
  // the un-normalized normal must give the same line
  for (auto set : {SmoothSet2D::half_plane({1.0, 0.0}, 0.5),
                   SmoothSet2D::half_plane({2.0, 0.0}, 1.0)}) {
    CHECK(boundary_integral(set, DensityField::constant(0.25, 0.5)) ==
          Catch::Approx(6.0 * 0.75).margin(1e-9));
  }

  // diagonal through the origin: corner-to-corner chord of length 6 sqrt 2
  const SmoothSet2D diag = SmoothSet2D::half_plane({1.0, 1.0}, 0.0);
  CHECK(boundary_integral(diag, DensityField::constant(1.0, 0.0)) ==
        Catch::Approx(6.0 * std::sqrt(2.0)).margin(1e-9));

  // boundary entirely outside the box
  const SmoothSet2D far = SmoothSet2D::half_plane({1.0, 0.0}, 5.0);
  CHECK(boundary_integral(far, DensityField::constant(1.0, 1.0)) == 0.0);
}

TEST_CASE("epsilon sweep: disk collar converges to the surface integral") {
  const SmoothSet2D disk = SmoothSet2D::disk({0.0, 0.0}, 1.0);
  const DensityField field = DensityField::constant(1.0, 1.0);
  const auto rows =
      epsilon_sweep(disk, field, PsiSpec::identity(), {0.2, 0.1});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].limit == Catch::Approx(8.0 / 3.0).margin(1e-8));
  CHECK(rows[0].rel_error < 0.01);
  CHECK(rows[1].rel_error < rows[0].rel_error);
  // frozen collar value at eps = 0.1 with default sweep resolution
  CHECK(rows[1].scaled_per == Catch::Approx(2.66596771583).margin(1e-9));

  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("epsilon,scaled_per,limit,rel_error\n", 0) == 0);
}

TEST_CASE("epsilon sweep: flat boundary has no curvature error") {
  const SmoothSet2D hp = SmoothSet2D::half_plane({0.0, 1.0}, 0.0);
  const auto rows = epsilon_sweep(hp, DensityField::constant(1.0, 0.0),
                                  PsiSpec::identity(), {0.1});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].limit == Catch::Approx(6.0 * 2.0 / (3.0 * kPi)).margin(1e-8));
  CHECK(rows[0].rel_error < 1e-3);
}

TEST_CASE("epsilon sweep: indicator penalty") {
  const SmoothSet2D disk = SmoothSet2D::disk({0.0, 0.0}, 1.0);
  const auto rows = epsilon_sweep(disk, DensityField::constant(1.0, 1.0),
                                  PsiSpec::indicator_gt(0.25), {0.05});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].rel_error < 0.02);
}

TEST_CASE("epsilon sweep: rejects ill-posed requests") {
  const SmoothSet2D disk = SmoothSet2D::disk({0.0, 0.0}, 1.0);
  const DensityField field = DensityField::constant(1.0, 1.0);
  // a penalty with Psi(0) > 0 charges the collar bulk, not the boundary
  CHECK_THROWS_AS(
      epsilon_sweep(disk, field,
                    PsiSpec::piecewise_linear({{0.0, 0.5}, {1.0, 1.0}}),
                    {0.1}),
      std::invalid_argument);
  CHECK_THROWS_AS(epsilon_sweep(disk, field, PsiSpec::identity(), {1.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(epsilon_sweep(disk, field, PsiSpec::identity(), {0.0}),
                  std::invalid_argument);
}
