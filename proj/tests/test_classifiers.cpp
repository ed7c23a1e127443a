#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "prl/grid.hpp"
#include "prl/hardset.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/vec.hpp"

using namespace prl;

namespace {

// central-difference check of eval_grad at one point
void check_grad(const SoftClassifier& u, const Vec& x, double tol) {
  Vec grad;
  (void)u.eval_grad(x, &grad);
  REQUIRE(grad.size() == u.params().size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    Vec up = u.params(), dn = u.params();
    up[i] += h;
    dn[i] -= h;
    const double fd =
        (u.with_params(up).eval(x) - u.with_params(dn).eval(x)) / (2.0 * h);
    CHECK(grad[i] == Catch::Approx(fd).margin(tol));
  }
}

}  // namespace

TEST_CASE("constant classifier") {
  SoftClassifier u = SoftClassifier::constant(0.3, 2);
  CHECK(u.eval(Vec{5.0, -5.0}) == Catch::Approx(0.3).margin(1e-15));
  CHECK_THROWS_AS(SoftClassifier::constant(1.5, 2), std::invalid_argument);

  // threshold is all-or-nothing
  CHECK_FALSE(u.threshold(0.5).member(Vec{0.0, 0.0}));
  CHECK(u.threshold(0.2).member(Vec{0.0, 0.0}));

  // the value set always carries 0 so layer-cake levels start at the floor
  auto fv = u.finite_values();
  REQUIRE(fv.has_value());
  REQUIRE(fv->size() == 2);
  CHECK((*fv)[0] == 0.0);
  CHECK((*fv)[1] == Catch::Approx(0.3).margin(1e-15));
}

TEST_CASE("linear sigmoid evaluation and gradient") {
  SoftClassifier u = SoftClassifier::linear_sigmoid({2.0, -1.0}, 0.5);
  const Vec x{0.3, 0.7};
  const double z = 2.0 * 0.3 - 1.0 * 0.7 + 0.5;
  CHECK(u.eval(x) == Catch::Approx(1.0 / (1.0 + std::exp(-z))).margin(1e-15));

  check_grad(u, x, 1e-6);
  CHECK_FALSE(u.finite_values().has_value());

  // threshold half space matches pointwise evaluation off the boundary
  HardSet level = u.threshold(0.6);
  CounterRng rng(3, 3);
  for (int i = 0; i < 50; ++i) {
    Vec p{4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0};
    if (std::abs(u.eval(p) - 0.6) < 1e-9) continue;
    CHECK(level.member(p) == (u.eval(p) >= 0.6));
  }

  SoftClassifier v = u.with_params({0.0, 0.0, 0.0});
  CHECK(v.eval(x) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("one-layer net gradient and guards") {
  const int d = 2, hidden = 3;
  const std::size_t need = std::size_t(hidden) * d + 2u * hidden + 1u;
  Vec params(need);
  CounterRng rng(8, 1);
  for (double& p : params) p = rng.normal() * 0.7;
  SoftClassifier u = SoftClassifier::mlp1(d, hidden, params);

  const Vec x{0.4, -0.2};
  const double v = u.eval(x);
  CHECK(v > 0.0);
  CHECK(v < 1.0);
  check_grad(u, x, 1e-5);

  CHECK_FALSE(u.finite_values().has_value());
  CHECK_THROWS_AS(u.threshold(0.5), std::invalid_argument);

  // rasterized threshold is available instead
  GridSpec raster({-1.0, -1.0}, {1.0, 1.0}, {8, 8});
  HardSet approx = u.threshold(0.5, raster);
  CHECK(approx.member(raster.cell_center(0)) == (u.eval(raster.cell_center(0)) >= 0.5));

  CHECK_THROWS_AS(SoftClassifier::mlp1(d, hidden, Vec(need - 1)),
                  std::invalid_argument);
}

TEST_CASE("grid function steps and level sets") {
  GridSpec g({0.0, 0.0}, {1.0, 1.0}, {2, 2});
  SoftClassifier u = SoftClassifier::grid_function(g, {0.0, 0.25, 0.5, 1.0});

  CHECK(u.eval(Vec{0.25, 0.25}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(u.eval(Vec{0.75, 0.75}) == Catch::Approx(1.0).margin(1e-15));
  // outside the box the function is zero
  CHECK(u.eval(Vec{2.0, 2.0}) == Catch::Approx(0.0).margin(1e-15));

  auto fv = u.finite_values();
  REQUIRE(fv.has_value());
  CHECK(fv->size() == 4);

  HardSet lv = u.threshold(0.5);
  CHECK_FALSE(lv.member(Vec{0.25, 0.25}));
  CHECK(lv.member(Vec{0.75, 0.75}));
  // cells at exactly the level belong to the superlevel set
  CHECK(lv.member(Vec{0.25, 0.75}) == (u.eval(Vec{0.25, 0.75}) >= 0.5));

  CHECK_THROWS_AS(SoftClassifier::grid_function(g, {0.0, 0.25, 0.5, 1.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(u.with_params({0.0, 0.1, -0.2, 0.3}), std::invalid_argument);
}

TEST_CASE("classifiers serialize round trip") {
  CounterRng rng(2, 9);
  const Vec x{0.3, -0.8};

  SoftClassifier a = SoftClassifier::linear_sigmoid({1.0, -2.0}, 0.25);
  CHECK(SoftClassifier::from_json(a.to_json()).eval(x) ==
        Catch::Approx(a.eval(x)).margin(1e-15));

  Vec params(2 * 2 + 2 * 2 + 1);
  for (double& p : params) p = rng.normal();
  SoftClassifier b = SoftClassifier::mlp1(2, 2, params);
  CHECK(SoftClassifier::from_json(b.to_json()).eval(x) ==
        Catch::Approx(b.eval(x)).margin(1e-15));

  GridSpec g({-1.0, -1.0}, {1.0, 1.0}, {3, 3});
  Vec vals(9);
  for (double& v : vals) v = rng.uniform();
  SoftClassifier c = SoftClassifier::grid_function(g, vals);
  CHECK(SoftClassifier::from_json(c.to_json()).eval(x) ==
        Catch::Approx(c.eval(x)).margin(1e-15));

  SoftClassifier d = SoftClassifier::constant(0.7, 2);
  CHECK(SoftClassifier::from_json(d.to_json()).eval(x) ==
        Catch::Approx(0.7).margin(1e-15));
}
