#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/var_cvar.hpp"

using namespace prl;

namespace {

// Independent quantile oracle: smallest support value whose strict upper
// tail mass is at most p. Linear scan over sorted support, no shared code
// with the implementation.
double oracle_p_esssup(std::vector<WeightedValue> d, double p) {
  double total = 0.0;
  for (const auto& e : d) total += e.w;
  std::sort(d.begin(), d.end(),
            [](const WeightedValue& a, const WeightedValue& b) {
              return a.value < b.value;
            });
  for (std::size_t i = 0; i < d.size(); ++i) {
    double tail = 0.0;
    for (const auto& e : d)
      if (e.value > d[i].value) tail += e.w;
    if (tail / total <= p) return d[i].value;
  }
  return d.back().value;
}

// Grid oracle for the superquantile: minimize a + E[(Z - a)_+] / p over a
// dense alpha grid. Accurate to a few times the grid step.
double oracle_cvar(const std::vector<WeightedValue>& d, double p,
                   int grid = 200000) {
  double lo = d[0].value, hi = d[0].value, total = 0.0;
  for (const auto& e : d) {
    lo = std::min(lo, e.value);
    hi = std::max(hi, e.value);
    total += e.w;
  }
  double best = 1e300;
  for (int i = 0; i <= grid; ++i) {
    const double a = lo + (hi - lo) * i / grid;
    double excess = 0.0;
    for (const auto& e : d) excess += e.w * std::max(0.0, e.value - a);
    best = std::min(best, a + excess / (total * p));
  }
  return best;
}

std::vector<WeightedValue> random_dist(CounterRng& rng) {
  std::vector<WeightedValue> d;
  const int n = 2 + int(rng.uniform() * 10);
  for (int i = 0; i < n; ++i) {
    // integer-ish values so exact ties occur
    d.push_back({std::floor(rng.uniform() * 8.0) / 2.0, 0.05 + rng.uniform()});
  }
  return d;
}

}  // namespace

TEST_CASE("quantile on the worked instances") {
  // definition: strict upper tail of 3 is 0 <= 0.15, of 2 is 0.8 > 0.15
  std::vector<WeightedValue> heavy{{1.0, 0.1}, {2.0, 0.1}, {3.0, 0.8}};
  CHECK(oracle_p_esssup(heavy, 0.15) == 3.0);
  CHECK(p_esssup(heavy, 0.15) == 3.0);

  // transposed weights: strict upper tail of 2 is 0.1 <= 0.15
  std::vector<WeightedValue> light{{1.0, 0.8}, {2.0, 0.1}, {3.0, 0.1}};
  CHECK(oracle_p_esssup(light, 0.15) == 2.0);
  CHECK(p_esssup(light, 0.15) == 2.0);

  // p = 0 gives the essential supremum
  CHECK(p_esssup(heavy, 0.0) == 3.0);
  CHECK(p_esssup(light, 0.0) == 3.0);

  CHECK_THROWS_AS(p_esssup(heavy, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(p_esssup(heavy, -0.1), std::invalid_argument);
}

TEST_CASE("quantile matches the oracle on random instances") {
  CounterRng rng(101, 1);
  for (int r = 0; r < 300; ++r) {
    auto d = random_dist(rng);
    const double p = rng.uniform() * 0.98;
    CHECK(p_esssup(d, p) == oracle_p_esssup(d, p));
  }
}

TEST_CASE("superquantile on the worked instance") {
  std::vector<WeightedValue> heavy{{1.0, 0.1}, {2.0, 0.1}, {3.0, 0.8}};
  // zeta(3) = 3, zeta(2) = 2 + 0.8/0.5 = 3.6, zeta(1) = 1 + (0.1+1.6)/0.5
  CvarResult r = cvar_full(heavy, 0.5);
  CHECK(r.value == Catch::Approx(3.0).margin(1e-15));
  CHECK(r.alpha == Catch::Approx(3.0).margin(1e-15));

  // tail levels inside the top atom keep the superquantile at the top value
  CHECK(cvar(heavy, 0.3) == Catch::Approx(3.0).margin(1e-15));
  // very small tails too
  CHECK(cvar(heavy, 0.01) == Catch::Approx(3.0).margin(1e-15));
}

TEST_CASE("superquantile matches the grid oracle on random instances") {
  CounterRng rng(202, 2);
  for (int r = 0; r < 60; ++r) {
    auto d = random_dist(rng);
    const double p = 0.02 + 0.96 * rng.uniform();
    const double got = cvar(d, p);
    const double want = oracle_cvar(d, p);
    CHECK(got == Catch::Approx(want).margin(1e-4));
    // the implementation is exact, so it can only undercut the grid
    CHECK(got <= want + 1e-12);
    CHECK(p_esssup(d, p) <= got + 1e-12);
  }
}

TEST_CASE("superquantile edge cases") {
  // single atom
  std::vector<WeightedValue> one{{2.5, 1.0}};
  CHECK(cvar(one, 0.5) == Catch::Approx(2.5).margin(1e-15));
  CHECK(p_esssup(one, 0.5) == 2.5);

  // tie between kinks resolves to the larger alpha
  std::vector<WeightedValue> coin{{0.0, 0.5}, {1.0, 0.5}};
  CvarResult tie = cvar_full(coin, 0.5);
  CHECK(tie.value == Catch::Approx(1.0).margin(1e-15));
  CHECK(tie.alpha == Catch::Approx(1.0).margin(1e-15));

  // near p = 1 the superquantile approaches the mean
  std::vector<WeightedValue> d{{0.0, 0.25}, {1.0, 0.5}, {2.0, 0.25}};
  CHECK(cvar(d, 0.9999) == Catch::Approx(1.0).epsilon(1e-3));

  // merged duplicate support values behave like one atom
  std::vector<WeightedValue> dup{{1.0, 0.3}, {1.0, 0.2}, {2.0, 0.5}};
  std::vector<WeightedValue> merged{{1.0, 0.5}, {2.0, 0.5}};
  CHECK(cvar(dup, 0.4) == Catch::Approx(cvar(merged, 0.4)).margin(1e-15));

  CHECK_THROWS_AS(cvar(d, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cvar(d, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(cvar(std::vector<WeightedValue>{}, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(cvar({{1.0, -0.1}}, 0.5), std::invalid_argument);
}

TEST_CASE("indicator superquantile closed form") {
  CHECK(cvar_indicator(0.05, 0.1) == Catch::Approx(0.5).margin(1e-15));
  CHECK(cvar_indicator(0.2, 0.1) == Catch::Approx(1.0).margin(1e-15));
  CHECK(cvar_indicator(0.0, 0.1) == Catch::Approx(0.0).margin(1e-15));

  // agrees with the generic path on Bernoulli distributions
  CounterRng rng(303, 3);
  for (int r = 0; r < 100; ++r) {
    const double q = rng.uniform();
    const double p = 0.02 + 0.96 * rng.uniform();
    std::vector<WeightedValue> bern;
    if (q < 1.0) bern.push_back({0.0, 1.0 - q});
    if (q > 0.0) bern.push_back({1.0, q});
    CHECK(cvar_indicator(q, p) ==
          Catch::Approx(cvar(bern, p)).margin(1e-12));
  }
}

TEST_CASE("psi families evaluate their defining formulas") {
  PsiSpec ind = PsiSpec::indicator_gt(0.3);
  CHECK(ind(0.3) == 0.0);
  CHECK(ind(0.300001) == 1.0);
  CHECK(ind(0.0) == 0.0);

  PsiSpec ramp = PsiSpec::cvar_ramp(0.25);
  CHECK(ramp(0.1) == Catch::Approx(0.4).margin(1e-15));
  CHECK(ramp(0.25) == Catch::Approx(1.0).margin(1e-15));
  CHECK(ramp(0.9) == Catch::Approx(1.0).margin(1e-15));

  // tail levels above one flatten the ramp below one
  PsiSpec wide = PsiSpec::cvar_ramp(1.5);
  CHECK(wide(1.0) == Catch::Approx(2.0 / 3.0).margin(1e-15));

  PsiSpec ess = PsiSpec::esssup_zero();
  CHECK(ess(0.0) == 0.0);
  CHECK(ess(1e-12) == 1.0);

  PsiSpec id = PsiSpec::identity();
  CHECK(id(0.42) == Catch::Approx(0.42).margin(1e-15));

  PsiSpec pw = PsiSpec::piecewise_linear({{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}});
  CHECK(pw(0.25) == Catch::Approx(0.4).margin(1e-15));
  CHECK(pw(0.75) == Catch::Approx(0.9).margin(1e-15));

  // domain guard: far outside throws, a hair outside clamps
  CHECK_THROWS_AS(id(1.5), std::invalid_argument);
  CHECK_THROWS_AS(id(-0.5), std::invalid_argument);
  CHECK(id(1.0 + 1e-10) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("psi structure predicates") {
  CHECK(PsiSpec::identity().is_concave());
  CHECK(PsiSpec::cvar_ramp(0.3).is_concave());
  CHECK(PsiSpec::esssup_zero().is_concave());
  CHECK_FALSE(PsiSpec::indicator_gt(0.3).is_concave());
  CHECK(PsiSpec::indicator_gt(0.0).is_concave());

  CHECK(PsiSpec::piecewise_linear({{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}})
            .is_concave());
  CHECK_FALSE(PsiSpec::piecewise_linear({{0.0, 0.0}, {0.5, 0.2}, {1.0, 1.0}})
                  .is_concave());

  for (const auto& psi :
       {PsiSpec::identity(), PsiSpec::cvar_ramp(0.3), PsiSpec::esssup_zero(),
        PsiSpec::indicator_gt(0.4),
        PsiSpec::piecewise_linear({{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}})})
    CHECK(psi.is_nondecreasing());

  CHECK_FALSE(PsiSpec::piecewise_linear({{0.0, 0.0}, {0.5, 0.8}, {1.0, 0.5}})
                  .is_nondecreasing());

  auto kinks = PsiSpec::cvar_ramp(0.25).kink_levels();
  REQUIRE(kinks.size() == 1);
  CHECK(kinks[0] == Catch::Approx(0.25).margin(1e-15));
  CHECK(PsiSpec::cvar_ramp(1.5).kink_levels().empty());
  CHECK(PsiSpec::identity().kink_levels().empty());
}

TEST_CASE("psi parse and serialization round trips") {
  for (const std::string s :
       {"identity", "esssup_zero", "indicator_gt:0.25", "cvar_ramp:0.1",
        "piecewise:0,0;0.3,0.7;1,1"}) {
    PsiSpec psi = PsiSpec::parse(s);
    PsiSpec back = PsiSpec::parse(psi.name());
    PsiSpec viaj = PsiSpec::from_json(psi.to_json());
    for (double t : {0.0, 0.1, 0.25, 0.5, 0.99, 1.0}) {
      CHECK(back(t) == psi(t));
      CHECK(viaj(t) == psi(t));
    }
  }
  CHECK_THROWS_AS(PsiSpec::parse("nonsense"), std::invalid_argument);
  CHECK_THROWS_AS(PsiSpec::parse("indicator_gt:1.0"), std::invalid_argument);
  CHECK_THROWS_AS(PsiSpec::parse("cvar_ramp:0"), std::invalid_argument);
  CHECK_THROWS_AS(PsiSpec::piecewise_linear({{0.1, 0.0}, {1.0, 1.0}}),
                  std::invalid_argument);
}
