#pragma once

// Synthetic instances with exactly computable risks. Each generator builds
// a dataset, a perturbation model, and named reference sets (plus soft
// classifiers where relevant) whose functional values reduce to short
// closed forms, and validates the geometric side conditions those closed
// forms depend on (no cloud atom on a null set, offsets strictly inside
// the ball, atoms aligned with grid centers, and so on). Everything is
// deterministic given the seed.

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prl/dataset.hpp"
#include "prl/grid.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/vec.hpp"

namespace prl {

struct Generated {
  LabeledDataset dataset;
  PerturbationModel pm;
  std::map<std::string, HardSet> sets;
  std::map<std::string, SoftClassifier> soft;
  nlohmann::json meta;

  nlohmann::json to_json() const {
    nlohmann::json j = dataset.to_json();
    j["pm"] = pm.to_json();
    j["sets"] = nlohmann::json::object();
    for (const auto& [name, s] : sets) j["sets"][name] = s.to_json();
    j["soft"] = nlohmann::json::object();
    for (const auto& [name, u] : soft) j["soft"][name] = u.to_json();
    j["meta"] = meta;
    return j;
  }

  static Generated from_json(const nlohmann::json& j) {
    Generated g{LabeledDataset::from_json(j),
                PerturbationModel::from_json(j.at("pm")),
                {},
                {},
                j.value("meta", nlohmann::json::object())};
    // bind before iterating: items() on a temporary dangles
    const nlohmann::json sets = j.value("sets", nlohmann::json::object());
    const nlohmann::json soft = j.value("soft", nlohmann::json::object());
    for (const auto& [name, e] : sets.items())
      g.sets.emplace(name, HardSet::from_json(e));
    for (const auto& [name, e] : soft.items())
      g.soft.emplace(name, SoftClassifier::from_json(e));
    return g;
  }
};

/// Three weighted points on the line with a symmetric 20-atom cloud. The
/// middle point sits where every admissible decision boundary cuts through
/// its perturbations, so the adversarial minimum stays positive while the
/// ramp-penalty minimum interpolates down to it as p shrinks. The named
/// set "tilde_A" misclassifies the middle point on a null set only: the
/// plain Psi-risk forgives that, the modified risk does not.
inline Generated generate_three_point(const nlohmann::json& params_in = {}) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  const double x1 = params.value("x1", 0.0);
  const double x2 = params.value("x2", 0.5);
  const double x3 = params.value("x3", 1.6);
  const double eps = params.value("epsilon", 0.7);
  const double w1 = params.value("w1", 0.4);
  const double w2 = params.value("w2", 0.2);
  const double w3 = params.value("w3", 0.4);
  const int K = params.value("cloud_atoms", 20);
  if (!(x1 < x2 && x2 < x3))
    throw std::invalid_argument("three_point: need x1 < x2 < x3");
  if (!(eps > 0.0) || K < 2)
    throw std::invalid_argument("three_point: need epsilon > 0, cloud_atoms >= 2");

  std::vector<Vec> offsets;
  for (int j = 1; j <= K; ++j) {
    const double o = eps * 0.99 * (2.0 * j - K - 1) / static_cast<double>(K);
    if (!(std::abs(o) < eps))
      throw std::invalid_argument("three_point: offset escaped the ball");
    offsets.push_back({o});
  }
  for (const double x : {x1, x2, x3})
    for (const auto& o : offsets)
      if (x + o[0] == x2)
        throw std::invalid_argument(
            "three_point: cloud atom collides with the singleton at x2");

  Generated g{
      LabeledDataset::probability(
          {{{x1}, 0, w1}, {{x2}, 0, w2}, {{x3}, 1, w3}}),
      PerturbationModel::discrete_cloud(1, std::move(offsets)),
      {},
      {},
      {}};
  g.sets.emplace("tilde_A",
                 HardSet::set_union(HardSet::disk({x3}, eps),
                                    HardSet::finite_points({{x2}}, 1)));
  g.meta = {{"name", "three_point"},
            {"epsilon", eps},
            {"grid",
             GridSpec{{x1 - eps}, {x3 + eps}, {params.value("grid_cells", 12)}}
                 .to_json()}};
  return g;
}

/// Two far-apart points in the plane with a sunflower cloud. The set
/// "A_iso" is the correct half-plane plus an isolated null point at the
/// blue sample: the plain Psi-risk at p = 0 stays zero, the modified risk
/// jumps to the blue weight.
inline Generated generate_two_point(const nlohmann::json& params_in = {}) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  const double a = params.value("a", 0.0);
  const double b = params.value("b", 3.0);
  const double eps = params.value("epsilon", 1.0);
  const int K = params.value("cloud_atoms", 40);
  if (!(b - a > 2.0 * eps))
    throw std::invalid_argument("two_point: need the balls disjoint");

  std::vector<Vec> offsets;
  constexpr double kGolden = 2.399963229728653;
  for (int k = 0; k < K; ++k) {
    const double r = 0.99 * eps * std::sqrt((k + 0.5) / static_cast<double>(K));
    if (!(r > 0.0 && r < eps))
      throw std::invalid_argument("two_point: offset escaped the ball");
    offsets.push_back({r * std::cos(kGolden * k), r * std::sin(kGolden * k)});
  }

  Generated g{LabeledDataset::probability(
                  {{{a, 0.0}, 0, 0.5}, {{b, 0.0}, 1, 0.5}}),
              PerturbationModel::discrete_cloud(2, std::move(offsets)),
              {},
              {},
              {}};
  g.sets.emplace(
      "A_iso",
      HardSet::set_union(HardSet::half_space({1.0, 0.0}, 0.5 * (a + b)),
                         HardSet::finite_points({{a, 0.0}}, 2)));
  g.meta = {{"name", "two_point"}, {"epsilon", eps}};
  return g;
}

/// A disk classifier with a hair-thin spike reaching to the blue point:
/// the point is misclassified outright, yet only the two on-axis cloud
/// atoms follow the spike, so the indicator risk at p = 0.1 sees nothing.
inline Generated generate_spike(const nlohmann::json& params_in = {}) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  const double eps = params.value("epsilon", 0.7);
  const double disk_r = params.value("disk_r", 0.75);
  const double half_w = params.value("spike_half_width", 0.01);
  const int ring_n = params.value("ring_atoms", 19);
  const Vec blue{0.0, 0.0};
  const Vec red{2.0, 0.0};

  // Two rings that dodge the spike plus two on-axis atoms that ride it.
  std::vector<Vec> offsets;
  for (const double r : {0.35 * eps, 0.60 * eps}) {
    const double clearance = r * std::sin(kPi / ring_n);
    if (!(clearance > half_w))
      throw std::invalid_argument("spike: ring atoms graze the spike");
    for (int m = 0; m < ring_n; ++m) {
      const double th = 2.0 * kPi * (m + 0.5) / ring_n;
      offsets.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }
  offsets.push_back({0.2, 0.0});
  offsets.push_back({0.4, 0.0});
  const std::size_t n_atoms = offsets.size();

  const GridSpec sliver{{-0.05, -half_w},
                        {red[0] + 0.05, half_w},
                        {params.value("spike_cells", 42), 1}};
  HardSet spike = HardSet::set_union(
      HardSet::disk(red, disk_r),
      HardSet::grid_mask(
          {sliver, std::vector<std::uint8_t>(sliver.cell_count(), 1)}));

  // The closed forms need exactly the two on-axis atoms of the blue cloud
  // inside the set, and the whole red cloud inside it.
  std::size_t blue_in = 0, red_in = 0;
  for (const auto& o : offsets) {
    if (spike.member(Vec{blue[0] + o[0], blue[1] + o[1]})) ++blue_in;
    if (spike.member(Vec{red[0] + o[0], red[1] + o[1]})) ++red_in;
  }
  if (blue_in != 2)
    throw std::invalid_argument("spike: blue cloud mass in the set is off");
  if (red_in != n_atoms)
    throw std::invalid_argument("spike: red cloud escaped the disk");
  if (!spike.member(blue))
    throw std::invalid_argument("spike: the spike must cover the blue point");

  Generated g{LabeledDataset::probability({{blue, 0, 0.5}, {red, 1, 0.5}}),
              PerturbationModel::discrete_cloud(2, std::move(offsets)),
              {},
              {},
              {}};
  g.sets.emplace("spike", std::move(spike));
  g.meta = {{"name", "spike"},
            {"epsilon", eps},
            {"blue_mass", static_cast<double>(blue_in) /
                              static_cast<double>(n_atoms)}};
  return g;
}

/// Two spherical Gaussians, one per label.
inline Generated generate_gauss_mixture(const nlohmann::json& params_in,
                                        std::uint64_t seed) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  const int n = params.value("n_per_class", 500);
  const double sep = params.value("sep", 2.0);
  const double sd = params.value("sigma", 0.5);
  const double eps = params.value("epsilon", 0.5);
  if (n < 1 || !(sd > 0.0) || !(eps > 0.0))
    throw std::invalid_argument("gauss_mixture: bad parameters");

  const RngStream rs{seed, 0x67617573ull};
  std::vector<LabeledPoint> pts;
  const double w = 1.0 / (2.0 * n);
  for (int label = 0; label < 2; ++label) {
    const double mx = label == 0 ? -sep : sep;
    for (int i = 0; i < n; ++i) {
      CounterRng rng =
          rs.sub(static_cast<std::uint64_t>(label)).sub(static_cast<std::uint64_t>(i)).rng();
      pts.push_back({{mx + sd * rng.normal(), sd * rng.normal()}, label, w});
    }
  }
  Generated g{LabeledDataset::probability(std::move(pts)),
              PerturbationModel::uniform_ball(2, eps),
              {},
              {},
              {}};
  g.sets.emplace("bayes", HardSet::half_space({1.0, 0.0}, 0.0));
  g.meta = {{"name", "gauss_mixture"},
            {"epsilon", eps},
            {"sep", sep},
            {"sigma", sd},
            {"n_per_class", n}};
  return g;
}

/// Overlapping perturbation balls around two points, a lattice cloud
/// aligned with a piecewise-constant soft classifier, and a deliberately
/// coarse mask family. The soft classifier hedges at one half on the
/// overlap and drives the soft modified risk to exactly zero at the
/// indicator level p = 0.9 q, while every mask in the coarse family pays
/// at least one half: homogenization strictly beats every hard set here.
inline Generated generate_homogenizing(const nlohmann::json& params_in = {}) {
  const nlohmann::json params =
      params_in.is_null() ? nlohmann::json::object() : params_in;
  const double eps = params.value("epsilon", 1.0);
  const double cx = params.value("center_x", 0.6);
  const double h = params.value("cell", 0.1);
  const Vec blue{-cx, 0.0};
  const Vec red{cx, 0.0};
  const double box = params.value("box", 1.7);

  const GridSpec ugrid{{-box, -box},
                       {box, box},
                       {static_cast<int>(std::lround(2.0 * box / h)),
                        static_cast<int>(std::lround(2.0 * box / h))}};

  // Half-integer lattice offsets strictly inside the ball: translated by
  // either data point they land exactly on cell centers of the u-grid.
  std::vector<Vec> offsets;
  const int reach = static_cast<int>(std::ceil(eps / h)) + 1;
  for (int i = -reach; i < reach; ++i)
    for (int j = -reach; j < reach; ++j) {
      const Vec o{h * (i + 0.5), h * (j + 0.5)};
      if (norm2(o) < 0.99 * eps) offsets.push_back(o);
    }
  const double atom_w = 1.0 / static_cast<double>(offsets.size());

  auto in_ball = [&](const Vec& c, const Vec& p) {
    return dist2(c, p) < eps;
  };
  Vec values(ugrid.cell_count(), 0.0);
  for (std::size_t c = 0; c < ugrid.cell_count(); ++c) {
    const Vec ctr = ugrid.cell_center(c);
    const bool nb = in_ball(blue, ctr), nr = in_ball(red, ctr);
    values[c] = nb && nr ? 0.5 : (nr ? 1.0 : 0.0);
  }
  SoftClassifier u = SoftClassifier::grid_function(ugrid, values);

  if (u.eval(blue) != 0.0 || u.eval(red) != 1.0)
    throw std::invalid_argument("homogenizing: data points off their plateaus");

  // q: cloud mass on the hedged overlap cells; identical from both points.
  double q_blue = 0.0, q_red = 0.0;
  for (const auto& o : offsets) {
    const Vec zb{blue[0] + o[0], blue[1] + o[1]};
    const Vec zr{red[0] + o[0], red[1] + o[1]};
    if (u.eval(zb) == 0.5) q_blue += atom_w;
    if (u.eval(zr) == 0.5) q_red += atom_w;
    if (u.eval(zb) == 1.0)
      throw std::invalid_argument("homogenizing: blue cloud reached the red plateau");
    if (u.eval(zr) == 0.0)
      throw std::invalid_argument("homogenizing: red cloud reached the blue plateau");
  }
  if (q_blue != q_red || !(q_blue > 0.0))
    throw std::invalid_argument("homogenizing: overlap masses must match and be positive");
  const double q = q_blue;
  const double p = 0.9 * q;
  if (!(0.5 * q < p))
    throw std::invalid_argument("homogenizing: hedge must stay below the level");

  Generated g{LabeledDataset::probability({{blue, 0, 0.5}, {red, 1, 0.5}}),
              PerturbationModel::discrete_cloud(2, std::move(offsets)),
              {},
              {},
              {}};
  g.soft.emplace("u_homog", std::move(u));
  g.meta = {{"name", "homogenizing"},
            {"epsilon", eps},
            {"q", q},
            {"p", p},
            {"mask_grid", GridSpec{{-box, -box}, {box, box}, {3, 1}}.to_json()}};
  return g;
}

/// Dispatch by name; `seed` only matters for the stochastic generators.
inline Generated generate(const std::string& name, const nlohmann::json& params,
                          std::uint64_t seed) {
  if (name == "three_point") return generate_three_point(params);
  if (name == "two_point") return generate_two_point(params);
  if (name == "spike") return generate_spike(params);
  if (name == "gauss_mixture") return generate_gauss_mixture(params, seed);
  if (name == "homogenizing") return generate_homogenizing(params);
  throw std::invalid_argument("generate: unknown instance \"" + name + "\"");
}

inline std::vector<std::string> generator_names() {
  return {"three_point", "two_point", "spike", "gauss_mixture",
          "homogenizing"};
}

}  // namespace prl
