#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "prl/dataset.hpp"
#include "prl/functionals.hpp"
#include "prl/generators.hpp"
#include "prl/grid.hpp"
#include "prl/grid_search.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/train.hpp"
#include "prl/vec.hpp"

using namespace prl;

namespace {

double zeta(const std::vector<double>& losses, double p, double a) {
  double excess = 0.0;
  for (const double l : losses) excess += std::max(l - a, 0.0);
  return a + excess / (p * static_cast<double>(losses.size()));
}

}  // namespace

TEST_CASE("inner alpha steps land in the argmin interval") {
  // ten equally spaced losses, p = 0.3: zeta is flat on [0.7, 0.8]
  const std::vector<double> losses{0.1, 0.2, 0.3, 0.4, 0.5,
                                   0.6, 0.7, 0.8, 0.9, 1.0};
  const double p = 0.3;

  const double scan = cvar_scan_alpha(losses, p);
  CHECK(scan == Catch::Approx(0.8).margin(1e-12));
  CHECK(zeta(losses, p, scan) == Catch::Approx(0.9).margin(1e-12));

  // from the mean 0.55 the subgradient walks up and parks where g = 0
  const InnerAlphaResult inner = cvar_inner_alpha(losses, p, 10, 0.1, 0.55);
  CHECK(inner.cap_hits == 0);
  CHECK(inner.alpha == Catch::Approx(0.55 + 0.1 * (2.0 / 3.0 + 1.0))
                           .margin(1e-9));
  CHECK(zeta(losses, p, inner.alpha) ==
        Catch::Approx(zeta(losses, p, scan)).margin(1e-12));
}

TEST_CASE("inner alpha caps the subgradient at one unit per step") {
  // tiny p makes the raw subgradient -24; each step moves exactly +1
  const std::vector<double> losses{0.0, 0.0, 0.0, 10.0};
  const InnerAlphaResult r = cvar_inner_alpha(losses, 0.01, 2, 1.0, 2.5);
  CHECK(r.cap_hits == 2);
  CHECK(r.alpha == Catch::Approx(4.5).margin(1e-12));
}

TEST_CASE("alpha scan beats a dense grid") {
  CounterRng rng(99, 0);
  for (int round = 0; round < 20; ++round) {
    std::vector<double> losses;
    for (int i = 0; i < 20; ++i) losses.push_back(rng.uniform(0.0, 3.0));
    for (const double p : {0.05, 0.3, 0.7}) {
      const double scan = cvar_scan_alpha(losses, p);
      double grid_best = 1e300;
      for (int k = 0; k <= 2000; ++k)
        grid_best = std::min(grid_best, zeta(losses, p, 3.0 * k / 2000.0));
      CHECK(zeta(losses, p, scan) <= grid_best + 1e-12);
    }
  }
}

TEST_CASE("exhaustive mask search matches a plain enumeration") {
  Generated g = generate("three_point", nlohmann::json::object(), 0);
  const GridSpec grid = GridSpec::from_json(g.meta.at("grid"));
  REQUIRE(grid.cell_count() == 12);
  const PsiSpec ramp = PsiSpec::cvar_ramp(0.5);
  EstimatorConfig cfg;

  const GridMinResult got = grid_minimize(g.dataset, g.pm, grid,
                                          MaskObjective::ProbRiskPsi, ramp);
  REQUIRE(got.exhaustive);

  double want = 1e300;
  for (std::uint64_t m = 0; m < (1ull << 12); ++m) {
    std::vector<std::uint8_t> bits(12);
    for (std::size_t c = 0; c < 12; ++c) bits[c] = (m >> c) & 1;
    HardSet A = HardSet::grid_mask({grid, bits});
    want = std::min(want, probrisk_psi(g.dataset, g.pm, A, ramp, cfg).value);
  }
  CHECK(got.value == Catch::Approx(want).margin(1e-12));
  CHECK(probrisk_psi(g.dataset, g.pm, got.set(grid), ramp, cfg).value ==
        Catch::Approx(got.value).margin(1e-12));
}

TEST_CASE("interpolation sweep walks from standard to adversarial") {
  Generated g = generate("three_point", nlohmann::json::object(), 0);
  const GridSpec grid = GridSpec::from_json(g.meta.at("grid"));
  const double eps = g.meta.at("epsilon").get<double>();

  const InterpSweep sw = interpolation_sweep(g.dataset, g.pm, grid,
                                             {0.9, 0.5, 0.1, 0.01}, eps);
  REQUIRE(sw.rows.size() == 4);
  for (const auto& row : sw.rows) CHECK(row.exhaustive);
  CHECK(sw.rows[0].min_value == Catch::Approx(0.2 * 0.3 / 0.9).margin(1e-12));
  CHECK(sw.rows[1].min_value == Catch::Approx(0.12).margin(1e-12));
  CHECK(sw.rows[2].min_value == Catch::Approx(0.2).margin(1e-12));
  CHECK(sw.rows[3].min_value == Catch::Approx(0.2).margin(1e-12));
  CHECK(sw.min_adv == Catch::Approx(0.2).margin(1e-12));
  CHECK(sw.min_std == Catch::Approx(0.0).margin(1e-12));

  // the minima interpolate: nonincreasing in p, pinched between the ends
  for (std::size_t i = 1; i < sw.rows.size(); ++i)
    CHECK(sw.rows[i - 1].min_value <= sw.rows[i].min_value + 1e-12);
  CHECK(sw.rows.back().min_value <= sw.min_adv + 1e-12);
  CHECK(sw.min_std <= sw.rows.front().min_value + 1e-12);

  // a level above one relaxes the penalty almost away
  const GridMinResult soft = grid_minimize(g.dataset, g.pm, grid,
                                           MaskObjective::ProbRiskPsi,
                                           PsiSpec::cvar_ramp(10.0));
  CHECK(soft.value <= sw.min_std + 0.05);
}

TEST_CASE("annealing search on a grid too large to enumerate") {
  std::vector<LabeledPoint> pts;
  CounterRng rng(4, 0);
  for (int i = 0; i < 30; ++i)
    pts.push_back({{rng.uniform(-1.0, 1.0)}, 1, 1.0 / 30.0});
  const LabeledDataset ds = LabeledDataset::probability(std::move(pts));
  const PerturbationModel pm = PerturbationModel::uniform_ball(1, 0.05);
  const GridSpec grid({-1.0}, {1.0}, {26});

  GridSearchOptions opts;
  opts.seed = 3;
  const GridMinResult r = grid_minimize(ds, pm, grid, MaskObjective::RiskStd,
                                        PsiSpec::identity(), 0.0, opts);
  CHECK_FALSE(r.exhaustive);
  // every label is 1, so covering all the points is optimal
  CHECK(r.value == Catch::Approx(0.0).margin(1e-12));

  const GridMinResult again = grid_minimize(
      ds, pm, grid, MaskObjective::RiskStd, PsiSpec::identity(), 0.0, opts);
  CHECK(again.bits == r.bits);
  CHECK(again.value == r.value);
}

TEST_CASE("training is bitwise reproducible") {
  std::vector<LabeledPoint> pts;
  CounterRng rng(21, 0);
  for (int i = 0; i < 6; ++i) {
    const int y = i % 2;
    pts.push_back({{(y ? 1.0 : -1.0) + 0.2 * rng.normal(),
                    0.2 * rng.normal()},
                   y,
                   1.0 / 6.0});
  }
  const LabeledDataset ds = LabeledDataset::probability(std::move(pts));
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.25);
  const SoftClassifier u0 = SoftClassifier::linear_sigmoid({0.0, 0.0}, 0.0);

  TrainConfig cfg;
  cfg.p = 0.2;
  cfg.draws = 6;
  cfg.alpha_steps = 2;
  cfg.eta = 0.5;
  cfg.batch = 3;
  cfg.epochs = 3;
  cfg.probacc_samples = 40;
  cfg.seed = 11;

  const TrainResult a = train(ds, u0, pm, cfg);
  const TrainResult b = train(ds, u0, pm, cfg);
  REQUIRE(a.epochs.size() == 3);
  REQUIRE(b.epochs.size() == 3);
  CHECK(a.model.params() == b.model.params());
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.epochs[e].objective == b.epochs[e].objective);
    CHECK(a.epochs[e].prob_acc == b.epochs[e].prob_acc);
    CHECK(a.epochs[e].cvar_branch == b.epochs[e].cvar_branch);
  }
}

TEST_CASE("branch accounting: original always takes the cvar branch") {
  const LabeledDataset ds = LabeledDataset::probability(
      {{{-1.0, 0.0}, 0, 0.5}, {{1.0, 0.0}, 1, 0.5}});
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.2);
  const SoftClassifier u0 = SoftClassifier::linear_sigmoid({0.0, 0.0}, 0.0);

  TrainConfig cfg;
  cfg.p = 0.2;
  cfg.draws = 5;
  cfg.alpha_steps = 2;  // even: alpha comes back to the mean on flat losses
  cfg.eta_alpha = 1.0;
  cfg.batch = 2;
  cfg.epochs = 1;
  cfg.probacc_samples = 10;
  // the absolute loss keeps every value exactly representable (0.5 and
  // 1.5), so the round trip of alpha through the capped steps is exact
  cfg.loss = LossKind::Abs;

  // at the flat start every draw loss equals the clean loss, so the cvar
  // objective ties the clean one and the modified variant declines it
  cfg.variant = TrainVariant::Modified;
  const TrainResult mod = train(ds, u0, pm, cfg);
  CHECK(mod.epochs[0].std_branch == 2);
  CHECK(mod.epochs[0].cvar_branch == 0);
  // one capped step per sample: the raw subgradient is 1 - 1/p = -4
  CHECK(mod.epochs[0].alpha_cap_hits == 2);

  cfg.variant = TrainVariant::Original;
  const TrainResult orig = train(ds, u0, pm, cfg);
  CHECK(orig.epochs[0].cvar_branch == 2);
  CHECK(orig.epochs[0].std_branch == 0);
}

TEST_CASE("training solves the gaussian mixture") {
  Generated g = generate("gauss_mixture", {{"n_per_class", 30}}, 5);
  const SoftClassifier u0 = SoftClassifier::linear_sigmoid({0.0, 0.0}, 0.0);

  TrainConfig cfg;
  cfg.p = 0.1;
  cfg.draws = 10;
  cfg.epochs = 12;
  cfg.batch = 16;
  cfg.probacc_samples = 50;
  cfg.seed = 2;

  const TrainResult r = train(g.dataset, u0, g.pm, cfg);
  REQUIRE(r.epochs.size() == 12);
  CHECK(r.epochs.back().clean_acc >= 0.95);

  for (const EpochStats& st : r.epochs) {
    REQUIRE(st.prob_acc.size() == cfg.probacc_levels.size());
    // smaller tolerated misclassification level keeps fewer points
    for (std::size_t i = 1; i < st.prob_acc.size(); ++i)
      CHECK(st.prob_acc[i] <= st.prob_acc[i - 1] + 1e-12);
    // surviving every draw implies surviving at every level
    for (const double pa : st.prob_acc)
      CHECK(st.adv_surrogate <= pa + 1e-12);
    CHECK(st.clean_acc >= st.adv_surrogate - 1e-12);
  }
}

TEST_CASE("per sample objective is the replayed shifted tail mean") {
  const SoftClassifier u = SoftClassifier::linear_sigmoid({0.8, -0.2}, 0.1);
  const Vec x{0.4, -0.3};
  const int y = 0;
  const PerturbationModel pm = PerturbationModel::discrete_cloud(
      2, {{0.1, 0.0}, {-0.1, 0.05}, {0.0, -0.12}, {0.15, 0.1}});

  TrainConfig cfg;
  cfg.p = 0.4;
  cfg.draws = 4;
  cfg.alpha_steps = 0;  // alpha stays at the mean, so the replay is exact
  cfg.variant = TrainVariant::Modified;
  const RngStream rs{3, 12};

  const auto out = detail::prl_sample_grad(u, pm, x, y, cfg, rs, nullptr);

  std::vector<double> losses(4);
  for (int k = 0; k < 4; ++k) {
    CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
    losses[static_cast<std::size_t>(k)] =
        detail::loss_value(cfg.loss, u.eval(pm.sample_one(x, rng)), y);
  }
  const double mean = pairwise_sum(losses) / 4.0;
  double excess = 0.0;
  for (const double l : losses) excess += std::max(l - mean, 0.0);
  const double s = mean + excess / (cfg.p * 4.0);
  const double clean = detail::loss_value(cfg.loss, u.eval(x), y);
  CHECK(out.objective == std::max(clean, s));

  // the shifted tail mean dominates the exact cvar of the drawn losses,
  // which in turn dominates their mean; the modified variant also clears
  // the clean loss
  std::vector<WeightedValue> dist;
  for (const double l : losses) dist.push_back({l, 0.25});
  CHECK(s >= cvar(dist, cfg.p) - 1e-12);
  CHECK(cvar(dist, cfg.p) >= mean - 1e-12);
  CHECK(out.objective >= clean);
  CHECK(out.objective >= 0.0);
}

TEST_CASE("training a one layer net exercises the gradient path") {
  const LabeledDataset ds = LabeledDataset::probability(
      {{{-1.0, 0.2}, 0, 0.25}, {{-0.8, -0.3}, 0, 0.25},
       {{1.0, -0.1}, 1, 0.25}, {{0.7, 0.4}, 1, 0.25}});
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.1);
  Vec params(13);
  CounterRng rng(8, 0);
  for (auto& v : params) v = 0.3 * rng.normal();
  const SoftClassifier u0 = SoftClassifier::mlp1(2, 3, params);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.draws = 4;
  cfg.alpha_steps = 2;
  cfg.probacc_samples = 10;
  const TrainResult r = train(ds, u0, pm, cfg);
  CHECK(r.model.params().size() == 13);
  CHECK(r.epochs.size() == 2);
}

TEST_CASE("divergence guard throws after three runaway epochs") {
  // conflicting labels at the same location put the optimum at u = 1/2;
  // an oversized step oscillates away from it with growing amplitude until
  // half the weight sits at the bce clamp, over ten times the first epoch
  const LabeledDataset ds = LabeledDataset::probability(
      {{{1.0, 0.0}, 1, 0.5}, {{1.0, 0.0}, 0, 0.5}});
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.01);
  const SoftClassifier u0 = SoftClassifier::linear_sigmoid({0.005, 0.0}, 0.0);

  TrainConfig cfg;
  cfg.p = 0.5;
  cfg.draws = 2;
  cfg.alpha_steps = 0;
  cfg.eta = 30.0;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.variant = TrainVariant::Original;
  cfg.batch = 2;
  cfg.epochs = 40;
  cfg.probacc_samples = 5;
  CHECK_THROWS_AS(train(ds, u0, pm, cfg), std::runtime_error);
}

TEST_CASE("probabilistic accuracy uses a strict level comparison") {
  // a single zero offset makes every draw reproduce the point itself
  const LabeledDataset ds = LabeledDataset::probability(
      {{{1.0, 0.0}, 1, 0.6}, {{-1.0, 0.0}, 1, 0.4}});
  const PerturbationModel pm =
      PerturbationModel::discrete_cloud(2, {{0.0, 0.0}});
  const Predictor pred = predictor_from(HardSet::half_space({1.0, 0.0}, 0.0));

  // the wrong point fails every draw; its proportion 1 is not < 1
  const auto acc = prob_acc(ds, pred, pm, {1e-12, 0.5, 1.0}, 30);
  REQUIRE(acc.size() == 3);
  CHECK(acc[0] == Catch::Approx(0.6).margin(1e-12));
  CHECK(acc[1] == Catch::Approx(0.6).margin(1e-12));
  CHECK(acc[2] == Catch::Approx(0.6).margin(1e-12));

  CHECK_THROWS_AS(prob_acc(ds, pred, pm, {0.5}, 0), std::invalid_argument);
}

TEST_CASE("pathology scan separates null defects from real ones") {
  // the predictor is a half-plane with a pinprick removed at one sample:
  // that sample is wrong but virtually all its perturbations are right
  const Vec b{1.0, 0.0};
  const HardSet A = HardSet::set_intersect(
      HardSet::half_space({1.0, 0.0}, 0.0),
      HardSet::complement(HardSet::disk(b, 1e-4)));
  const LabeledDataset ds = LabeledDataset::probability(
      {{{3.0, 0.0}, 1, 0.4}, {b, 1, 0.3}, {{-2.0, 0.0}, 1, 0.3}});
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.3);

  const PathoReport rep =
      patho_scan(ds, predictor_from(A), pm, 0.9, 300, RngStream{5, 99});
  REQUIRE(rep.misclassified == std::vector<std::size_t>{1, 2});
  CHECK(rep.correct_fraction[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(rep.correct_fraction[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(rep.flagged == std::vector<std::size_t>{1});
  CHECK(rep.histogram[9] == 1);
  CHECK(rep.histogram[0] == 1);

  CHECK_THROWS_AS(patho_scan(ds, predictor_from(A), pm, 1.5, 10),
                  std::invalid_argument);
  CHECK_THROWS_AS(patho_scan(ds, predictor_from(A), pm, 0.5, 0),
                  std::invalid_argument);
}

TEST_CASE("config validation") {
  const LabeledDataset ds =
      LabeledDataset::probability({{{0.0, 0.0}, 0, 1.0}});
  const PerturbationModel pm = PerturbationModel::uniform_ball(2, 0.1);
  const SoftClassifier u0 = SoftClassifier::linear_sigmoid({0.0, 0.0}, 0.0);

  auto with = [&](auto mutate) {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.probacc_samples = 1;
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(train(ds, u0, pm, with([](TrainConfig& c) { c.p = 0.0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(train(ds, u0, pm, with([](TrainConfig& c) { c.p = 1.0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(train(ds, u0, pm, with([](TrainConfig& c) { c.draws = 0; })),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      train(ds, u0, pm, with([](TrainConfig& c) { c.momentum = 1.0; })),
      std::invalid_argument);
  CHECK_THROWS_AS(train(ds, u0, pm, with([](TrainConfig& c) {
                    c.probacc_levels = {0.0};
                  })),
                  std::invalid_argument);

  // dimension mismatch between data and model
  const SoftClassifier u1 = SoftClassifier::linear_sigmoid({1.0}, 0.0);
  CHECK_THROWS_AS(train(ds, u1, pm, with([](TrainConfig&) {})),
                  std::invalid_argument);
}
