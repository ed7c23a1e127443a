#pragma once

// Stochastic training against the CVaR of the perturbed loss. For each
// sample, M perturbations are drawn, a few subgradient steps on the shift
// variable alpha approximate the inner CVaR minimization, and the model
// gradient averages the per-draw loss gradients over the draws whose loss
// exceeds alpha. The modified variant keeps the plain loss at the sample
// itself as a floor: a sample already classified worse than its CVaR
// trains on the clean gradient instead.
//
// All randomness is counter-based: draw k for sample j in epoch e comes
// from substream chain (seed -> epoch -> sample -> draw), so runs are
// reproducible under any batching and shuffling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prl/dataset.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/vec.hpp"

namespace prl {

using Predictor = std::function<int(const Vec&)>;

inline Predictor predictor_from(const HardSet& A) {
  return [A](const Vec& x) { return A.member(x) ? 1 : 0; };
}

inline Predictor predictor_from(const SoftClassifier& u) {
  return [u](const Vec& x) { return u.eval(x) >= 0.5 ? 1 : 0; };
}

enum class LossKind { Bce, Abs };
enum class TrainVariant { Original, Modified };
enum class OptimizerKind { Sgd, Momentum };

struct TrainConfig {
  double p = 0.1;          // CVaR tail level
  int draws = 20;          // M: perturbations per sample
  int alpha_steps = 5;     // T: inner subgradient steps on alpha
  double eta_alpha = 1.0;  // inner step size; also caps |g_alpha| at 1/eta_alpha
  double eta = 0.1;        // model step size
  int batch = 16;
  int epochs = 50;
  OptimizerKind optimizer = OptimizerKind::Momentum;
  double momentum = 0.9;
  TrainVariant variant = TrainVariant::Modified;
  LossKind loss = LossKind::Bce;
  std::vector<double> probacc_levels{0.1, 0.05, 0.01};
  int probacc_samples = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("train: p must lie in (0, 1)");
    if (draws < 1 || alpha_steps < 0 || batch < 1 || epochs < 1 ||
        probacc_samples < 1)
      throw std::invalid_argument("train: counts must be positive");
    if (!(eta_alpha > 0.0) || !(eta > 0.0))
      throw std::invalid_argument("train: step sizes must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("train: momentum must lie in [0, 1)");
    for (double lv : probacc_levels)
      if (!(lv > 0.0 && lv <= 1.0))
        throw std::invalid_argument("train: probacc levels must lie in (0, 1]");
  }
};

struct EpochStats {
  int epoch = 0;
  double objective = 0.0;        // weighted mean of the per-sample objective
  double clean_acc = 0.0;        // hard accuracy at the data points
  std::vector<double> prob_acc;  // aligned with TrainConfig::probacc_levels
  double adv_surrogate = 0.0;    // point and all eval draws correct
  long cvar_branch = 0;
  long std_branch = 0;
  long alpha_cap_hits = 0;
};

struct TrainResult {
  SoftClassifier model;
  std::vector<EpochStats> epochs;
};

namespace detail {

inline double loss_value(LossKind kind, double u, int y) {
  if (kind == LossKind::Abs) return std::abs(u - static_cast<double>(y));
  constexpr double kFloor = 1e-7;
  const double v = std::clamp(u, kFloor, 1.0 - kFloor);
  return y == 1 ? -std::log(v) : -std::log(1.0 - v);
}

inline double loss_du(LossKind kind, double u, int y) {
  if (kind == LossKind::Abs) {
    const double d = u - static_cast<double>(y);
    return d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0;
  }
  constexpr double kFloor = 1e-7;
  const double v = std::clamp(u, kFloor, 1.0 - kFloor);
  return y == 1 ? -1.0 / v : 1.0 / (1.0 - v);
}

}  // namespace detail

struct InnerAlphaResult {
  double alpha = 0.0;
  long cap_hits = 0;
};

/// T subgradient steps on zeta(a) = a + mean((l_k - a)_+) / p from a fresh
/// start at the mean loss. The raw subgradient 1 - #{l_k >= a} / (p M) can
/// reach 1 - 1/p, so it is capped at magnitude 1 / eta_alpha (one unit of
/// movement per step); hits are counted for diagnostics.
inline InnerAlphaResult cvar_inner_alpha(const std::vector<double>& losses,
                                         double p, int steps,
                                         double eta_alpha, double alpha0) {
  InnerAlphaResult r;
  r.alpha = alpha0;
  const double m = static_cast<double>(losses.size());
  for (int t = 0; t < steps; ++t) {
    long exceed = 0;
    for (const double l : losses)
      if (l >= r.alpha) ++exceed;
    double g = 1.0 - static_cast<double>(exceed) / (p * m);
    const double cap = 1.0 / eta_alpha;
    if (g > cap) {
      g = cap;
      ++r.cap_hits;
    } else if (g < -cap) {
      g = -cap;
      ++r.cap_hits;
    }
    r.alpha -= eta_alpha * g;
  }
  return r;
}

/// Exact minimizer of the same objective, for validating the inner loop.
inline double cvar_scan_alpha(std::vector<double> losses, double p) {
  std::sort(losses.begin(), losses.end());
  const double m = static_cast<double>(losses.size());
  double best_val = 0.0, best_alpha = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double a = losses[i];
    double acc = 0.0;
    for (const double l : losses)
      if (l > a) acc += l - a;
    const double val = a + acc / (p * m);
    if (first || val <= best_val) {
      best_val = val;
      best_alpha = a;
      first = false;
    }
  }
  return best_alpha;
}

namespace detail {

struct SampleOutcome {
  double objective = 0.0;
  bool cvar_branch = true;
  long cap_hits = 0;
};

// One sample's objective and model gradient. `grad` is accumulated into.
inline SampleOutcome prl_sample_grad(const SoftClassifier& u,
                                     const PerturbationModel& pm,
                                     const Vec& x, int y,
                                     const TrainConfig& cfg, RngStream rs,
                                     Vec* grad) {
  const int M = cfg.draws;
  std::vector<Vec> draws(static_cast<std::size_t>(M));
  std::vector<double> losses(static_cast<std::size_t>(M));
  for (int k = 0; k < M; ++k) {
    CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
    draws[static_cast<std::size_t>(k)] = pm.sample_one(x, rng);
    losses[static_cast<std::size_t>(k)] =
        loss_value(cfg.loss, u.eval(draws[static_cast<std::size_t>(k)]), y);
  }
  const double mean_loss = pairwise_sum(losses) / static_cast<double>(M);
  const InnerAlphaResult inner =
      cvar_inner_alpha(losses, cfg.p, cfg.alpha_steps, cfg.eta_alpha, mean_loss);

  double excess = 0.0;
  for (const double l : losses) excess += std::max(l - inner.alpha, 0.0);
  const double s = inner.alpha + excess / (cfg.p * static_cast<double>(M));

  const double clean_loss = loss_value(cfg.loss, u.eval(x), y);

  SampleOutcome out;
  out.cap_hits = inner.cap_hits;
  out.cvar_branch =
      cfg.variant == TrainVariant::Original || s > clean_loss;
  out.objective = cfg.variant == TrainVariant::Original
                      ? s
                      : std::max(clean_loss, s);

  if (!grad) return out;
  Vec g(u.params().size());
  if (out.cvar_branch) {
    const double scale = 1.0 / (cfg.p * static_cast<double>(M));
    for (int k = 0; k < M; ++k) {
      if (losses[static_cast<std::size_t>(k)] <= inner.alpha) continue;
      const double uv = u.eval_grad(draws[static_cast<std::size_t>(k)], &g);
      const double dl = loss_du(cfg.loss, uv, y) * scale;
      for (std::size_t a = 0; a < g.size(); ++a) (*grad)[a] += dl * g[a];
    }
  } else {
    const double uv = u.eval_grad(x, &g);
    const double dl = loss_du(cfg.loss, uv, y);
    for (std::size_t a = 0; a < g.size(); ++a) (*grad)[a] += dl * g[a];
  }
  return out;
}

// Per-point fraction of perturbation draws classified correctly.
inline std::vector<double> correct_fraction(const LabeledDataset& ds,
                                            const Predictor& predict,
                                            const PerturbationModel& pm,
                                            int samples, RngStream rs) {
  std::vector<double> frac(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    RngStream point = rs.sub(static_cast<std::uint64_t>(i));
    long good = 0;
    for (int k = 0; k < samples; ++k) {
      CounterRng rng = point.sub(static_cast<std::uint64_t>(k)).rng();
      const Vec z = pm.sample_one(ds[i].x, rng);
      if (predict(z) == ds[i].y) ++good;
    }
    frac[i] = static_cast<double>(good) / static_cast<double>(samples);
  }
  return frac;
}

}  // namespace detail

/// Weighted share of points whose empirical misclassification proportion
/// over `samples` perturbation draws is strictly below each level.
inline std::vector<double> prob_acc(const LabeledDataset& ds,
                                    const Predictor& predict,
                                    const PerturbationModel& pm,
                                    const std::vector<double>& levels,
                                    int samples, RngStream rs = {}) {
  if (samples < 1) throw std::invalid_argument("prob_acc: samples must be >= 1");
  const auto frac = detail::correct_fraction(ds, predict, pm, samples, rs);
  const double total = ds.total_weight();
  std::vector<double> out;
  out.reserve(levels.size());
  for (const double p : levels) {
    std::vector<double> acc;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (1.0 - frac[i] < p) acc.push_back(ds[i].w);
    out.push_back(pairwise_sum(acc) / total);
  }
  return out;
}

struct PathoReport {
  // Parallel arrays over the misclassified points.
  std::vector<std::size_t> misclassified;
  std::vector<double> correct_fraction;
  // Misclassified points whose perturbations are nonetheless correct with
  // frequency >= q: the pathology the probabilistic risks are built to see.
  std::vector<std::size_t> flagged;
  std::array<long, 10> histogram{};  // of correct_fraction, bins [k/10,(k+1)/10)
};

/// Hunt for points the classifier gets wrong while almost every
/// perturbation of them comes out right.
inline PathoReport patho_scan(const LabeledDataset& ds,
                              const Predictor& predict,
                              const PerturbationModel& pm, double q,
                              int samples, RngStream rs = {}) {
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("patho_scan: q must lie in [0, 1]");
  if (samples < 1)
    throw std::invalid_argument("patho_scan: samples must be >= 1");
  const auto frac = detail::correct_fraction(ds, predict, pm, samples, rs);
  PathoReport rep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (predict(ds[i].x) == ds[i].y) continue;
    rep.misclassified.push_back(i);
    rep.correct_fraction.push_back(frac[i]);
    const int bin = std::min(9, static_cast<int>(frac[i] * 10.0));
    ++rep.histogram[static_cast<std::size_t>(bin)];
    if (frac[i] >= q) rep.flagged.push_back(i);
  }
  return rep;
}

/// CVaR-SGD. Throws std::runtime_error if the evaluation objective sits
/// above ten times its first-epoch value for three consecutive epochs.
inline TrainResult train(const LabeledDataset& ds, const SoftClassifier& u0,
                         const PerturbationModel& pm, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.dim() != u0.dim() || ds.dim() != pm.dim())
    throw std::invalid_argument("train: dimension mismatch");
  const std::size_t n = ds.size();
  SoftClassifier u = u0;
  Vec theta = u0.params();
  Vec velocity(theta.size(), 0.0);

  const RngStream train_rs{cfg.seed, 0x747261696Eull};
  const RngStream shuffle_rs{cfg.seed, 0x73687566ull};
  const RngStream eval_rs{cfg.seed, 0x6576616Cull};

  TrainResult result{u, {}};
  double first_objective = 0.0;
  int high_streak = 0;

  for (int e = 0; e < cfg.epochs; ++e) {
    // Deterministic shuffle.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng shuf = shuffle_rs.sub(static_cast<std::uint64_t>(e)).rng();
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuf.uniform() * static_cast<double>(i)) %
          i;
      std::swap(order[i - 1], order[j]);
    }

    EpochStats st;
    st.epoch = e;
    const RngStream epoch_rs = train_rs.sub(static_cast<std::uint64_t>(e));

    Vec grad(theta.size());
    for (std::size_t pos = 0; pos < n;) {
      const std::size_t stop = std::min(n, pos + static_cast<std::size_t>(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = pos; b < stop; ++b) {
        const std::size_t j = order[b];
        const auto out = detail::prl_sample_grad(
            u, pm, ds[j].x, ds[j].y, cfg,
            epoch_rs.sub(static_cast<std::uint64_t>(j)), &grad);
        (out.cvar_branch ? st.cvar_branch : st.std_branch) += 1;
        st.alpha_cap_hits += out.cap_hits;
      }
      const double inv = 1.0 / static_cast<double>(stop - pos);
      if (cfg.optimizer == OptimizerKind::Momentum) {
        for (std::size_t a = 0; a < theta.size(); ++a) {
          velocity[a] = cfg.momentum * velocity[a] + grad[a] * inv;
          theta[a] -= cfg.eta * velocity[a];
        }
      } else {
        for (std::size_t a = 0; a < theta.size(); ++a)
          theta[a] -= cfg.eta * grad[a] * inv;
      }
      u = u.with_params(theta);
      pos = stop;
    }

    // Evaluation pass on draws shared by every epoch, so the reported
    // curve moves only when the model does.
    const RngStream ers = eval_rs;
    std::vector<double> obj_terms(n), clean_terms, adv_terms;
    for (std::size_t j = 0; j < n; ++j) {
      const auto out = detail::prl_sample_grad(
          u, pm, ds[j].x, ds[j].y, cfg, ers.sub(static_cast<std::uint64_t>(j)),
          nullptr);
      obj_terms[j] = ds[j].w * out.objective;
    }
    st.objective = pairwise_sum(obj_terms) / ds.total_weight();

    const Predictor hard = predictor_from(u);
    const auto frac = detail::correct_fraction(
        ds, hard, pm, cfg.probacc_samples, ers.sub(0xACCull));
    for (std::size_t j = 0; j < n; ++j) {
      const bool clean = hard(ds[j].x) == ds[j].y;
      if (clean) clean_terms.push_back(ds[j].w);
      if (clean && frac[j] == 1.0) adv_terms.push_back(ds[j].w);
    }
    st.clean_acc = pairwise_sum(clean_terms) / ds.total_weight();
    st.adv_surrogate = pairwise_sum(adv_terms) / ds.total_weight();
    for (const double lv : cfg.probacc_levels) {
      std::vector<double> acc;
      for (std::size_t j = 0; j < n; ++j)
        if (1.0 - frac[j] < lv) acc.push_back(ds[j].w);
      st.prob_acc.push_back(pairwise_sum(acc) / ds.total_weight());
    }

    if (e == 0) first_objective = st.objective;
    high_streak = st.objective > 10.0 * first_objective + 1e-9
                      ? high_streak + 1
                      : 0;
    result.epochs.push_back(std::move(st));
    if (high_streak >= 3)
      throw std::runtime_error(
          "train: objective diverged (over 10x the first epoch for 3 epochs)");
  }

  result.model = u;
  return result;
}

}  // namespace prl
