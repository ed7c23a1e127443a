#pragma once

// The risk and perimeter functionals. Throughout, rho_0 and rho_1 are the
// label-conditional parts of the data measure (label 0 drawn toward the
// decision region A, label 1 away from it), and m_x is the perturbation
// law at x.
//
// Hard classifiers A:
//   Risk_std(A)      = rho_0(A) + rho_1(A^c)
//   Risk_adv(A)      = rho_0{x : B_eps(x) hits A} + rho_1{x : B_eps(x) hits A^c}
//   Risk_Psi(A)      = int Psi(m_x(A)) drho_0 + int Psi(m_x(A^c)) drho_1
//   ProbPer_Psi(A)   = int_{A^c} Psi(m_x(A)) drho_0 + int_A Psi(m_x(A^c)) drho_1
//   ProbRisk_Psi(A)  = Risk_std(A) + ProbPer_Psi(A)
// ProbRisk also has a per-point max form and, for the ramp Psi, a CVaR
// form; both are implemented independently and must agree with the sum.
//
// Soft classifiers u with values in [0, 1]:
//   SRisk_std(u)     = int |u - y| drho
//   SRisk_Psi(u)     = int Psi(E u) drho_0 + int Psi(E (1-u)) drho_1
//   ProbJ_Psi(u)     = int (1-u) Psi(E u) drho_0 + int u Psi(E (1-u)) drho_1
//   ProbTV_Psi(u)    = int_0^1 ProbPer_Psi({u >= t}) dt
//   ProbSRisk_Psi(u) = SRisk_std(u) + ProbJ_Psi(u)
// ProbTV is evaluated by the exact layer-cake sum when u takes finitely
// many values and by a midpoint quadrature otherwise.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prl/dataset.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/var_cvar.hpp"
#include "prl/vec.hpp"

namespace prl {

struct RiskReport {
  double value = 0.0;
  double std_part = 0.0;  // plain misclassification component
  double per_part = 0.0;  // perimeter / smoothing component
  EstimatorKind estimator = EstimatorKind::Analytic;
  double stderr_est = 0.0;
  // Set when an adversarial query relied on a sampled supremum that found
  // nothing: the reported value is then a certified lower bound only.
  bool sup_lower_bound = false;

  nlohmann::json to_json() const {
    nlohmann::json j{
        {"value", value},
        {"std_part", std_part},
        {"per_part", per_part},
        {"estimator",
         estimator == EstimatorKind::Analytic ? "analytic" : "monte_carlo"},
        {"stderr", stderr_est}};
    if (sup_lower_bound) j["lower_bound"] = true;
    return j;
  }
};

namespace detail {

inline void check_hard(const LabeledDataset& ds, const PerturbationModel& pm,
                       const HardSet& A) {
  if (ds.dim() != pm.dim() || ds.dim() != A.dim())
    throw std::invalid_argument("functional: dimension mismatch");
}

inline void check_soft(const LabeledDataset& ds, const PerturbationModel& pm,
                       const SoftClassifier& u) {
  if (ds.dim() != pm.dim() || ds.dim() != u.dim())
    throw std::invalid_argument("functional: dimension mismatch");
}

// Delta-method slope of Psi at m, used to push a Monte Carlo standard
// error on the mass through the penalty. Flat regions give 0; a jump
// inside the +-delta window gives a deliberately large slope, flagging
// that the value is unstable there.
inline double local_slope(const PsiSpec& psi, double m, double delta) {
  delta = std::max(delta, 1e-9);
  const double lo = std::clamp(m - delta, 0.0, 1.0);
  const double hi = std::clamp(m + delta, 0.0, 1.0);
  if (hi <= lo) return 0.0;
  return std::abs(psi.eval(hi) - psi.eval(lo)) / (hi - lo);
}

struct Accum {
  std::vector<double> terms;
  double se2 = 0.0;
  EstimatorKind kind = EstimatorKind::Analytic;

  void add(double term, double se, EstimatorKind k) {
    terms.push_back(term);
    se2 += se * se;
    if (k == EstimatorKind::MonteCarlo) kind = EstimatorKind::MonteCarlo;
  }
  double total() const { return pairwise_sum(terms); }
  double se() const { return std::sqrt(se2); }
};

}  // namespace detail

/// rho-mass where the hard decision differs from the label. Exact.
inline RiskReport risk_std(const LabeledDataset& ds, const HardSet& A) {
  if (ds.dim() != A.dim())
    throw std::invalid_argument("risk_std: dimension mismatch");
  std::vector<double> terms;
  for (const auto& pt : ds) {
    const bool in = A.member(pt.x);
    if (in != (pt.y == 1)) terms.push_back(pt.w);
  }
  RiskReport r;
  r.value = r.std_part = pairwise_sum(terms);
  return r;
}

/// E |u(x) - y|. Exact.
inline RiskReport risk_std_soft(const LabeledDataset& ds,
                                const SoftClassifier& u) {
  if (ds.dim() != u.dim())
    throw std::invalid_argument("risk_std_soft: dimension mismatch");
  std::vector<double> terms(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    terms[i] = ds[i].w * std::abs(u.eval(ds[i].x) - static_cast<double>(ds[i].y));
  RiskReport r;
  r.value = r.std_part = pairwise_sum(terms);
  return r;
}

/// Worst-case risk over the fattening ball: a point counts as wrong if any
/// admissible perturbation lands on the wrong side. The radius defaults to
/// the support radius of the perturbation model; pass `radius` explicitly
/// when the admissible ball is wider than the model's support.
inline RiskReport risk_adv(const LabeledDataset& ds,
                           const PerturbationModel& pm, const HardSet& A,
                           const EstimatorConfig& cfg = {},
                           double radius = 0.0) {
  detail::check_hard(ds, pm, A);
  cfg.validate();
  const double eps = radius > 0.0 ? radius : pm.support_radius();
  std::vector<double> adv_terms, std_terms;
  bool lower_bound = false;
  for (const auto& pt : ds) {
    const bool wrong_now = A.member(pt.x) != (pt.y == 1);
    if (wrong_now) std_terms.push_back(pt.w);
    const BallHit h =
        ball_intersects(A, pt.x, eps, /*complement_side=*/pt.y == 1,
                        cfg.mc_samples, RngStream{cfg.seed, hash_point(pt.x)});
    if (h.hit)
      adv_terms.push_back(pt.w);
    else if (!h.exact)
      lower_bound = true;
  }
  RiskReport r;
  r.value = pairwise_sum(adv_terms);
  r.std_part = pairwise_sum(std_terms);
  r.per_part = r.value - r.std_part;
  r.sup_lower_bound = lower_bound;
  return r;
}

/// int Psi(m_x(A)) drho_0 + int Psi(m_x(A^c)) drho_1. With the indicator
/// penalty this is the probabilistic risk in its original form.
inline RiskReport risk_psi(const LabeledDataset& ds,
                           const PerturbationModel& pm, const HardSet& A,
                           const PsiSpec& psi, const EstimatorConfig& cfg = {}) {
  detail::check_hard(ds, pm, A);
  const HardSet comp = HardSet::complement(A);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const Estimate m = prob_mass_diag(pm, pt.x, pt.y == 0 ? A : comp, cfg);
    acc.add(pt.w * psi.eval(m.value),
            pt.w * detail::local_slope(psi, m.value, m.se) * m.se, m.kind);
  }
  RiskReport r;
  r.value = r.per_part = acc.total();
  r.estimator = acc.kind;
  r.stderr_est = acc.se();
  return r;
}

/// The probabilistic perimeter: only points currently on the correct side
/// contribute, each through the mass its perturbation sends across.
inline RiskReport probper_psi(const LabeledDataset& ds,
                              const PerturbationModel& pm, const HardSet& A,
                              const PsiSpec& psi,
                              const EstimatorConfig& cfg = {}) {
  detail::check_hard(ds, pm, A);
  const HardSet comp = HardSet::complement(A);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const bool in = A.member(pt.x);
    if (pt.y == 0 && !in) {
      const Estimate m = prob_mass_diag(pm, pt.x, A, cfg);
      acc.add(pt.w * psi.eval(m.value),
              pt.w * detail::local_slope(psi, m.value, m.se) * m.se, m.kind);
    } else if (pt.y == 1 && in) {
      const Estimate m = prob_mass_diag(pm, pt.x, comp, cfg);
      acc.add(pt.w * psi.eval(m.value),
              pt.w * detail::local_slope(psi, m.value, m.se) * m.se, m.kind);
    }
  }
  RiskReport r;
  r.value = r.per_part = acc.total();
  r.estimator = acc.kind;
  r.stderr_est = acc.se();
  return r;
}

/// Risk_std + ProbPer_Psi, the modified probabilistic risk.
inline RiskReport probrisk_psi(const LabeledDataset& ds,
                               const PerturbationModel& pm, const HardSet& A,
                               const PsiSpec& psi,
                               const EstimatorConfig& cfg = {}) {
  const RiskReport s = risk_std(ds, A);
  const RiskReport p = probper_psi(ds, pm, A, psi, cfg);
  RiskReport r;
  r.std_part = s.value;
  r.per_part = p.value;
  r.value = s.value + p.value;
  r.estimator = p.estimator;
  r.stderr_est = p.stderr_est;
  return r;
}

/// Per-point max form: int max{|1_A - y|, Psi(wrong-side mass)} drho.
/// Coincides with probrisk_psi whenever Psi <= 1 on [0, 1].
inline Estimate probrisk_psi_max_form(const LabeledDataset& ds,
                                      const PerturbationModel& pm,
                                      const HardSet& A, const PsiSpec& psi,
                                      const EstimatorConfig& cfg = {}) {
  detail::check_hard(ds, pm, A);
  const HardSet comp = HardSet::complement(A);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const bool in = A.member(pt.x);
    const double loss = (in != (pt.y == 1)) ? 1.0 : 0.0;
    const Estimate m = prob_mass_diag(pm, pt.x, pt.y == 0 ? A : comp, cfg);
    const double val = psi.eval(m.value);
    const double se =
        val > loss ? detail::local_slope(psi, m.value, m.se) * m.se : 0.0;
    acc.add(pt.w * std::max(loss, val), pt.w * se, m.kind);
  }
  return {acc.total(), acc.kind, acc.se()};
}

/// CVaR form of the modified risk at ramp level p: per point, the larger
/// of the clean loss and CVaR_p of the perturbed 0/1 loss. Routed through
/// the generic CVaR operator; must agree with probrisk_psi(cvar_ramp:p).
inline Estimate probrisk_cvar_form(const LabeledDataset& ds,
                                   const PerturbationModel& pm,
                                   const HardSet& A, double p,
                                   const EstimatorConfig& cfg = {}) {
  detail::check_hard(ds, pm, A);
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("probrisk_cvar_form: p must lie in (0, 1)");
  const HardSet comp = HardSet::complement(A);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const bool in = A.member(pt.x);
    const double loss = (in != (pt.y == 1)) ? 1.0 : 0.0;
    const HardSet& wrong = pt.y == 0 ? A : comp;
    double c;
    Estimate m{0.0, EstimatorKind::Analytic, 0.0};
    if (const auto* cl = pm.cloud()) {
      // Finite perturbed-loss distribution, fed whole to the operator.
      std::vector<WeightedValue> dist(cl->offsets.size());
      Vec z(pt.x.size());
      for (std::size_t k = 0; k < cl->offsets.size(); ++k) {
        for (std::size_t i = 0; i < z.size(); ++i)
          z[i] = pt.x[i] + cl->offsets[k][i];
        dist[k] = {wrong.member(z) ? 1.0 : 0.0, cl->weights[k]};
      }
      c = cvar(dist, p);
    } else {
      m = prob_mass_diag(pm, pt.x, wrong, cfg);
      std::vector<WeightedValue> dist;
      if (m.value < 1.0) dist.push_back({0.0, 1.0 - m.value});
      if (m.value > 0.0) dist.push_back({1.0, m.value});
      c = cvar(dist, p);
    }
    const double se = c > loss && c < 1.0 ? m.se / p : 0.0;
    acc.add(pt.w * std::max(loss, c), pt.w * se, m.kind);
  }
  return {acc.total(), acc.kind, acc.se()};
}

/// Soft smoothed risk: int Psi(E u) drho_0 + int Psi(E (1-u)) drho_1.
inline RiskReport srisk_psi(const LabeledDataset& ds,
                            const PerturbationModel& pm,
                            const SoftClassifier& u, const PsiSpec& psi,
                            const EstimatorConfig& cfg = {}) {
  detail::check_soft(ds, pm, u);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const Estimate e = expect_u_diag(pm, pt.x, u, cfg);
    const double m = pt.y == 0 ? e.value : 1.0 - e.value;
    acc.add(pt.w * psi.eval(m),
            pt.w * detail::local_slope(psi, m, e.se) * e.se, e.kind);
  }
  RiskReport r;
  r.value = r.per_part = acc.total();
  r.estimator = acc.kind;
  r.stderr_est = acc.se();
  return r;
}

/// Soft jump penalty: the confidence kept on the correct side gates how
/// much the crossing mass costs. Reduces to ProbPer_Psi at u = 1_A.
inline RiskReport probj_psi(const LabeledDataset& ds,
                            const PerturbationModel& pm,
                            const SoftClassifier& u, const PsiSpec& psi,
                            const EstimatorConfig& cfg = {}) {
  detail::check_soft(ds, pm, u);
  detail::Accum acc;
  for (const auto& pt : ds) {
    const double ux = u.eval(pt.x);
    const double gate = pt.y == 0 ? 1.0 - ux : ux;
    if (gate == 0.0) continue;
    const Estimate e = expect_u_diag(pm, pt.x, u, cfg);
    const double m = pt.y == 0 ? e.value : 1.0 - e.value;
    acc.add(pt.w * gate * psi.eval(m),
            pt.w * gate * detail::local_slope(psi, m, e.se) * e.se, e.kind);
  }
  RiskReport r;
  r.value = r.per_part = acc.total();
  r.estimator = acc.kind;
  r.stderr_est = acc.se();
  return r;
}

/// SRisk_std + ProbJ_Psi, the soft modified risk.
inline RiskReport prob_srisk_psi(const LabeledDataset& ds,
                                 const PerturbationModel& pm,
                                 const SoftClassifier& u, const PsiSpec& psi,
                                 const EstimatorConfig& cfg = {}) {
  const RiskReport s = risk_std_soft(ds, u);
  const RiskReport j = probj_psi(ds, pm, u, psi, cfg);
  RiskReport r;
  r.std_part = s.value;
  r.per_part = j.value;
  r.value = s.value + j.value;
  r.estimator = j.estimator;
  r.stderr_est = j.stderr_est;
  return r;
}

namespace detail {

// ProbPer_Psi of the superlevel set {u >= t} without materializing it as a
// HardSet. Needed for classifiers whose superlevels have no exact set
// representation; masses are exact under discrete clouds and Monte Carlo
// otherwise, with draws shared across levels.
inline RiskReport probper_superlevel(const LabeledDataset& ds,
                                     const PerturbationModel& pm,
                                     const SoftClassifier& u, double t,
                                     const PsiSpec& psi,
                                     const EstimatorConfig& cfg) {
  detail::Accum acc;
  Vec z(static_cast<std::size_t>(ds.dim()));
  for (const auto& pt : ds) {
    const bool in = u.eval(pt.x) >= t;
    const bool contributes = (pt.y == 0 && !in) || (pt.y == 1 && in);
    if (!contributes) continue;
    // Mass of the wrong side: {u >= t} for label 0, its complement for 1.
    double mass;
    double se = 0.0;
    EstimatorKind kind = EstimatorKind::Analytic;
    if (const auto* cl = pm.cloud()) {
      std::vector<double> hit;
      for (std::size_t k = 0; k < cl->offsets.size(); ++k) {
        for (std::size_t i = 0; i < z.size(); ++i)
          z[i] = pt.x[i] + cl->offsets[k][i];
        const bool zin = u.eval(z) >= t;
        if (zin != in) hit.push_back(cl->weights[k]);
      }
      mass = pairwise_sum(hit);
    } else {
      RngStream rs{cfg.seed, substream(hash_point(pt.x), 0x5Eu)};
      long hits = 0;
      for (int k = 0; k < cfg.mc_samples; ++k) {
        CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
        z = pm.sample_one(pt.x, rng);
        if ((u.eval(z) >= t) != in) ++hits;
      }
      const double n = static_cast<double>(cfg.mc_samples);
      mass = static_cast<double>(hits) / n;
      se = std::sqrt(mass * (1.0 - mass) / n);
      kind = EstimatorKind::MonteCarlo;
    }
    acc.add(pt.w * psi.eval(mass),
            pt.w * detail::local_slope(psi, mass, se) * se, kind);
  }
  RiskReport r;
  r.value = r.per_part = acc.total();
  r.estimator = acc.kind;
  r.stderr_est = acc.se();
  return r;
}

}  // namespace detail

/// Layer-cake total variation: int_0^1 ProbPer_Psi({u >= t}) dt. Exact
/// closed sum when u takes finitely many values; otherwise a midpoint rule
/// with cfg.tv_levels levels.
inline RiskReport probtv_psi(const LabeledDataset& ds,
                             const PerturbationModel& pm,
                             const SoftClassifier& u, const PsiSpec& psi,
                             const EstimatorConfig& cfg = {}) {
  detail::check_soft(ds, pm, u);
  cfg.validate();
  RiskReport r;

  if (auto vals = u.finite_values()) {
    // {u >= t} is constant on each (v_{j-1}, v_j]; above the top value the
    // superlevel is empty and contributes Psi(0) on the label-0 mass.
    std::sort(vals->begin(), vals->end());
    vals->erase(std::unique(vals->begin(), vals->end()), vals->end());
    std::vector<double> terms;
    double se2 = 0.0;
    EstimatorKind kind = EstimatorKind::Analytic;
    double prev = 0.0;
    for (const double v : *vals) {
      if (v <= prev) continue;
      const RiskReport pp = probper_psi(ds, pm, u.threshold(v), psi, cfg);
      terms.push_back((v - prev) * pp.value);
      se2 += (v - prev) * (v - prev) * pp.stderr_est * pp.stderr_est;
      if (pp.estimator == EstimatorKind::MonteCarlo)
        kind = EstimatorKind::MonteCarlo;
      prev = v;
    }
    if (prev < 1.0)
      terms.push_back((1.0 - prev) * psi.at_zero() * ds.label_weight(0));
    r.value = r.per_part = pairwise_sum(terms);
    r.estimator = kind;
    r.stderr_est = std::sqrt(se2);
    return r;
  }

  const int L = cfg.tv_levels;
  const bool exact_threshold = u.kind() != SoftClassifier::Kind::Mlp1;
  std::vector<double> terms(static_cast<std::size_t>(L));
  double se2 = 0.0;
  EstimatorKind kind = EstimatorKind::Analytic;
  for (int j = 0; j < L; ++j) {
    const double t = (j + 0.5) / static_cast<double>(L);
    const RiskReport pp =
        exact_threshold
            ? probper_psi(ds, pm, u.threshold(t), psi, cfg)
            : detail::probper_superlevel(ds, pm, u, t, psi, cfg);
    terms[static_cast<std::size_t>(j)] = pp.value / static_cast<double>(L);
    se2 += pp.stderr_est * pp.stderr_est / (static_cast<double>(L) * L);
    if (pp.estimator == EstimatorKind::MonteCarlo)
      kind = EstimatorKind::MonteCarlo;
  }
  r.value = r.per_part = pairwise_sum(terms);
  r.estimator = kind;
  r.stderr_est = std::sqrt(se2);
  return r;
}

}  // namespace prl
