#pragma once

// Randomized self-checks for the structural identities the library is
// supposed to satisfy: complement duality of perturbation masses, the
// risk ordering chain, submodularity of the probabilistic perimeter,
// the coarea link between the soft and hard functionals, the CVaR form
// of the modified risk, and serialization round trips. Every check runs
// on freshly generated discrete instances where both sides of each
// identity are computed exactly, so failures indicate real defects
// rather than estimator noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "prl/dataset.hpp"
#include "prl/functionals.hpp"
#include "prl/grid.hpp"
#include "prl/grid_search.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/sigma_limit.hpp"
#include "prl/softclassifier.hpp"
#include "prl/var_cvar.hpp"
#include "prl/vec.hpp"

namespace prl {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // short diagnostic, empty when passed
};

namespace detail {

struct PropCtx {
  RngStream rs;
  int rounds = 0;

  CounterRng rng(std::uint64_t tag) { return rs.sub(tag).rng(); }
};

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

// Cloud whose offsets stay strictly inside the ball of radius eps, so an
// open-ball fattening of that radius dominates every cloud mass exactly.
inline PerturbationModel random_cloud(CounterRng& rng, double eps,
                                      std::size_t n_atoms) {
  std::vector<Vec> offs;
  std::vector<double> w;
  offs.reserve(n_atoms);
  w.reserve(n_atoms);
  for (std::size_t k = 0; k < n_atoms; ++k) {
    offs.push_back(rng.uniform_in_ball(2, 0.95 * eps));
    w.push_back(0.2 + rng.uniform());
  }
  double tot = 0.0;
  for (double v : w) tot += v;
  for (double& v : w) v /= tot;
  return PerturbationModel::discrete_cloud(2, offs, w);
}

inline LabeledDataset random_dataset(CounterRng& rng, std::size_t n,
                                     double lo, double hi) {
  std::vector<LabeledPoint> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec x{lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform()};
    pts.push_back({x, rng.uniform() < 0.5 ? 0 : 1, 1.0 / double(n)});
  }
  return LabeledDataset::probability(pts);
}

inline HardSet random_mask(CounterRng& rng, const GridSpec& g) {
  std::vector<std::uint8_t> bits(g.cell_count());
  for (auto& b : bits) b = rng.uniform() < 0.5 ? 1 : 0;
  return HardSet::grid_mask({g, std::move(bits)});
}

inline void record(std::vector<CheckResult>& out, const std::string& name,
                   bool ok, const std::string& detail) {
  out.push_back({name, ok, ok ? std::string{} : detail});
}

}  // namespace detail

/// Runs the full property suite. `rounds` controls how many random
/// instances each check draws; the defaults keep the suite under a few
/// seconds while still exercising the branchy paths.
inline std::vector<CheckResult> run_property_suite(std::uint64_t seed,
                                                   int rounds = 20) {
  using detail::fmt_num;
  std::vector<CheckResult> out;
  detail::PropCtx ctx{RngStream{seed, 0x70726F70ull}, rounds};
  const GridSpec grid({-1.0, -1.0}, {1.0, 1.0}, {4, 4});
  EstimatorConfig cfg;
  cfg.seed = seed;

  // Perturbation mass of a set and of its complement add to one. Exact on
  // cloud models; on the uniform ball both sides share the analytic path.
  {
    auto rng = ctx.rng(1);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = r % 2 == 0
                                 ? detail::random_cloud(rng, 0.4, 15)
                                 : PerturbationModel::uniform_ball(2, 0.4);
      HardSet A = detail::random_mask(rng, grid);
      Vec x = rng.uniform_in_ball(2, 1.0);
      double m = prob_mass_diag(pm, x, A, cfg).value;
      double mc = prob_mass_diag(pm, x, HardSet::complement(A), cfg).value;
      if (std::abs(m + mc - 1.0) > 1e-12 || m < -1e-15 || m > 1.0 + 1e-15) {
        ok = false;
        why = "m=" + fmt_num(m) + " m_comp=" + fmt_num(mc);
      }
    }
    detail::record(out, "mass_complement_duality", ok, why);
  }

  // Risk ordering: the relaxed risk never exceeds the modified risk, which
  // never exceeds the worst-case risk, when the perturbation support sits
  // strictly inside the fattening ball. Masks keep every probe exact.
  {
    auto rng = ctx.rng(2);
    const PsiSpec psi0 = PsiSpec::esssup_zero();
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      const double eps = 0.3 + 0.2 * rng.uniform();
      PerturbationModel pm = detail::random_cloud(rng, eps, 12);
      LabeledDataset ds = detail::random_dataset(rng, 10, -0.9, 0.9);
      HardSet A = detail::random_mask(rng, grid);
      double relaxed = risk_psi(ds, pm, A, psi0, cfg).value;
      double modified = probrisk_psi(ds, pm, A, psi0, cfg).value;
      double worst = risk_adv(ds, pm, A, cfg, eps).value;
      if (relaxed > modified + 1e-12 || modified > worst + 1e-12) {
        ok = false;
        why = "relaxed=" + fmt_num(relaxed) + " modified=" + fmt_num(modified) +
              " worst=" + fmt_num(worst);
      }
    }
    detail::record(out, "risk_ordering_chain", ok, why);
  }

  // Submodularity of the perimeter term for concave nondecreasing psi with
  // psi(0) = 0: Per(A u B) + Per(A n B) <= Per(A) + Per(B).
  {
    auto rng = ctx.rng(3);
    const PsiSpec psis[] = {PsiSpec::identity(), PsiSpec::cvar_ramp(0.35),
                            PsiSpec::esssup_zero()};
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 14);
      LabeledDataset ds = detail::random_dataset(rng, 8, -0.9, 0.9);
      HardSet A = detail::random_mask(rng, grid);
      HardSet B = detail::random_mask(rng, grid);
      const PsiSpec& psi = psis[r % 3];
      double pa = probper_psi(ds, pm, A, psi, cfg).value;
      double pb = probper_psi(ds, pm, B, psi, cfg).value;
      double pu = probper_psi(ds, pm, HardSet::set_union({A, B}), psi, cfg).value;
      double pi =
          probper_psi(ds, pm, HardSet::set_intersect({A, B}), psi, cfg).value;
      if (pu + pi > pa + pb + 1e-10) {
        ok = false;
        why = "psi=" + psi.name() + " lhs=" + fmt_num(pu + pi) +
              " rhs=" + fmt_num(pa + pb);
      }
    }
    detail::record(out, "perimeter_submodular", ok, why);
  }

  // Coarea bound: the total variation of a soft classifier is at most its
  // one-sided relaxation J when psi is concave (Jensen moves the mean
  // inside psi). Grid functions keep every level set a mask.
  {
    auto rng = ctx.rng(4);
    const PsiSpec psis[] = {PsiSpec::identity(), PsiSpec::cvar_ramp(0.4)};
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 12);
      LabeledDataset ds = detail::random_dataset(rng, 8, -0.9, 0.9);
      Vec vals(grid.cell_count());
      for (double& v : vals) v = rng.uniform();
      SoftClassifier u = SoftClassifier::grid_function(grid, vals);
      const PsiSpec& psi = psis[r % 2];
      double tv = probtv_psi(ds, pm, u, psi, cfg).value;
      double j = probj_psi(ds, pm, u, psi, cfg).value;
      if (tv > j + 1e-10) {
        ok = false;
        why = "psi=" + psi.name() + " tv=" + fmt_num(tv) + " j=" + fmt_num(j);
      }
    }
    detail::record(out, "coarea_tv_le_j", ok, why);
  }

  // The per-sample max form agrees with the additive split whenever psi
  // stays below one, and the CVaR form is the ramp-psi risk.
  {
    auto rng = ctx.rng(5);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 16);
      LabeledDataset ds = detail::random_dataset(rng, 9, -0.9, 0.9);
      HardSet A = detail::random_mask(rng, grid);
      const double p = 0.05 + 0.9 * rng.uniform();
      const PsiSpec ramp = PsiSpec::cvar_ramp(p);
      double additive = probrisk_psi(ds, pm, A, ramp, cfg).value;
      double maxform = probrisk_psi_max_form(ds, pm, A, ramp, cfg).value;
      double cvarform = probrisk_cvar_form(ds, pm, A, p, cfg).value;
      if (std::abs(additive - maxform) > 1e-12 ||
          std::abs(additive - cvarform) > 1e-12) {
        ok = false;
        why = "p=" + fmt_num(p) + " additive=" + fmt_num(additive) +
              " max=" + fmt_num(maxform) + " cvar=" + fmt_num(cvarform);
      }
    }
    detail::record(out, "max_and_cvar_forms_agree", ok, why);
  }

  // Tightening the tail level can only raise the modified risk.
  {
    auto rng = ctx.rng(6);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 14);
      LabeledDataset ds = detail::random_dataset(rng, 8, -0.9, 0.9);
      HardSet A = detail::random_mask(rng, grid);
      double p = 0.05 + 0.4 * rng.uniform();
      double q = p + (0.99 - p) * rng.uniform();
      double rp = probrisk_psi(ds, pm, A, PsiSpec::cvar_ramp(p), cfg).value;
      double rq = probrisk_psi(ds, pm, A, PsiSpec::cvar_ramp(q), cfg).value;
      if (rp + 1e-12 < rq) {
        ok = false;
        why = "p=" + fmt_num(p) + " q=" + fmt_num(q) + " risk_p=" + fmt_num(rp) +
              " risk_q=" + fmt_num(rq);
      }
    }
    detail::record(out, "tail_level_monotone", ok, why);
  }

  // Quantile versus superquantile on random discrete distributions, plus
  // the closed form for indicator losses.
  {
    auto rng = ctx.rng(7);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      std::vector<WeightedValue> dist;
      const int n = 3 + int(rng.uniform() * 8);
      for (int i = 0; i < n; ++i)
        dist.push_back({std::floor(rng.uniform() * 6.0), 0.1 + rng.uniform()});
      const double p = 0.05 + 0.9 * rng.uniform();
      double v = p_esssup(dist, p);
      double c = cvar(dist, p);
      if (v > c + 1e-12) {
        ok = false;
        why = "p=" + fmt_num(p) + " var=" + fmt_num(v) + " cvar=" + fmt_num(c);
        break;
      }
      const double q = rng.uniform();
      double ci = cvar_indicator(q, p);
      double want = std::min(q / p, 1.0);
      if (std::abs(ci - want) > 1e-12) {
        ok = false;
        why = "indicator q=" + fmt_num(q) + " got=" + fmt_num(ci);
      }
    }
    detail::record(out, "var_le_cvar", ok, why);
  }

  // A hard set pushed through the soft functionals as a 0/1 grid function
  // reproduces the hard functionals exactly.
  {
    auto rng = ctx.rng(8);
    const PsiSpec psi = PsiSpec::cvar_ramp(0.3);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 12);
      LabeledDataset ds = detail::random_dataset(rng, 8, -0.9, 0.9);
      std::vector<std::uint8_t> bits(grid.cell_count());
      Vec vals(grid.cell_count());
      for (std::size_t c = 0; c < bits.size(); ++c) {
        bits[c] = rng.uniform() < 0.5 ? 1 : 0;
        vals[c] = bits[c] ? 1.0 : 0.0;
      }
      HardSet A = HardSet::grid_mask({grid, bits});
      SoftClassifier u = SoftClassifier::grid_function(grid, vals);
      double hard_r = probrisk_psi(ds, pm, A, psi, cfg).value;
      double soft_r = prob_srisk_psi(ds, pm, u, psi, cfg).value;
      double hard_p = probper_psi(ds, pm, A, psi, cfg).value;
      double soft_j = probj_psi(ds, pm, u, psi, cfg).value;
      double soft_tv = probtv_psi(ds, pm, u, psi, cfg).value;
      if (std::abs(hard_r - soft_r) > 1e-12 || std::abs(hard_p - soft_j) > 1e-12 ||
          std::abs(hard_p - soft_tv) > 1e-12) {
        ok = false;
        why = "risk " + fmt_num(hard_r) + " vs " + fmt_num(soft_r) + "; per " +
              fmt_num(hard_p) + " vs j " + fmt_num(soft_j) + " tv " +
              fmt_num(soft_tv);
      }
    }
    detail::record(out, "indicator_reduction", ok, why);
  }

  // Exact coarea on finitely valued classifiers agrees with a fine level
  // quadrature run through the generic path.
  {
    auto rng = ctx.rng(9);
    const PsiSpec psi = PsiSpec::identity();
    bool ok = true;
    std::string why;
    for (int r = 0; r < std::min(rounds, 8) && ok; ++r) {
      PerturbationModel pm = detail::random_cloud(rng, 0.5, 10);
      LabeledDataset ds = detail::random_dataset(rng, 6, -0.9, 0.9);
      Vec vals(grid.cell_count());
      for (double& v : vals)
        v = std::floor(rng.uniform() * 5.0) / 4.0;  // 5 levels in [0,1]
      SoftClassifier u = SoftClassifier::grid_function(grid, vals);
      double exact = probtv_psi(ds, pm, u, psi, cfg).value;
      EstimatorConfig fine = cfg;
      fine.tv_levels = 4096;
      // A sigmoid wrapper is not finitely valued, so the generic midpoint
      // quadrature runs; compare against the exact sum on the same sets.
      double quad = 0.0;
      for (int j = 0; j < fine.tv_levels; ++j) {
        double t = (j + 0.5) / fine.tv_levels;
        quad += probper_psi(ds, pm, u.threshold(t), psi, cfg).value;
      }
      quad /= fine.tv_levels;
      if (std::abs(exact - quad) > 2.0 / 4096 + 1e-9) {
        ok = false;
        why = "exact=" + fmt_num(exact) + " quad=" + fmt_num(quad);
      }
    }
    detail::record(out, "coarea_exact_vs_quadrature", ok, why);
  }

  // Threshold membership matches pointwise evaluation away from the level.
  {
    auto rng = ctx.rng(10);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      Vec w{rng.normal(), rng.normal()};
      SoftClassifier u = SoftClassifier::linear_sigmoid(w, rng.normal());
      const double t = 0.05 + 0.9 * rng.uniform();
      HardSet level = u.threshold(t);
      for (int k = 0; k < 20; ++k) {
        Vec x = rng.uniform_in_ball(2, 2.0);
        double v = u.eval(x);
        if (std::abs(v - t) < 1e-9) continue;
        if ((v >= t) != level.member(x)) {
          ok = false;
          why = "u(x)=" + fmt_num(v) + " t=" + fmt_num(t);
          break;
        }
      }
    }
    detail::record(out, "threshold_membership", ok, why);
  }

  // Incremental mask search agrees with direct per-mask evaluation on
  // grids small enough to enumerate.
  {
    auto rng = ctx.rng(11);
    const GridSpec tiny({-1.0, -1.0}, {1.0, 1.0}, {3, 2});
    bool ok = true;
    std::string why;
    for (int r = 0; r < std::min(rounds, 10) && ok; ++r) {
      const double eps = 0.35;
      PerturbationModel pm = detail::random_cloud(rng, eps, 10);
      LabeledDataset ds = detail::random_dataset(rng, 7, -0.9, 0.9);
      const MaskObjective objs[] = {MaskObjective::ProbRiskPsi,
                                    MaskObjective::RiskAdv,
                                    MaskObjective::RiskStd};
      const MaskObjective obj = objs[r % 3];
      GridSearchOptions opts;
      opts.seed = seed + r;
      PsiSpec psi = PsiSpec::cvar_ramp(0.3);
      GridMinResult got = grid_minimize(ds, pm, tiny, obj, psi, eps, opts);
      // Direct scan over all masks through the plain functionals.
      double best = std::numeric_limits<double>::infinity();
      for (std::uint64_t m = 0; m < (1ull << tiny.cell_count()); ++m) {
        std::vector<std::uint8_t> bits(tiny.cell_count());
        for (std::size_t c = 0; c < bits.size(); ++c) bits[c] = (m >> c) & 1;
        HardSet A = HardSet::grid_mask({tiny, bits});
        double v = 0.0;
        if (obj == MaskObjective::ProbRiskPsi)
          v = probrisk_psi(ds, pm, A, psi, cfg).value;
        else if (obj == MaskObjective::RiskAdv)
          v = risk_adv(ds, pm, A, cfg, eps).value;
        else
          v = risk_std(ds, A).value;
        best = std::min(best, v);
      }
      if (std::abs(got.value - best) > 1e-10) {
        ok = false;
        why = "obj=" + std::to_string(int(obj)) + " got=" + fmt_num(got.value) +
              " brute=" + fmt_num(best);
      }
    }
    detail::record(out, "grid_search_matches_bruteforce", ok, why);
  }

  // Serialization round trips preserve evaluation.
  {
    auto rng = ctx.rng(12);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      PerturbationModel pm = r % 2 == 0
                                 ? detail::random_cloud(rng, 0.4, 8)
                                 : PerturbationModel::uniform_ball(2, 0.4);
      HardSet A = HardSet::set_union(
          {detail::random_mask(rng, grid),
           HardSet::disk({rng.normal(), rng.normal()}, 0.5 + rng.uniform())});
      Vec w{rng.normal(), rng.normal()};
      SoftClassifier u = SoftClassifier::linear_sigmoid(w, rng.normal());
      PsiSpec psi = PsiSpec::parse("piecewise:0,0;0.3,0.7;1,1");
      LabeledDataset ds = detail::random_dataset(rng, 6, -0.9, 0.9);

      PerturbationModel pm2 = PerturbationModel::from_json(pm.to_json());
      HardSet A2 = HardSet::from_json(A.to_json());
      SoftClassifier u2 = SoftClassifier::from_json(u.to_json());
      PsiSpec psi2 = PsiSpec::from_json(psi.to_json());
      LabeledDataset ds2 = LabeledDataset::from_json(ds.to_json());

      Vec x = rng.uniform_in_ball(2, 1.5);
      bool same = pm2.support_radius() == pm.support_radius() &&
                  A2.member(x) == A.member(x) &&
                  std::abs(u2.eval(x) - u.eval(x)) < 1e-15 &&
                  std::abs(psi2(0.2) - psi(0.2)) < 1e-15 &&
                  ds2.size() == ds.size();
      if (same && pm.cloud() != nullptr) {
        double m1 = prob_mass_diag(pm, x, A, cfg).value;
        double m2 = prob_mass_diag(pm2, x, A2, cfg).value;
        same = std::abs(m1 - m2) < 1e-15;
      }
      if (!same) {
        ok = false;
        why = "round trip diverged at round " + std::to_string(r);
      }
    }
    detail::record(out, "json_round_trip", ok, why);
  }

  // The scaling constant for indicator losses inverts the one dimensional
  // overlap profile: F(sigma) = p.
  {
    auto rng = ctx.rng(13);
    bool ok = true;
    std::string why;
    for (int r = 0; r < rounds && ok; ++r) {
      const double p = 0.02 + 0.46 * rng.uniform();
      double s = sigma_psi(PsiSpec::indicator_gt(p));
      double back = kernel_halfspace_mass(s, RadialProfile::uniform_ball());
      if (std::abs(back - p) > 1e-9) {
        ok = false;
        why = "p=" + fmt_num(p) + " sigma=" + fmt_num(s) +
              " F(sigma)=" + fmt_num(back);
      }
    }
    detail::record(out, "sigma_inverts_profile", ok, why);
  }

  return out;
}

/// True when every check passed.
inline bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace prl
