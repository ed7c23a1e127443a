#pragma once

// Minimization of set functionals over grid masks. The search space is
// {0, 1}^C for a C-cell grid; every objective here decomposes per data
// point, and a single cell flip touches only the points whose perturbation
// cloud, own cell, or fattened ball meets that cell. Precomputed incidence
// lists make each flip O(affected points), so small grids are enumerated
// exhaustively in Gray-code order and larger ones are annealed.
//
// Exactness: cloud masses are running sums of the same weights that the
// closed-form evaluator uses; ball-cell incidence uses the exact
// distance-to-box test. The best mask's value is recomputed from scratch
// at the end, so reported minima carry no incremental drift.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "prl/dataset.hpp"
#include "prl/functionals.hpp"
#include "prl/grid.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/psi.hpp"
#include "prl/rng.hpp"
#include "prl/vec.hpp"

namespace prl {

enum class MaskObjective { ProbRiskPsi, RiskAdv, RiskStd };

struct GridSearchOptions {
  int max_exhaustive_cells = 24;  // enumerate up to 2^24 masks
  int anneal_restarts = 8;
  int anneal_iters = 20000;
  double temp_hi = 0.25;
  double temp_lo = 1e-4;
  std::uint64_t seed = 0;
};

struct GridMinResult {
  std::vector<std::uint8_t> bits;
  double value = 0.0;
  long evals = 0;
  bool exhaustive = false;

  HardSet set(const GridSpec& grid) const {
    return HardSet::grid_mask({grid, bits});
  }
};

namespace detail {

// Per-flip incremental state for one objective over one dataset.
class MaskEngine {
 public:
  MaskEngine(const LabeledDataset& ds, const PerturbationModel& pm,
             const GridSpec& grid, MaskObjective obj, const PsiSpec& psi,
             double adv_eps)
      : ds_(ds), grid_(grid), obj_(obj), psi_(psi) {
    const std::size_t n = ds.size();
    const std::size_t cells = grid.cell_count();
    own_cell_.assign(n, SIZE_MAX);
    own_on_.assign(n, 0);
    term_.assign(n, 0.0);
    cell_touch_.assign(cells, {});

    for (std::size_t i = 0; i < n; ++i)
      if (auto c = grid.cell_of(ds[i].x)) {
        own_cell_[i] = *c;
        cell_touch_[*c].push_back(i);
      }

    if (obj == MaskObjective::ProbRiskPsi) {
      const auto* cloud = pm.cloud();
      if (!cloud)
        throw std::invalid_argument(
            "grid_minimize: ProbRiskPsi search needs a discrete cloud model");
      in_mass_.assign(n, 0.0);
      cell_cloud_.assign(cells, {});
      Vec z(static_cast<std::size_t>(ds.dim()));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < cloud->offsets.size(); ++k) {
          for (std::size_t a = 0; a < z.size(); ++a)
            z[a] = ds[i].x[a] + cloud->offsets[k][a];
          if (auto c = grid.cell_of(z)) {
            cell_cloud_[*c].push_back({i, cloud->weights[k]});
            cell_touch_[*c].push_back(i);
          }
          // Offsets outside the grid box can never enter the mask set.
        }
    }

    if (obj == MaskObjective::RiskAdv) {
      if (!(adv_eps > 0.0))
        throw std::invalid_argument("grid_minimize: adversarial radius must be > 0");
      on_hit_.assign(n, 0);
      hit_total_.assign(n, 0);
      exit_flag_.assign(n, 0);
      cell_ball_.assign(cells, {});
      Vec clo, chi;
      for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < grid.dim(); ++a)
          if (ds[i].x[a] - adv_eps < grid.lo[a] ||
              ds[i].x[a] + adv_eps > grid.hi[a])
            exit_flag_[i] = 1;
        for (std::size_t c = 0; c < cells; ++c) {
          grid.cell_bounds(c, &clo, &chi);
          if (dist_to_box(ds[i].x, clo, chi) < adv_eps) {
            cell_ball_[c].push_back(i);
            cell_touch_[c].push_back(i);
            ++hit_total_[i];
          }
        }
      }
    }

    for (auto& v : cell_touch_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    bits_.assign(cells, 0);
    for (std::size_t i = 0; i < n; ++i) term_[i] = point_term(i);
    resum();
  }

  std::size_t cells() const { return bits_.size(); }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  double total() const { return total_; }

  void flip(std::size_t c) {
    bits_[c] ^= 1;
    const double sign = bits_[c] ? 1.0 : -1.0;
    if (!cell_cloud_.empty())
      for (const auto& [i, w] : cell_cloud_[c]) in_mass_[i] += sign * w;
    if (!cell_ball_.empty())
      for (const std::size_t i : cell_ball_[c]) on_hit_[i] += bits_[c] ? 1 : -1;
    for (const std::size_t i : cell_touch_[c]) {
      if (own_cell_[i] == c) own_on_[i] = bits_[c];
      const double t = point_term(i);
      total_ += ds_[i].w * (t - term_[i]);
      term_[i] = t;
    }
    if (++flips_since_resum_ >= 4096) resum();
  }

  void set_bits(const std::vector<std::uint8_t>& b) {
    for (std::size_t c = 0; c < bits_.size(); ++c)
      if (bits_[c] != (b[c] ? 1 : 0)) flip(c);
  }

  // Exact objective for arbitrary bits, bypassing incremental state.
  double evaluate_exact(const std::vector<std::uint8_t>& b) const {
    std::vector<double> terms(ds_.size());
    const HardSet A = HardSet::grid_mask({grid_, b});
    const double eps = adv_eps_storage_;
    for (std::size_t i = 0; i < ds_.size(); ++i) {
      const auto& pt = ds_[i];
      const bool in = A.member(pt.x);
      double t = 0.0;
      switch (obj_) {
        case MaskObjective::RiskStd:
          t = in != (pt.y == 1) ? 1.0 : 0.0;
          break;
        case MaskObjective::RiskAdv: {
          const BallHit h = ball_intersects(A, pt.x, eps, pt.y == 1);
          t = h.hit ? 1.0 : 0.0;
          break;
        }
        case MaskObjective::ProbRiskPsi: {
          if (pt.y == 0)
            t = in ? 1.0 : psi_.eval(mass_in(pt.x, A));
          else
            t = in ? psi_.eval(1.0 - mass_in(pt.x, A)) : 1.0;
          break;
        }
      }
      terms[i] = pt.w * t;
    }
    return pairwise_sum(terms);
  }

  void remember_adv_eps(double e) { adv_eps_storage_ = e; }

 private:
  double mass_in(const Vec& x, const HardSet& A) const {
    // Exact cloud mass; only reachable for ProbRiskPsi (cloud checked).
    const auto* cloud = cloud_for_exact_;
    std::vector<double> hit;
    Vec z(x.size());
    for (std::size_t k = 0; k < cloud->offsets.size(); ++k) {
      for (std::size_t a = 0; a < z.size(); ++a)
        z[a] = x[a] + cloud->offsets[k][a];
      if (A.member(z)) hit.push_back(cloud->weights[k]);
    }
    return pairwise_sum(hit);
  }

 public:
  void remember_cloud(const PerturbationModel::DiscreteCloud* c) {
    cloud_for_exact_ = c;
  }

 private:
  double point_term(std::size_t i) const {
    const auto& pt = ds_[i];
    const bool in = own_on_[i] != 0;
    switch (obj_) {
      case MaskObjective::RiskStd:
        return in != (pt.y == 1) ? 1.0 : 0.0;
      case MaskObjective::RiskAdv: {
        if (pt.y == 0) return on_hit_[i] > 0 ? 1.0 : 0.0;
        const bool hits_comp =
            exit_flag_[i] != 0 || hit_total_[i] - on_hit_[i] > 0;
        return hits_comp ? 1.0 : 0.0;
      }
      case MaskObjective::ProbRiskPsi: {
        const double m = clamp01(in_mass_[i]);
        if (pt.y == 0) return in ? 1.0 : psi_.eval(m);
        return in ? psi_.eval(1.0 - m) : 1.0;
      }
    }
    return 0.0;
  }

  void resum() {
    std::vector<double> terms(ds_.size());
    for (std::size_t i = 0; i < ds_.size(); ++i) terms[i] = ds_[i].w * term_[i];
    total_ = pairwise_sum(terms);
    flips_since_resum_ = 0;
  }

  const LabeledDataset& ds_;
  GridSpec grid_;
  MaskObjective obj_;
  PsiSpec psi_;
  double adv_eps_storage_ = 0.0;
  const PerturbationModel::DiscreteCloud* cloud_for_exact_ = nullptr;

  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> own_cell_;
  std::vector<std::uint8_t> own_on_;
  std::vector<double> term_;
  std::vector<double> in_mass_;
  std::vector<int> on_hit_;
  std::vector<int> hit_total_;
  std::vector<std::uint8_t> exit_flag_;
  std::vector<std::vector<std::pair<std::size_t, double>>> cell_cloud_;
  std::vector<std::vector<std::size_t>> cell_ball_;
  std::vector<std::vector<std::size_t>> cell_touch_;
  double total_ = 0.0;
  int flips_since_resum_ = 0;
};

}  // namespace detail

/// Minimize the chosen objective over all grid masks. Up to
/// max_exhaustive_cells the search is a full Gray-code enumeration and the
/// result is the global minimum; beyond that, simulated annealing with
/// restarts, and the result is a best-found upper bound.
inline GridMinResult grid_minimize(const LabeledDataset& ds,
                                   const PerturbationModel& pm,
                                   const GridSpec& grid, MaskObjective obj,
                                   const PsiSpec& psi = PsiSpec::identity(),
                                   double adv_eps = 0.0,
                                   const GridSearchOptions& opts = {}) {
  grid.validate();
  if (ds.dim() != grid.dim() || ds.dim() != pm.dim())
    throw std::invalid_argument("grid_minimize: dimension mismatch");
  if (obj == MaskObjective::RiskAdv && adv_eps == 0.0)
    adv_eps = pm.support_radius();

  detail::MaskEngine eng(ds, pm, grid, obj, psi, adv_eps);
  eng.remember_adv_eps(adv_eps);
  eng.remember_cloud(pm.cloud());
  const std::size_t cells = eng.cells();

  GridMinResult best;
  best.bits = eng.bits();
  best.value = eng.total();
  best.evals = 1;

  if (cells <= static_cast<std::size_t>(opts.max_exhaustive_cells)) {
    // Gray-code walk: mask(i) = i ^ (i >> 1), one flip per step.
    const std::uint64_t count = 1ull << cells;
    for (std::uint64_t i = 1; i < count; ++i) {
      const std::uint64_t flipped = __builtin_ctzll(i);
      eng.flip(static_cast<std::size_t>(flipped));
      ++best.evals;
      if (eng.total() < best.value) {
        best.value = eng.total();
        best.bits = eng.bits();
      }
    }
    best.exhaustive = true;
  } else {
    RngStream base{opts.seed, 0x6D61736Bu};
    for (int r = 0; r < opts.anneal_restarts; ++r) {
      CounterRng rng = base.sub(static_cast<std::uint64_t>(r)).rng();
      std::vector<std::uint8_t> start(cells, 0);
      if (r == 1) start.assign(cells, 1);
      if (r >= 2)
        for (auto& b : start) b = rng.uniform() < 0.5 ? 1 : 0;
      eng.set_bits(start);
      if (eng.total() < best.value) {
        best.value = eng.total();
        best.bits = eng.bits();
      }
      double cur = eng.total();
      for (int it = 0; it < opts.anneal_iters; ++it) {
        const double frac = static_cast<double>(it) / opts.anneal_iters;
        const double temp =
            opts.temp_hi * std::pow(opts.temp_lo / opts.temp_hi, frac);
        const std::size_t c =
            static_cast<std::size_t>(rng.uniform() * cells) % cells;
        eng.flip(c);
        ++best.evals;
        const double delta = eng.total() - cur;
        if (delta <= 0.0 || rng.uniform() < std::exp(-delta / temp)) {
          cur = eng.total();
          if (cur < best.value) {
            best.value = cur;
            best.bits = eng.bits();
          }
        } else {
          eng.flip(c);  // reject
        }
      }
    }
    best.exhaustive = false;
  }

  // Remove any incremental drift from the reported minimum.
  best.value = eng.evaluate_exact(best.bits);
  return best;
}

struct InterpRow {
  double p = 0.0;
  double min_value = 0.0;
  bool exhaustive = false;
  std::vector<std::uint8_t> bits;
};

struct InterpSweep {
  std::vector<InterpRow> rows;
  double min_adv = 0.0;
  double min_std = 0.0;
};

/// Minimize ProbRisk with the ramp penalty at each level p, alongside the
/// adversarial and standard minima over the same mask family. As p drops
/// the ramp sharpens and the minimum climbs toward the adversarial one;
/// large p (>= 1 allowed) relaxes toward the standard risk.
inline InterpSweep interpolation_sweep(const LabeledDataset& ds,
                                       const PerturbationModel& pm,
                                       const GridSpec& grid,
                                       const std::vector<double>& levels,
                                       double adv_eps,
                                       const GridSearchOptions& opts = {}) {
  InterpSweep out;
  for (const double p : levels) {
    const GridMinResult r = grid_minimize(
        ds, pm, grid, MaskObjective::ProbRiskPsi, PsiSpec::cvar_ramp(p), 0.0, opts);
    out.rows.push_back({p, r.value, r.exhaustive, r.bits});
  }
  out.min_adv = grid_minimize(ds, pm, grid, MaskObjective::RiskAdv,
                              PsiSpec::identity(), adv_eps, opts)
                    .value;
  out.min_std = grid_minimize(ds, pm, grid, MaskObjective::RiskStd,
                              PsiSpec::identity(), 0.0, opts)
                    .value;
  return out;
}

}  // namespace prl
