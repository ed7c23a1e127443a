#pragma once

// Quantile-style operators on finitely supported distributions.
//
//   p_esssup(f; m) = inf{ t : m[f > t] <= p }       (value at risk)
//   cvar_p(f; m)   = min_a  a + E[(f - a)_+] / p    (conditional VaR)
//
// Both are computed exactly: the objective in the CVaR minimization is
// piecewise linear in a with kinks only at the support points, so scanning
// the kinks finds the true minimum. When the minimum is attained on a flat
// segment the reported argmin is the largest kink on it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "prl/vec.hpp"

namespace prl {

struct WeightedValue {
  double value = 0.0;
  double w = 0.0;
};

namespace detail {

// Distinct values ascending with aggregated normalized weights.
inline std::vector<WeightedValue> grouped(std::vector<WeightedValue> pts) {
  if (pts.empty())
    throw std::invalid_argument("var/cvar: empty distribution");
  double total = 0.0;
  for (const auto& p : pts) {
    if (!std::isfinite(p.value))
      throw std::invalid_argument("var/cvar: values must be finite");
    if (!(p.w > 0.0) || !std::isfinite(p.w))
      throw std::invalid_argument("var/cvar: weights must be positive");
    total += p.w;
  }
  std::sort(pts.begin(), pts.end(),
            [](const WeightedValue& a, const WeightedValue& b) {
              return a.value < b.value;
            });
  std::vector<WeightedValue> out;
  for (const auto& p : pts) {
    if (!out.empty() && out.back().value == p.value)
      out.back().w += p.w / total;
    else
      out.push_back({p.value, p.w / total});
  }
  return out;
}

}  // namespace detail

/// Smallest support point whose strict upper tail has mass at most p.
/// p = 0 recovers the essential supremum.
inline double p_esssup(const std::vector<WeightedValue>& dist, double p) {
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument("p_esssup: p must lie in [0, 1)");
  const auto g = detail::grouped(dist);
  double tail = 0.0;  // mass strictly above the current value
  for (std::size_t i = g.size(); i-- > 0;) {
    if (tail > p) {
      // g[i+1] was the last value whose strict tail stayed <= p.
      return g[i + 1].value;
    }
    tail += g[i].w;
  }
  return g.front().value;
}

struct CvarResult {
  double value = 0.0;
  double alpha = 0.0;  // the minimizing shift; largest kink on a flat minimum
};

inline CvarResult cvar_full(const std::vector<WeightedValue>& dist, double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("cvar: p must lie in (0, 1)");
  const auto g = detail::grouped(dist);
  const std::size_t n = g.size();
  // Suffix sums: mass and weighted value strictly above each kink.
  std::vector<double> tail_w(n + 1, 0.0), tail_wv(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    tail_w[i] = tail_w[i + 1] + g[i].w;
    tail_wv[i] = tail_wv[i + 1] + g[i].w * g[i].value;
  }
  CvarResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = g[i].value;
    // zeta(a) = a + sum_{v > a} w (v - a) / p
    const double zeta = a + (tail_wv[i + 1] - a * tail_w[i + 1]) / p;
    if (zeta <= best.value) {  // ties resolve toward the larger kink
      best.value = zeta;
      best.alpha = a;
    }
  }
  return best;
}

inline double cvar(const std::vector<WeightedValue>& dist, double p) {
  return cvar_full(dist, p).value;
}

inline double cvar_argmin_alpha(const std::vector<WeightedValue>& dist,
                                double p) {
  return cvar_full(dist, p).alpha;
}

/// CVaR of a {0, 1}-valued loss with success mass q: min{q/p, 1}.
/// Closed form used as a cross-check against the generic scan.
inline double cvar_indicator(double q, double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("cvar_indicator: p must lie in (0, 1)");
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("cvar_indicator: q must lie in [0, 1]");
  return std::min(q / p, 1.0);
}

}  // namespace prl
