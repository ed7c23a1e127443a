#pragma once

// Small-radius asymptotics of the probabilistic perimeter in the plane.
// As the perturbation radius eps shrinks, ProbPer_Psi(A)/eps converges to
// a surface integral
//
//   sigma_Psi * int_{boundary A} (rho_0 + rho_1) dH^1,
//
// where the surface tension sigma_Psi = int_0^1 Psi(F(t)) dt depends only
// on the penalty and the kernel through F(t), the kernel mass beyond a
// chord at signed distance t*eps from the center. This header computes
// sigma_Psi, the boundary integral for disks and half-planes, and a
// collar-discretization sweep that measures the convergence rate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prl/dataset.hpp"
#include "prl/functionals.hpp"
#include "prl/hardset.hpp"
#include "prl/perturbation.hpp"
#include "prl/psi.hpp"
#include "prl/vec.hpp"

namespace prl {

/// F(t): mass of {z_1 > t} under the radial kernel on the unit disk.
/// Uniform kernels use the closed form; general profiles integrate
/// k(r) r 2 acos(t/r) over r in (t, 1) with a square-root substitution
/// that removes the derivative blowup at r = t.
inline double kernel_halfspace_mass(double t, const RadialProfile& profile) {
  if (t >= 1.0) return 0.0;
  if (t <= -1.0) return 1.0;
  if (t < 0.0) return 1.0 - kernel_halfspace_mass(-t, profile);
  if (profile.uniform) return unit_disk_tail_fraction(t);

  auto simpson = [](const std::function<double(double)>& f, double a, double b,
                    int panels) {
    double acc = f(a) + f(b);
    const double h = (b - a) / panels;
    for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return acc * h / 3.0;
  };
  auto normalizer = [&] {
    return 2.0 * kPi *
           simpson([&](double r) { return profile.density(r) * r; }, 0.0, 1.0,
                   4096);
  };
  if (t == 0.0) return 0.5;
  // r = t + s^2 turns acos(t/r) ~ sqrt(r - t) into a smooth function of s.
  const double smax = std::sqrt(1.0 - t);
  const double raw = simpson(
      [&](double s) {
        const double r = t + s * s;
        if (r <= 0.0 || r > 1.0) return 0.0;
        const double c = std::clamp(t / r, -1.0, 1.0);
        return profile.density(r) * r * 2.0 * std::acos(c) * 2.0 * s;
      },
      0.0, smax, 4096);
  return raw / normalizer();
}

namespace detail {

// sup{t in [0, 1] : F(t) > q} for the nonincreasing F. Used both for the
// indicator fast path and to split quadratures at penalty kinks.
inline double tail_level_boundary(const std::function<double(double)>& F,
                                  double q) {
  if (!(F(0.0) > q)) return 0.0;
  double lo = 0.0, hi = 1.0;
  if (F(1.0) > q) return 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) > q ? lo : hi) = mid;
    if (hi - lo < 1e-16) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Surface tension sigma_Psi = int_0^1 Psi(F(t)) dt. Indicator penalties
/// reduce to the level boundary of F; other penalties integrate piecewise
/// with splits at the preimages of Psi's kinks.
inline double sigma_psi(const PsiSpec& psi,
                        const RadialProfile& profile = RadialProfile::uniform_ball()) {
  std::function<double(double)> F = [&](double t) {
    return kernel_halfspace_mass(t, profile);
  };
  if (psi.family() == PsiSpec::Family::IndicatorGtP)
    return detail::tail_level_boundary(F, psi.p());
  if (psi.family() == PsiSpec::Family::EsssupZero)
    return detail::tail_level_boundary(F, 0.0);

  std::vector<double> cuts{0.0, 1.0};
  for (const double q : psi.kink_levels())
    cuts.push_back(detail::tail_level_boundary(F, q));
  std::sort(cuts.begin(), cuts.end());

  double total = 0.0;
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const double a = cuts[i - 1], b = cuts[i];
    if (b - a < 1e-15) continue;
    constexpr int kPanels = 2048;
    const double h = (b - a) / kPanels;
    double acc = psi.eval(F(a)) + psi.eval(F(b));
    for (int k = 1; k < kPanels; ++k)
      acc += (k % 2 ? 4.0 : 2.0) * psi.eval(F(a + k * h));
    total += acc * h / 3.0;
  }
  return total;
}

/// A planar set with smooth boundary, for convergence experiments.
class SmoothSet2D {
 public:
  enum class Kind { Disk, HalfPlane };

  static SmoothSet2D disk(Vec center, double radius) {
    if (center.size() != 2 || !(radius > 0.0))
      throw std::invalid_argument("SmoothSet2D::disk: need 2-d center, R > 0");
    SmoothSet2D s;
    s.kind_ = Kind::Disk;
    s.c_ = std::move(center);
    s.r_ = radius;
    return s;
  }

  /// {x : w . x > b}; w is normalized.
  static SmoothSet2D half_plane(Vec w, double b) {
    if (w.size() != 2)
      throw std::invalid_argument("SmoothSet2D::half_plane: need 2-d normal");
    const double n = norm2(w);
    if (!(n > 0.0))
      throw std::invalid_argument("SmoothSet2D::half_plane: zero normal");
    SmoothSet2D s;
    s.kind_ = Kind::HalfPlane;
    s.c_ = {w[0] / n, w[1] / n};
    s.r_ = b / n;
    return s;
  }

  Kind kind() const { return kind_; }
  const Vec& center() const { return c_; }  // normal for half-planes
  double radius() const { return r_; }      // offset for half-planes

  HardSet to_hardset() const {
    return kind_ == Kind::Disk ? HardSet::disk(c_, r_)
                               : HardSet::half_space(c_, r_);
  }

 private:
  Kind kind_ = Kind::Disk;
  Vec c_;
  double r_ = 0.0;
};

/// Label-conditional densities rho_0, rho_1 evaluated pointwise.
struct DensityField {
  std::function<double(const Vec&)> rho0;
  std::function<double(const Vec&)> rho1;

  static DensityField constant(double c0, double c1) {
    return {[c0](const Vec&) { return c0; }, [c1](const Vec&) { return c1; }};
  }
};

struct SweepOptions {
  int radial_cells = 200;     // collar resolution: cell depth eps / radial_cells
  int angular_nodes = 1024;   // boundary nodes for disks
  int tangential_nodes = 512; // boundary nodes for half-plane segments
  Vec box_lo{-3.0, -3.0};    // clip box for half-plane boundaries
  Vec box_hi{3.0, 3.0};
};

/// int_{boundary A} (rho_0 + rho_1) dH^1, by midpoint rule along the
/// boundary (half-plane boundaries are clipped to the sweep box).
inline double boundary_integral(const SmoothSet2D& set,
                                const DensityField& field,
                                const SweepOptions& opts = {}) {
  if (set.kind() == SmoothSet2D::Kind::Disk) {
    const int m = opts.angular_nodes;
    const double dth = 2.0 * kPi / m;
    std::vector<double> terms(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      const double th = (j + 0.5) * dth;
      const Vec p{set.center()[0] + set.radius() * std::cos(th),
                  set.center()[1] + set.radius() * std::sin(th)};
      terms[static_cast<std::size_t>(j)] =
          set.radius() * dth * (field.rho0(p) + field.rho1(p));
    }
    return pairwise_sum(terms);
  }
  // Boundary line w . x = b, clipped to the box along tangent direction.
  const Vec& w = set.center();
  const double b = set.radius();
  const Vec foot{b * w[0], b * w[1]};
  const Vec tau{-w[1], w[0]};
  double slo = -1e300, shi = 1e300;
  for (int a = 0; a < 2; ++a) {
    if (tau[a] != 0.0) {
      const double s1 = (opts.box_lo[a] - foot[a]) / tau[a];
      const double s2 = (opts.box_hi[a] - foot[a]) / tau[a];
      slo = std::max(slo, std::min(s1, s2));
      shi = std::min(shi, std::max(s1, s2));
    } else if (foot[a] < opts.box_lo[a] || foot[a] > opts.box_hi[a]) {
      return 0.0;
    }
  }
  if (shi <= slo) return 0.0;
  const int m = opts.tangential_nodes;
  const double h = (shi - slo) / m;
  std::vector<double> terms(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double s = slo + (j + 0.5) * h;
    const Vec p{foot[0] + s * tau[0], foot[1] + s * tau[1]};
    terms[static_cast<std::size_t>(j)] = h * (field.rho0(p) + field.rho1(p));
  }
  return pairwise_sum(terms);
}

struct SweepRow {
  double epsilon = 0.0;
  double scaled_per = 0.0;  // ProbPer_Psi(A) / eps on the collar measure
  double limit = 0.0;       // sigma_Psi * boundary integral
  double rel_error = 0.0;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "epsilon,scaled_per,limit,rel_error\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g\n", r.epsilon,
                  r.scaled_per, r.limit, r.rel_error);
    out += buf;
  }
  return out;
}

/// For each eps, discretize the two-sided boundary collar into cells
/// aligned with the boundary (so no cell straddles it), place label-0
/// atoms outside and label-1 atoms inside weighted by density times cell
/// area, and compare ProbPer_Psi / eps against the limit surface integral.
/// Uniform-kernel models only: the collar masses then evaluate in closed
/// form and the sweep is quadrature error plus the genuine O(eps) gap.
inline std::vector<SweepRow> epsilon_sweep(const SmoothSet2D& set,
                                           const DensityField& field,
                                           const PsiSpec& psi,
                                           const std::vector<double>& epsilons,
                                           const SweepOptions& opts = {}) {
  if (psi.at_zero() != 0.0)
    throw std::invalid_argument("epsilon_sweep: needs Psi(0) = 0");
  const double limit = sigma_psi(psi) * boundary_integral(set, field, opts);
  const HardSet A = set.to_hardset();

  std::vector<SweepRow> rows;
  for (const double eps : epsilons) {
    if (!(eps > 0.0))
      throw std::invalid_argument("epsilon_sweep: epsilon must be > 0");
    if (set.kind() == SmoothSet2D::Kind::Disk && !(eps < set.radius()))
      throw std::invalid_argument("epsilon_sweep: need epsilon < disk radius");

    const int nr = opts.radial_cells;
    const double hr = eps / nr;
    std::vector<LabeledPoint> atoms;
    auto push = [&](Vec x, int label, double area) {
      const double rho = label == 0 ? field.rho0(x) : field.rho1(x);
      if (rho > 0.0) atoms.push_back({std::move(x), label, rho * area});
    };

    if (set.kind() == SmoothSet2D::Kind::Disk) {
      const int m = opts.angular_nodes;
      const double dth = 2.0 * kPi / m;
      for (int j = 0; j < m; ++j) {
        const double th = (j + 0.5) * dth;
        const double cs = std::cos(th), sn = std::sin(th);
        for (int k = 0; k < nr; ++k) {
          const double off = (k + 0.5) * hr;
          const double r_out = set.radius() + off;
          const double r_in = set.radius() - off;
          // Polar cell area is exactly r * hr * dth at the cell's mid radius.
          push({set.center()[0] + r_out * cs, set.center()[1] + r_out * sn}, 0,
               r_out * hr * dth);
          push({set.center()[0] + r_in * cs, set.center()[1] + r_in * sn}, 1,
               r_in * hr * dth);
        }
      }
    } else {
      const Vec& w = set.center();
      const double b = set.radius();
      const Vec foot{b * w[0], b * w[1]};
      const Vec tau{-w[1], w[0]};
      double slo = -1e300, shi = 1e300;
      for (int a = 0; a < 2; ++a) {
        if (tau[a] != 0.0) {
          const double s1 = (opts.box_lo[a] - foot[a]) / tau[a];
          const double s2 = (opts.box_hi[a] - foot[a]) / tau[a];
          slo = std::max(slo, std::min(s1, s2));
          shi = std::min(shi, std::max(s1, s2));
        }
      }
      if (shi <= slo)
        throw std::invalid_argument("epsilon_sweep: boundary misses the box");
      const int mt = opts.tangential_nodes;
      const double ht = (shi - slo) / mt;
      for (int j = 0; j < mt; ++j) {
        const double s = slo + (j + 0.5) * ht;
        for (int k = 0; k < nr; ++k) {
          const double off = (k + 0.5) * hr;
          // Positive side of w is inside A = {w . x > b}: label 1.
          push({foot[0] + s * tau[0] + off * w[0],
                foot[1] + s * tau[1] + off * w[1]},
               1, hr * ht);
          push({foot[0] + s * tau[0] - off * w[0],
                foot[1] + s * tau[1] - off * w[1]},
               0, hr * ht);
        }
      }
    }

    if (atoms.empty())
      throw std::invalid_argument("epsilon_sweep: collar has no mass");
    const LabeledDataset collar = LabeledDataset::measure(std::move(atoms));
    const PerturbationModel pm = PerturbationModel::uniform_ball(2, eps);
    const RiskReport per = probper_psi(collar, pm, A, psi);

    SweepRow row;
    row.epsilon = eps;
    row.scaled_per = per.value / eps;
    row.limit = limit;
    row.rel_error = limit != 0.0
                        ? std::abs(row.scaled_per - limit) / std::abs(limit)
                        : std::abs(row.scaled_per);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace prl
