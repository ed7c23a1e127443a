#pragma once

// Perturbation models m_x: the probability measure each data point spreads
// its mass over. All models here are translation families (the law of
// x' - x does not depend on x).
//
//   UniformBall     uniform on the open ball B_eps(x)
//   RadialKernel    radial density profile(|z|/eps) supported on B_eps(x)
//   DiscreteCloud   finitely many weighted offsets (masses are exact sums)
//   MixtureWithData 1/2 uniform ball + 1/2 data-atom restriction to the ball
//
// Set masses m_x(A) prefer closed forms (planar half-space segments and
// disk-disk lenses for the uniform ball) and otherwise fall back to Monte
// Carlo with substreams keyed to (seed, evaluation point), so every estimate
// is a pure function of its inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "prl/dataset.hpp"
#include "prl/hardset.hpp"
#include "prl/rng.hpp"
#include "prl/softclassifier.hpp"
#include "prl/vec.hpp"

namespace prl {

enum class EstimatorMode { AnalyticPreferred, ForceMc };
enum class EstimatorKind { Analytic, MonteCarlo };

struct EstimatorConfig {
  int mc_samples = 10000;    // draws per Monte Carlo mass/expectation
  int tv_levels = 64;        // quadrature levels for layer-cake integrals
  std::uint64_t seed = 0;
  EstimatorMode mode = EstimatorMode::AnalyticPreferred;

  void validate() const {
    if (mc_samples < 1)
      throw std::invalid_argument("EstimatorConfig: mc_samples must be >= 1");
    if (tv_levels < 1)
      throw std::invalid_argument("EstimatorConfig: tv_levels must be >= 1");
  }
};

/// A numeric result tagged with how it was obtained. `se` is the standard
/// error of a Monte Carlo estimate and 0 for analytic/exact paths.
struct Estimate {
  double value = 0.0;
  EstimatorKind kind = EstimatorKind::Analytic;
  double se = 0.0;
};

struct RadialProfile {
  std::string name;                       // "uniform", "cone" or "custom"
  std::function<double(double)> density;  // radial density on [0, 1], >= 0
  bool uniform = false;

  static RadialProfile uniform_ball() {
    return {"uniform", [](double) { return 1.0; }, true};
  }
  static RadialProfile cone() {
    return {"cone", [](double r) { return 1.0 - r; }, false};
  }
};

class PerturbationModel {
 public:
  struct UniformBall {
    double epsilon;
  };
  struct RadialKernel {
    double epsilon;
    RadialProfile profile;
    // Normalized cumulative radial mass G(r) on a uniform grid over [0, 1];
    // G(1) = 1. Shared so copies of the model stay cheap.
    std::shared_ptr<const std::vector<double>> radial_cdf;
  };
  struct DiscreteCloud {
    std::vector<Vec> offsets;
    std::vector<double> weights;  // positive, sum to 1
  };
  struct MixtureWithData {
    double epsilon;
    std::vector<Vec> atoms;
    std::vector<double> atom_weights;
  };

  static PerturbationModel uniform_ball(int d, double eps) {
    check_eps(d, eps);
    return PerturbationModel(d, UniformBall{eps});
  }

  static PerturbationModel radial_kernel(int d, double eps,
                                         RadialProfile profile) {
    check_eps(d, eps);
    if (!profile.density)
      throw std::invalid_argument("radial_kernel: profile has no density");
    auto cdf = std::make_shared<std::vector<double>>(
        build_radial_cdf(profile, d));
    return PerturbationModel(
        d, RadialKernel{eps, std::move(profile), std::move(cdf)});
  }

  /// Offsets with optional weights (uniform when omitted); weights are
  /// validated to be positive and to sum to 1 within 1e-9.
  static PerturbationModel discrete_cloud(int d, std::vector<Vec> offsets,
                                          std::vector<double> weights = {}) {
    if (offsets.empty())
      throw std::invalid_argument("discrete_cloud: needs at least one offset");
    for (const auto& o : offsets)
      if (static_cast<int>(o.size()) != d)
        throw std::invalid_argument("discrete_cloud: offset dimension mismatch");
    if (weights.empty())
      weights.assign(offsets.size(), 1.0 / static_cast<double>(offsets.size()));
    if (weights.size() != offsets.size())
      throw std::invalid_argument("discrete_cloud: weights/offsets mismatch");
    for (double w : weights)
      if (!(w > 0.0))
        throw std::invalid_argument("discrete_cloud: weights must be positive");
    if (std::abs(pairwise_sum(weights) - 1.0) > 1e-9)
      throw std::invalid_argument("discrete_cloud: weights must sum to 1");
    return PerturbationModel(d, DiscreteCloud{std::move(offsets), std::move(weights)});
  }

  /// m_x = 1/2 Unif(B_eps(x)) + 1/2 rho|_{B_eps(x)} / rho(B_eps(x)).
  /// Falls back to the pure uniform part at points with no data atoms in
  /// range. Non-default variant; see the training/perimeter defaults.
  static PerturbationModel mixture_with_data(int d, double eps,
                                             const LabeledDataset& ds) {
    check_eps(d, eps);
    if (ds.dim() != d)
      throw std::invalid_argument("mixture_with_data: dimension mismatch");
    MixtureWithData m{eps, {}, {}};
    for (const auto& p : ds) {
      m.atoms.push_back(p.x);
      m.atom_weights.push_back(p.w);
    }
    return PerturbationModel(d, std::move(m));
  }

  int dim() const { return d_; }

  /// Radius of the support of x' - x.
  double support_radius() const {
    if (auto* u = std::get_if<UniformBall>(&v_)) return u->epsilon;
    if (auto* k = std::get_if<RadialKernel>(&v_)) return k->epsilon;
    if (auto* m = std::get_if<MixtureWithData>(&v_)) return m->epsilon;
    const auto& c = std::get<DiscreteCloud>(v_);
    double r = 0.0;
    for (const auto& o : c.offsets) r = std::max(r, norm2(o));
    return r;
  }

  bool is_discrete() const { return std::holds_alternative<DiscreteCloud>(v_); }
  const DiscreteCloud* cloud() const { return std::get_if<DiscreteCloud>(&v_); }

  template <class V>
  const V* get_if() const {
    return std::get_if<V>(&v_);
  }

  /// n draws of x' ~ m_x; draw k comes from substream k of `rs`, so any
  /// prefix of the sequence is stable under n.
  std::vector<Vec> sample(std::span<const double> x, int n, RngStream rs) const {
    check_point(x);
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
      out.push_back(sample_one(x, rng));
    }
    return out;
  }

  Vec sample_one(std::span<const double> x, CounterRng& rng) const {
    Vec z(x.begin(), x.end());
    if (auto* u = std::get_if<UniformBall>(&v_)) {
      const Vec o = rng.uniform_in_ball(d_, u->epsilon);
      for (int i = 0; i < d_; ++i) z[i] += o[i];
      return z;
    }
    if (auto* k = std::get_if<RadialKernel>(&v_)) {
      const Vec dir = rng.unit_vector(d_);
      const double r = k->epsilon * radial_quantile(*k->radial_cdf, rng.uniform());
      for (int i = 0; i < d_; ++i) z[i] += r * dir[i];
      return z;
    }
    if (auto* c = std::get_if<DiscreteCloud>(&v_)) {
      const std::size_t j = pick_weighted(c->weights, rng.uniform());
      for (int i = 0; i < d_; ++i) z[i] += c->offsets[j][i];
      return z;
    }
    const auto& m = std::get<MixtureWithData>(v_);
    if (rng.uniform() < 0.5) {
      const Vec o = rng.uniform_in_ball(d_, m.epsilon);
      for (int i = 0; i < d_; ++i) z[i] += o[i];
      return z;
    }
    std::vector<double> w;
    std::vector<std::size_t> idx;
    for (std::size_t a = 0; a < m.atoms.size(); ++a)
      if (dist2(m.atoms[a], x) < m.epsilon) {
        w.push_back(m.atom_weights[a]);
        idx.push_back(a);
      }
    if (w.empty()) {  // no data in range: fall back to the uniform part
      const Vec o = rng.uniform_in_ball(d_, m.epsilon);
      for (int i = 0; i < d_; ++i) z[i] += o[i];
      return z;
    }
    const double total = pairwise_sum(w);
    for (auto& wi : w) wi /= total;
    return m.atoms[idx[pick_weighted(w, rng.uniform())]];
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    if (auto* u = std::get_if<UniformBall>(&v_))
      return {{"variant", "uniform_ball"}, {"d", d_}, {"epsilon", u->epsilon}};
    if (auto* k = std::get_if<RadialKernel>(&v_)) {
      if (k->profile.name != "uniform" && k->profile.name != "cone")
        throw std::invalid_argument(
            "to_json: only named radial profiles serialize");
      return {{"variant", "radial_kernel"},
              {"d", d_},
              {"epsilon", k->epsilon},
              {"profile", k->profile.name}};
    }
    if (auto* c = std::get_if<DiscreteCloud>(&v_))
      return {{"variant", "discrete_cloud"},
              {"d", d_},
              {"offsets", c->offsets},
              {"weights", c->weights}};
    const auto& m = std::get<MixtureWithData>(v_);
    return {{"variant", "mixture_with_data"},
            {"d", d_},
            {"epsilon", m.epsilon},
            {"atoms", m.atoms},
            {"atom_weights", m.atom_weights}};
  }

  static PerturbationModel from_json(const nlohmann::json& j) {
    const std::string v = j.at("variant").get<std::string>();
    const int d = j.at("d").get<int>();
    if (v == "uniform_ball")
      return uniform_ball(d, j.at("epsilon").get<double>());
    if (v == "radial_kernel") {
      const std::string p = j.at("profile").get<std::string>();
      RadialProfile prof = p == "uniform" ? RadialProfile::uniform_ball()
                           : p == "cone"
                               ? RadialProfile::cone()
                               : throw std::invalid_argument(
                                     "radial_kernel: unknown profile \"" + p +
                                     "\"");
      return radial_kernel(d, j.at("epsilon").get<double>(), std::move(prof));
    }
    if (v == "discrete_cloud")
      return discrete_cloud(d, j.at("offsets").get<std::vector<Vec>>(),
                            j.value("weights", std::vector<double>{}));
    if (v == "mixture_with_data") {
      MixtureWithData m{j.at("epsilon").get<double>(),
                        j.at("atoms").get<std::vector<Vec>>(),
                        j.at("atom_weights").get<std::vector<double>>()};
      check_eps(d, m.epsilon);
      return PerturbationModel(d, std::move(m));
    }
    throw std::invalid_argument("PerturbationModel: unknown variant \"" + v +
                                "\"");
  }

  void check_point(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != d_)
      throw std::invalid_argument("PerturbationModel: dimension mismatch");
  }

 private:
  template <class V>
  PerturbationModel(int d, V v) : d_(d), v_(std::move(v)) {}

  static void check_eps(int d, double eps) {
    if (d < 1) throw std::invalid_argument("perturbation model: d must be >= 1");
    if (!(eps > 0.0) || !std::isfinite(eps))
      throw std::invalid_argument("perturbation model: epsilon must be > 0");
  }

  // Cumulative mass of profile(r) r^{d-1} dr on a uniform grid, normalized.
  static std::vector<double> build_radial_cdf(const RadialProfile& p, int d) {
    constexpr int kGrid = 2049;
    std::vector<double> cdf(kGrid, 0.0);
    auto f = [&](double r) {
      const double v = p.density(r);
      if (!(v >= 0.0))
        throw std::invalid_argument("radial profile: density must be >= 0");
      return v * std::pow(r, d - 1);
    };
    const double h = 1.0 / (kGrid - 1);
    for (int i = 1; i < kGrid; ++i) {
      const double a = (i - 1) * h, b = i * h;
      // Simpson on each slice keeps the table accurate near r = 0.
      cdf[i] = cdf[i - 1] + (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    }
    const double total = cdf.back();
    if (!(total > 0.0))
      throw std::invalid_argument("radial profile: density integrates to 0");
    for (auto& c : cdf) c /= total;
    return cdf;
  }

  static double radial_quantile(const std::vector<double>& cdf, double u) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.begin()) return 0.0;
    if (it == cdf.end()) return 1.0;
    const std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    const double c0 = cdf[i - 1], c1 = cdf[i];
    const double h = 1.0 / static_cast<double>(cdf.size() - 1);
    const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    return h * (static_cast<double>(i - 1) + frac);
  }

  static std::size_t pick_weighted(const std::vector<double>& w, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return w.size() - 1;
  }

  int d_ = 0;
  std::variant<UniformBall, RadialKernel, DiscreteCloud, MixtureWithData> v_;
};

namespace detail {

inline bool provably_null_overlap(const HardSet& a, const HardSet& b);

// Closed-form mass of the uniform ball B_eps(x) inside A, when the geometry
// admits one (d = 2): half-space segments, disk lenses, null finite sets,
// complements, and unions whose children are provably disjoint up to null
// sets. Returns nullopt otherwise.
inline std::optional<double> analytic_ball_mass(const HardSet& A,
                                                std::span<const double> x,
                                                double eps) {
  using Kind = HardSet::Kind;
  if (A.dim() != 2) return std::nullopt;
  switch (A.kind()) {
    case Kind::HalfSpace: {
      // Fraction of B_eps(x) with w.z > b; w is unit.
      const double s = (A.halfspace_b() - dot(A.halfspace_w(), x)) / eps;
      return unit_disk_tail_fraction(s);
    }
    case Kind::Disk: {
      const double lens = disk_lens_area(A.disk_radius(), eps,
                                         dist2(A.disk_center(), x));
      return lens / (kPi * eps * eps);
    }
    case Kind::FinitePoints:
      return 0.0;
    case Kind::Complement: {
      const auto inner = analytic_ball_mass(A.children()[0], x, eps);
      if (!inner) return std::nullopt;
      return 1.0 - *inner;
    }
    case Kind::Union: {
      const auto kids = A.children();
      // Additivity needs pairwise-null intersections.
      for (std::size_t i = 0; i < kids.size(); ++i)
        for (std::size_t j = i + 1; j < kids.size(); ++j)
          if (!provably_null_overlap(kids[i], kids[j])) return std::nullopt;
      double total = 0.0;
      for (const auto& k : kids) {
        const auto m = analytic_ball_mass(k, x, eps);
        if (!m) return std::nullopt;
        total += *m;
      }
      return std::min(1.0, total);
    }
    default:
      return std::nullopt;
  }
}

inline bool provably_null_overlap(const HardSet& a, const HardSet& b) {
  using Kind = HardSet::Kind;
  if (a.kind() == Kind::FinitePoints || b.kind() == Kind::FinitePoints)
    return true;
  if (a.kind() == Kind::Disk && b.kind() == Kind::Disk)
    return dist2(a.disk_center(), b.disk_center()) >=
           a.disk_radius() + b.disk_radius();
  if (a.kind() == Kind::Disk && b.kind() == Kind::HalfSpace)
    return dot(b.halfspace_w(), a.disk_center()) + a.disk_radius() <=
           b.halfspace_b();
  if (a.kind() == Kind::HalfSpace && b.kind() == Kind::Disk)
    return provably_null_overlap(b, a);
  if (a.kind() == Kind::HalfSpace && b.kind() == Kind::HalfSpace) {
    const Vec& wa = a.halfspace_w();
    const Vec& wb = b.halfspace_w();
    bool opposite = true;
    for (std::size_t i = 0; i < wa.size(); ++i)
      if (wa[i] != -wb[i]) {
        opposite = false;
        break;
      }
    return opposite && b.halfspace_b() >= -a.halfspace_b();
  }
  return false;
}

}  // namespace detail

/// m_x(A) with provenance. Discrete clouds and data mixtures sum exactly;
/// the uniform ball uses planar closed forms where available; everything
/// else is Monte Carlo keyed to (cfg.seed, x).
inline Estimate prob_mass_diag(const PerturbationModel& pm,
                               std::span<const double> x, const HardSet& A,
                               const EstimatorConfig& cfg = {}) {
  cfg.validate();
  pm.check_point(x);
  if (A.dim() != pm.dim())
    throw std::invalid_argument("prob_mass: set/model dimension mismatch");

  if (const auto* c = pm.get_if<PerturbationModel::DiscreteCloud>()) {
    Vec z(x.begin(), x.end());
    std::vector<double> hit;
    hit.reserve(c->offsets.size());
    for (std::size_t k = 0; k < c->offsets.size(); ++k) {
      for (int i = 0; i < pm.dim(); ++i) z[i] = x[i] + c->offsets[k][i];
      if (A.member(z)) hit.push_back(c->weights[k]);
    }
    return {pairwise_sum(hit), EstimatorKind::Analytic, 0.0};
  }

  if (const auto* m = pm.get_if<PerturbationModel::MixtureWithData>()) {
    // Continuous half plus exact atomic half.
    const PerturbationModel ball =
        PerturbationModel::uniform_ball(pm.dim(), m->epsilon);
    const Estimate cont = prob_mass_diag(ball, x, A, cfg);
    std::vector<double> in_ball, in_both;
    for (std::size_t a = 0; a < m->atoms.size(); ++a)
      if (dist2(m->atoms[a], x) < m->epsilon) {
        in_ball.push_back(m->atom_weights[a]);
        if (A.member(m->atoms[a])) in_both.push_back(m->atom_weights[a]);
      }
    const double ball_rho = pairwise_sum(in_ball);
    const double atomic =
        ball_rho > 0.0 ? pairwise_sum(in_both) / ball_rho : cont.value;
    return {0.5 * cont.value + 0.5 * atomic, cont.kind, 0.5 * cont.se};
  }

  const bool uniform_geometry =
      pm.get_if<PerturbationModel::UniformBall>() != nullptr ||
      (pm.get_if<PerturbationModel::RadialKernel>() != nullptr &&
       pm.get_if<PerturbationModel::RadialKernel>()->profile.uniform);
  if (cfg.mode == EstimatorMode::AnalyticPreferred && uniform_geometry) {
    const auto m = detail::analytic_ball_mass(A, x, pm.support_radius());
    if (m) return {*m, EstimatorKind::Analytic, 0.0};
  }

  // Monte Carlo, keyed to the evaluation point.
  RngStream rs{cfg.seed, hash_point(x)};
  long hits = 0;
  Vec z(x.size());
  for (int k = 0; k < cfg.mc_samples; ++k) {
    CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
    z = pm.sample_one(x, rng);
    if (A.member(z)) ++hits;
  }
  const double n = static_cast<double>(cfg.mc_samples);
  const double p = static_cast<double>(hits) / n;
  return {p, EstimatorKind::MonteCarlo, std::sqrt(p * (1.0 - p) / n)};
}

inline double prob_mass(const PerturbationModel& pm, std::span<const double> x,
                        const HardSet& A, const EstimatorConfig& cfg = {}) {
  return prob_mass_diag(pm, x, A, cfg).value;
}

/// E_{x' ~ m_x}[u(x')]. Exact for discrete clouds and constants; Monte Carlo
/// otherwise. Enforces the [0, 1] range contract on evaluated values.
inline Estimate expect_u_diag(const PerturbationModel& pm,
                              std::span<const double> x,
                              const SoftClassifier& u,
                              const EstimatorConfig& cfg = {}) {
  cfg.validate();
  pm.check_point(x);
  if (u.dim() != pm.dim())
    throw std::invalid_argument("expect_u: classifier/model dimension mismatch");
  auto checked = [&](std::span<const double> z) {
    const double v = u.eval(z);
    if (!(v >= 0.0 && v <= 1.0))
      throw std::runtime_error("expect_u: classifier left [0, 1]");
    return v;
  };
  if (u.kind() == SoftClassifier::Kind::Constant)
    return {u.params()[0], EstimatorKind::Analytic, 0.0};
  if (const auto* c = pm.get_if<PerturbationModel::DiscreteCloud>()) {
    Vec z(x.begin(), x.end());
    std::vector<double> terms(c->offsets.size());
    for (std::size_t k = 0; k < c->offsets.size(); ++k) {
      for (int i = 0; i < pm.dim(); ++i) z[i] = x[i] + c->offsets[k][i];
      terms[k] = c->weights[k] * checked(z);
    }
    return {pairwise_sum(terms), EstimatorKind::Analytic, 0.0};
  }
  RngStream rs{cfg.seed, substream(hash_point(x), 0x9E01u)};
  std::vector<double> vals(static_cast<std::size_t>(cfg.mc_samples));
  for (int k = 0; k < cfg.mc_samples; ++k) {
    CounterRng rng = rs.sub(static_cast<std::uint64_t>(k)).rng();
    vals[static_cast<std::size_t>(k)] = checked(pm.sample_one(x, rng));
  }
  const double n = static_cast<double>(cfg.mc_samples);
  const double mean = pairwise_sum(vals) / n;
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double se = n > 1 ? std::sqrt(ss / (n * (n - 1.0))) : 0.0;
  return {mean, EstimatorKind::MonteCarlo, se};
}

inline double expect_u(const PerturbationModel& pm, std::span<const double> x,
                       const SoftClassifier& u,
                       const EstimatorConfig& cfg = {}) {
  return expect_u_diag(pm, x, u, cfg).value;
}

/// nu(A) = 1/2 sum_i w_i m_{x_i}(A) + 1/2 rho(A): the reference measure the
/// smoothed perimeters are absolutely continuous against.
inline Estimate mass_under_nu(const LabeledDataset& ds,
                              const PerturbationModel& pm, const HardSet& A,
                              const EstimatorConfig& cfg = {}) {
  std::vector<double> terms(ds.size()), var(ds.size(), 0.0);
  EstimatorKind kind = EstimatorKind::Analytic;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Estimate e = prob_mass_diag(pm, ds[i].x, A, cfg);
    if (e.kind == EstimatorKind::MonteCarlo) kind = EstimatorKind::MonteCarlo;
    terms[i] = ds[i].w * (0.5 * e.value + 0.5 * (A.member(ds[i].x) ? 1.0 : 0.0));
    var[i] = 0.5 * ds[i].w * e.se;
  }
  double se2 = 0.0;
  for (double s : var) se2 += s * s;
  return {pairwise_sum(terms), kind, std::sqrt(se2)};
}

/// sigma(A) = sum_i w_i m_{x_i}(A): total perturbation flow into A.
inline Estimate mass_under_sigma(const LabeledDataset& ds,
                                 const PerturbationModel& pm, const HardSet& A,
                                 const EstimatorConfig& cfg = {}) {
  std::vector<double> terms(ds.size()), var(ds.size(), 0.0);
  EstimatorKind kind = EstimatorKind::Analytic;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Estimate e = prob_mass_diag(pm, ds[i].x, A, cfg);
    if (e.kind == EstimatorKind::MonteCarlo) kind = EstimatorKind::MonteCarlo;
    terms[i] = ds[i].w * e.value;
    var[i] = ds[i].w * e.se;
  }
  double se2 = 0.0;
  for (double s : var) se2 += s * s;
  return {pairwise_sum(terms), kind, std::sqrt(se2)};
}

}  // namespace prl
