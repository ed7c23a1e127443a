#pragma once

// Hard classifiers: measurable sets A with exact pointwise membership and,
// where the geometry allows, exact open-ball intersection tests (the
// primitive behind adversarial risk).
//
// Membership conventions (fixed so that discrete perturbation masses are
// reproducible): half-spaces {x : w.x > b} and disks {x : |x-c| < r} are
// open, grid-mask cells are half-open [lo, hi), finite point sets use exact
// coordinate equality. Boolean expressions evaluate children pointwise.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prl/grid.hpp"
#include "prl/rng.hpp"
#include "prl/vec.hpp"

namespace prl {

struct GridMaskData {
  GridSpec grid;
  std::vector<std::uint8_t> bits;  // one byte per cell, row-major

  void validate() const {
    grid.validate();
    if (bits.size() != grid.cell_count())
      throw std::invalid_argument("GridMaskData: bits/cells size mismatch");
  }
};

class HardSet {
 public:
  enum class Kind {
    HalfSpace,
    Disk,
    GridMask,
    FinitePoints,
    Union,
    Intersect,
    Complement
  };

  /// {x : w.x > b}; w is normalized to unit length (b rescaled to match).
  static HardSet half_space(Vec w, double b) {
    const double n = norm2(w);
    if (!(n > 0.0) || !std::isfinite(n))
      throw std::invalid_argument("half_space: w must be nonzero");
    for (auto& wi : w) wi /= n;
    auto node = std::make_shared<Node>();
    node->kind = Kind::HalfSpace;
    node->d = static_cast<int>(w.size());
    node->w = std::move(w);
    node->b = b / n;
    return HardSet(std::move(node));
  }

  /// Open ball {x : |x - c| < r}.
  static HardSet disk(Vec c, double r) {
    if (!(r >= 0.0) || !std::isfinite(r))
      throw std::invalid_argument("disk: r must be finite and >= 0");
    auto node = std::make_shared<Node>();
    node->kind = Kind::Disk;
    node->d = static_cast<int>(c.size());
    node->c = std::move(c);
    node->r = r;
    return HardSet(std::move(node));
  }

  static HardSet grid_mask(GridMaskData m) {
    m.validate();
    auto node = std::make_shared<Node>();
    node->kind = Kind::GridMask;
    node->d = m.grid.dim();
    node->mask = std::move(m);
    return HardSet(std::move(node));
  }

  static HardSet grid_mask_from(
      const GridSpec& grid,
      const std::function<bool(std::span<const double>)>& pred) {
    GridMaskData m{grid, std::vector<std::uint8_t>(grid.cell_count(), 0)};
    for (std::size_t c = 0; c < m.bits.size(); ++c)
      m.bits[c] = pred(grid.cell_center(c)) ? 1 : 0;
    return grid_mask(std::move(m));
  }

  /// Lebesgue-null finite set; membership is exact coordinate equality.
  static HardSet finite_points(std::vector<Vec> pts, int d) {
    for (const auto& p : pts)
      if (static_cast<int>(p.size()) != d)
        throw std::invalid_argument("finite_points: dimension mismatch");
    auto node = std::make_shared<Node>();
    node->kind = Kind::FinitePoints;
    node->d = d;
    node->pts = std::move(pts);
    return HardSet(std::move(node));
  }

  static HardSet empty(int d) { return finite_points({}, d); }
  static HardSet whole_space(int d) { return complement(empty(d)); }

  static HardSet set_union(std::vector<HardSet> kids) {
    return combine(Kind::Union, std::move(kids));
  }
  static HardSet set_union(HardSet a, HardSet b) {
    return set_union(std::vector<HardSet>{std::move(a), std::move(b)});
  }
  static HardSet set_intersect(std::vector<HardSet> kids) {
    return combine(Kind::Intersect, std::move(kids));
  }
  static HardSet set_intersect(HardSet a, HardSet b) {
    return set_intersect(std::vector<HardSet>{std::move(a), std::move(b)});
  }

  static HardSet complement(HardSet a) {
    if (a.kind() == Kind::Complement) return HardSet(a.n_->kids[0]);
    auto node = std::make_shared<Node>();
    node->kind = Kind::Complement;
    node->d = a.dim();
    node->kids = {a.n_};
    return HardSet(std::move(node));
  }

  Kind kind() const { return n_->kind; }
  int dim() const { return n_->d; }

  bool member(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_->d)
      throw std::invalid_argument("HardSet::member: dimension mismatch");
    return member_impl(*n_, x);
  }
  bool member(const Vec& x) const {
    return member(std::span<const double>(x));
  }

  // Structural accessors (throw on kind mismatch).
  const Vec& halfspace_w() const { return expect(Kind::HalfSpace)->w; }
  double halfspace_b() const { return expect(Kind::HalfSpace)->b; }
  const Vec& disk_center() const { return expect(Kind::Disk)->c; }
  double disk_radius() const { return expect(Kind::Disk)->r; }
  const GridMaskData& mask() const { return expect(Kind::GridMask)->mask; }
  const std::vector<Vec>& points() const {
    return expect(Kind::FinitePoints)->pts;
  }
  std::vector<HardSet> children() const {
    std::vector<HardSet> out;
    out.reserve(n_->kids.size());
    for (const auto& k : n_->kids) out.push_back(HardSet(k));
    return out;
  }

  nlohmann::json to_json() const { return to_json_impl(*n_); }
  static HardSet from_json(const nlohmann::json& j);

 private:
  struct Node {
    Kind kind{};
    int d = 0;
    Vec w;  // HalfSpace normal (unit)
    double b = 0.0;
    Vec c;  // Disk center
    double r = 0.0;
    GridMaskData mask;
    std::vector<Vec> pts;
    std::vector<std::shared_ptr<const Node>> kids;
  };

  explicit HardSet(std::shared_ptr<const Node> n) : n_(std::move(n)) {}

  static HardSet combine(Kind k, std::vector<HardSet> kids) {
    if (kids.empty())
      throw std::invalid_argument("set algebra: needs at least one child");
    auto node = std::make_shared<Node>();
    node->kind = k;
    node->d = kids[0].dim();
    for (const auto& c : kids) {
      if (c.dim() != node->d)
        throw std::invalid_argument("set algebra: dimension mismatch");
      node->kids.push_back(c.n_);
    }
    return HardSet(std::move(node));
  }

  const Node* expect(Kind k) const {
    if (n_->kind != k)
      throw std::logic_error("HardSet: wrong variant accessor");
    return n_.get();
  }

  static bool member_impl(const Node& n, std::span<const double> x) {
    switch (n.kind) {
      case Kind::HalfSpace:
        return dot(n.w, x) > n.b;
      case Kind::Disk:
        return dist2(n.c, x) < n.r;
      case Kind::GridMask: {
        const auto c = n.mask.grid.cell_of(x);
        return c && n.mask.bits[*c] != 0;
      }
      case Kind::FinitePoints:
        for (const auto& p : n.pts) {
          bool eq = true;
          for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] != x[i]) {
              eq = false;
              break;
            }
          if (eq) return true;
        }
        return false;
      case Kind::Union:
        for (const auto& k : n.kids)
          if (member_impl(*k, x)) return true;
        return false;
      case Kind::Intersect:
        for (const auto& k : n.kids)
          if (!member_impl(*k, x)) return false;
        return true;
      case Kind::Complement:
        return !member_impl(*n.kids[0], x);
    }
    return false;
  }

  static nlohmann::json to_json_impl(const Node& n) {
    using nlohmann::json;
    switch (n.kind) {
      case Kind::HalfSpace:
        return {{"variant", "half_space"}, {"w", n.w}, {"b", n.b}};
      case Kind::Disk:
        return {{"variant", "disk"}, {"c", n.c}, {"r", n.r}};
      case Kind::GridMask: {
        // Cell bits packed row-major, LSB-first within each byte.
        std::vector<std::uint8_t> packed((n.mask.bits.size() + 7) / 8, 0);
        for (std::size_t i = 0; i < n.mask.bits.size(); ++i)
          if (n.mask.bits[i]) packed[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
        json g = n.mask.grid.to_json();
        g["variant"] = "grid_mask";
        g["bits"] = detail::base64_encode(packed);
        return g;
      }
      case Kind::FinitePoints:
        return {{"variant", "points"}, {"d", n.d}, {"points", n.pts}};
      case Kind::Union:
      case Kind::Intersect: {
        json kids = json::array();
        for (const auto& k : n.kids) kids.push_back(to_json_impl(*k));
        return {{"variant", n.kind == Kind::Union ? "union" : "intersect"},
                {"children", std::move(kids)}};
      }
      case Kind::Complement:
        return {{"variant", "complement"}, {"child", to_json_impl(*n.kids[0])}};
    }
    return {};
  }

  std::shared_ptr<const Node> n_;

  friend struct BallProbe;
};

inline HardSet HardSet::from_json(const nlohmann::json& j) {
  const std::string v = j.at("variant").get<std::string>();
  if (v == "half_space")
    return half_space(j.at("w").get<Vec>(), j.at("b").get<double>());
  if (v == "disk") return disk(j.at("c").get<Vec>(), j.at("r").get<double>());
  if (v == "grid_mask") {
    GridSpec g = GridSpec::from_json(j);
    const auto packed = detail::base64_decode(j.at("bits").get<std::string>());
    std::vector<std::uint8_t> bits(g.cell_count(), 0);
    if (packed.size() < (bits.size() + 7) / 8)
      throw std::invalid_argument("grid_mask: bit payload too short");
    for (std::size_t i = 0; i < bits.size(); ++i)
      bits[i] = (packed[i >> 3] >> (i & 7)) & 1u;
    return grid_mask({std::move(g), std::move(bits)});
  }
  if (v == "points")
    return finite_points(j.at("points").get<std::vector<Vec>>(),
                         j.at("d").get<int>());
  if (v == "union" || v == "intersect") {
    std::vector<HardSet> kids;
    for (const auto& e : j.at("children")) kids.push_back(from_json(e));
    return v == "union" ? set_union(std::move(kids))
                        : set_intersect(std::move(kids));
  }
  if (v == "complement") return complement(from_json(j.at("child")));
  throw std::invalid_argument("HardSet: unknown variant \"" + v + "\"");
}

/// Result of an open-ball intersection query. When `exact` is false the
/// answer came from sampled suprema and "hit" is a lower bound on the truth.
struct BallHit {
  bool hit = false;
  bool exact = true;
};

struct BallProbe {
  // Does B_eps(x) (open) intersect A (or its complement when comp is set)?
  // Exact for half-spaces, disks, finite point sets, grid masks, unions and
  // complements of those (De Morgan pushes complements down); intersections
  // of two or more nontrivial children fall back to a sampled supremum.
  static BallHit query(const HardSet& A, std::span<const double> x, double eps,
                       bool comp, int mc_samples, RngStream rs) {
    if (!(eps > 0.0)) throw std::invalid_argument("ball query: eps must be > 0");
    return go(*A.n_, x, eps, comp, mc_samples, rs);
  }

 private:
  using Node = HardSet::Node;
  using Kind = HardSet::Kind;

  static BallHit go(const Node& n, std::span<const double> x, double eps,
                    bool comp, int mc, RngStream rs) {
    switch (n.kind) {
      case Kind::HalfSpace: {
        const double m = dot(n.w, x);
        // sup_{B} w.z = m + eps (open, not attained); inf = m - eps.
        return {comp ? (m - eps < n.b) : (m + eps > n.b), true};
      }
      case Kind::Disk: {
        const double d = dist2(n.c, x);
        return {comp ? (d + eps > n.r) : (d < n.r + eps), true};
      }
      case Kind::FinitePoints: {
        if (comp) return {true, true};  // open ball minus a finite set
        for (const auto& p : n.pts)
          if (dist2(p, x) < eps) return {true, true};
        return {false, true};
      }
      case Kind::GridMask:
        return mask_hit(n.mask, x, eps, comp);
      case Kind::Union:
        if (!comp) return any_child(n, x, eps, false, mc, rs);
        return meet(n, x, eps, /*child_comp=*/true, mc, rs);
      case Kind::Intersect:
        if (comp) return any_child(n, x, eps, true, mc, rs);
        return meet(n, x, eps, /*child_comp=*/false, mc, rs);
      case Kind::Complement:
        return go(*n.kids[0], x, eps, !comp, mc, rs);
    }
    return {false, true};
  }

  static BallHit any_child(const Node& n, std::span<const double> x,
                           double eps, bool comp, int mc, RngStream rs) {
    bool exact = true;
    for (const auto& k : n.kids) {
      const BallHit h = go(*k, x, eps, comp, mc, rs);
      if (h.hit) return {true, h.exact};
      exact = exact && h.exact;
    }
    return {false, exact};
  }

  // Intersection of children (each taken with `child_comp`). Children whose
  // ball trace covers the whole ball up to a Lebesgue-null set are dropped;
  // a single survivor is handled exactly, more than one by sampled supremum.
  static BallHit meet(const Node& n, std::span<const double> x, double eps,
                      bool child_comp, int mc, RngStream rs) {
    std::vector<std::pair<const Node*, bool>> live;  // (node, complemented)
    for (const auto& k : n.kids) {
      const Node* c = k.get();
      bool ccomp = child_comp;
      while (c->kind == Kind::Complement) {
        ccomp = !ccomp;
        c = c->kids[0].get();
      }
      if (ccomp && c->kind == Kind::FinitePoints) continue;  // null complement
      live.emplace_back(c, ccomp);
    }
    if (live.empty()) return {true, true};
    if (live.size() == 1) return go(*live[0].first, x, eps, live[0].second, mc, rs);
    // Sampled supremum over the ball; a hit is exact, a miss is a lower bound.
    const int d = static_cast<int>(x.size());
    CounterRng rng(rs.seed, substream(rs.stream, hash_point(x)));
    Vec z(x.size());
    for (int s = 0; s < mc; ++s) {
      Vec o = rng.uniform_in_ball(d, eps);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + o[i];
      bool in = true;
      for (const auto& [c, ccomp] : live)
        if (HardSet::member_impl(*c, z) == ccomp) {
          in = false;
          break;
        }
      if (in) return {true, true};
    }
    return {false, false};
  }

  static BallHit mask_hit(const GridMaskData& m, std::span<const double> x,
                          double eps, bool comp) {
    const GridSpec& g = m.grid;
    const int d = g.dim();
    if (comp) {
      // Complement region includes everything outside the grid box.
      for (int a = 0; a < d; ++a)
        if (x[a] - eps < g.lo[a] || x[a] + eps > g.hi[a]) return {true, true};
    }
    // Odometer over cells whose index range can touch the ball.
    std::vector<int> kmin(d), kmax(d), k(d);
    for (int a = 0; a < d; ++a) {
      const double h = g.step(a);
      int lo = static_cast<int>(std::floor((x[a] - eps - g.lo[a]) / h));
      int hi = static_cast<int>(std::floor((x[a] + eps - g.lo[a]) / h));
      kmin[a] = std::max(lo, 0);
      kmax[a] = std::min(hi, g.res[a] - 1);
      if (kmin[a] > kmax[a]) return {false, true};
      k[a] = kmin[a];
    }
    Vec clo(d), chi(d);
    while (true) {
      std::size_t idx = 0;
      for (int a = 0; a < d; ++a) {
        idx = idx * static_cast<std::size_t>(g.res[a]) +
              static_cast<std::size_t>(k[a]);
        clo[a] = g.lo[a] + k[a] * g.step(a);
        chi[a] = clo[a] + g.step(a);
      }
      const bool want = comp ? m.bits[idx] == 0 : m.bits[idx] != 0;
      if (want && dist_to_box(x, clo, chi) < eps) return {true, true};
      int a = d - 1;
      while (a >= 0) {
        if (++k[a] <= kmax[a]) break;
        k[a] = kmin[a];
        --a;
      }
      if (a < 0) break;
    }
    return {false, true};
  }
};

/// Open-ball intersection with A (side = false) or with A's complement
/// (side = true). Inexact only through sampled-supremum fallbacks.
inline BallHit ball_intersects(const HardSet& A, std::span<const double> x,
                               double eps, bool complement_side = false,
                               int mc_samples = 4096, RngStream rs = {}) {
  return BallProbe::query(A, x, eps, complement_side, mc_samples, rs);
}

}  // namespace prl
