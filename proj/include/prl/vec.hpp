#pragma once

// Dense-vector helpers and the planar geometry behind the closed-form
// perturbation masses. Points are plain std::vector<double>.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace prl {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double clamp01(double t) { return std::min(1.0, std::max(0.0, t)); }

constexpr double kPi = 3.14159265358979323846;

// Fixed-order pairwise reduction: deterministic across runs and platforms
// with the same inputs, and more accurate than a running sum on long inputs.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

// Fraction of the unit disk lying in the half-plane {z : z.v >= t}, v a unit
// vector. Equals (acos t - t sqrt(1 - t^2)) / pi for t in [-1, 1].
inline double unit_disk_tail_fraction(double t) {
  if (t <= -1.0) return 1.0;
  if (t >= 1.0) return 0.0;
  return (std::acos(t) - t * std::sqrt(1.0 - t * t)) / kPi;
}

// Area of the intersection of two disks with radii r1, r2 >= 0 and center
// distance d >= 0 (circular lens). Robust at the tangency boundaries.
inline double disk_lens_area(double r1, double r2, double d) {
  if (r1 <= 0.0 || r2 <= 0.0) return 0.0;
  if (d >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (d <= std::abs(r1 - r2)) return kPi * rmin * rmin;
  // Distances from each center to the radical line.
  const double d1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
  const double d2 = d - d1;
  auto cap = [](double r, double a) {
    const double c = std::clamp(a / r, -1.0, 1.0);
    return r * r * std::acos(c) - a * std::sqrt(std::max(0.0, r * r - a * a));
  };
  return cap(r1, d1) + cap(r2, d2);
}

// Euclidean distance from x to the closed axis-aligned box [lo, hi].
inline double dist_to_box(std::span<const double> x, std::span<const double> lo,
                          std::span<const double> hi) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = std::max({lo[i] - x[i], 0.0, x[i] - hi[i]});
    s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace prl
