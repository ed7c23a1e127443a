#pragma once

// Weighted labeled point clouds: the empirical measure mu = sum_i w_i
// delta_{(x_i, y_i)} with binary labels, and its marginals rho0 (label 0),
// rho1 (label 1), rho = rho0 + rho1.

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prl/vec.hpp"

namespace prl {

struct LabeledPoint {
  Vec x;
  int y = 0;       // label in {0, 1}
  double w = 0.0;  // strictly positive weight
};

class LabeledDataset {
 public:
  /// Probability dataset: weights must sum to 1 within 1e-12.
  static LabeledDataset probability(std::vector<LabeledPoint> pts) {
    LabeledDataset ds(std::move(pts));
    const double total = ds.total_weight();
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument(
          "LabeledDataset: weights sum to " + std::to_string(total) +
          ", expected 1 within 1e-12");
    return ds;
  }

  /// General weighted measure (no normalization requirement). Used for
  /// collar discretizations of densities, which are not probabilities.
  static LabeledDataset measure(std::vector<LabeledPoint> pts) {
    return LabeledDataset(std::move(pts));
  }

  int dim() const { return d_; }
  std::size_t size() const { return pts_.size(); }
  const LabeledPoint& operator[](std::size_t i) const { return pts_[i]; }
  auto begin() const { return pts_.begin(); }
  auto end() const { return pts_.end(); }

  double total_weight() const {
    std::vector<double> w(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) w[i] = pts_[i].w;
    return pairwise_sum(w);
  }

  double label_weight(int y) const {
    std::vector<double> w;
    w.reserve(pts_.size());
    for (const auto& p : pts_)
      if (p.y == y) w.push_back(p.w);
    return pairwise_sum(w);
  }

  /// rho-mass of {x : pred(x)}; restrict to one label via `label` (-1: both).
  double mass(const std::function<bool(std::span<const double>)>& pred,
              int label = -1) const {
    std::vector<double> w;
    w.reserve(pts_.size());
    for (const auto& p : pts_)
      if ((label < 0 || p.y == label) && pred(p.x)) w.push_back(p.w);
    return pairwise_sum(w);
  }

  // {"d": int, "points": [{"x": [...], "y": 0|1, "w": float}, ...]}
  // Weights are optional: omitted on all points means uniform; any given
  // weights are renormalized to sum to 1.
  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : pts_)
      pts.push_back({{"x", p.x}, {"y", p.y}, {"w", p.w}});
    return {{"d", d_}, {"points", std::move(pts)}};
  }

  static LabeledDataset from_json(const nlohmann::json& j) {
    if (!j.contains("d") || !j.contains("points"))
      throw std::invalid_argument("dataset: missing \"d\" or \"points\"");
    const int d = j.at("d").get<int>();
    const auto& arr = j.at("points");
    if (!arr.is_array() || arr.empty())
      throw std::invalid_argument("dataset: \"points\" must be a nonempty array");
    std::vector<LabeledPoint> pts;
    pts.reserve(arr.size());
    std::size_t n_weighted = 0;
    for (const auto& e : arr) {
      LabeledPoint p;
      p.x = e.at("x").get<Vec>();
      if (static_cast<int>(p.x.size()) != d)
        throw std::invalid_argument("dataset: point dimension mismatch");
      p.y = e.at("y").get<int>();
      if (e.contains("w")) {
        p.w = e.at("w").get<double>();
        ++n_weighted;
      } else {
        p.w = 1.0;
      }
      pts.push_back(std::move(p));
    }
    if (n_weighted != 0 && n_weighted != arr.size())
      throw std::invalid_argument(
          "dataset: weights must be given on all points or none");
    std::vector<double> w(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) w[i] = pts[i].w;
    const double total = pairwise_sum(w);
    if (!(total > 0.0))
      throw std::invalid_argument("dataset: weights must have positive sum");
    for (auto& p : pts) p.w /= total;
    return probability(std::move(pts));
  }

 private:
  explicit LabeledDataset(std::vector<LabeledPoint> pts)
      : pts_(std::move(pts)) {
    if (pts_.empty())
      throw std::invalid_argument("LabeledDataset: needs at least one point");
    d_ = static_cast<int>(pts_[0].x.size());
    if (d_ < 1) throw std::invalid_argument("LabeledDataset: d must be >= 1");
    for (const auto& p : pts_) {
      if (static_cast<int>(p.x.size()) != d_)
        throw std::invalid_argument("LabeledDataset: inconsistent dimensions");
      if (p.y != 0 && p.y != 1)
        throw std::invalid_argument("LabeledDataset: labels must be 0 or 1");
      if (!(p.w > 0.0) || !std::isfinite(p.w))
        throw std::invalid_argument(
            "LabeledDataset: weights must be positive and finite");
    }
  }

  std::vector<LabeledPoint> pts_;
  int d_ = 0;
};

}  // namespace prl
