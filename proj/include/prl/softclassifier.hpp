#pragma once

// Soft classifiers u : R^d -> [0, 1] with exact parameter gradients, the
// relaxation layer on which the smoothed risks and the CVaR trainer operate.
//
// Variants: Constant, LinearSigmoid sigma(w.x + b), Mlp1 (one tanh hidden
// layer, logistic output), GridFunction (piecewise constant on a grid box,
// 0 outside the box). Parameters are packed into one flat vector so generic
// finite-difference checks and SGD steps see every variant the same way.

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prl/grid.hpp"
#include "prl/hardset.hpp"
#include "prl/vec.hpp"

namespace prl {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("logit: argument must lie in (0, 1)");
  return std::log(p / (1.0 - p));
}

class SoftClassifier {
 public:
  enum class Kind { Constant, LinearSigmoid, Mlp1, GridFunction };

  static SoftClassifier constant(double c, int d) {
    if (!(c >= 0.0 && c <= 1.0))
      throw std::invalid_argument("constant: value must lie in [0, 1]");
    if (d < 1) throw std::invalid_argument("constant: d must be >= 1");
    SoftClassifier u;
    u.kind_ = Kind::Constant;
    u.d_ = d;
    u.params_ = {c};
    return u;
  }

  static SoftClassifier linear_sigmoid(Vec w, double b) {
    if (w.empty()) throw std::invalid_argument("linear_sigmoid: empty w");
    SoftClassifier u;
    u.kind_ = Kind::LinearSigmoid;
    u.d_ = static_cast<int>(w.size());
    u.params_ = std::move(w);
    u.params_.push_back(b);
    return u;
  }

  /// One hidden tanh layer of width h; params = [W1 (h x d, row-major),
  /// b1 (h), w2 (h), b2], output sigma(w2 . tanh(W1 x + b1) + b2).
  static SoftClassifier mlp1(int d, int hidden, Vec params) {
    if (d < 1 || hidden < 1)
      throw std::invalid_argument("mlp1: d and hidden must be >= 1");
    const std::size_t need =
        static_cast<std::size_t>(hidden) * d + 2u * hidden + 1u;
    if (params.size() != need)
      throw std::invalid_argument("mlp1: expected " + std::to_string(need) +
                                  " parameters, got " +
                                  std::to_string(params.size()));
    SoftClassifier u;
    u.kind_ = Kind::Mlp1;
    u.d_ = d;
    u.hidden_ = hidden;
    u.params_ = std::move(params);
    return u;
  }

  /// Piecewise constant on grid cells; 0 outside the grid box, so threshold
  /// sets {u >= t} with t > 0 never extend past the box.
  static SoftClassifier grid_function(GridSpec grid, Vec values) {
    grid.validate();
    if (values.size() != grid.cell_count())
      throw std::invalid_argument("grid_function: values/cells mismatch");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("grid_function: values must lie in [0, 1]");
    SoftClassifier u;
    u.kind_ = Kind::GridFunction;
    u.d_ = grid.dim();
    u.grid_ = std::move(grid);
    u.params_ = std::move(values);
    return u;
  }

  Kind kind() const { return kind_; }
  int dim() const { return d_; }
  int hidden() const { return hidden_; }
  const GridSpec& grid() const {
    if (kind_ != Kind::GridFunction)
      throw std::logic_error("grid(): not a GridFunction");
    return grid_;
  }

  const Vec& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  SoftClassifier with_params(Vec p) const {
    if (p.size() != params_.size())
      throw std::invalid_argument("with_params: size mismatch");
    if (kind_ == Kind::Constant && !(p[0] >= 0.0 && p[0] <= 1.0))
      throw std::invalid_argument("with_params: constant outside [0, 1]");
    if (kind_ == Kind::GridFunction)
      for (double v : p)
        if (!(v >= 0.0 && v <= 1.0))
          throw std::invalid_argument("with_params: grid value outside [0, 1]");
    SoftClassifier u = *this;
    u.params_ = std::move(p);
    return u;
  }

  double eval(std::span<const double> x) const {
    check_dim(x);
    switch (kind_) {
      case Kind::Constant:
        return params_[0];
      case Kind::LinearSigmoid: {
        double z = params_[static_cast<std::size_t>(d_)];
        for (int i = 0; i < d_; ++i) z += params_[i] * x[i];
        return sigmoid(z);
      }
      case Kind::Mlp1:
        return mlp_forward(x, nullptr);
      case Kind::GridFunction: {
        const auto c = grid_.cell_of(x);
        return c ? params_[*c] : 0.0;
      }
    }
    return 0.0;
  }
  double eval(const Vec& x) const { return eval(std::span<const double>(x)); }

  /// Value and gradient with respect to the packed parameter vector.
  double eval_grad(std::span<const double> x, Vec* grad) const {
    check_dim(x);
    grad->assign(params_.size(), 0.0);
    switch (kind_) {
      case Kind::Constant:
        (*grad)[0] = 1.0;
        return params_[0];
      case Kind::LinearSigmoid: {
        double z = params_[static_cast<std::size_t>(d_)];
        for (int i = 0; i < d_; ++i) z += params_[i] * x[i];
        const double u = sigmoid(z);
        const double s = u * (1.0 - u);
        for (int i = 0; i < d_; ++i) (*grad)[i] = s * x[i];
        (*grad)[static_cast<std::size_t>(d_)] = s;
        return u;
      }
      case Kind::Mlp1:
        return mlp_forward(x, grad);
      case Kind::GridFunction: {
        const auto c = grid_.cell_of(x);
        if (!c) return 0.0;
        (*grad)[*c] = 1.0;
        return params_[*c];
      }
    }
    return 0.0;
  }

  /// The value set of a piecewise-constant classifier (0 for the region
  /// outside a grid box included); nullopt for the smooth variants.
  std::optional<std::vector<double>> finite_values() const {
    if (kind_ == Kind::Constant)
      return std::vector<double>{0.0, params_[0]};
    if (kind_ == Kind::GridFunction) {
      std::set<double> s(params_.begin(), params_.end());
      s.insert(0.0);
      return std::vector<double>(s.begin(), s.end());
    }
    return std::nullopt;
  }

  /// Superlevel set {x : u(x) >= t}. Exact for Constant, GridFunction and
  /// LinearSigmoid (for the latter the returned open half-space differs from
  /// {u >= t} only on the Lebesgue-null boundary hyperplane). Mlp1 has no
  /// intrinsic box, so it requires the rasterizing overload.
  HardSet threshold(double t) const {
    switch (kind_) {
      case Kind::Constant:
        return params_[0] >= t ? HardSet::whole_space(d_) : HardSet::empty(d_);
      case Kind::GridFunction: {
        GridMaskData m{grid_, std::vector<std::uint8_t>(params_.size(), 0)};
        for (std::size_t c = 0; c < params_.size(); ++c)
          m.bits[c] = params_[c] >= t ? 1 : 0;
        return HardSet::grid_mask(std::move(m));
      }
      case Kind::LinearSigmoid: {
        if (t <= 0.0) return HardSet::whole_space(d_);
        if (t >= 1.0) return HardSet::empty(d_);  // sigma never attains 1
        Vec w(params_.begin(), params_.begin() + d_);
        const double b = params_[static_cast<std::size_t>(d_)];
        const double n = norm2(w);
        if (n == 0.0)
          return sigmoid(b) >= t ? HardSet::whole_space(d_)
                                 : HardSet::empty(d_);
        return HardSet::half_space(std::move(w), logit(t) - b);
      }
      case Kind::Mlp1:
        throw std::invalid_argument(
            "threshold: Mlp1 has no intrinsic grid; pass a raster GridSpec");
    }
    throw std::logic_error("threshold: unreachable");
  }

  /// Rasterized superlevel set: cell centers sampled on `raster`.
  HardSet threshold(double t, const GridSpec& raster) const {
    raster.validate();
    if (raster.dim() != d_)
      throw std::invalid_argument("threshold: raster dimension mismatch");
    return HardSet::grid_mask_from(
        raster, [&](std::span<const double> x) { return eval(x) >= t; });
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    switch (kind_) {
      case Kind::Constant:
        return {{"variant", "constant"}, {"c", params_[0]}, {"d", d_}};
      case Kind::LinearSigmoid: {
        Vec w(params_.begin(), params_.begin() + d_);
        return {{"variant", "linear_sigmoid"},
                {"w", w},
                {"b", params_[static_cast<std::size_t>(d_)]}};
      }
      case Kind::Mlp1:
        return {{"variant", "mlp1"},
                {"d", d_},
                {"hidden", hidden_},
                {"params", params_}};
      case Kind::GridFunction: {
        json g = grid_.to_json();
        g["variant"] = "grid_function";
        g["values"] = params_;
        return g;
      }
    }
    return {};
  }

  static SoftClassifier from_json(const nlohmann::json& j) {
    const std::string v = j.at("variant").get<std::string>();
    if (v == "constant")
      return constant(j.at("c").get<double>(), j.at("d").get<int>());
    if (v == "linear_sigmoid")
      return linear_sigmoid(j.at("w").get<Vec>(), j.at("b").get<double>());
    if (v == "mlp1")
      return mlp1(j.at("d").get<int>(), j.at("hidden").get<int>(),
                  j.at("params").get<Vec>());
    if (v == "grid_function")
      return grid_function(GridSpec::from_json(j), j.at("values").get<Vec>());
    throw std::invalid_argument("SoftClassifier: unknown variant \"" + v +
                                "\"");
  }

 private:
  void check_dim(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != d_)
      throw std::invalid_argument("SoftClassifier: dimension mismatch");
  }

  double mlp_forward(std::span<const double> x, Vec* grad) const {
    const int h = hidden_, d = d_;
    const double* W1 = params_.data();
    const double* b1 = W1 + static_cast<std::size_t>(h) * d;
    const double* w2 = b1 + h;
    const double b2 = w2[h];
    std::vector<double> a(static_cast<std::size_t>(h));
    double z2 = b2;
    for (int j = 0; j < h; ++j) {
      double z = b1[j];
      for (int i = 0; i < d; ++i) z += W1[static_cast<std::size_t>(j) * d + i] * x[i];
      a[j] = std::tanh(z);
      z2 += w2[j] * a[j];
    }
    const double u = sigmoid(z2);
    if (grad) {
      const double s = u * (1.0 - u);
      double* gW1 = grad->data();
      double* gb1 = gW1 + static_cast<std::size_t>(h) * d;
      double* gw2 = gb1 + h;
      for (int j = 0; j < h; ++j) {
        gw2[j] = s * a[j];
        const double back = s * w2[j] * (1.0 - a[j] * a[j]);
        gb1[j] = back;
        for (int i = 0; i < d; ++i)
          gW1[static_cast<std::size_t>(j) * d + i] = back * x[i];
      }
      gw2[h] = s;  // b2
    }
    return u;
  }

  Kind kind_ = Kind::Constant;
  int d_ = 1;
  int hidden_ = 0;
  GridSpec grid_{};
  Vec params_{0.0};
};

}  // namespace prl
