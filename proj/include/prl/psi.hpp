#pragma once

// The weight functions Psi: [0, 1] -> [0, inf) that turn a perturbation
// mass into a penalty. The probabilistic risks and perimeters are all
// parameterized by one of these:
//
//   indicator_gt:p   1{t > p}, the original "misclassified with probability
//                    above p" penalty (not concave unless p = 0)
//   cvar_ramp:p      min{t/p, 1}, the smallest concave majorant of the
//                    indicator; p > 1 is allowed and gives the line t/p
//   esssup_zero      1{t > 0}, the adversarial endpoint
//   identity         t, the averaging endpoint
//   piecewise:...    user-supplied concave or general piecewise-linear shape
//
// eval() tolerates arguments a hair outside [0, 1] (|slack| <= 1e-9) so
// that Monte Carlo masses and floating-point sums can be fed in directly.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace prl {

class PsiSpec {
 public:
  enum class Family { IndicatorGtP, CvarRamp, EsssupZero, Identity, PiecewiseLinear };

  static PsiSpec indicator_gt(double p) {
    if (!(p >= 0.0 && p < 1.0))
      throw std::invalid_argument("indicator_gt: p must lie in [0, 1)");
    return PsiSpec(Family::IndicatorGtP, p, {});
  }

  /// min{t/p, 1}. p > 1 is deliberately allowed: the ramp then never
  /// saturates on [0, 1] and the risk degenerates toward the standard one.
  static PsiSpec cvar_ramp(double p) {
    if (!(p > 0.0) || !std::isfinite(p))
      throw std::invalid_argument("cvar_ramp: p must be positive and finite");
    return PsiSpec(Family::CvarRamp, p, {});
  }

  static PsiSpec esssup_zero() { return PsiSpec(Family::EsssupZero, 0.0, {}); }
  static PsiSpec identity() { return PsiSpec(Family::Identity, 0.0, {}); }

  /// Knots (t_i, v_i) with t_0 = 0, t_last = 1, t strictly increasing,
  /// v finite and >= 0. Linear interpolation between knots.
  static PsiSpec piecewise_linear(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2)
      throw std::invalid_argument("piecewise_linear: needs at least 2 knots");
    if (knots.front().first != 0.0 || knots.back().first != 1.0)
      throw std::invalid_argument("piecewise_linear: knots must span [0, 1]");
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!std::isfinite(knots[i].second) || knots[i].second < 0.0)
        throw std::invalid_argument("piecewise_linear: values must be finite and >= 0");
      if (i > 0 && !(knots[i].first > knots[i - 1].first))
        throw std::invalid_argument("piecewise_linear: knot positions must increase");
    }
    return PsiSpec(Family::PiecewiseLinear, 0.0, std::move(knots));
  }

  Family family() const { return family_; }
  double p() const { return p_; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

  double eval(double t) const {
    if (!(t >= -1e-9 && t <= 1.0 + 1e-9))
      throw std::invalid_argument("PsiSpec::eval: argument outside [0, 1]");
    t = std::clamp(t, 0.0, 1.0);
    switch (family_) {
      case Family::IndicatorGtP:
        return t > p_ ? 1.0 : 0.0;
      case Family::CvarRamp:
        return std::min(t / p_, 1.0);
      case Family::EsssupZero:
        return t > 0.0 ? 1.0 : 0.0;
      case Family::Identity:
        return t;
      case Family::PiecewiseLinear: {
        const auto it = std::upper_bound(
            knots_.begin(), knots_.end(), t,
            [](double a, const std::pair<double, double>& k) { return a < k.first; });
        if (it == knots_.begin()) return knots_.front().second;
        if (it == knots_.end()) return knots_.back().second;
        const auto& [t1, v1] = *it;
        const auto& [t0, v0] = *(it - 1);
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
      }
    }
    throw std::logic_error("PsiSpec: unreachable");
  }

  double operator()(double t) const { return eval(t); }

  double at_zero() const { return eval(0.0); }

  bool is_nondecreasing() const {
    if (family_ != Family::PiecewiseLinear) return true;
    for (std::size_t i = 1; i < knots_.size(); ++i)
      if (knots_[i].second < knots_[i - 1].second) return false;
    return true;
  }

  bool is_concave() const {
    switch (family_) {
      case Family::IndicatorGtP:
        return p_ == 0.0;  // 1{t > 0} is concave; any later jump is not
      case Family::CvarRamp:
      case Family::EsssupZero:
      case Family::Identity:
        return true;
      case Family::PiecewiseLinear: {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < knots_.size(); ++i) {
          const double slope = (knots_[i].second - knots_[i - 1].second) /
                               (knots_[i].first - knots_[i - 1].first);
          if (slope > prev + 1e-12) return false;
          prev = slope;
        }
        return true;
      }
    }
    throw std::logic_error("PsiSpec: unreachable");
  }

  /// Arguments in (0, 1) where Psi has a kink or jump. Quadratures over
  /// Psi(F(t)) split their domain at the preimages of these levels.
  std::vector<double> kink_levels() const {
    switch (family_) {
      case Family::IndicatorGtP:
        return p_ > 0.0 ? std::vector<double>{p_} : std::vector<double>{};
      case Family::CvarRamp:
        return p_ < 1.0 ? std::vector<double>{p_} : std::vector<double>{};
      case Family::EsssupZero:
      case Family::Identity:
        return {};
      case Family::PiecewiseLinear: {
        std::vector<double> out;
        for (std::size_t i = 1; i + 1 < knots_.size(); ++i)
          out.push_back(knots_[i].first);
        return out;
      }
    }
    throw std::logic_error("PsiSpec: unreachable");
  }

  /// Canonical string form, also accepted by parse().
  std::string name() const {
    char buf[64];
    switch (family_) {
      case Family::IndicatorGtP:
        std::snprintf(buf, sizeof buf, "indicator_gt:%.12g", p_);
        return buf;
      case Family::CvarRamp:
        std::snprintf(buf, sizeof buf, "cvar_ramp:%.12g", p_);
        return buf;
      case Family::EsssupZero:
        return "esssup_zero";
      case Family::Identity:
        return "identity";
      case Family::PiecewiseLinear: {
        std::string s = "piecewise:";
        for (std::size_t i = 0; i < knots_.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.12g,%.12g", knots_[i].first,
                        knots_[i].second);
          if (i) s += ';';
          s += buf;
        }
        return s;
      }
    }
    throw std::logic_error("PsiSpec: unreachable");
  }

  /// Accepts "indicator_gt:P", "cvar_ramp:P", "esssup_zero", "identity",
  /// "piecewise:t0,v0;t1,v1;...".
  static PsiSpec parse(const std::string& s) {
    auto number = [&](const std::string& text) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size())
        throw std::invalid_argument("psi: malformed number \"" + text + "\"");
      return v;
    };
    if (s == "esssup_zero") return esssup_zero();
    if (s == "identity") return identity();
    if (s.rfind("indicator_gt:", 0) == 0) return indicator_gt(number(s.substr(13)));
    if (s.rfind("cvar_ramp:", 0) == 0) return cvar_ramp(number(s.substr(10)));
    if (s.rfind("piecewise:", 0) == 0) {
      std::vector<std::pair<double, double>> knots;
      std::string rest = s.substr(10);
      std::size_t pos = 0;
      while (pos <= rest.size()) {
        const std::size_t semi = std::min(rest.find(';', pos), rest.size());
        const std::string pair = rest.substr(pos, semi - pos);
        const std::size_t comma = pair.find(',');
        if (comma == std::string::npos)
          throw std::invalid_argument("psi: piecewise knot needs \"t,v\"");
        knots.emplace_back(number(pair.substr(0, comma)),
                           number(pair.substr(comma + 1)));
        pos = semi + 1;
      }
      return piecewise_linear(std::move(knots));
    }
    throw std::invalid_argument("psi: unknown spec \"" + s + "\"");
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    switch (family_) {
      case Family::IndicatorGtP:
        return {{"family", "indicator_gt"}, {"p", p_}};
      case Family::CvarRamp:
        return {{"family", "cvar_ramp"}, {"p", p_}};
      case Family::EsssupZero:
        return {{"family", "esssup_zero"}};
      case Family::Identity:
        return {{"family", "identity"}};
      case Family::PiecewiseLinear: {
        json k = json::array();
        for (const auto& [t, v] : knots_) k.push_back({t, v});
        return {{"family", "piecewise_linear"}, {"knots", k}};
      }
    }
    throw std::logic_error("PsiSpec: unreachable");
  }

  static PsiSpec from_json(const nlohmann::json& j) {
    const std::string f = j.at("family").get<std::string>();
    if (f == "indicator_gt") return indicator_gt(j.at("p").get<double>());
    if (f == "cvar_ramp") return cvar_ramp(j.at("p").get<double>());
    if (f == "esssup_zero") return esssup_zero();
    if (f == "identity") return identity();
    if (f == "piecewise_linear") {
      std::vector<std::pair<double, double>> knots;
      for (const auto& k : j.at("knots"))
        knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
      return piecewise_linear(std::move(knots));
    }
    throw std::invalid_argument("psi: unknown family \"" + f + "\"");
  }

 private:
  PsiSpec(Family f, double p, std::vector<std::pair<double, double>> knots)
      : family_(f), p_(p), knots_(std::move(knots)) {}

  Family family_;
  double p_;
  std::vector<std::pair<double, double>> knots_;
};

}  // namespace prl
