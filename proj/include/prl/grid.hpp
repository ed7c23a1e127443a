#pragma once

// Axis-aligned grids over a box [lo, hi), shared by grid masks, grid
// functions and the mask-space optimizer. Cells are half-open boxes
// [lo + k*h, lo + (k+1)*h) indexed row-major with axis 0 slowest.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prl/vec.hpp"

namespace prl {

struct GridSpec {
  Vec lo, hi;
  std::vector<int> res;  // cells per axis, each >= 1

  void validate() const {
    if (lo.size() != hi.size() || lo.size() != res.size() || lo.empty())
      throw std::invalid_argument("GridSpec: lo/hi/res size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!(hi[i] > lo[i]))
        throw std::invalid_argument("GridSpec: needs hi > lo on every axis");
      if (res[i] < 1)
        throw std::invalid_argument("GridSpec: needs res >= 1 on every axis");
    }
    if (cell_count() > (1u << 26))
      throw std::invalid_argument("GridSpec: too many cells");
  }

  int dim() const { return static_cast<int>(lo.size()); }

  std::size_t cell_count() const {
    std::size_t n = 1;
    for (int r : res) n *= static_cast<std::size_t>(r);
    return n;
  }

  double step(int axis) const {
    return (hi[axis] - lo[axis]) / res[axis];
  }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= step(a);
    return v;
  }

  /// Cell containing x, or nullopt when x lies outside [lo, hi).
  std::optional<std::size_t> cell_of(std::span<const double> x) const {
    std::size_t idx = 0;
    for (int a = 0; a < dim(); ++a) {
      if (x[a] < lo[a] || x[a] >= hi[a]) return std::nullopt;
      auto k = static_cast<long long>((x[a] - lo[a]) / step(a));
      if (k < 0) k = 0;
      if (k >= res[a]) k = res[a] - 1;  // guards roundoff at the upper face
      idx = idx * static_cast<std::size_t>(res[a]) + static_cast<std::size_t>(k);
    }
    return idx;
  }

  std::vector<int> cell_coords(std::size_t idx) const {
    std::vector<int> k(static_cast<std::size_t>(dim()));
    for (int a = dim() - 1; a >= 0; --a) {
      k[static_cast<std::size_t>(a)] = static_cast<int>(idx % res[a]);
      idx /= static_cast<std::size_t>(res[a]);
    }
    return k;
  }

  void cell_bounds(std::size_t idx, Vec* clo, Vec* chi) const {
    const auto k = cell_coords(idx);
    clo->resize(lo.size());
    chi->resize(lo.size());
    for (int a = 0; a < dim(); ++a) {
      (*clo)[a] = lo[a] + k[a] * step(a);
      (*chi)[a] = lo[a] + (k[a] + 1) * step(a);
    }
  }

  Vec cell_center(std::size_t idx) const {
    const auto k = cell_coords(idx);
    Vec c(lo.size());
    for (int a = 0; a < dim(); ++a) c[a] = lo[a] + (k[a] + 0.5) * step(a);
    return c;
  }

  nlohmann::json to_json() const {
    return {{"lo", lo}, {"hi", hi}, {"res", res}};
  }

  static GridSpec from_json(const nlohmann::json& j) {
    GridSpec g{j.at("lo").get<Vec>(), j.at("hi").get<Vec>(),
               j.at("res").get<std::vector<int>>()};
    g.validate();
    return g;
  }
};

namespace detail {

// RFC 4648 base64 with padding; carries packed grid-mask bits in JSON.
inline std::string base64_encode(const std::vector<std::uint8_t>& in) {
  static const char* tbl =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve(((in.size() + 2) / 3) * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(in[i]) << 16;
    if (i + 1 < in.size()) v |= static_cast<std::uint32_t>(in[i + 1]) << 8;
    if (i + 2 < in.size()) v |= static_cast<std::uint32_t>(in[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? tbl[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < in.size() ? tbl[v & 63] : '=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw std::invalid_argument("base64: invalid character");
  };
  if (in.size() % 4 != 0) throw std::invalid_argument("base64: bad length");
  std::vector<std::uint8_t> out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    int a = val(in[i]), b = val(in[i + 1]), c = val(in[i + 2]),
        d = val(in[i + 3]);
    if (a < 0 || b < 0) throw std::invalid_argument("base64: bad padding");
    out.push_back(static_cast<std::uint8_t>((a << 2) | (b >> 4)));
    if (c >= 0) out.push_back(static_cast<std::uint8_t>((b << 4) | (c >> 2)));
    if (d >= 0) {
      if (c < 0) throw std::invalid_argument("base64: bad padding");
      out.push_back(static_cast<std::uint8_t>((c << 6) | d));
    }
  }
  return out;
}

}  // namespace detail

}  // namespace prl
