#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mire {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// v / |v|, or nullopt when |v| <= eps.
inline std::optional<Vec> try_normalized(Vec v, double eps = 1e-12) {
  const double n = norm(v);
  if (!(n > eps)) return std::nullopt;
  for (auto& x : v) x /= n;
  return v;
}

inline Vec normalized(Vec v) {
  auto r = try_normalized(std::move(v));
  if (!r) throw std::invalid_argument("normalized: vector norm below epsilon");
  return *r;
}

inline Vec mean_of(const std::vector<Vec>& rows) {
  if (rows.empty()) throw std::invalid_argument("mean_of: no rows");
  Vec m(rows.front().size(), 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += r[i];
  for (auto& x : m) x /= static_cast<double>(rows.size());
  return m;
}

}  // namespace mire
