#include "mire/theory.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "mire/rng.hpp"

namespace mire::theory {

void DiscreteJoint::validate() const {
  if (bins == 0 || prior.empty()) throw std::invalid_argument("DiscreteJoint: needs bins and classes");
  if (conditional.size() != prior.size()) throw std::invalid_argument("DiscreteJoint: one conditional row per class");
  auto check = [](std::span<const double> p, const std::string& what) {
    double s = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw std::invalid_argument(what + " has a negative or NaN entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument(what + " sums to " + std::to_string(s));
  };
  check(prior, "prior");
  for (std::size_t y = 0; y < conditional.size(); ++y) {
    if (conditional[y].size() != bins) throw std::invalid_argument("DiscreteJoint: row length != bins");
    check(conditional[y], "p(z|y=" + std::to_string(y) + ")");
  }
}

std::vector<double> DiscreteJoint::marginal() const {
  std::vector<double> p(bins, 0.0);
  for (std::size_t y = 0; y < classes(); ++y)
    for (std::size_t z = 0; z < bins; ++z) p[z] += prior[y] * conditional[y][z];
  return p;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double marginal_entropy(const DiscreteJoint& j) { return entropy(j.marginal()); }

double conditional_entropy_z_given_y(const DiscreteJoint& j) {
  double h = 0.0;
  for (std::size_t y = 0; y < j.classes(); ++y) h += j.prior[y] * entropy(j.conditional[y]);
  return h;
}

double conditional_entropy_y_given_z(const DiscreteJoint& j) {
  // H(Y|Z) = H(Y) + H(Z|Y) - H(Z)
  return std::max(0.0, entropy(j.prior) + conditional_entropy_z_given_y(j) - marginal_entropy(j));
}

double lambda_objective(const DiscreteJoint& j, double lambda) {
  return lambda * marginal_entropy(j) - conditional_entropy_z_given_y(j);
}

std::vector<double> project_simplex(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("project_simplex: empty vector");
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
  return out;
}

std::vector<std::vector<double>> objective_gradient(const DiscreteJoint& j, double lambda, double log_floor) {
  // d/dq_y(z) [lambda H(Z) - H(Z|Y)] = pi_y [log q_y(z) - lambda log p(z) + 1 - lambda]
  const auto p = j.marginal();
  auto safe_log = [&](double v) { return std::log(std::max(v, log_floor)); };
  std::vector<std::vector<double>> g(j.classes(), std::vector<double>(j.bins));
  for (std::size_t y = 0; y < j.classes(); ++y)
    for (std::size_t z = 0; z < j.bins; ++z)
      g[y][z] = j.prior[y] * (safe_log(j.conditional[y][z]) - lambda * safe_log(p[z]) + 1.0 - lambda);
  return g;
}

Diagnostics diagnose(const DiscreteJoint& j, double lambda) {
  Diagnostics d;
  d.objective = lambda_objective(j, lambda);
  d.marginal = j.marginal();
  d.h_z = entropy(d.marginal);
  d.h_y_given_z = conditional_entropy_y_given_z(j);
  for (std::size_t z = 0; z < j.bins; ++z) {
    double top = 0.0;
    for (std::size_t y = 0; y < j.classes(); ++y) top = std::max(top, j.prior[y] * j.conditional[y][z]);
    d.overlap += d.marginal[z] - top;
    d.uniform_deviation = std::max(d.uniform_deviation, std::abs(d.marginal[z] - 1.0 / static_cast<double>(j.bins)));
  }
  d.overlap = std::max(0.0, d.overlap);
  for (const auto& row : j.conditional)
    d.support_sizes.push_back(static_cast<std::size_t>(
        std::count_if(row.begin(), row.end(), [](double v) { return v > kSupportThreshold; })));
  return d;
}

namespace {

std::vector<double> dirichlet_row(std::size_t n, Rng& rng) {
  std::vector<double> r(n);
  double s = 0.0;
  for (auto& v : r) {
    v = -std::log(1.0 - rng.uniform());
    s += v;
  }
  for (auto& v : r) v /= s;
  return r;
}

void for_each_composition(std::size_t parts, int total, std::vector<int>& cur, std::size_t k,
                          const std::function<void(const std::vector<int>&)>& fn) {
  if (k + 1 == parts) {
    cur[k] = total;
    fn(cur);
    return;
  }
  for (int a = 0; a <= total; ++a) {
    cur[k] = a;
    for_each_composition(parts, total - a, cur, k + 1, fn);
  }
}

constexpr int kGridResolution = 20;
constexpr double kGridBudget = 2e7;

double binomial(double n, double k) {
  double r = 1.0;
  for (double i = 1.0; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

SearchResult grid_search(DiscreteJoint base, double lambda) {
  std::vector<std::vector<double>> rows;
  std::vector<int> cur(base.bins);
  for_each_composition(base.bins, kGridResolution, cur, 0, [&](const std::vector<int>& c) {
    std::vector<double> r(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) r[i] = c[i] / static_cast<double>(kGridResolution);
    rows.push_back(std::move(r));
  });
  const std::size_t classes = base.classes();
  std::vector<std::size_t> idx(classes, 0);
  DiscreteJoint best = base;
  double best_val = -std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t y = 0; y < classes; ++y) base.conditional[y] = rows[idx[y]];
    const double v = lambda_objective(base, lambda);
    if (v > best_val + 1e-15) {
      best_val = v;
      best = base;
    }
    std::size_t y = 0;
    while (y < classes && ++idx[y] == rows.size()) idx[y++] = 0;
    if (y == classes) break;
  }
  SearchResult res{best, diagnose(best, lambda)};
  res.diagnostics.exhaustive = true;
  return res;
}

}  // namespace

SearchResult maximize_lambda_objective(std::size_t bins, std::size_t classes, double lambda, const SearchConfig& cfg,
                                       std::vector<double> prior) {
  if (classes == 0 || bins < classes) throw std::invalid_argument("maximize_lambda_objective: need bins >= classes >= 1");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("maximize_lambda_objective: lambda must be positive");
  if (cfg.starts == 0 || !(cfg.step > 0.0)) throw std::invalid_argument("maximize_lambda_objective: bad search config");
  if (prior.empty()) prior.assign(classes, 1.0 / static_cast<double>(classes));
  if (prior.size() != classes) throw std::invalid_argument("maximize_lambda_objective: prior size != classes");

  DiscreteJoint base{bins, prior, std::vector<std::vector<double>>(classes, std::vector<double>(bins, 1.0 / static_cast<double>(bins)))};
  base.validate();

  const double grid_points = binomial(kGridResolution + bins - 1.0, bins - 1.0);
  if (cfg.allow_grid && bins <= 4 && std::pow(grid_points, static_cast<double>(classes)) <= kGridBudget)
    return grid_search(base, lambda);

  Rng rng(derive_seed(cfg.seed, 0x7468656f7279));
  DiscreteJoint best = base;
  double best_val = -std::numeric_limits<double>::infinity();
  std::size_t converged = 0;
  for (std::size_t s = 0; s < cfg.starts; ++s) {
    DiscreteJoint j = base;
    for (auto& row : j.conditional) row = dirichlet_row(bins, rng);
    bool done = false;
    for (std::size_t it = 0; it < cfg.iterations && !done; ++it) {
      const auto g = objective_gradient(j, lambda, cfg.log_floor);
      double moved = 0.0;
      for (std::size_t y = 0; y < classes; ++y) {
        std::vector<double> step(bins);
        for (std::size_t z = 0; z < bins; ++z) step[z] = j.conditional[y][z] + cfg.step * g[y][z];
        auto next = project_simplex(step);
        for (std::size_t z = 0; z < bins; ++z) moved = std::max(moved, std::abs(next[z] - j.conditional[y][z]));
        j.conditional[y] = std::move(next);
      }
      done = moved <= cfg.tolerance;
    }
    converged += done ? 1 : 0;
    const double v = lambda_objective(j, lambda);
    if (v > best_val) {
      best_val = v;
      best = j;
    }
  }
  SearchResult res{best, diagnose(best, lambda)};
  res.diagnostics.converged_starts = converged;
  res.diagnostics.total_starts = cfg.starts;
  return res;
}

DiscreteJoint redistribute_within_support(const DiscreteJoint& j, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7265646973));
  DiscreteJoint out = j;
  for (auto& row : out.conditional) {
    std::vector<std::size_t> support;
    for (std::size_t z = 0; z < row.size(); ++z)
      if (row[z] > kSupportThreshold) support.push_back(z);
    const auto w = dirichlet_row(support.size(), rng);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t k = 0; k < support.size(); ++k) row[support[k]] = w[k];
  }
  return out;
}

ChordReport chord_concavity(std::size_t bins, std::size_t classes, double lambda, ChordDomain domain,
                            std::size_t trials, std::uint64_t seed) {
  if (classes == 0 || bins < classes) throw std::invalid_argument("chord_concavity: need bins >= classes >= 1");
  Rng rng(derive_seed(seed, 0x63686f7264));
  const std::size_t block = bins / classes;
  auto random_row = [&](std::size_t y) {
    if (domain == ChordDomain::general) return dirichlet_row(bins, rng);
    const std::size_t lo = y * block, hi = (y + 1 == classes) ? bins : lo + block;
    std::vector<double> row(bins, 0.0);
    auto part = dirichlet_row(hi - lo, rng);
    std::copy(part.begin(), part.end(), row.begin() + static_cast<std::ptrdiff_t>(lo));
    return row;
  };
  ChordReport rep;
  rep.worst_gap = -std::numeric_limits<double>::infinity();
  DiscreteJoint j{bins, std::vector<double>(classes, 1.0 / static_cast<double>(classes)), {}};
  for (std::size_t t = 0; t < trials; ++t) {
    j.conditional.clear();
    for (std::size_t y = 0; y < classes; ++y) j.conditional.push_back(random_row(y));
    const std::size_t y = rng.index(classes);
    const auto a = random_row(y), b = random_row(y);
    std::vector<double> mid(bins);
    for (std::size_t z = 0; z < bins; ++z) mid[z] = 0.5 * (a[z] + b[z]);
    j.conditional[y] = a;
    const double fa = lambda_objective(j, lambda);
    j.conditional[y] = b;
    const double fb = lambda_objective(j, lambda);
    j.conditional[y] = mid;
    const double fm = lambda_objective(j, lambda);
    const double gap = 0.5 * (fa + fb) - fm;
    rep.worst_gap = std::max(rep.worst_gap, gap);
    if (gap > 1e-9) ++rep.violations;
    ++rep.trials;
  }
  return rep;
}

}  // namespace mire::theory
