#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mire/rng.hpp"
#include "mire/theory.hpp"

using namespace mire;
using namespace mire::theory;

namespace {

DiscreteJoint joint(std::vector<std::vector<double>> rows) {
  DiscreteJoint j;
  j.bins = rows.front().size();
  j.prior.assign(rows.size(), 1.0 / static_cast<double>(rows.size()));
  j.conditional = std::move(rows);
  return j;
}

std::vector<double> random_simplex(std::size_t k, Rng& rng) {
  std::vector<double> v(k);
  double s = 0.0;
  for (auto& x : v) s += x = -std::log(1.0 - rng.uniform());
  for (auto& x : v) x /= s;
  return v;
}

double mutual_information(const DiscreteJoint& j) {
  // sum_{y,z} p(y) p(z|y) log(p(z|y) / p(z)), computed directly.
  const auto pz = j.marginal();
  double mi = 0.0;
  for (std::size_t y = 0; y < j.classes(); ++y)
    for (std::size_t z = 0; z < j.bins; ++z) {
      const double q = j.conditional[y][z];
      if (q > 0) mi += j.prior[y] * q * std::log(q / pz[z]);
    }
  return mi;
}

}  // namespace

TEST_CASE("theory: objective closed forms") {
  auto det = joint({{1, 0, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 0, 0, 0}});
  for (double lambda : {0.5, 1.0, 1.5})
    CHECK(lambda_objective(det, lambda) == doctest::Approx(lambda * std::numbers::ln2).epsilon(1e-14));

  std::vector<double> flat(8, 1.0 / 8.0);
  auto same = joint({flat, flat});
  for (double lambda : {0.5, 1.0, 1.5})
    CHECK(lambda_objective(same, lambda) == doctest::Approx((lambda - 1.0) * std::log(8.0)).epsilon(1e-14));

  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto j = joint({random_simplex(6, rng), random_simplex(6, rng), random_simplex(6, rng)});
    CHECK(lambda_objective(j, 1.0) == doctest::Approx(mutual_information(j)).epsilon(1e-12));
    // H(Y) - H(Y|Z) + (lambda - 1) H(Z) is the same objective.
    const double hy = entropy(j.prior);
    CHECK(lambda_objective(j, 1.7) ==
          doctest::Approx(hy - conditional_entropy_y_given_z(j) + 0.7 * marginal_entropy(j)).epsilon(1e-12));
  }
}

TEST_CASE("theory: validation and entropy conventions") {
  const std::vector<double> p{0.5, 0.5, 0.0};
  CHECK(entropy(p) == doctest::Approx(std::numbers::ln2));
  auto bad = joint({{0.5, 0.6}, {0.5, 0.5}});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto neg = joint({{1.5, -0.5}, {0.5, 0.5}});
  CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("theory: simplex projection") {
  const std::vector<double> inside{0.2, 0.3, 0.5};
  auto p = project_simplex(inside);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(inside[i]));
  const std::vector<double> v{2.0, 0.0, -1.0};
  CHECK(project_simplex(v) == std::vector<double>{1.0, 0.0, 0.0});
  const std::vector<double> w{0.5, 0.5, 0.5, -3.0};
  auto q = project_simplex(w);
  CHECK(q[0] == doctest::Approx(1.0 / 3.0));
  CHECK(q[3] == 0.0);

  // Projection is the closest simplex point: no random simplex point is nearer.
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(5);
    for (auto& e : x) e = 2.0 * rng.normal();
    auto px = project_simplex(x);
    CHECK(std::accumulate(px.begin(), px.end(), 0.0) == doctest::Approx(1.0));
    auto dist = [&](const std::vector<double>& y) {
      double s = 0.0;
      for (std::size_t i = 0; i < 5; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
      return s;
    };
    for (int k = 0; k < 20; ++k) CHECK(dist(px) <= dist(random_simplex(5, rng)) + 1e-12);
  }
}

TEST_CASE("theory: gradient matches central differences") {
  Rng rng(7);
  auto j = joint({random_simplex(5, rng), random_simplex(5, rng)});
  const double h = 1e-6;
  for (double lambda : {0.5, 1.0, 1.5}) {
    auto g = objective_gradient(j, lambda);
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t z = 0; z < 5; ++z) {
        auto up = j, down = j;
        up.conditional[y][z] += h;
        down.conditional[y][z] -= h;
        // The objective is evaluated off the simplex here; only the formula is compared.
        auto raw = [&](const DiscreteJoint& q) {
          auto pz = q.marginal();
          double hz = 0.0, hzy = 0.0;
          for (double p : pz) hz -= p * std::log(p);
          for (std::size_t c = 0; c < 2; ++c)
            for (double p : q.conditional[c]) hzy -= q.prior[c] * p * std::log(p);
          return lambda * hz - hzy;
        };
        CHECK(g[y][z] == doctest::Approx((raw(up) - raw(down)) / (2 * h)).epsilon(1e-6));
      }
  }
}

TEST_CASE("theory: small lambda concentrates each class on one bin") {
  auto r = maximize_lambda_objective(8, 2, 0.5, SearchConfig{});
  const auto& d = r.diagnostics;
  CHECK(d.converged());
  CHECK(d.support_sizes == std::vector<std::size_t>{1, 1});
  CHECK(d.overlap < 1e-6);
  CHECK(d.h_y_given_z < 1e-6);
  CHECK(std::abs(d.h_z - std::numbers::ln2) < 1e-6);
  CHECK(d.objective == doctest::Approx(0.5 * std::numbers::ln2).epsilon(1e-9));
}

TEST_CASE("theory: large lambda spreads the marginal uniformly over disjoint supports") {
  auto r = maximize_lambda_objective(8, 2, 1.5, SearchConfig{});
  const auto& d = r.diagnostics;
  CHECK(d.converged());
  CHECK(d.uniform_deviation < 1e-3);
  CHECK(d.overlap < 1e-6);
  CHECK(d.h_y_given_z < 1e-6);
  // Optimum: uniform over 8 bins, each class owning 4: 1.5 ln 8 - ln 4.
  CHECK(d.objective == doctest::Approx(1.5 * std::log(8.0) - std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("theory: at lambda = 1 the value ignores the layout inside each support") {
  auto r = maximize_lambda_objective(8, 2, 1.0, SearchConfig{});
  CHECK(r.diagnostics.h_y_given_z < 1e-6);
  CHECK(r.diagnostics.objective == doctest::Approx(std::numbers::ln2).epsilon(1e-9));
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto other = redistribute_within_support(r.best, s);
    other.validate();
    CHECK(std::abs(lambda_objective(other, 1.0) - r.diagnostics.objective) < 1e-9);
  }
}

TEST_CASE("theory: exhaustive grid for tiny K agrees with ascent") {
  SearchConfig grid;
  SearchConfig ascent;
  ascent.allow_grid = false;
  for (double lambda : {0.5, 1.5}) {
    auto a = maximize_lambda_objective(4, 2, lambda, grid);
    auto b = maximize_lambda_objective(4, 2, lambda, ascent);
    CHECK(a.diagnostics.exhaustive);
    CHECK(!b.diagnostics.exhaustive);
    CHECK(a.diagnostics.objective == doctest::Approx(b.diagnostics.objective).epsilon(1e-6));
  }
}

TEST_CASE("theory: chord concavity for lambda >= 1") {
  // On disjoint supports the objective is concave in each class row.
  for (double lambda : {1.0, 1.5, 2.0}) {
    auto rep = chord_concavity(8, 2, lambda, ChordDomain::disjoint, 2000, 1);
    CHECK(rep.trials == 2000);
    CHECK(rep.violations == 0);
  }
  // With full overlap the claim fails: at lambda = 1 the objective is the
  // mutual information, which is convex in p(z|y).
  auto general = chord_concavity(8, 2, 1.0, ChordDomain::general, 2000, 1);
  CHECK(general.violations > 0);
  CHECK(general.worst_gap > 1e-9);
}
