#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "mire/gradcheck.hpp"
#include "mire/losses.hpp"
#include "mire/rng.hpp"

using namespace mire;
using namespace mire::ndgrad;

namespace {

Tensor circle(std::initializer_list<double> degrees, bool grad = false) {
  std::vector<double> v;
  for (double d : degrees) {
    const double r = d * std::numbers::pi / 180.0;
    v.push_back(std::cos(r));
    v.push_back(std::sin(r));
  }
  return Tensor::matrix(degrees.size(), 2, std::move(v), grad);
}

std::vector<std::vector<double>> unit_rows(std::size_t n, std::size_t e, Rng& rng) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(e));
  for (auto& r : rows) {
    double s = 0.0;
    for (auto& x : r) {
      x = rng.normal();
      s += x * x;
    }
    for (auto& x : r) x /= std::sqrt(s);
  }
  return rows;
}

Tensor as_tensor(const std::vector<std::vector<double>>& rows, bool grad = false) {
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::matrix(rows.size(), rows.front().size(), std::move(flat), grad);
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Straight transcription of the MS loss with hard mining on plain vectors.
double ms_reference(const std::vector<std::vector<double>>& z, const std::vector<int>& y, const MsConfig& c) {
  const std::size_t b = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double max_neg = -std::numeric_limits<double>::infinity();
    double min_pos = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < b; ++k) {
      const double s = dotv(z[i], z[k]);
      if (y[k] != y[i]) max_neg = std::max(max_neg, s);
      else if (k != i) min_pos = std::min(min_pos, s);
    }
    double ps = 0.0, ns = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      const double s = dotv(z[i], z[j]);
      if (j != i && y[j] == y[i] && s < max_neg + c.epsilon) ps += std::exp(-c.alpha * (s - c.lambda));
      if (y[j] != y[i] && s > min_pos - c.epsilon) ns += std::exp(c.beta * (s - c.lambda));
    }
    total += std::log(1.0 + ps) / c.alpha + std::log(1.0 + ns) / c.beta;
  }
  return total / static_cast<double>(b);
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST_CASE("ms_loss: empty mining gives zero") {
  MsConfig cfg;
  const std::vector<int> one{0, 0, 0};
  CHECK(ms_loss(circle({0, 40, 80}), one, cfg).item() == 0.0);

  // Positives coincide (S = 1), negatives antipodal (S = -1): thresholds -0.9 and 0.9 exclude all pairs.
  const std::vector<int> two{0, 0, 1, 1};
  CHECK(ms_loss(circle({0, 0, 180, 180}), two, cfg).item() == 0.0);
}

TEST_CASE("ms_loss: matches the direct formula") {
  MsConfig cfg;
  const std::vector<int> y{0, 0, 1};
  auto z = circle({0, 30, 180});
  std::vector<std::vector<double>> rows{z.row(0), z.row(1), z.row(2)};
  CHECK(std::abs(ms_loss(z, y, cfg).item() - ms_reference(rows, y, cfg)) < 1e-10);
  // Default slack mines nothing here; a wide slack mines every pair.
  MsConfig wide = cfg;
  wide.epsilon = 2.5;
  const double ref = ms_reference(rows, y, wide);
  CHECK(ref > 0.0);
  CHECK(std::abs(ms_loss(z, y, wide).item() - ref) < 1e-10);

  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    auto r = unit_rows(12, 4, rng);
    std::vector<int> labels(12);
    for (auto& l : labels) l = static_cast<int>(rng.index(3));
    CHECK(std::abs(ms_loss(as_tensor(r), labels, cfg).item() - ms_reference(r, labels, cfg)) < 1e-10);
  }
}

TEST_CASE("ms_loss: non-unit rows are rejected") {
  const std::vector<int> y{0, 1};
  CHECK_THROWS_AS(ms_loss(Tensor::matrix(2, 2, {2, 0, 0, 1}), y, {}), std::invalid_argument);
}

TEST_CASE("entropy_estimate: closed forms") {
  CHECK(std::abs(entropy_estimate(circle({25, 25, 25, 25}), 5.0).item() - (-5.0)) < 1e-9);
  CHECK(std::abs(entropy_estimate(circle({0, 90}), 1.0).item() - (-std::log((std::exp(1.0) + 1.0) / 2.0))) < 1e-9);
  CHECK(std::abs(entropy_estimate(circle({0, 90}), 1.0).item() - (-0.620115)) < 1e-6);
  CHECK(std::abs(entropy_estimate(circle({0, 180}), 1.0).item() - (-std::log(std::cosh(1.0)))) < 1e-9);
  CHECK(std::abs(entropy_estimate(circle({0, 180}), 1.0).item() - (-0.433781)) < 1e-6);
  CHECK(entropy_estimate(circle({10}), 5.0).item() == doctest::Approx(-5.0));
}

TEST_CASE("entropy_estimate: permutation invariant and bounded") {
  Rng rng(3);
  auto rows = unit_rows(9, 5, rng);
  const double a = entropy_estimate(as_tensor(rows), 5.0).item();
  std::reverse(rows.begin(), rows.end());
  std::swap(rows[0], rows[4]);
  CHECK(entropy_estimate(as_tensor(rows), 5.0).item() == doctest::Approx(a).epsilon(1e-14));
  // Each inner mean lies in [e^-delta, e^delta].
  CHECK(a >= -5.0);
  CHECK(a <= 5.0);
}

TEST_CASE("mire_loss: composition") {
  MireConfig cfg;
  Rng rng(4);
  auto rows = unit_rows(10, 4, rng);
  std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  cfg.alpha = 0.0;
  CHECK(mire_loss(as_tensor(rows), y, cfg).item() == ms_loss(as_tensor(rows), y, cfg.ms).item());

  cfg.alpha = 0.02;
  cfg.delta = 5.0;
  const std::vector<int> same{0, 0, 0, 0};
  CHECK(mire_loss(circle({70, 70, 70, 70}), same, cfg).item() == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("mire_loss: gradients match central differences") {
  MireConfig cfg;
  cfg.alpha = 0.3;
  Rng rng(12);
  int checked = 0;
  for (int t = 0; t < 10; ++t) {
    auto rows = unit_rows(10, 4, rng);
    std::vector<int> y(10);
    for (auto& l : y) l = static_cast<int>(rng.index(3));
    auto raw = as_tensor(rows, true);
    if (ms_mining_margin(raw, y, cfg.ms) < 1e-4) continue;
    auto f = [&](const Tensor& x) { return mire_loss(l2_normalize(x), y, cfg); };
    CHECK(grad_check(f, raw) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("cc_per_class: self, sign flip, independence and degeneracy") {
  Rng rng(6);
  auto rows = unit_rows(30, 6, rng);
  auto cur = as_tensor(rows);
  auto self = cc_per_class(cur, cur);
  REQUIRE(self.dims.size() == 6);
  for (double r : self.rho.data()) CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
  auto flipped = cc_per_class(cur, scale(cur, -1.0));
  for (double r : flipped.rho.data()) CHECK(r == doctest::Approx(-1.0).epsilon(1e-12));

  auto a = as_tensor(unit_rows(1000, 4, rng));
  auto b = as_tensor(unit_rows(1000, 4, rng));
  for (double r : cc_per_class(a, b).rho.data()) CHECK(std::abs(r) < 0.1);

  // Constant dimension 1 in the stored series yields rho 0 there.
  auto c = Tensor::matrix(3, 2, {1, 5, 2, 5, 4, 5});
  auto d = Tensor::matrix(3, 2, {1, 2, 3, 1, 2, 3});
  auto r = cc_per_class(d, c);
  CHECK(r.dims == std::vector<std::size_t>{0});
  CHECK(r.values()[1] == 0.0);

  CHECK(cc_per_class(Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(1, 2, {1, 0})).empty());
}

TEST_CASE("cc_per_class: matches Pearson correlation") {
  Rng rng(13);
  auto cur = unit_rows(15, 3, rng), old = unit_rows(15, 3, rng);
  auto r = cc_per_class(as_tensor(cur), as_tensor(old)).values();
  for (std::size_t j = 0; j < 3; ++j) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 15; ++i) {
      mx += cur[i][j] / 15.0;
      my += old[i][j] / 15.0;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < 15; ++i) {
      sxy += (cur[i][j] - mx) * (old[i][j] - my);
      sxx += (cur[i][j] - mx) * (cur[i][j] - mx);
      syy += (old[i][j] - my) * (old[i][j] - my);
    }
    CHECK(r[j] == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-12));
  }
}

TEST_CASE("mire_pp_loss: reductions and the frozen-extractor value") {
  MireConfig cfg;
  Rng rng(21);
  auto emb = as_tensor(unit_rows(8, 4, rng));
  std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1};
  const double base = mire_loss(emb, y, cfg).item();
  CHECK(mire_pp_loss(emb, y, cfg, {}).item() == base);

  const std::size_t e = 8;
  std::vector<CcGroup> groups;
  for (int c = 0; c < 3; ++c) {
    auto f = as_tensor(unit_rows(10, e, rng));
    groups.push_back({f, f.detach()});
  }
  const double expected = base - cfg.beta * static_cast<double>(e) * 3.0;
  CHECK(mire_pp_loss(emb, y, cfg, groups).item() == doctest::Approx(expected).epsilon(1e-12));
  cfg.cc_mean_over_dims = true;
  CHECK(mire_pp_loss(emb, y, cfg, groups).item() == doctest::Approx(base - cfg.beta * 3.0).epsilon(1e-12));

  cfg.beta = 0.0;
  CHECK(mire_pp_loss(emb, y, cfg, groups).item() == base);
}

TEST_CASE("mire_pp_loss: the reward only lowers the loss as correlation rises") {
  // d(loss)/d(rho) = -beta for every rho, so pushing current toward stored
  // (which raises every rho) must not raise the loss.
  MireConfig cfg;
  cfg.beta = 0.5;
  Rng rng(31);
  auto emb = as_tensor(unit_rows(6, 4, rng));
  std::vector<int> y{0, 1, 0, 1, 0, 1};
  auto stored = unit_rows(10, 5, rng), noise = unit_rows(10, 5, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    std::vector<std::vector<double>> cur(10, std::vector<double>(5));
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 5; ++j) cur[i][j] = w * stored[i][j] + (1 - w) * noise[i][j];
    const double v = mire_pp_loss(emb, y, cfg, {{as_tensor(cur), as_tensor(stored)}}).item();
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("mire_pp_loss: gradients through the correlation term") {
  MireConfig cfg;
  cfg.alpha = 0.1;
  cfg.beta = 0.3;
  Rng rng(41);
  for (int t = 0; t < 5; ++t) {
    auto cur = as_tensor(unit_rows(7, 5, rng), true);
    auto old = as_tensor(unit_rows(7, 5, rng));
    auto emb = as_tensor(unit_rows(6, 3, rng));
    std::vector<int> y{0, 0, 0, 1, 1, 1};
    auto f = [&] { return mire_pp_loss(emb, y, cfg, {{cur, old}}); };
    CHECK(grad_check(f, {cur}) < 1e-6);
  }
}

TEST_CASE("triplet and n-pairs: trivial cases and direct formulas") {
  const std::vector<int> one{0, 0, 0};
  CHECK(triplet_loss(circle({0, 10, 20}), one).item() == 0.0);
  CHECK(n_pairs_loss(circle({0, 10, 20}), one).item() == 0.0);
  const std::vector<int> y{0, 0, 1};
  CHECK(triplet_loss(circle({0, 0, 180}), y, 0.2).item() == 0.0);

  Rng rng(51);
  for (int t = 0; t < 10; ++t) {
    auto rows = unit_rows(9, 3, rng);
    std::vector<int> labels(9);
    for (auto& l : labels) l = static_cast<int>(rng.index(3));
    double tri = 0.0, np = 0.0;
    std::size_t nt = 0, npairs = 0;
    for (std::size_t a = 0; a < 9; ++a)
      for (std::size_t p = 0; p < 9; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        double inner = 0.0;
        for (std::size_t n = 0; n < 9; ++n) {
          if (labels[n] == labels[a]) continue;
          tri += std::max(0.0, sqdist(rows[a], rows[p]) - sqdist(rows[a], rows[n]) + 0.2);
          ++nt;
          inner += std::exp(dotv(rows[a], rows[n]) - dotv(rows[a], rows[p]));
        }
        np += std::log(1.0 + inner);
        ++npairs;
      }
    if (nt > 0) CHECK(std::abs(triplet_loss(as_tensor(rows), labels, 0.2).item() - tri / nt) < 1e-10);
    if (npairs > 0) CHECK(std::abs(n_pairs_loss(as_tensor(rows), labels).item() - np / npairs) < 1e-10);
  }
}
