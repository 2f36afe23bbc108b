#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mire/gradcheck.hpp"
#include "mire/kernels.hpp"
#include "mire/model.hpp"
#include "mire/rng.hpp"
#include "mire/tensor.hpp"

using namespace mire;
using namespace mire::ndgrad;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::matrix(r, c, std::move(v), grad);
}

}  // namespace

TEST_CASE("rng: seeded streams repeat and round-trip through serialize") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  const auto state = a.serialize();
  const double x = a.normal();
  Rng c;
  c.deserialize(state);
  CHECK(c.normal() == x);
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("rng: sample_without_replacement yields distinct indices") {
  Rng rng(3);
  auto idx = rng.sample_without_replacement(20, 20);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) CHECK(idx[i] == i);
  CHECK(rng.sample_without_replacement(5, 0).empty());
}

TEST_CASE("rng: normal draws have unit variance") {
  Rng rng(11);
  const int n = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(ss / n - mean * mean - 1.0) < 0.01);
}

TEST_CASE("kernels: serial and parallel agree bit for bit") {
  Rng rng(5);
  const std::size_t m = 70, k = 90, n = 60;
  std::vector<double> a(m * k), b(k * n), g(m * m), g2(m * m), c1(m * n), c2(m * n);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = rng.normal();
  kernels::serial::matmul(a, b, c1, m, k, n);
  kernels::parallel::matmul(a, b, c2, m, k, n);
  CHECK(c1 == c2);
  kernels::serial::gram(a, g, m, k);
  kernels::parallel::gram(a, g2, m, k);
  CHECK(g == g2);

  std::vector<double> t1(k * n, 0.0), t2(k * n, 0.0);
  kernels::serial::matmul_tn_acc(a, c1, t1, m, k, n);
  kernels::parallel::matmul_tn_acc(a, c1, t2, m, k, n);
  CHECK(t1 == t2);
  std::vector<double> u1(m * k, 0.0), u2(m * k, 0.0);
  kernels::serial::matmul_nt_acc(c1, b, u1, m, n, k);
  kernels::parallel::matmul_nt_acc(c1, b, u2, m, n, k);
  CHECK(u1 == u2);

  std::vector<double> means(5 * k);
  for (auto& x : means) x = rng.normal();
  CHECK(kernels::serial::nearest_rows(a, means, m, 5, k) == kernels::parallel::nearest_rows(a, means, m, 5, k));
}

TEST_CASE("kernels: nearest_rows breaks ties toward the lowest index") {
  const std::vector<double> q{0.0, 0.0};
  const std::vector<double> means{1.0, 0.0, 0.0, 1.0, -1.0, 0.0};
  CHECK(kernels::serial::nearest_rows(q, means, 1, 3, 2)[0] == 0);
}

TEST_CASE("tensor: forward values") {
  SUBCASE("log_sum_exp does not overflow") {
    auto t = log_sum_exp(Tensor::from({2}, {1000.0, 1000.0}));
    CHECK(t.item() == doctest::Approx(1000.0 + std::numbers::ln2).epsilon(1e-15));
  }
  SUBCASE("relu") {
    auto t = relu(Tensor::from({4}, {-1.0, 0.0, 2.0, -3.0}));
    CHECK(std::vector<double>(t.data().begin(), t.data().end()) == std::vector<double>{0, 0, 2, 0});
  }
  SUBCASE("matmul by identity") {
    Rng rng(1);
    auto a = random_matrix(3, 4, rng);
    auto eye = Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    auto c = matmul(a, eye);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(c[i] == a[i]);
  }
  SUBCASE("l2_normalize") {
    auto t = l2_normalize(Tensor::matrix(1, 2, {3.0, 4.0}));
    CHECK(t[0] == doctest::Approx(0.6));
    CHECK(t[1] == doctest::Approx(0.8));
  }
  SUBCASE("log1p_sum_exp with an empty row mask") {
    auto t = log1p_sum_exp(Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0}), {true, false, false, false});
    CHECK(t[0] == doctest::Approx(std::log1p(std::exp(1.0))));
    CHECK(t[1] == 0.0);
  }
}

TEST_CASE("tensor: input validation") {
  CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(2, 3, std::vector<double>(6))),
                  std::invalid_argument);
  CHECK_THROWS_AS(log(Tensor::from({1}, {0.0})), std::invalid_argument);
  CHECK_THROWS_AS(l2_normalize(Tensor::matrix(1, 2, {0.0, 0.0})), std::invalid_argument);
  CHECK_THROWS_AS(div(Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0})), std::invalid_argument);
  auto x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS(backward(scale(x, 2.0)));
}

TEST_CASE("tensor: analytic gradients") {
  SUBCASE("sum and dot") {
    auto x = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
    auto y = Tensor::from({3}, {4.0, 5.0, 6.0}, true);
    backward(add(sum(x), dot(x, y)));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(x.grad()[i] == doctest::Approx(1.0 + y[i]));
      CHECK(y.grad()[i] == doctest::Approx(x[i]));
    }
  }
  SUBCASE("squared norm of a normalized row is constant") {
    auto x = Tensor::matrix(1, 3, {0.3, -1.2, 2.0}, true);
    auto z = l2_normalize(x);
    backward(sum(mul(z, z)));
    for (double g : x.grad()) CHECK(std::abs(g) < 1e-12);
  }
  SUBCASE("gradients accumulate over repeated use") {
    auto x = Tensor::scalar(3.0, true);
    backward(mul(x, x));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
}

TEST_CASE("tensor: random compositions match central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_matrix(4, 3, rng, true);
    auto w = random_matrix(3, 5, rng, true);
    auto bias = random_matrix(1, 5, rng, true);
    const std::vector<std::size_t> idx{0, 3, 7, 11};
    auto f = [&] {
      auto h = add(matmul(a, w), bias);
      auto z = l2_normalize(h);
      auto g = gram(z);
      auto lse = log_sum_exp(scale(g, 2.0));
      auto e = exp(scale(mean_rows(h), 0.1));
      auto picked = gather(h, idx, {4});
      auto r = sqrt(add_scalar(mul(picked, picked), 1.0));
      return add(add(mean(lse), sum(e)), mean(log(r)));
    };
    CHECK(grad_check(f, {a, w, bias}) < 1e-6);
  }
}

TEST_CASE("gradcheck: detects a wrong gradient") {
  // A node whose backward rule is deliberately wrong (factor 3 instead of 2).
  auto bad_square = [](const Tensor& x) {
    auto node = std::make_shared<Node>();
    node->shape = x.shape();
    node->data = {x[0] * x[0]};
    node->requires_grad = true;
    node->grad.assign(1, 0.0);
    node->inputs = {x.node()};
    node->backward = [](Node& self) { self.inputs[0]->grad[0] += 3.0 * self.inputs[0]->data[0] * self.grad[0]; };
    return sum(Tensor(node));
  };
  CHECK(grad_check(bad_square, Tensor::from({1}, {1.5})) > 0.1);
  CHECK(grad_check([](const Tensor& x) { return sum(mul(x, x)); }, Tensor::from({1}, {1.5})) < 1e-8);
}

TEST_CASE("model: initialization scale and determinism") {
  ExtractorConfig cfg;
  auto a = Extractor::init(cfg, 7);
  auto b = Extractor::init(cfg, 7);
  auto c = Extractor::init(cfg, 8);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin()));
    differs |= !std::equal(pa[i].data().begin(), pa[i].data().end(), pc[i].data().begin());
  }
  CHECK(differs);

  // First-layer pre-activations for standard normal inputs stay in a sane range.
  Rng rng(1);
  auto x = random_matrix(2000, cfg.input_dim, rng);
  auto pre = add(matmul(x, pa[0]), pa[1]);
  double s = 0.0, ss = 0.0;
  for (double v : pre.data()) {
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(pre.numel());
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  CHECK(sd > 0.1);
  CHECK(sd < 2.0);
}

TEST_CASE("model: outputs are unit rows and the parameter layout round-trips") {
  ExtractorConfig cfg;
  auto m = Extractor::init(cfg, 3);
  Rng rng(4);
  auto out = m.forward(random_matrix(5, cfg.input_dim, rng));
  CHECK(out.features.shape() == Shape{5, cfg.feature_dim});
  CHECK(out.embeddings.shape() == Shape{5, cfg.head_out});
  for (std::size_t i = 0; i < 5; ++i) {
    double f = 0.0, e = 0.0;
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) f += out.features.at(i, j) * out.features.at(i, j);
    for (std::size_t j = 0; j < cfg.head_out; ++j) e += out.embeddings.at(i, j) * out.embeddings.at(i, j);
    CHECK(f == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
  }
  std::vector<Vec> values;
  for (const auto& p : m.parameters()) values.emplace_back(p.data().begin(), p.data().end());
  auto back = Extractor::from_parameters(cfg, values);
  const Vec row(cfg.input_dim, 0.25);
  CHECK(back.features_of({row}) == m.features_of({row}));
  values.pop_back();
  CHECK_THROWS_AS(Extractor::from_parameters(cfg, values), std::invalid_argument);
}

TEST_CASE("model: sgd_step moves parameters against the gradient") {
  ExtractorConfig cfg;
  cfg.hidden = {8};
  cfg.input_dim = 4;
  auto m = Extractor::init(cfg, 1);
  auto clone = m.clone();
  Rng rng(9);
  auto x = random_matrix(6, 4, rng);
  auto loss = [&](const Extractor& e) { return sum(e.features(x)).item(); };
  m.zero_grad();
  backward(sum(m.features(x)));
  m.sgd_step(1e-3);
  CHECK(loss(m) < loss(clone));
  // The clone does not share storage.
  CHECK(clone.parameters()[0][0] != m.parameters()[0][0]);
}
