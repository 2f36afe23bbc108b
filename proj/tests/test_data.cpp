#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mire/classifier.hpp"
#include "mire/memory.hpp"
#include "mire/stream.hpp"

using namespace mire;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  auto p = std::filesystem::temp_directory_path() / ("mire_test_" + name);
  std::ofstream(p) << text;
  return p;
}

Vec unit(std::size_t dim, std::size_t axis) {
  Vec v(dim, 0.0);
  v[axis] = 1.0;
  return v;
}

Batch one_class_batch(int label, std::size_t n, double tag = 0.0) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) b.push_back({{tag + static_cast<double>(i)}, label});
  return b;
}

}  // namespace

TEST_CASE("stream: task layout and batch counts") {
  CHECK(consecutive_tasks(4, 2) == std::vector<std::vector<int>>{{0, 1}, {2, 3}});
  CHECK_THROWS_AS(consecutive_tasks(5, 2), std::invalid_argument);

  StreamConfig cfg;
  cfg.num_classes = 4;
  auto s = make_split_synthetic(cfg);
  CHECK(s.num_tasks() == 2);
  CHECK(s.task_ends() == std::vector<std::size_t>{40, 80});
  CHECK(s.num_samples() == 800);
  CHECK(s.learner().size() == 80);
}

TEST_CASE("stream: classes of a task appear only inside its span") {
  StreamConfig cfg;
  auto s = make_split_synthetic(cfg);
  auto learner = s.learner();
  std::size_t begin = 0;
  for (std::size_t t = 0; t < s.num_tasks(); ++t) {
    const auto& cls = s.task_classes()[t];
    for (std::size_t i = begin; i < s.task_ends()[t]; ++i)
      for (const auto& smp : learner[i]) CHECK(std::find(cls.begin(), cls.end(), smp.label) != cls.end());
    begin = s.task_ends()[t];
  }
}

TEST_CASE("stream: every training sample is delivered exactly once") {
  StreamConfig cfg;
  cfg.samples_per_class = 23;  // leaves a partial trailing batch per task
  auto data = generate_synthetic(cfg);
  auto s = build_stream(data, consecutive_tasks(cfg.num_classes, 2), 10, 1);
  std::multiset<std::pair<int, Vec>> seen;
  for (const auto& b : s.learner()) {
    CHECK(b.size() <= 10);
    for (const auto& smp : b) seen.insert({smp.label, smp.x});
  }
  std::multiset<std::pair<int, Vec>> expected;
  for (std::size_t c = 0; c < data.num_classes(); ++c)
    for (const auto& x : data.by_class[c]) expected.insert({static_cast<int>(c), x});
  CHECK(seen == expected);
  CHECK(s.learner()[s.task_ends()[0] - 1].size() == 6);
}

TEST_CASE("stream: same seed gives the same order, another seed does not") {
  StreamConfig cfg;
  auto data = generate_synthetic(cfg);
  auto tasks = consecutive_tasks(cfg.num_classes, 2);
  auto a = build_stream(data, tasks, 10, 5), b = build_stream(data, tasks, 10, 5), c = build_stream(data, tasks, 10, 6);
  CHECK(std::equal(a.learner().begin(), a.learner().end(), b.learner().begin()));
  CHECK(!std::equal(a.learner().begin(), a.learner().end(), c.learner().begin()));
}

TEST_CASE("stream: holdout sizes, disjointness and mean concentration") {
  StreamConfig cfg;
  auto data = generate_synthetic(cfg);
  auto split = holdout(data, 0.2, 9);
  for (std::size_t c = 0; c < data.num_classes(); ++c) {
    CHECK(split.eval.by_class[c].size() == 40);
    CHECK(split.train.by_class[c].size() == 160);
    std::set<Vec> train(split.train.by_class[c].begin(), split.train.by_class[c].end());
    for (const auto& x : split.eval.by_class[c]) CHECK(!train.contains(x));

    // Sample mean error is N(0, I/n) per coordinate; its norm concentrates at sqrt(d/n).
    const double n = 40.0, d = static_cast<double>(cfg.input_dim);
    CHECK(distance(mean_of(split.eval.by_class[c]), data.class_means[c]) < 3.0 * std::sqrt(d / n));
  }
  CHECK_THROWS_AS(holdout(data, 0.6, 1), std::invalid_argument);
  CHECK_THROWS_AS(holdout(data, 0.0, 1), std::invalid_argument);
}

TEST_CASE("stream: class means have the configured norm") {
  StreamConfig cfg;
  cfg.separation = 8.0;
  auto data = generate_synthetic(cfg);
  for (const auto& m : data.class_means) CHECK(norm(m) == doctest::Approx(8.0));
}

TEST_CASE("stream: nearest true mean classifies well separated classes") {
  // Identity features: classify raw inputs by distance to generating means.
  StreamConfig cfg;
  cfg.separation = 8.0;
  auto data = generate_synthetic(cfg);
  auto split = holdout(data, 0.2, 2);
  std::size_t correct = 0, total = 0;
  for (std::size_t c = 0; c < split.eval.num_classes(); ++c)
    for (const auto& x : split.eval.by_class[c]) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < data.class_means.size(); ++k)
        if (distance(x, data.class_means[k]) < distance(x, data.class_means[best])) best = k;
      correct += best == c;
      ++total;
    }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.99);
}

TEST_CASE("stream: csv ingestion") {
  SUBCASE("parses rows") {
    auto p = write_temp("ok.csv", "0,1.0,2.0\n1,0.5,-1\n2, 0.1, 0.5\n");
    auto d = read_csv_dataset(p, {.skip_header = false, .input_dim = 2});
    REQUIRE(d.num_classes() == 3);
    CHECK(d.by_class[2][0] == Vec{0.1, 0.5});
    auto s = load_csv_dataset(p, {.classes_per_task = 3, .batch_size = 10, .seed = 0});
    CHECK(s.learner().size() == 1);
    CHECK(s.learner()[0].size() == 3);
  }
  SUBCASE("header rejected unless skipped") {
    auto p = write_temp("hdr.csv", "label,a,b\n0,1,2\n1,3,4\n");
    CHECK_THROWS_WITH_AS(read_csv_dataset(p), doctest::Contains("line 1"), std::runtime_error);
    CHECK(read_csv_dataset(p, {.skip_header = true}).num_classes() == 2);
  }
  SUBCASE("malformed rows name their line") {
    auto p = write_temp("bad.csv", "0,1,2\n1,3,x\n");
    CHECK_THROWS_WITH_AS(read_csv_dataset(p), doctest::Contains("line 2"), std::runtime_error);
    auto q = write_temp("width.csv", "0,1,2\n1,3\n");
    CHECK_THROWS_WITH_AS(read_csv_dataset(q), doctest::Contains("line 2"), std::runtime_error);
  }
  SUBCASE("labels must be contiguous") {
    auto p = write_temp("gap.csv", "0,1\n2,3\n");
    CHECK_THROWS_AS(read_csv_dataset(p), std::runtime_error);
  }
}

TEST_CASE("memory: quotas and insertion") {
  Rng rng(1);
  EpisodicMemory m(10);
  auto b = one_class_batch(0, 5);
  m.update(b, std::vector<Vec>(5, unit(2, 0)), 0, rng);
  CHECK(m.entries(0).size() == 5);

  m.update(one_class_batch(0, 10, 100.0), std::vector<Vec>(10, unit(2, 0)), 1, rng);
  CHECK(m.entries(0).size() == 10);
  m.update(one_class_batch(1, 1), {unit(2, 1)}, 2, rng);
  CHECK(m.quota(0) == 5);
  CHECK(m.quota(1) == 5);
  CHECK(m.entries(0).size() == 5);
  CHECK(m.size() <= 10);

  m.update(one_class_batch(2, 1), {unit(2, 1)}, 3, rng);
  CHECK(m.quota(0) == 4);  // 10 = 4 + 3 + 3, remainder to the lowest id
  CHECK(m.quota(1) == 3);
  CHECK(m.quota(2) == 3);
  CHECK(m.entries(0).size() == 4);
  CHECK(m.entries(0)[0].z_stored == unit(2, 0));

  CHECK_THROWS_AS(m.update(one_class_batch(0, 1), {Vec{2.0, 0.0}}, 4, rng), std::invalid_argument);
}

TEST_CASE("memory: capacity holds at every step of a long stream") {
  Rng rng(2);
  EpisodicMemory m(17);
  for (int t = 0; t < 300; ++t) {
    const int label = t / 30;
    m.update(one_class_batch(label, 10, t * 10.0), std::vector<Vec>(10, unit(3, 0)), t, rng);
    CHECK(m.size() <= 17);
    for (int c : m.seen_classes()) CHECK(m.entries(c).size() <= m.quota(c));
  }
}

TEST_CASE("memory: per-class reservoir inclusion probability") {
  // Stream 1000 items of one class through quota 50; each item should end up
  // stored with probability 50/1000. With 2000 trials a single item's
  // frequency has sd sqrt(0.05 * 0.95 / 2000) = 0.0049, so about 4.5% of
  // items land outside +-0.01 by chance alone; the checks below are sized to
  // the Monte Carlo error instead.
  const int trials = 2000, n = 1000;
  std::vector<int> hits(n, 0);
  Rng rng(77);
  for (int t = 0; t < trials; ++t) {
    EpisodicMemory m(50);
    for (int i = 0; i < n; i += 10)
      m.update(one_class_batch(0, 10, i), std::vector<Vec>(10, unit(1, 0)), i, rng);
    REQUIRE(m.entries(0).size() == 50);
    for (const auto& e : m.entries(0)) ++hits[static_cast<int>(e.sample.x[0])];
  }
  std::vector<double> f(n);
  for (int i = 0; i < n; ++i) f[i] = static_cast<double>(hits[i]) / trials;

  // Blocks of 50 consecutive items: position in the stream must not matter.
  for (int b = 0; b < n; b += 50) {
    double s = 0.0;
    for (int i = b; i < b + 50; ++i) s += f[i];
    CHECK(std::abs(s / 50.0 - 0.05) <= 0.01);
    CHECK(std::abs(s / 50.0 - 0.05) <= 0.003);
  }
  // Spread across items matches binomial noise around a common 0.05.
  double var = 0.0;
  int outside = 0;
  for (double x : f) {
    var += (x - 0.05) * (x - 0.05) / n;
    outside += std::abs(x - 0.05) > 0.01;
  }
  const double binomial = 0.05 * 0.95 / trials;
  CHECK(var / binomial == doctest::Approx(1.0).epsilon(0.15));
  CHECK(outside <= 80);
}

TEST_CASE("memory: retrieval") {
  Rng rng(5);
  EpisodicMemory empty(10);
  CHECK(empty.retrieve(5, rng).empty());
  CHECK(empty.class_subset(0, 5, rng).empty());

  EpisodicMemory small(10);
  small.update(one_class_batch(0, 3), std::vector<Vec>(3, unit(1, 0)), 0, rng);
  CHECK(small.retrieve(100, rng).size() == 3);
  CHECK(small.class_subset(0, 10, rng).size() == 3);
  CHECK(small.class_subset(0, 0, rng).empty());
  CHECK(small.class_subset(4, 2, rng).empty());

  SUBCASE("uniform over the whole memory") {
    EpisodicMemory m(200);
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 50; i += 10) m.update(one_class_batch(c, 10, c * 100 + i), std::vector<Vec>(10, unit(1, 0)), 0, rng);
    REQUIRE(m.size() == 200);
    std::map<const MemoryEntry*, int> freq;
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
      auto got = m.retrieve(100, rng);
      CHECK(std::set<const MemoryEntry*>(got.begin(), got.end()).size() == 100);
      for (auto* e : got) ++freq[e];
    }
    REQUIRE(freq.size() == 200);
    for (const auto& [e, f] : freq) CHECK(std::abs(static_cast<double>(f) / draws - 0.5) <= 0.03);
  }
  SUBCASE("uniform within a class") {
    EpisodicMemory m(40);
    m.update(one_class_batch(0, 20), std::vector<Vec>(20, unit(1, 0)), 0, rng);
    m.update(one_class_batch(1, 20), std::vector<Vec>(20, unit(1, 0)), 0, rng);
    std::map<const MemoryEntry*, int> freq;
    const int draws = 10000;
    for (int t = 0; t < draws; ++t)
      for (auto* e : m.class_subset(1, 10, rng)) {
        CHECK(e->sample.label == 1);
        ++freq[e];
      }
    REQUIRE(freq.size() == 20);
    for (const auto& [e, f] : freq) CHECK(std::abs(static_cast<double>(f) / draws - 0.5) <= 0.03);
  }
}
