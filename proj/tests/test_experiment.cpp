#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mire/experiment.hpp"

using namespace mire;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("mire_test_" + name);
  fs::remove_all(p);
  return p;
}

// A small run: 2 tasks x 2 classes, 40 samples per class.
ExperimentSpec small_spec(const std::string& command) {
  ExperimentSpec s;
  s.command = command;
  set_option_text(s, "classes", "4");
  set_option_text(s, "samples-per-class", "40");
  set_option_text(s, "seeds", "0,1");
  return s;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("experiment: seed lists") {
  CHECK(parse_seeds("0..3") == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(parse_seeds("0,2,5") == std::vector<std::uint64_t>{0, 2, 5});
  CHECK(parse_seeds("7") == std::vector<std::uint64_t>{7});
  CHECK_THROWS_AS(parse_seeds("3..1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seeds("x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_seeds(""), std::invalid_argument);
}

TEST_CASE("experiment: options") {
  ExperimentSpec s;
  set_option_text(s, "method", "finetune,mire++");
  CHECK(s.methods == std::vector<Method>{Method::finetune, Method::mire_pp});
  set_option_text(s, "alpha", "0.05");
  CHECK(s.train.mire.alpha == 0.05);
  set_option_text(s, "input-dim", "8");
  CHECK(s.stream.input_dim == 8);
  CHECK(s.train.extractor.input_dim == 8);
  set_option_text(s, "hidden", "32,16");
  CHECK(s.train.extractor.hidden == std::vector<std::size_t>{32, 16});
  set_option_text(s, "lambda", "0.25,2");
  CHECK(s.lambdas == std::vector<double>{0.25, 2.0});
  CHECK_THROWS_AS(set_option_text(s, "no-such-flag", "1"), std::invalid_argument);
  CHECK_THROWS_AS(set_option_text(s, "lr", "fast"), std::invalid_argument);
  CHECK_THROWS_AS(set_option_text(s, "method", "sgd"), std::invalid_argument);
  apply_config(s, nlohmann::json{{"beta", 0.5}, {"memory", 40}});
  CHECK(s.train.mire.beta == 0.5);
  CHECK(s.train.memory_capacity == 40);
  CHECK_THROWS_AS(apply_config(s, nlohmann::json::array()), std::invalid_argument);
  for (const auto& name : option_names()) CHECK(!name.empty());
}

TEST_CASE("experiment: spec hash identifies the configuration") {
  ExperimentSpec a, b;
  CHECK(spec_hash(a) == spec_hash(b));
  CHECK(spec_hash(a).size() == 16);
  set_option_text(b, "beta", "0.02");
  CHECK(spec_hash(a) != spec_hash(b));
  b = a;
  b.command = "ablate";
  CHECK(spec_hash(a) != spec_hash(b));
}

TEST_CASE("experiment: ablation grid corners equal the method presets") {
  ExperimentSpec s;
  const auto& grid = ablation_grid();
  REQUIRE(grid.size() == 5);
  auto cells = ablation_cells(s);
  REQUIRE(cells.size() == 5);
  bool saw_off = false, saw_on = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    if (!g.mi && !g.proto && !g.cc) {
      CHECK(cells[i].train.techniques() == techniques_for(Method::ms_ncm));
      saw_off = true;
    }
    if (g.mi && g.proto && g.cc) {
      CHECK(cells[i].train.techniques() == techniques_for(Method::mire_pp));
      saw_on = true;
    }
  }
  CHECK(saw_off);
  CHECK(saw_on);
}

TEST_CASE("experiment: run writes deterministic artifacts") {
  auto spec = small_spec("run");
  set_option_text(spec, "method", "finetune,mire++");
  auto out1 = scratch("run1"), out2 = scratch("run2");
  auto r1 = execute(spec, out1, "csv", 2);
  auto r2 = execute(spec, out2, "csv", 1);
  CHECK(r1.exit_code == 0);
  CHECK(r1.failures.empty());
  CHECK(r1.dir == out1 / spec_hash(spec));
  CHECK(slurp(r1.dir / "metrics.csv") == slurp(r2.dir / "metrics.csv"));
  CHECK(slurp(r1.dir / "final.csv") == slurp(r2.dir / "final.csv"));
  for (const auto& entry : fs::directory_iterator(r1.dir / "checkpoints"))
    CHECK(slurp(entry.path()) == slurp(r2.dir / "checkpoints" / entry.path().filename()));
  CHECK(count_lines(slurp(r1.dir / "metrics.csv")) == 1 + 2 * 2 * 2);  // header + method x seed x snapshot
  auto summary = nlohmann::json::parse(slurp(r1.dir / "summary.json"));
  CHECK(summary.contains("mire++"));
  CHECK(fs::exists(r1.dir / "spec.json"));
  CHECK(r1.table == r2.table);
}

TEST_CASE("experiment: mean-error emits one row per snapshot and mode") {
  auto spec = small_spec("mean-error");
  set_option_text(spec, "method", "mire++");
  auto r = execute(spec, scratch("me"), "csv", 1);
  CHECK(r.exit_code == 0);
  // 2 seeds x 2 snapshots x 2 modes.
  CHECK(count_lines(slurp(r.dir / "mean_error.csv")) == 1 + 8);
}

TEST_CASE("experiment: theory and gradcheck subcommands") {
  ExperimentSpec t;
  t.command = "theory";
  set_option_text(t, "chord-trials", "200");
  auto r = execute(t, scratch("theory"), "csv", 1);
  CHECK(r.exit_code == 0);
  CHECK(r.table.find("support-size-1") != std::string::npos);
  CHECK(r.table.find("uniform-marginal") != std::string::npos);

  ExperimentSpec g;
  g.command = "gradcheck";
  set_option_text(g, "configs", "3");
  auto rg = execute(g, scratch("gc"), "json", 1);
  CHECK(rg.exit_code == 0);
  CHECK(nlohmann::json::parse(rg.table).is_object());
}

TEST_CASE("experiment: failing cells are enumerated and set the exit code") {
  auto spec = small_spec("run");
  // A learning rate this large drives the loss to a non-finite value.
  set_option_text(spec, "lr", "1e300");
  auto r = execute(spec, scratch("fail"), "csv", 1);
  CHECK(r.exit_code != 0);
  CHECK(r.failures.size() == 2);
}

TEST_CASE("experiment: csv-backed data") {
  auto dir = scratch("csvdata");
  fs::create_directories(dir);
  std::ofstream f(dir / "d.csv");
  Rng rng(1);
  f << "label,a,b,c\n";
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 30; ++i) f << c << ',' << 3.0 * c + rng.normal() << ',' << rng.normal() << ',' << -c + rng.normal() << '\n';
  f.close();
  ExperimentSpec s;
  s.command = "run";
  set_option_text(s, "csv-data", (dir / "d.csv").string());
  set_option_text(s, "memory", "20");
  CHECK_THROWS(execute(s, dir / "out", "csv", 1));
  set_option_text(s, "skip-header", "true");
  auto r = execute(s, dir / "out", "csv", 1);
  CHECK(r.exit_code == 0);
}

#ifdef MIRE_CLI_PATH
TEST_CASE("cli: usage errors exit with status 2") {
  const std::string cli = MIRE_CLI_PATH;
  CHECK(std::system((cli + " run --bogus > /dev/null 2>&1").c_str()) != 0);
  const int bad_value = std::system((cli + " run --lr abc --out " + scratch("cli").string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad_value) == 2);
  const int ok = std::system(
      (cli + " theory --chord-trials 100 --out " + scratch("cli_ok").string() + " > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(ok) == 0);
}
#endif
