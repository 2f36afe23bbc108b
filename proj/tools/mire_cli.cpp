// Command-line entry point: run, ablate, fwd-transfer, mean-error, theory, gradcheck.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "mire/experiment.hpp"

namespace {

struct FlagHelp {
  const char* name;
  const char* help;
};

// Value-taking flags; each maps onto the option of the same name.
constexpr FlagHelp kValueFlags[] = {
    {"method", "finetune, ms-ncm, mire or mire++ (comma list allowed)"},
    {"seeds", "seed list: 0..9, 0,3,5 or 7"},
    {"classes", "number of classes (synthetic)"},
    {"classes-per-task", "classes per task"},
    {"samples-per-class", "samples generated per class before the holdout split"},
    {"input-dim", "input dimension d"},
    {"separation", "norm of each class mean in cluster std units"},
    {"batch-size", "incoming minibatch size"},
    {"holdout", "fraction of each class held out for evaluation, in (0, 0.5]"},
    {"csv-data", "CSV file of label,f1,...,fd rows instead of synthetic data"},
    {"lr", "SGD learning rate"},
    {"alpha", "entropy bonus weight"},
    {"beta", "correlation reward weight"},
    {"delta", "vMF kernel concentration"},
    {"gamma", "prototype momentum"},
    {"ms-alpha", "MS positive scale"},
    {"ms-beta", "MS negative scale"},
    {"ms-lambda", "MS similarity margin"},
    {"ms-epsilon", "MS mining slack"},
    {"metric", "metric loss: ms, triplet or npairs"},
    {"triplet-margin", "triplet loss margin"},
    {"cc-subset", "memory entries per class for the correlation reward"},
    {"replay", "replayed samples per iteration"},
    {"memory", "episodic memory capacity"},
    {"noise", "std of the Gaussian input augmentation"},
    {"hidden", "trunk hidden widths, comma separated"},
    {"feature-dim", "feature dimension"},
    {"head-hidden", "projection head hidden width"},
    {"head-out", "embedding dimension"},
    {"epochs", "first-task epochs (fwd-transfer)"},
    {"bins", "feature bins K (theory)"},
    {"theory-classes", "classes C (theory)"},
    {"lambda", "lambda values, comma separated (theory)"},
    {"starts", "ascent starts (theory)"},
    {"step", "ascent step (theory)"},
    {"iterations", "ascent iteration cap (theory)"},
    {"chord-trials", "random chords per concavity check (theory)"},
    {"configs", "random configurations (gradcheck)"},
};

constexpr FlagHelp kSwitches[] = {
    {"skip-header", "skip the first CSV row"},
    {"cc-mean", "average the correlation reward over dimensions"},
};

struct Invocation {
  std::string command;
  std::string out = "out";
  std::string config;
  std::string format = "csv";
  // Flags in the order given; applied after the config file.
  std::vector<std::pair<std::string, std::string>> flags;
};

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--out", inv.out, "output root; artifacts go to OUT/<spec hash>/")->capture_default_str();
  sub->add_option("--config", inv.config, "JSON file of option values; flags override it");
  sub->add_option("--format", inv.format, "table printed to stdout")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  for (const auto& f : kValueFlags) {
    const std::string name = f.name;
    sub->add_option_function<std::string>(
        "--" + name, [&inv, name](const std::string& v) { inv.flags.emplace_back(name, v); }, f.help);
  }
  for (const auto& f : kSwitches) {
    const std::string name = f.name;
    sub->add_flag_callback("--" + name, [&inv, name] { inv.flags.emplace_back(name, "true"); }, f.help);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online class-incremental learning with mutual information rebalancing"};
  app.require_subcommand(1);
  Invocation inv;
  const std::map<std::string, std::string> commands{
      {"run", "train methods over seeds; metrics CSV, JSON summary, checkpoints"},
      {"ablate", "technique ablation grid"},
      {"fwd-transfer", "accuracy gaps on unseen tasks after first-task training"},
      {"mean-error", "class-mean estimation error and feature variance per snapshot"},
      {"theory", "maximize lambda H(Z) - H(Z|Y) over discrete joints"},
      {"gradcheck", "compare loss gradients against finite differences"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, inv);
    sub->callback([&inv, name = name] { inv.command = name; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    mire::ExperimentSpec spec;
    spec.command = inv.command;
    if (!inv.config.empty()) {
      std::ifstream in(inv.config);
      if (!in) throw std::invalid_argument("cannot open config file " + inv.config);
      nlohmann::json cfg;
      try {
        cfg = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config file " + inv.config + ": " + e.what());
      }
      mire::apply_config(spec, cfg);
    }
    for (const auto& [key, value] : inv.flags) mire::set_option_text(spec, key, value);

    const auto result = mire::execute(spec, inv.out, inv.format, mire::worker_count());
    std::cout << result.table;
    std::cerr << "artifacts: " << result.dir.string() << "\n";
    if (!result.failures.empty()) {
      std::cerr << result.failures.size() << " failed:\n";
      for (const auto& f : result.failures) std::cerr << "  " << f << "\n";
    }
    return result.exit_code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommand(inv.command)->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
