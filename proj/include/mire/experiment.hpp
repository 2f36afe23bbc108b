#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mire/theory.hpp"
#include "mire/trainer.hpp"

namespace mire {

/// Everything one CLI invocation needs. Output location and print format
/// are not part of the spec identity (hash).
struct ExperimentSpec {
  std::string command = "run";
  StreamConfig stream;
  double holdout_fraction = 0.2;
  std::optional<std::string> csv_data;
  bool skip_header = false;
  TrainConfig train;
  std::vector<Method> methods{Method::mire_pp};
  std::vector<std::uint64_t> seeds{0};
  /// Passes over the first task for the forward-transfer analysis.
  std::size_t epochs = 5;

  std::size_t theory_bins = 8;
  std::size_t theory_classes = 2;
  std::vector<double> lambdas{0.5, 1.0, 1.5};
  theory::SearchConfig search;
  std::size_t chord_trials = 2000;

  std::size_t gradcheck_configs = 50;

  void validate() const;
};

/// Applies one option given by name (flag name without dashes) to the spec.
/// Config files and command-line flags both go through here. Throws
/// std::invalid_argument on unknown keys or malformed values.
void set_option(ExperimentSpec& spec, const std::string& key, const nlohmann::json& value);
/// Same, for a raw command-line string (numbers and lists parsed from text).
void set_option_text(ExperimentSpec& spec, const std::string& key, const std::string& text);
/// Applies every key of a JSON object.
void apply_config(ExperimentSpec& spec, const nlohmann::json& config);

/// Option names accepted by set_option.
const std::vector<std::string>& option_names();

/// "0..9", "0,2,5" or a single integer.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

nlohmann::json to_json(const ExperimentSpec& spec);
/// 16 hex digits of FNV-1a over the canonical JSON form.
std::string spec_hash(const ExperimentSpec& spec);

struct PreparedData {
  SplitStream stream;
  Dataset eval;
};

/// The stream and held-out set for one seed (synthetic or CSV-backed).
PreparedData prepare_data(const ExperimentSpec& spec, std::uint64_t seed);

/// One isolated (configuration, seed) unit of work.
struct Cell {
  std::string label;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct CellResult {
  Cell cell;
  std::optional<RunRecord> record;
  /// Final trainer state, encoded as a checkpoint.
  std::string checkpoint;
  std::string error;

  bool ok() const { return record.has_value(); }
};

/// Worker count from MIRE_WORKERS (default: OpenMP max threads).
int worker_count();

/// Runs cells in parallel; failures are captured per cell.
std::vector<CellResult> run_cells(const ExperimentSpec& spec, const std::vector<Cell>& cells, int workers);

/// Cells for methods x seeds.
std::vector<Cell> method_cells(const ExperimentSpec& spec);

struct AblationCell {
  std::string name;
  bool mi;
  bool proto;
  bool cc;
};
/// The five technique combinations of the ablation grid.
const std::vector<AblationCell>& ablation_grid();
std::vector<Cell> ablation_cells(const ExperimentSpec& spec);

/// Output of a subcommand: files written, a printable table, exit status.
struct CommandResult {
  std::filesystem::path dir;
  std::string table;
  std::vector<std::string> failures;
  int exit_code = 0;
};

/// Executes spec.command, writing artifacts under out / spec_hash(spec).
/// `format` ("csv" or "json") selects the table printed to stdout.
CommandResult execute(const ExperimentSpec& spec, const std::filesystem::path& out, const std::string& format,
                      int workers);

}  // namespace mire
