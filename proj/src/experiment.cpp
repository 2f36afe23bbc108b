#include "mire/experiment.hpp"

#include <omp.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mire/checkpoint.hpp"
#include "mire/loss_check.hpp"
#include "mire/report.hpp"

namespace mire {

using nlohmann::json;

namespace {

[[noreturn]] void bad_value(const std::string& key, const json& v, const std::string& expected) {
  throw std::invalid_argument("option '" + key + "': expected " + expected + ", got " + v.dump());
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) parts.push_back(trim(item));
  return parts;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

double as_double(const std::string& key, const json& v) {
  if (v.is_number()) return v.get<double>();
  double d = 0.0;
  if (v.is_string() && parse_number(trim(v.get<std::string>()), d)) return d;
  bad_value(key, v, "a number");
}

std::uint64_t as_u64(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  std::uint64_t u = 0;
  if (v.is_string() && parse_number(trim(v.get<std::string>()), u)) return u;
  bad_value(key, v, "a non-negative integer");
}

std::size_t as_size(const std::string& key, const json& v) { return static_cast<std::size_t>(as_u64(key, v)); }

bool as_bool(const std::string& key, const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  bad_value(key, v, "true or false");
}

std::string as_string(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  bad_value(key, v, "a string");
}

/// Array, comma-separated string, or a single scalar.
std::vector<json> as_list(const json& v) {
  if (v.is_array()) return std::vector<json>(v.begin(), v.end());
  if (v.is_string()) {
    std::vector<json> out;
    for (auto& part : split(v.get<std::string>(), ',')) out.emplace_back(part);
    return out;
  }
  return {v};
}

using Setter = void (*)(ExperimentSpec&, const std::string&, const json&);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"method",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         s.methods.clear();
         for (const auto& m : as_list(v)) s.methods.push_back(parse_method(as_string(k, m)));
       }},
      {"seeds",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         if (v.is_array()) {
           s.seeds.clear();
           for (const auto& e : v) s.seeds.push_back(as_u64(k, e));
         } else if (v.is_number()) {
           s.seeds = {as_u64(k, v)};
         } else {
           s.seeds = parse_seeds(as_string(k, v));
         }
       }},
      {"classes", [](ExperimentSpec& s, const std::string& k, const json& v) { s.stream.num_classes = as_size(k, v); }},
      {"classes-per-task", [](ExperimentSpec& s, const std::string& k, const json& v) { s.stream.classes_per_task = as_size(k, v); }},
      {"samples-per-class", [](ExperimentSpec& s, const std::string& k, const json& v) { s.stream.samples_per_class = as_size(k, v); }},
      {"input-dim",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         s.stream.input_dim = as_size(k, v);
         s.train.extractor.input_dim = s.stream.input_dim;
       }},
      {"separation", [](ExperimentSpec& s, const std::string& k, const json& v) { s.stream.separation = as_double(k, v); }},
      {"batch-size", [](ExperimentSpec& s, const std::string& k, const json& v) { s.stream.batch_size = as_size(k, v); }},
      {"holdout", [](ExperimentSpec& s, const std::string& k, const json& v) { s.holdout_fraction = as_double(k, v); }},
      {"csv-data", [](ExperimentSpec& s, const std::string& k, const json& v) { s.csv_data = as_string(k, v); }},
      {"skip-header", [](ExperimentSpec& s, const std::string& k, const json& v) { s.skip_header = as_bool(k, v); }},
      {"lr", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.learning_rate = as_double(k, v); }},
      {"alpha", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.alpha = as_double(k, v); }},
      {"beta", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.beta = as_double(k, v); }},
      {"delta", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.delta = as_double(k, v); }},
      {"gamma", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.gamma = as_double(k, v); }},
      {"ms-alpha", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.ms.alpha = as_double(k, v); }},
      {"ms-beta", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.ms.beta = as_double(k, v); }},
      {"ms-lambda", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.ms.lambda = as_double(k, v); }},
      {"ms-epsilon", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.ms.epsilon = as_double(k, v); }},
      {"metric",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         const auto name = as_string(k, v);
         if (name == "ms") s.train.mire.metric = MetricLoss::multi_similarity;
         else if (name == "triplet") s.train.mire.metric = MetricLoss::triplet;
         else if (name == "npairs") s.train.mire.metric = MetricLoss::n_pairs;
         else bad_value(k, v, "ms, triplet or npairs");
       }},
      {"triplet-margin", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.triplet_margin = as_double(k, v); }},
      {"cc-mean", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.mire.cc_mean_over_dims = as_bool(k, v); }},
      {"cc-subset", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.cc_subset = as_size(k, v); }},
      {"replay", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.replay_batch = as_size(k, v); }},
      {"memory", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.memory_capacity = as_size(k, v); }},
      {"noise", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.noise_std = as_double(k, v); }},
      {"hidden",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         s.train.extractor.hidden.clear();
         if (v.is_string() && trim(v.get<std::string>()).empty()) return;
         for (const auto& h : as_list(v)) s.train.extractor.hidden.push_back(as_size(k, h));
       }},
      {"feature-dim", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.extractor.feature_dim = as_size(k, v); }},
      {"head-hidden", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.extractor.head_hidden = as_size(k, v); }},
      {"head-out", [](ExperimentSpec& s, const std::string& k, const json& v) { s.train.extractor.head_out = as_size(k, v); }},
      {"epochs", [](ExperimentSpec& s, const std::string& k, const json& v) { s.epochs = as_size(k, v); }},
      {"bins", [](ExperimentSpec& s, const std::string& k, const json& v) { s.theory_bins = as_size(k, v); }},
      {"theory-classes", [](ExperimentSpec& s, const std::string& k, const json& v) { s.theory_classes = as_size(k, v); }},
      {"lambda",
       [](ExperimentSpec& s, const std::string& k, const json& v) {
         s.lambdas.clear();
         for (const auto& l : as_list(v)) s.lambdas.push_back(as_double(k, l));
       }},
      {"starts", [](ExperimentSpec& s, const std::string& k, const json& v) { s.search.starts = as_size(k, v); }},
      {"step", [](ExperimentSpec& s, const std::string& k, const json& v) { s.search.step = as_double(k, v); }},
      {"iterations", [](ExperimentSpec& s, const std::string& k, const json& v) { s.search.iterations = as_size(k, v); }},
      {"chord-trials", [](ExperimentSpec& s, const std::string& k, const json& v) { s.chord_trials = as_size(k, v); }},
      {"configs", [](ExperimentSpec& s, const std::string& k, const json& v) { s.gradcheck_configs = as_size(k, v); }},
  };
  return table;
}

}  // namespace

void ExperimentSpec::validate() const {
  static const std::vector<std::string> commands{"run", "ablate", "fwd-transfer", "mean-error", "theory", "gradcheck"};
  if (std::find(commands.begin(), commands.end(), command) == commands.end())
    throw std::invalid_argument("unknown command '" + command + "'");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (methods.empty()) throw std::invalid_argument("at least one method is required");
  if (!(holdout_fraction > 0.0 && holdout_fraction <= 0.5)) throw std::invalid_argument("holdout must lie in (0, 0.5]");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (lambdas.empty()) throw std::invalid_argument("at least one lambda is required");
  stream.validate();
  train.validate();
  if (!csv_data && stream.input_dim != train.extractor.input_dim)
    throw std::invalid_argument("stream input dimension does not match the extractor input dimension");
}

void set_option(ExperimentSpec& spec, const std::string& key, const json& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw std::invalid_argument("unknown option '" + key + "'");
  it->second(spec, key, value);
}

void set_option_text(ExperimentSpec& spec, const std::string& key, const std::string& text) {
  set_option(spec, key, json(text));
}

void apply_config(ExperimentSpec& spec, const json& config) {
  if (!config.is_object()) throw std::invalid_argument("config file must hold a JSON object");
  for (const auto& [key, value] : config.items()) set_option(spec, key, value);
}

const std::vector<std::string>& option_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : setters()) n.push_back(k);
    return n;
  }();
  return names;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const std::string t = trim(text);
  std::vector<std::uint64_t> seeds;
  if (auto dots = t.find(".."); dots != std::string::npos) {
    std::uint64_t lo = 0, hi = 0;
    if (!parse_number(trim(t.substr(0, dots)), lo) || !parse_number(trim(t.substr(dots + 2)), hi) || hi < lo)
      throw std::invalid_argument("seeds: expected LO..HI with LO <= HI, got '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  for (const auto& part : split(t, ',')) {
    std::uint64_t s = 0;
    if (!parse_number(part, s)) throw std::invalid_argument("seeds: '" + part + "' is not a non-negative integer");
    seeds.push_back(s);
  }
  if (seeds.empty()) throw std::invalid_argument("seeds: empty list");
  return seeds;
}

json to_json(const ExperimentSpec& s) {
  std::vector<std::string> methods;
  for (Method m : s.methods) methods.push_back(to_string(m));
  const auto& t = s.train;
  const auto metric = t.mire.metric == MetricLoss::multi_similarity ? "ms"
                      : t.mire.metric == MetricLoss::triplet       ? "triplet"
                                                                   : "npairs";
  return {
      {"command", s.command},
      {"stream",
       {{"classes", s.stream.num_classes},
        {"classes_per_task", s.stream.classes_per_task},
        {"samples_per_class", s.stream.samples_per_class},
        {"input_dim", s.stream.input_dim},
        {"separation", s.stream.separation},
        {"batch_size", s.stream.batch_size},
        {"holdout", s.holdout_fraction},
        {"csv_data", s.csv_data ? json(*s.csv_data) : json(nullptr)},
        {"skip_header", s.skip_header}}},
      {"train",
       {{"replay", t.replay_batch},
        {"lr", t.learning_rate},
        {"alpha", t.mire.alpha},
        {"beta", t.mire.beta},
        {"delta", t.mire.delta},
        {"ms", {t.mire.ms.alpha, t.mire.ms.beta, t.mire.ms.lambda, t.mire.ms.epsilon}},
        {"metric", metric},
        {"triplet_margin", t.mire.triplet_margin},
        {"cc_mean", t.mire.cc_mean_over_dims},
        {"gamma", t.gamma},
        {"noise", t.noise_std},
        {"cc_subset", t.cc_subset},
        {"memory", t.memory_capacity},
        {"extractor",
         {{"input_dim", t.extractor.input_dim},
          {"hidden", t.extractor.hidden},
          {"feature_dim", t.extractor.feature_dim},
          {"head_hidden", t.extractor.head_hidden},
          {"head_out", t.extractor.head_out}}}}},
      {"methods", methods},
      {"seeds", s.seeds},
      {"epochs", s.epochs},
      {"theory",
       {{"bins", s.theory_bins},
        {"classes", s.theory_classes},
        {"lambdas", s.lambdas},
        {"starts", s.search.starts},
        {"step", s.search.step},
        {"iterations", s.search.iterations},
        {"chord_trials", s.chord_trials}}},
      {"gradcheck_configs", s.gradcheck_configs},
  };
}

std::string spec_hash(const ExperimentSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(spec).dump())));
  return buf;
}

PreparedData prepare_data(const ExperimentSpec& spec, std::uint64_t seed) {
  Dataset data;
  if (spec.csv_data) {
    data = read_csv_dataset(*spec.csv_data, CsvOptions{spec.skip_header, spec.train.extractor.input_dim});
    if (data.num_classes() % spec.stream.classes_per_task != 0)
      throw std::invalid_argument(std::to_string(data.num_classes()) + " classes cannot be split into tasks of " +
                                  std::to_string(spec.stream.classes_per_task));
  } else {
    StreamConfig cfg = spec.stream;
    cfg.seed = seed;
    data = generate_synthetic(cfg);
  }
  auto split = holdout(data, spec.holdout_fraction, derive_seed(seed, 0x686f6c64));
  auto tasks = consecutive_tasks(split.train.num_classes(), spec.stream.classes_per_task);
  return {build_stream(split.train, tasks, spec.stream.batch_size, derive_seed(seed, 0x73747265616d)),
          std::move(split.eval)};
}

int worker_count() {
  if (const char* env = std::getenv("MIRE_WORKERS")) {
    int w = 0;
    const std::string s = env;
    if (!parse_number(s, w) || w < 1) throw std::invalid_argument("MIRE_WORKERS must be a positive integer, got '" + s + "'");
    return w;
  }
  return omp_get_max_threads();
}

std::vector<CellResult> run_cells(const ExperimentSpec& spec, const std::vector<Cell>& cells, int workers) {
  std::vector<CellResult> results(cells.size());
  const long n = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < n; ++i) {
    auto& res = results[static_cast<std::size_t>(i)];
    res.cell = cells[static_cast<std::size_t>(i)];
    try {
      const auto data = prepare_data(spec, res.cell.seed);
      TrainConfig cfg = res.cell.train;
      cfg.seed = res.cell.seed;
      Trainer trainer(cfg);
      res.record = run(data.stream, data.eval, trainer, res.cell.label);
      res.checkpoint = encode_state(trainer.state());
    } catch (const TrainingDiverged& e) {
      res.error = std::string(e.what()) + "\n" + e.dump();
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  }
  return results;
}

std::vector<Cell> method_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (Method m : spec.methods)
    for (auto seed : spec.seeds) {
      TrainConfig t = spec.train;
      t.method = m;
      t.techniques_override.reset();
      cells.push_back({to_string(m), t, seed});
    }
  return cells;
}

const std::vector<AblationCell>& ablation_grid() {
  static const std::vector<AblationCell> grid{
      {"none", false, false, false},
      {"proto+cc", false, true, true},
      {"mi", true, false, false},
      {"mi+proto", true, true, false},
      {"mi+proto+cc", true, true, true},
  };
  return grid;
}

std::vector<Cell> ablation_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (const auto& g : ablation_grid())
    for (auto seed : spec.seeds) {
      TrainConfig t = spec.train;
      t.method = Method::mire_pp;
      t.techniques_override = Techniques{true, true, g.mi, g.cc, g.proto ? MeanMode::corrected : MeanMode::ncm};
      cells.push_back({g.name, t, seed});
    }
  return cells;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string cell_stem(const Cell& c) { return c.label + "-seed" + std::to_string(c.seed); }

json stat_json(const SummaryStat& s) { return {{"mean", s.mean}, {"ci95", s.ci95}, {"n", s.n}}; }

std::string fmt(double v) { return format_double(v); }

/// Ordered groups of successful results by label.
std::vector<std::pair<std::string, std::vector<const CellResult*>>> group_by_label(const std::vector<CellResult>& results) {
  std::vector<std::pair<std::string, std::vector<const CellResult*>>> groups;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r.cell.label; });
    if (it == groups.end()) {
      groups.push_back({r.cell.label, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(&r);
  }
  return groups;
}

void collect_failures(const std::vector<CellResult>& results, CommandResult& out) {
  for (const auto& r : results)
    if (!r.ok()) out.failures.push_back(cell_stem(r.cell) + ": " + r.error);
}

/// Writes per-run records and checkpoints; returns ACC/FGT summary JSON.
json write_runs(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  for (const auto& r : results) {
    if (!r.ok()) continue;
    write_file(dir / "runs" / (cell_stem(r.cell) + ".json"), to_json(*r.record).dump(1) + "\n");
    write_file(dir / "checkpoints" / (cell_stem(r.cell) + ".ckpt"), r.checkpoint);
  }
  json summary = json::object();
  for (const auto& [label, rs] : group_by_label(results)) {
    std::vector<double> acc, fgt;
    json per_seed = json::array();
    for (const auto* r : rs) {
      acc.push_back(r->record->acc());
      json e = {{"seed", r->cell.seed}, {"acc", acc.back()}};
      if (r->record->accuracy.tasks() >= 2) {
        fgt.push_back(r->record->fgt());
        e["fgt"] = fgt.back();
      }
      per_seed.push_back(e);
    }
    summary[label] = {{"acc", stat_json(summarize(acc))}, {"seeds", per_seed}};
    if (!fgt.empty()) summary[label]["fgt"] = stat_json(summarize(fgt));
  }
  return summary;
}

std::string metrics_csv(const std::vector<CellResult>& results) {
  std::ostringstream os;
  os << "method,seed,snapshot,iteration,mean_accuracy,task_accuracies\n";
  for (const auto& r : results) {
    if (!r.ok()) continue;
    for (const auto& s : r.record->snapshots) {
      double mean = 0.0;
      std::string tasks;
      for (std::size_t k = 0; k < s.task_accuracy.size(); ++k) {
        mean += s.task_accuracy[k];
        tasks += (k ? ";" : "") + fmt(s.task_accuracy[k]);
      }
      mean /= static_cast<double>(s.task_accuracy.size());
      os << r.cell.label << ',' << r.cell.seed << ',' << s.task << ',' << s.iteration << ',' << fmt(mean) << ','
         << tasks << '\n';
    }
  }
  return os.str();
}

std::string final_csv(const std::vector<CellResult>& results) {
  std::ostringstream os;
  os << "method,seed,acc,fgt\n";
  for (const auto& r : results) {
    if (!r.ok()) continue;
    os << r.cell.label << ',' << r.cell.seed << ',' << fmt(r.record->acc()) << ','
       << (r.record->accuracy.tasks() >= 2 ? fmt(r.record->fgt()) : "") << '\n';
  }
  return os.str();
}

std::string summary_table(const json& summary, const std::string& format, const std::string& first_column) {
  if (format == "json") return summary.dump(2) + "\n";
  std::ostringstream os;
  os << first_column << ",acc_mean,acc_ci95,fgt_mean,fgt_ci95,n\n";
  for (const auto& [label, s] : summary.items()) {
    os << label << ',' << fmt(s["acc"]["mean"].get<double>()) << ',' << fmt(s["acc"]["ci95"].get<double>()) << ',';
    if (s.contains("fgt"))
      os << fmt(s["fgt"]["mean"].get<double>()) << ',' << fmt(s["fgt"]["ci95"].get<double>());
    else
      os << ',';
    os << ',' << s["acc"]["n"].get<std::size_t>() << '\n';
  }
  return os.str();
}

void cmd_run(const ExperimentSpec& spec, const std::string& format, int workers, CommandResult& out) {
  const auto results = run_cells(spec, method_cells(spec), workers);
  collect_failures(results, out);
  const json summary = write_runs(out.dir, results);
  write_file(out.dir / "metrics.csv", metrics_csv(results));
  write_file(out.dir / "final.csv", final_csv(results));
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = summary_table(summary, format, "method");
}

void cmd_ablate(const ExperimentSpec& spec, const std::string& format, int workers, CommandResult& out) {
  const auto results = run_cells(spec, ablation_cells(spec), workers);
  collect_failures(results, out);
  const json summary = write_runs(out.dir, results);
  std::ostringstream os;
  os << "cell,mi,proto,cc,seed,acc,fgt\n";
  for (const auto& g : ablation_grid())
    for (const auto& r : results) {
      if (!r.ok() || r.cell.label != g.name) continue;
      os << g.name << ',' << g.mi << ',' << g.proto << ',' << g.cc << ',' << r.cell.seed << ',' << fmt(r.record->acc())
         << ',' << (r.record->accuracy.tasks() >= 2 ? fmt(r.record->fgt()) : "") << '\n';
    }
  write_file(out.dir / "ablation.csv", os.str());
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = summary_table(summary, format, "cell");
}

void cmd_fwd_transfer(const ExperimentSpec& spec, const std::string& format, int workers, CommandResult& out) {
  const std::vector<Method> pair{Method::ms_ncm, Method::mire};
  struct Unit {
    Method method;
    std::uint64_t seed;
    std::vector<double> gaps;
    std::string error;
  };
  std::vector<Unit> units;
  for (auto seed : spec.seeds)
    for (Method m : pair) units.push_back({m, seed, {}, {}});
  const long n = static_cast<long>(units.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < n; ++i) {
    auto& u = units[static_cast<std::size_t>(i)];
    try {
      const auto data = prepare_data(spec, u.seed);
      TrainConfig cfg = spec.train;
      cfg.method = u.method;
      cfg.techniques_override.reset();
      cfg.seed = u.seed;
      const Trainer t = train_first_task(data.stream, cfg, spec.epochs);
      u.gaps = forward_transfer_gaps(t.state().extractor, data.eval, data.stream.task_classes());
    } catch (const std::exception& e) {
      u.error = e.what();
    }
  }

  std::ostringstream csv;
  csv << "method,seed,task,gap\n";
  std::map<std::string, std::vector<std::vector<double>>> by_task;  // method -> task -> gaps over seeds
  std::map<std::uint64_t, std::map<Method, double>> seed_means;
  for (const auto& u : units) {
    const std::string label = u.method == Method::mire ? "mire" : "ms-only";
    if (!u.error.empty()) {
      out.failures.push_back(label + "-seed" + std::to_string(u.seed) + ": " + u.error);
      continue;
    }
    auto& tasks = by_task[label];
    tasks.resize(u.gaps.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < u.gaps.size(); ++k) {
      csv << label << ',' << u.seed << ',' << k + 1 << ',' << fmt(u.gaps[k]) << '\n';
      tasks[k].push_back(u.gaps[k]);
      mean += u.gaps[k];
    }
    seed_means[u.seed][u.method] = mean / static_cast<double>(u.gaps.size());
  }
  std::size_t wins = 0, compared = 0;
  for (const auto& [seed, m] : seed_means)
    if (m.size() == 2) {
      ++compared;
      wins += m.at(Method::mire) <= m.at(Method::ms_ncm) ? 1 : 0;
    }

  json summary = json::object();
  std::ostringstream table;
  table << "method,task,gap_mean,gap_ci95,n\n";
  for (const auto& [label, tasks] : by_task) {
    json per_task = json::array();
    std::vector<double> seed_avg;
    for (const auto& [seed, m] : seed_means)
      if (m.contains(label == "mire" ? Method::mire : Method::ms_ncm)) seed_avg.push_back(m.at(label == "mire" ? Method::mire : Method::ms_ncm));
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      const auto st = summarize(tasks[k]);
      per_task.push_back(stat_json(st));
      table << label << ',' << k + 1 << ',' << fmt(st.mean) << ',' << fmt(st.ci95) << ',' << st.n << '\n';
    }
    summary[label] = {{"per_task", per_task}, {"mean_gap", stat_json(summarize(seed_avg))}};
  }
  summary["seeds_mire_not_larger"] = wins;
  summary["seeds_compared"] = compared;
  write_file(out.dir / "fwd_transfer.csv", csv.str());
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = format == "json" ? summary.dump(2) + "\n" : table.str();
}

void cmd_mean_error(const ExperimentSpec& spec, const std::string& format, int workers, CommandResult& out) {
  const auto results = run_cells(spec, method_cells(spec), workers);
  collect_failures(results, out);
  write_runs(out.dir, results);

  // Analyses read the serialized snapshots back rather than the live records.
  std::ostringstream err_csv, var_csv;
  err_csv << "method,seed,snapshot,mode,error\n";
  var_csv << "method,seed,class,snapshot,variance\n";
  std::map<std::string, std::map<std::size_t, std::map<std::string, std::vector<double>>>> acc;
  for (const auto& r : results) {
    if (!r.ok()) continue;
    const auto rec = run_record_from_json(json::parse(read_file(out.dir / "runs" / (cell_stem(r.cell) + ".json"))));
    for (const auto& row : class_mean_error(rec.snapshots)) {
      err_csv << rec.label << ',' << rec.seed << ',' << row.snapshot << ',' << to_string(row.mode) << ','
              << fmt(row.error) << '\n';
      acc[rec.label][row.snapshot][to_string(row.mode)].push_back(row.error);
    }
    for (const auto& [c, series] : feature_variance_track(rec.snapshots))
      for (std::size_t s = 0; s < series.size(); ++s)
        if (!std::isnan(series[s])) var_csv << rec.label << ',' << rec.seed << ',' << c << ',' << s << ',' << fmt(series[s]) << '\n';
  }
  json summary = json::object();
  std::ostringstream table;
  table << "method,snapshot,mode,error_mean,error_ci95,n\n";
  for (const auto& [label, snaps] : acc) {
    json rows = json::array();
    for (const auto& [snap, modes] : snaps)
      for (const auto& [mode, errs] : modes) {
        const auto st = summarize(errs);
        rows.push_back({{"snapshot", snap}, {"mode", mode}, {"error", stat_json(st)}});
        table << label << ',' << snap << ',' << mode << ',' << fmt(st.mean) << ',' << fmt(st.ci95) << ',' << st.n << '\n';
      }
    summary[label] = rows;
  }
  write_file(out.dir / "mean_error.csv", err_csv.str());
  write_file(out.dir / "variance.csv", var_csv.str());
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = format == "json" ? summary.dump(2) + "\n" : table.str();
}

void cmd_theory(const ExperimentSpec& spec, const std::string& format, int workers, CommandResult& out) {
  const std::size_t n = spec.lambdas.size();
  std::vector<json> rows(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const double lambda = spec.lambdas[static_cast<std::size_t>(i)];
    try {
      theory::SearchConfig search = spec.search;
      search.seed = spec.seeds.front();
      const auto res = theory::maximize_lambda_objective(spec.theory_bins, spec.theory_classes, lambda, search);
      const auto& d = res.diagnostics;
      std::string verdict;
      bool ok = d.converged() && d.h_y_given_z < 1e-6;
      if (lambda < 1.0) {
        const bool singles = std::all_of(d.support_sizes.begin(), d.support_sizes.end(), [](auto s) { return s == 1; });
        ok = ok && singles && d.overlap < 1e-6;
        verdict = ok ? "support-size-1" : "unexpected";
      } else if (lambda == 1.0) {
        const auto other = theory::redistribute_within_support(res.best, search.seed);
        const double gap = std::abs(theory::lambda_objective(other, lambda) - d.objective);
        ok = ok && gap < 1e-9;
        verdict = ok ? "support-free-optimum" : "unexpected";
      } else if (spec.theory_bins % spec.theory_classes == 0) {
        ok = ok && d.uniform_deviation < 1e-3 && d.overlap < 1e-6;
        verdict = ok ? "uniform-marginal" : "unexpected";
      } else {
        verdict = ok ? "disjoint" : "unexpected";
      }
      if (!d.converged()) verdict = "not-converged";
      json row = {{"lambda", lambda},
                  {"objective", d.objective},
                  {"h_z", d.h_z},
                  {"h_y_given_z", d.h_y_given_z},
                  {"overlap", d.overlap},
                  {"support_sizes", d.support_sizes},
                  {"uniform_deviation", d.uniform_deviation},
                  {"marginal", d.marginal},
                  {"converged_starts", d.converged_starts},
                  {"total_starts", d.total_starts},
                  {"exhaustive", d.exhaustive},
                  {"verdict", verdict}};
      if (lambda >= 1.0) {
        const auto disjoint = theory::chord_concavity(spec.theory_bins, spec.theory_classes, lambda,
                                                      theory::ChordDomain::disjoint, spec.chord_trials, search.seed);
        const auto general = theory::chord_concavity(spec.theory_bins, spec.theory_classes, lambda,
                                                     theory::ChordDomain::general, spec.chord_trials, search.seed);
        row["chord_disjoint_violations"] = disjoint.violations;
        row["chord_general_violations"] = general.violations;
        row["chord_trials"] = spec.chord_trials;
      }
      rows[static_cast<std::size_t>(i)] = row;
      if (verdict == "unexpected" || verdict == "not-converged")
        errors[static_cast<std::size_t>(i)] = "lambda " + fmt(lambda) + ": " + verdict;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = "lambda " + fmt(lambda) + ": " + e.what();
    }
  }
  std::ostringstream table;
  table << "lambda,objective,support_sizes,overlap,uniform_deviation,h_y_given_z,verdict,chord_disjoint_violations,"
           "chord_general_violations\n";
  json summary = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) out.failures.push_back(errors[i]);
    if (rows[i].is_null()) continue;
    const auto& r = rows[i];
    std::string sizes;
    for (const auto& s : r["support_sizes"]) sizes += (sizes.empty() ? "" : ";") + std::to_string(s.get<std::size_t>());
    table << fmt(r["lambda"].get<double>()) << ',' << fmt(r["objective"].get<double>()) << ',' << sizes << ','
          << fmt(r["overlap"].get<double>()) << ',' << fmt(r["uniform_deviation"].get<double>()) << ','
          << fmt(r["h_y_given_z"].get<double>()) << ',' << r["verdict"].get<std::string>() << ','
          << (r.contains("chord_disjoint_violations") ? std::to_string(r["chord_disjoint_violations"].get<std::size_t>()) : "")
          << ','
          << (r.contains("chord_general_violations") ? std::to_string(r["chord_general_violations"].get<std::size_t>()) : "")
          << '\n';
    summary.push_back(r);
  }
  write_file(out.dir / "theory.csv", table.str());
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = format == "json" ? summary.dump(2) + "\n" : table.str();
}

void cmd_gradcheck(const ExperimentSpec& spec, const std::string& format, CommandResult& out) {
  LossCheckConfig cfg;
  cfg.configs = spec.gradcheck_configs;
  cfg.seed = spec.seeds.front();
  const auto rep = check_loss_gradients(cfg);
  constexpr double kTolerance = 1e-4;
  std::ostringstream table;
  table << "loss,max_rel_error,configs,redraws,pass\n";
  json summary = json::object();
  for (const auto& [name, err] : {std::pair{"ms", rep.ms}, {"mire", rep.mire}, {"mire++", rep.mire_pp}}) {
    const bool pass = err < kTolerance;
    table << name << ',' << fmt(err) << ',' << rep.configs << ',' << rep.redraws << ',' << (pass ? "yes" : "no") << '\n';
    summary[name] = {{"max_rel_error", err}, {"pass", pass}};
    if (!pass) out.failures.push_back(std::string(name) + ": max relative error " + fmt(err) + " >= 1e-4");
  }
  summary["configs"] = rep.configs;
  summary["redraws"] = rep.redraws;
  write_file(out.dir / "gradcheck.csv", table.str());
  write_file(out.dir / "summary.json", summary.dump(2) + "\n");
  out.table = format == "json" ? summary.dump(2) + "\n" : table.str();
}

}  // namespace

CommandResult execute(const ExperimentSpec& input, const std::filesystem::path& out_root, const std::string& format,
                      int workers) {
  if (format != "csv" && format != "json") throw std::invalid_argument("format must be csv or json");
  if (workers < 1) throw std::invalid_argument("worker count must be positive");
  ExperimentSpec spec = input;
  if (spec.csv_data) {
    // The extractor input width follows the data file.
    const auto data = read_csv_dataset(*spec.csv_data, CsvOptions{spec.skip_header, 0});
    spec.train.extractor.input_dim = data.input_dim;
    spec.stream.input_dim = data.input_dim;
    spec.stream.num_classes = data.num_classes();
  }
  spec.validate();

  CommandResult out;
  out.dir = out_root / spec_hash(spec);
  std::filesystem::create_directories(out.dir);
  write_file(out.dir / "spec.json", to_json(spec).dump(2) + "\n");

  if (spec.command == "run") cmd_run(spec, format, workers, out);
  else if (spec.command == "ablate") cmd_ablate(spec, format, workers, out);
  else if (spec.command == "fwd-transfer") cmd_fwd_transfer(spec, format, workers, out);
  else if (spec.command == "mean-error") cmd_mean_error(spec, format, workers, out);
  else if (spec.command == "theory") cmd_theory(spec, format, workers, out);
  else cmd_gradcheck(spec, format, out);

  out.exit_code = out.failures.empty() ? 0 : 1;
  return out;
}

}  // namespace mire
