#include "mire/stream.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mire/rng.hpp"

namespace mire {

void StreamConfig::validate() const {
  if (num_classes == 0 || classes_per_task == 0 || num_classes % classes_per_task != 0)
    throw std::invalid_argument("StreamConfig: num_classes must be a positive multiple of classes_per_task");
  if (batch_size < 1) throw std::invalid_argument("StreamConfig: batch_size must be >= 1");
  if (samples_per_class < 1 || input_dim < 1)
    throw std::invalid_argument("StreamConfig: samples_per_class and input_dim must be >= 1");
  if (!(separation >= 0.0)) throw std::invalid_argument("StreamConfig: separation must be >= 0");
}

std::vector<std::vector<int>> consecutive_tasks(std::size_t num_classes, std::size_t classes_per_task) {
  if (classes_per_task == 0 || num_classes % classes_per_task != 0)
    throw std::invalid_argument("consecutive_tasks: num_classes not divisible by classes_per_task");
  std::vector<std::vector<int>> tasks(num_classes / classes_per_task);
  for (std::size_t c = 0; c < num_classes; ++c) tasks[c / classes_per_task].push_back(static_cast<int>(c));
  return tasks;
}

SplitStream::SplitStream(std::vector<Batch> batches, std::vector<std::size_t> task_ends,
                         std::vector<std::vector<int>> task_classes)
    : batches_(std::move(batches)), task_ends_(std::move(task_ends)), task_classes_(std::move(task_classes)) {
  if (task_ends_.size() != task_classes_.size())
    throw std::invalid_argument("SplitStream: task_ends and task_classes disagree");
}

std::size_t SplitStream::num_classes() const {
  std::size_t n = 0;
  for (const auto& t : task_classes_) n += t.size();
  return n;
}

std::size_t SplitStream::num_samples() const {
  std::size_t n = 0;
  for (const auto& b : batches_) n += b.size();
  return n;
}

Dataset sample_gaussian_classes(const std::vector<Vec>& means, std::size_t per_class, Rng& rng) {
  Dataset data;
  data.input_dim = means.empty() ? 0 : means.front().size();
  data.class_means = means;
  data.by_class.resize(means.size());
  for (std::size_t c = 0; c < means.size(); ++c) {
    auto& rows = data.by_class[c];
    rows.reserve(per_class);
    for (std::size_t i = 0; i < per_class; ++i) {
      Vec x(means[c]);
      for (auto& v : x) v += rng.normal();
      rows.push_back(std::move(x));
    }
  }
  return data;
}

Dataset generate_synthetic(const StreamConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x73796e74ULL));
  std::vector<Vec> means(cfg.num_classes, Vec(cfg.input_dim));
  for (auto& mu : means) {
    double norm = 0.0;
    do {
      for (auto& v : mu) v = rng.normal();
      norm = 0.0;
      for (double v : mu) norm += v * v;
      norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (auto& v : mu) v *= cfg.separation / norm;
  }
  return sample_gaussian_classes(means, cfg.samples_per_class, rng);
}

SplitStream build_stream(const Dataset& data, const std::vector<std::vector<int>>& tasks,
                         std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("build_stream: batch_size must be >= 1");
  Rng rng(derive_seed(seed, 0x6f72646572ULL));
  std::vector<Batch> batches;
  std::vector<std::size_t> ends;
  for (const auto& classes : tasks) {
    std::vector<Sample> pool;
    for (int c : classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= data.num_classes())
        throw std::invalid_argument("build_stream: task references unknown class " + std::to_string(c));
      for (const auto& x : data.by_class[static_cast<std::size_t>(c)]) pool.push_back({x, c});
    }
    rng.shuffle(pool);
    for (std::size_t i = 0; i < pool.size(); i += batch_size) {
      const std::size_t end = std::min(pool.size(), i + batch_size);
      batches.emplace_back(std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(i)),
                           std::make_move_iterator(pool.begin() + static_cast<std::ptrdiff_t>(end)));
    }
    ends.push_back(batches.size());
  }
  return SplitStream(std::move(batches), std::move(ends), tasks);
}

SplitStream make_split_synthetic(const StreamConfig& cfg) {
  return build_stream(generate_synthetic(cfg), consecutive_tasks(cfg.num_classes, cfg.classes_per_task),
                      cfg.batch_size, cfg.seed);
}

HoldoutSplit holdout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 0.5))
    throw std::invalid_argument("holdout: fraction must lie in (0, 0.5]");
  Rng rng(derive_seed(seed, 0x686f6c64ULL));
  HoldoutSplit split;
  split.train.input_dim = split.eval.input_dim = data.input_dim;
  split.train.class_means = split.eval.class_means = data.class_means;
  for (std::size_t c = 0; c < data.num_classes(); ++c) {
    const auto& rows = data.by_class[c];
    const auto n_eval = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size())));
    if (n_eval < 1 || n_eval >= rows.size())
      throw std::invalid_argument("holdout: class " + std::to_string(c) + " has insufficient samples (" +
                                  std::to_string(rows.size()) + ")");
    auto picked = rng.sample_without_replacement(rows.size(), n_eval);
    std::vector<bool> is_eval(rows.size(), false);
    for (auto i : picked) is_eval[i] = true;
    auto& tr = split.train.by_class.emplace_back();
    auto& ev = split.eval.by_class.emplace_back();
    for (std::size_t i = 0; i < rows.size(); ++i) (is_eval[i] ? ev : tr).push_back(rows[i]);
  }
  return split;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void csv_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("csv line " + std::to_string(line) + ": " + what);
}

}  // namespace

Dataset read_csv_dataset(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  Dataset data;
  data.input_dim = opts.input_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && opts.skip_header) continue;
    std::string_view rest = trim(line);
    if (rest.empty()) continue;

    std::vector<std::string_view> fields;
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(trim(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }

    long label = -1;
    auto lf = fields[0];
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc() || lp != lf.data() + lf.size() || label < 0)
      csv_error(line_no, "label '" + std::string(lf) + "' is not a non-negative integer" +
                             (line_no == 1 ? " (header rows need --skip-header)" : ""));

    Vec x;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double v = 0.0;
      auto f = fields[k];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v))
        csv_error(line_no, "feature " + std::to_string(k) + " '" + std::string(f) + "' is not a finite number");
      x.push_back(v);
    }
    if (x.empty()) csv_error(line_no, "row has no features");
    if (data.input_dim == 0) data.input_dim = x.size();
    if (x.size() != data.input_dim)
      csv_error(line_no, "expected " + std::to_string(data.input_dim) + " features, got " + std::to_string(x.size()));

    const auto c = static_cast<std::size_t>(label);
    if (c >= data.by_class.size()) data.by_class.resize(c + 1);
    data.by_class[c].push_back(std::move(x));
  }
  if (data.by_class.empty()) throw std::runtime_error("csv: " + path.string() + " contains no samples");
  for (std::size_t c = 0; c < data.by_class.size(); ++c)
    if (data.by_class[c].empty())
      throw std::runtime_error("csv: labels are not contiguous, class " + std::to_string(c) + " is missing");
  return data;
}

SplitStream load_csv_dataset(const std::filesystem::path& path, const SplitSpec& split, const CsvOptions& opts) {
  Dataset data = read_csv_dataset(path, opts);
  return build_stream(data, consecutive_tasks(data.num_classes(), split.classes_per_task), split.batch_size,
                      split.seed);
}

}  // namespace mire
