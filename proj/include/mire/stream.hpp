#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mire/model.hpp"
#include "mire/rng.hpp"

namespace mire {

struct Sample {
  Vec x;
  int label = 0;
  bool operator==(const Sample&) const = default;
};

using Batch = std::vector<Sample>;

struct StreamConfig {
  std::size_t num_classes = 10;
  std::size_t classes_per_task = 2;
  std::size_t samples_per_class = 200;
  std::size_t input_dim = 16;
  /// Norm of every class mean, in units of the (unit) cluster std.
  double separation = 6.0;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t num_tasks() const { return num_classes / classes_per_task; }
};

/// Samples grouped by class id; by_class[c] holds every sample of class c.
struct Dataset {
  std::size_t input_dim = 0;
  std::vector<std::vector<Vec>> by_class;
  /// Generating means when known (synthetic data), else empty.
  std::vector<Vec> class_means;

  std::size_t num_classes() const { return by_class.size(); }
};

/// Consecutive class groups: {{0..k-1}, {k..2k-1}, ...}.
std::vector<std::vector<int>> consecutive_tasks(std::size_t num_classes, std::size_t classes_per_task);

/// Read-only view handed to the learner: minibatches in order, nothing else.
class LearnerStream {
 public:
  explicit LearnerStream(std::span<const Batch> batches) : batches_(batches) {}
  std::size_t size() const { return batches_.size(); }
  const Batch& operator[](std::size_t i) const { return batches_[i]; }
  auto begin() const { return batches_.begin(); }
  auto end() const { return batches_.end(); }

 private:
  std::span<const Batch> batches_;
};

/// A class-incremental stream. Task boundaries are kept for the evaluator
/// and never reach the learner through learner().
class SplitStream {
 public:
  SplitStream(std::vector<Batch> batches, std::vector<std::size_t> task_ends,
              std::vector<std::vector<int>> task_classes);

  LearnerStream learner() const { return LearnerStream(batches_); }

  // Evaluator side.
  std::size_t num_tasks() const { return task_ends_.size(); }
  /// One past the last batch index of each task.
  const std::vector<std::size_t>& task_ends() const { return task_ends_; }
  const std::vector<std::vector<int>>& task_classes() const { return task_classes_; }
  std::size_t num_classes() const;
  std::size_t num_samples() const;

 private:
  std::vector<Batch> batches_;
  std::vector<std::size_t> task_ends_;
  std::vector<std::vector<int>> task_classes_;
};

/// Isotropic unit-covariance Gaussian classes; mean of class c is a random
/// unit direction scaled by cfg.separation.
Dataset generate_synthetic(const StreamConfig& cfg);

/// `per_class` draws around each of the given means with unit covariance.
Dataset sample_gaussian_classes(const std::vector<Vec>& means, std::size_t per_class, Rng& rng);

/// Within each task the samples of its classes are shuffled (seeded) and cut
/// into minibatches; a trailing partial batch is kept.
SplitStream build_stream(const Dataset& data, const std::vector<std::vector<int>>& tasks,
                         std::size_t batch_size, std::uint64_t seed);

SplitStream make_split_synthetic(const StreamConfig& cfg);

struct HoldoutSplit {
  Dataset train;
  Dataset eval;
};

/// Moves floor(fraction * n_c) random samples of every class into an
/// evaluation set. fraction must lie in (0, 0.5]; every class must keep at
/// least one sample on each side.
HoldoutSplit holdout(const Dataset& data, double fraction, std::uint64_t seed);

struct CsvOptions {
  bool skip_header = false;
  /// Expected feature count; 0 infers it from the first data row.
  std::size_t input_dim = 0;
};

/// Reads `label,f1,...,fd` rows. Labels must form the range 0..C-1.
Dataset read_csv_dataset(const std::filesystem::path& path, const CsvOptions& opts = {});

struct SplitSpec {
  std::size_t classes_per_task = 2;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
};

SplitStream load_csv_dataset(const std::filesystem::path& path, const SplitSpec& split,
                             const CsvOptions& opts = {});

}  // namespace mire
