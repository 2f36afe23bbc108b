#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "mire/classifier.hpp"

namespace mire {

/// a(j, i): accuracy on task i after learning task j, 0-based, i <= j.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t tasks = 0);
  static AccuracyMatrix from_rows(std::vector<std::vector<double>> rows);

  std::size_t tasks() const { return rows_.size(); }
  void set(std::size_t after_task, std::size_t task, double accuracy);
  double at(std::size_t after_task, std::size_t task) const;
  /// Row j holds j + 1 entries once task j has been evaluated.
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  bool complete() const;

 private:
  std::vector<std::vector<double>> rows_;
};

/// Mean of the final row.
double average_accuracy(const AccuracyMatrix& a);

/// (1 / (T-1)) sum_{i < T-1} [max_{i <= j < T-1} a(j, i) - a(T-1, i)], not
/// clamped (backward transfer may make terms negative). Requires T >= 2.
double average_forgetting(const AccuracyMatrix& a);

/// Evaluation state captured at a task boundary.
struct Snapshot {
  std::size_t task = 0;
  std::uint64_t iteration = 0;
  /// Accuracy on tasks 0..task under the run's inference mode.
  std::vector<double> task_accuracy;
  ClassMeans ncm_means;
  ClassMeans corrected_means;
  /// Means of held-out features under the current extractor.
  ClassMeans true_means;
  /// Per class: element-wise variance of held-out features averaged over dims.
  std::map<int, double> feature_variance;
};

/// Mean over classes of |truth_c - estimate_c|_2 for the classes of `truth`.
double mean_estimation_error(const ClassMeans& truth, const ClassMeans& estimate);

struct MeanErrorRow {
  std::size_t snapshot;
  MeanMode mode;
  double error;
};

/// One row per snapshot and mode (memory mean, corrected prototype).
std::vector<MeanErrorRow> class_mean_error(std::span<const Snapshot> snapshots);

/// Population variance of each coordinate, averaged over coordinates.
double mean_feature_variance(const std::vector<Vec>& features);

/// class -> variance per snapshot (NaN where the class was not yet seen).
std::map<int, std::vector<double>> feature_variance_track(std::span<const Snapshot> snapshots);

/// gap_k = acc(task 0) - acc(task k) for k >= 1, each task classified within
/// its own class set using held-out true means.
std::vector<double> forward_transfer_gaps(const Extractor& extractor, const Dataset& eval,
                                          const std::vector<std::vector<int>>& tasks);

struct SummaryStat {
  double mean = 0.0;
  /// 95% Student-t confidence half-width (0 for a single value).
  double ci95 = 0.0;
  std::size_t n = 0;
};

SummaryStat summarize(std::span<const double> values);

}  // namespace mire
