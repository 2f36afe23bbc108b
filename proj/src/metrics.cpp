#include "mire/metrics.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mire {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) : rows_(tasks) {}

AccuracyMatrix AccuracyMatrix::from_rows(std::vector<std::vector<double>> rows) {
  AccuracyMatrix a(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != j + 1) throw std::invalid_argument("AccuracyMatrix: row " + std::to_string(j) + " must have " + std::to_string(j + 1) + " entries");
    for (std::size_t i = 0; i <= j; ++i) a.set(j, i, rows[j][i]);
  }
  return a;
}

void AccuracyMatrix::set(std::size_t after_task, std::size_t task, double accuracy) {
  if (after_task >= rows_.size() || task > after_task)
    throw std::out_of_range("AccuracyMatrix: entry outside the lower triangle");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw std::invalid_argument("AccuracyMatrix: accuracy outside [0, 1]");
  auto& row = rows_[after_task];
  if (row.size() <= task) row.resize(task + 1, std::numeric_limits<double>::quiet_NaN());
  row[task] = accuracy;
}

double AccuracyMatrix::at(std::size_t after_task, std::size_t task) const {
  if (after_task >= rows_.size() || task >= rows_[after_task].size())
    throw std::out_of_range("AccuracyMatrix: missing entry");
  return rows_[after_task][task];
}

bool AccuracyMatrix::complete() const {
  for (std::size_t j = 0; j < rows_.size(); ++j) {
    if (rows_[j].size() != j + 1) return false;
    for (double v : rows_[j])
      if (std::isnan(v)) return false;
  }
  return true;
}

double average_accuracy(const AccuracyMatrix& a) {
  const std::size_t t = a.tasks();
  if (t == 0) throw std::invalid_argument("average_accuracy: empty matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < t; ++i) s += a.at(t - 1, i);
  return s / static_cast<double>(t);
}

double average_forgetting(const AccuracyMatrix& a) {
  const std::size_t t = a.tasks();
  if (t < 2) throw std::invalid_argument("average_forgetting: needs at least two tasks");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = i; j + 1 < t; ++j) best = std::max(best, a.at(j, i));
    s += best - a.at(t - 1, i);
  }
  return s / static_cast<double>(t - 1);
}

double mean_estimation_error(const ClassMeans& truth, const ClassMeans& estimate) {
  if (truth.size() == 0) throw std::invalid_argument("mean_estimation_error: no classes");
  double s = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) s += distance(truth.means[k], estimate.of(truth.classes[k]));
  return s / static_cast<double>(truth.size());
}

std::vector<MeanErrorRow> class_mean_error(std::span<const Snapshot> snapshots) {
  std::vector<MeanErrorRow> rows;
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    const auto& snap = snapshots[s];
    rows.push_back({s, MeanMode::ncm, mean_estimation_error(snap.true_means, snap.ncm_means)});
    rows.push_back({s, MeanMode::corrected, mean_estimation_error(snap.true_means, snap.corrected_means)});
  }
  return rows;
}

double mean_feature_variance(const std::vector<Vec>& features) {
  if (features.empty()) throw std::invalid_argument("mean_feature_variance: no features");
  const Vec mu = mean_of(features);
  double total = 0.0;
  for (const auto& f : features)
    for (std::size_t i = 0; i < mu.size(); ++i) total += (f[i] - mu[i]) * (f[i] - mu[i]);
  return total / static_cast<double>(features.size() * mu.size());
}

std::map<int, std::vector<double>> feature_variance_track(std::span<const Snapshot> snapshots) {
  std::map<int, std::vector<double>> track;
  for (const auto& snap : snapshots)
    for (const auto& [label, _] : snap.feature_variance)
      track.emplace(label, std::vector<double>(snapshots.size(), std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t s = 0; s < snapshots.size(); ++s)
    for (const auto& [label, v] : snapshots[s].feature_variance) track[label][s] = v;
  return track;
}

std::vector<double> forward_transfer_gaps(const Extractor& extractor, const Dataset& eval,
                                          const std::vector<std::vector<int>>& tasks) {
  if (tasks.size() < 2) throw std::invalid_argument("forward_transfer_gaps: needs at least two tasks");
  std::vector<double> acc;
  for (const auto& classes : tasks) {
    ClassMeans means = true_means(eval, classes, extractor);
    acc.push_back(evaluate(means, extractor, eval, classes).accuracy());
  }
  std::vector<double> gaps;
  for (std::size_t k = 1; k < acc.size(); ++k) gaps.push_back(acc[0] - acc[k]);
  return gaps;
}

SummaryStat summarize(std::span<const double> values) {
  SummaryStat st;
  st.n = values.size();
  if (st.n == 0) return st;
  for (double v : values) st.mean += v;
  st.mean /= static_cast<double>(st.n);
  if (st.n < 2) return st;
  double ss = 0.0;
  for (double v : values) ss += (v - st.mean) * (v - st.mean);
  const double sd = std::sqrt(ss / static_cast<double>(st.n - 1));
  boost::math::students_t dist(static_cast<double>(st.n - 1));
  st.ci95 = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(st.n));
  return st;
}

}  // namespace mire
