#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mire::theory {

/// Joint of a class label Y (fixed prior) and a discretized feature Z with
/// `bins` values; conditional[y] is p(z | y).
struct DiscreteJoint {
  std::size_t bins = 0;
  std::vector<double> prior;
  std::vector<std::vector<double>> conditional;

  std::size_t classes() const { return prior.size(); }
  /// Rows and prior sum to 1 within 1e-12 and are nonnegative.
  void validate() const;
  std::vector<double> marginal() const;
};

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(std::span<const double> p);
double marginal_entropy(const DiscreteJoint& j);
double conditional_entropy_z_given_y(const DiscreteJoint& j);
double conditional_entropy_y_given_z(const DiscreteJoint& j);

/// lambda H(Z) - H(Z|Y).
double lambda_objective(const DiscreteJoint& j, double lambda);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

struct SearchConfig {
  std::size_t starts = 64;
  double step = 0.1;
  std::size_t iterations = 10000;
  /// A start has converged when no coordinate moves more than this in a step.
  double tolerance = 1e-12;
  /// log(q) is evaluated as log(max(q, log_floor)) in the ascent direction.
  double log_floor = 1e-12;
  std::uint64_t seed = 0;
  /// Use the exhaustive 1/20 grid when bins <= 4 and the grid is small enough.
  bool allow_grid = true;
};

struct Diagnostics {
  double objective = 0.0;
  /// Mass not explained by the most likely class of each bin; 0 iff supports are disjoint.
  double overlap = 0.0;
  double h_z = 0.0;
  double h_y_given_z = 0.0;
  std::vector<double> marginal;
  /// Bins with p(z|y) > support_threshold, per class.
  std::vector<std::size_t> support_sizes;
  /// max_z |p(z) - 1/K|.
  double uniform_deviation = 0.0;
  std::size_t converged_starts = 0;
  std::size_t total_starts = 0;
  bool exhaustive = false;

  bool converged() const { return exhaustive || converged_starts > 0; }
};

inline constexpr double kSupportThreshold = 1e-6;

Diagnostics diagnose(const DiscreteJoint& j, double lambda);

struct SearchResult {
  DiscreteJoint best;
  Diagnostics diagnostics;
};

/// Best joint found by multi-start projected gradient ascent over the class
/// rows (or the exhaustive grid for small K). Uniform prior when `prior` is
/// empty.
SearchResult maximize_lambda_objective(std::size_t bins, std::size_t classes, double lambda, const SearchConfig& cfg,
                                       std::vector<double> prior = {});

/// Gradient of lambda_objective with respect to conditional[y][z].
std::vector<std::vector<double>> objective_gradient(const DiscreteJoint& j, double lambda, double log_floor = 0.0);

/// Same supports, masses redistributed at random within each class's
/// support (entries <= kSupportThreshold stay at zero).
DiscreteJoint redistribute_within_support(const DiscreteJoint& j, std::uint64_t seed);

enum class ChordDomain {
  /// Every class row is a full-support random distribution.
  general,
  /// Classes own disjoint blocks of bins; rows are random within their block.
  disjoint,
};

struct ChordReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// Largest (mean of endpoints - midpoint) seen; <= 0 when none violated.
  double worst_gap = 0.0;
};

/// Random chords that move a single class row with the other rows fixed;
/// a violation is midpoint < mean of endpoints - 1e-9.
ChordReport chord_concavity(std::size_t bins, std::size_t classes, double lambda, ChordDomain domain,
                            std::size_t trials, std::uint64_t seed);

}  // namespace mire::theory
