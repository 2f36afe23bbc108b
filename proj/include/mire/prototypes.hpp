#pragma once

#include <map>
#include <optional>
#include <span>

#include "mire/stream.hpp"
#include "mire/vecmath.hpp"

namespace mire {

/// Momentum-updated class prototypes on the unit hypersphere.
class PrototypeTable {
 public:
  explicit PrototypeTable(double gamma = 0.99);

  /// For every class present in the batch: p <- normalize(gamma p + (1 - gamma) mean_c),
  /// where mean_c averages that class's (unit) features. A class seen for the
  /// first time starts at normalize(mean_c).
  void update(const Batch& batch, const std::vector<Vec>& features);

  double gamma() const { return gamma_; }
  bool contains(int label) const { return protos_.contains(label); }
  const Vec& at(int label) const;
  const std::map<int, Vec>& all() const { return protos_; }

  static PrototypeTable restore(double gamma, std::map<int, Vec> protos);
  bool operator==(const PrototypeTable&) const = default;

 private:
  double gamma_;
  std::map<int, Vec> protos_;
};

/// normalize(prototype - stored_mean + current_mean): shifts the prototype by
/// the drift that the memory samples underwent since they were stored.
/// nullopt when the corrected vector is (numerically) zero; callers then fall
/// back to current_mean.
std::optional<Vec> corrected_mean(std::span<const double> prototype, std::span<const double> stored_mean,
                                  std::span<const double> current_mean);

struct EstimatorVariance {
  double corrected;
  double naive;
  bool reduces() const { return corrected < naive; }
};

/// Variance of the drift-corrected mean, (s_t^2 + s_t'^2 - 2 rho s_t s_t') / n,
/// against the plain memory mean's s_t'^2 / n.
EstimatorVariance estimator_variance(double sigma_then, double sigma_now, double rho, std::size_t n);

/// Closed-form condition for corrected < naive: sigma_then < 2 rho sigma_now.
inline bool variance_reduction_predicate(double sigma_then, double sigma_now, double rho) {
  return sigma_then < 2.0 * rho * sigma_now;
}

/// -sum_i 0.5 log(1 - rho_i^2), in nats; +infinity if any |rho_i| >= 1.
double cross_time_mi(std::span<const double> rho);

}  // namespace mire
