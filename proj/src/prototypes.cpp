#include "mire/prototypes.hpp"

#include <limits>
#include <stdexcept>

namespace mire {

PrototypeTable::PrototypeTable(double gamma) : gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("PrototypeTable: gamma must lie in [0, 1]");
}

void PrototypeTable::update(const Batch& batch, const std::vector<Vec>& features) {
  if (features.size() != batch.size()) throw std::invalid_argument("prototype update: features not row-aligned");
  std::map<int, std::vector<Vec>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) groups[batch[i].label].push_back(features[i]);
  for (auto& [label, rows] : groups) {
    Vec m = mean_of(rows);
    auto it = protos_.find(label);
    if (it == protos_.end()) {
      protos_.emplace(label, normalized(std::move(m)));
      continue;
    }
    Vec& p = it->second;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = gamma_ * p[i] + (1.0 - gamma_) * m[i];
    p = normalized(std::move(p));
  }
}

const Vec& PrototypeTable::at(int label) const {
  auto it = protos_.find(label);
  if (it == protos_.end()) throw std::out_of_range("PrototypeTable: no prototype for class " + std::to_string(label));
  return it->second;
}

PrototypeTable PrototypeTable::restore(double gamma, std::map<int, Vec> protos) {
  PrototypeTable t(gamma);
  t.protos_ = std::move(protos);
  return t;
}

std::optional<Vec> corrected_mean(std::span<const double> prototype, std::span<const double> stored_mean,
                                  std::span<const double> current_mean) {
  if (prototype.size() != stored_mean.size() || prototype.size() != current_mean.size())
    throw std::invalid_argument("corrected_mean: dimension mismatch");
  Vec v(prototype.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = prototype[i] - stored_mean[i] + current_mean[i];
  return try_normalized(std::move(v));
}

EstimatorVariance estimator_variance(double sigma_then, double sigma_now, double rho, std::size_t n) {
  if (n == 0) throw std::invalid_argument("estimator_variance: n must be >= 1");
  if (sigma_then < 0.0 || sigma_now < 0.0) throw std::invalid_argument("estimator_variance: negative sigma");
  if (std::abs(rho) > 1.0) throw std::invalid_argument("estimator_variance: |rho| > 1");
  const auto count = static_cast<double>(n);
  return {(sigma_then * sigma_then + sigma_now * sigma_now - 2.0 * rho * sigma_then * sigma_now) / count,
          sigma_now * sigma_now / count};
}

double cross_time_mi(std::span<const double> rho) {
  double total = 0.0;
  for (double r : rho) {
    if (std::abs(r) >= 1.0) return std::numeric_limits<double>::infinity();
    total -= 0.5 * std::log1p(-r * r);
  }
  return total;
}

}  // namespace mire
