#pragma once

#include <cstdint>

namespace mire {

/// Random small problems on which the three training losses are compared
/// against central differences over every extractor parameter. Draws with a
/// nondifferentiable point within 1e-4 of the evaluation point are redrawn,
/// and the relative error uses a 1e-6 denominator floor (roundoff level).
struct LossCheckConfig {
  std::size_t configs = 50;
  std::uint64_t seed = 0;
  double h = 1e-5;
  std::size_t input_dim = 6;
  std::size_t feature_dim = 8;
  std::size_t head_hidden = 8;
  std::size_t head_out = 4;
  std::size_t batch = 12;
  std::size_t classes = 3;
  /// Entries per class placed in memory for the correlation term.
  std::size_t memory_per_class = 5;
};

struct LossCheckReport {
  std::size_t configs = 0;
  /// Max relative error over all configurations, per loss.
  double ms = 0.0;
  double mire = 0.0;
  double mire_pp = 0.0;
  /// Draws rejected for lying too close to a relu kink or mining threshold.
  std::size_t redraws = 0;

  double worst() const;
};

LossCheckReport check_loss_gradients(const LossCheckConfig& cfg);

}  // namespace mire
