#pragma once

#include <cstdint>
#include <vector>

#include "mire/tensor.hpp"

namespace mire {

using Vec = std::vector<double>;

struct ExtractorConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t feature_dim = 32;
  std::size_t head_hidden = 32;
  std::size_t head_out = 16;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ExtractorConfig&) const = default;
};

struct Linear {
  ndgrad::Tensor weight;  // {in, out}
  ndgrad::Tensor bias;    // {1, out}

  ndgrad::Tensor apply(const ndgrad::Tensor& x) const;
};

/// MLP trunk producing unit-norm classification features, plus a two-layer
/// projection head producing unit-norm embeddings for the metric losses.
/// The head reads the trunk output before normalization and is never used
/// at inference.
class Extractor {
 public:
  struct Outputs {
    ndgrad::Tensor features;
    ndgrad::Tensor embeddings;
  };

  /// He-uniform weights (bound sqrt(6 / fan_in)), biases uniform in
  /// +-1/sqrt(fan_in); fully determined by `seed`.
  static Extractor init(const ExtractorConfig& cfg, std::uint64_t seed);
  static Extractor init(const ExtractorConfig& cfg) { return init(cfg, cfg.seed); }
  /// Rebuilds from stored parameters (checkpoint load). Shapes must match cfg.
  static Extractor from_parameters(const ExtractorConfig& cfg, const std::vector<Vec>& values);

  Outputs forward(const ndgrad::Tensor& x) const;
  ndgrad::Tensor features(const ndgrad::Tensor& x) const { return forward(x).features; }
  ndgrad::Tensor embeddings(const ndgrad::Tensor& x) const { return forward(x).embeddings; }

  /// Smallest |input| to any relu for this batch (distance to a kink).
  double relu_margin(const ndgrad::Tensor& x) const;

  /// Features of plain rows with no graph attached.
  std::vector<Vec> features_of(const std::vector<Vec>& rows) const;

  const ExtractorConfig& config() const { return cfg_; }
  /// Trunk layers then head layers, weight before bias.
  std::vector<ndgrad::Tensor> parameters() const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// theta <- theta - lr * grad (plain SGD).
  void sgd_step(double lr);
  /// Deep copy with independent parameter storage.
  Extractor clone() const;

 private:
  ExtractorConfig cfg_;
  std::vector<Linear> trunk_;
  std::vector<Linear> head_;
};

/// Packs equal-length rows into a {rows, cols} constant tensor.
ndgrad::Tensor stack_rows(const std::vector<Vec>& rows);

}  // namespace mire
