#pragma once

#include <span>
#include <vector>

#include "mire/tensor.hpp"

namespace mire {

/// Multi-similarity loss hyperparameters (alpha_ms, beta_ms, lambda_ms, epsilon_ms).
struct MsConfig {
  double alpha = 2.0;
  double beta = 50.0;
  double lambda = 0.5;
  double epsilon = 0.1;

  void validate() const;
  bool operator==(const MsConfig&) const = default;
};

enum class MetricLoss { multi_similarity, triplet, n_pairs };

struct MireConfig {
  /// Weight of the entropy bonus.
  double alpha = 0.02;
  /// Weight of the correlation-coefficient reward.
  double beta = 0.01;
  /// vMF kernel concentration.
  double delta = 5.0;
  MsConfig ms;
  MetricLoss metric = MetricLoss::multi_similarity;
  double triplet_margin = 0.2;
  /// Average the CC reward over feature dimensions instead of summing.
  bool cc_mean_over_dims = false;

  void validate() const;
  bool operator==(const MireConfig&) const = default;
};

/// Mean over anchors of the hard-mined MS terms. Anchors without any
/// positive or any negative in the batch contribute 0.
ndgrad::Tensor ms_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels, const MsConfig& cfg);

/// Smallest |S_ij - threshold| over the mining comparisons; the loss is
/// smooth only while no similarity crosses its threshold.
double ms_mining_margin(const ndgrad::Tensor& embeddings, std::span<const int> labels, const MsConfig& cfg);

/// -(1/B) sum_i log((1/B) sum_j exp(delta * z_i . z_j)), self pair included.
ndgrad::Tensor entropy_estimate(const ndgrad::Tensor& embeddings, double delta);

/// Batch-all triplet loss on squared distances, averaged over valid triplets.
ndgrad::Tensor triplet_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels, double margin = 0.2);

/// N-pairs loss: mean over anchor/positive pairs of log(1 + sum_n exp(S_an - S_ap)).
ndgrad::Tensor n_pairs_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels);

/// The configured metric loss (MS by default).
ndgrad::Tensor metric_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg);

/// metric_loss - alpha * entropy_estimate. With alpha == 0 the entropy term
/// is not built at all, so the result equals metric_loss exactly.
ndgrad::Tensor mire_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg);

/// Per-dimension Pearson correlations between current and stored features of
/// one class subset.
struct CorrelationResult {
  /// {1, dims.size()} correlations over the non-degenerate dimensions;
  /// undefined when there are none.
  ndgrad::Tensor rho;
  /// Feature dimensions that rho covers.
  std::vector<std::size_t> dims;
  std::size_t total_dims = 0;

  bool empty() const { return !rho.defined(); }
  /// Length-total_dims vector with 0 in degenerate dimensions.
  std::vector<double> values() const;
};

/// Rows are aligned entries of one memory class subset. Means are taken over
/// the subset for both series. A dimension whose deviations vanish in either
/// series gets rho = 0 and no gradient. Fewer than two rows gives an empty
/// result.
CorrelationResult cc_per_class(const ndgrad::Tensor& current, const ndgrad::Tensor& stored);

/// Current features (differentiable) and stored features of one class subset.
struct CcGroup {
  ndgrad::Tensor current;
  ndgrad::Tensor stored;
};

/// Sum over groups and dimensions of rho (mean over dims when configured).
/// Undefined when no group yields a correlation.
ndgrad::Tensor cc_reward(const std::vector<CcGroup>& groups, const MireConfig& cfg);

/// mire_loss - beta * cc_reward. With beta == 0 or no usable group the
/// result equals mire_loss exactly.
ndgrad::Tensor mire_pp_loss(const ndgrad::Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg,
                            const std::vector<CcGroup>& groups);

}  // namespace mire
