#include "mire/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mire {

using namespace ndgrad;

void MsConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("MsConfig: alpha_ms and beta_ms must be > 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("MsConfig: epsilon_ms must be >= 0");
}

void MireConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("MireConfig: alpha and beta must be >= 0");
  if (!(delta > 0.0)) throw std::invalid_argument("MireConfig: delta must be > 0");
  if (!(triplet_margin >= 0.0)) throw std::invalid_argument("MireConfig: triplet margin must be >= 0");
  ms.validate();
}

namespace {

void check_batch(const Tensor& z, std::span<const int> labels, const char* who) {
  if (!z.defined() || z.rank() != 2 || z.rows() == 0)
    throw std::invalid_argument(std::string(who) + ": expected a nonempty {batch, dim} tensor");
  if (labels.size() != z.rows())
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(z.rows()) + " rows");
}

void check_unit_rows(const Tensor& z, const char* who) {
  const std::size_t n = z.cols();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += z[i * n + j] * z[i * n + j];
    if (std::abs(std::sqrt(s) - 1.0) > 1e-9)
      throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) + " is not unit-norm");
  }
}

// Keeps an all-constant result attached to the graph so callers can always
// run backward on a composite loss.
Tensor attached_zero(const Tensor& z) { return scale(sum(z), 0.0); }

}  // namespace

Tensor ms_loss(const Tensor& embeddings, std::span<const int> labels, const MsConfig& cfg) {
  check_batch(embeddings, labels, "ms_loss");
  check_unit_rows(embeddings, "ms_loss");
  cfg.validate();
  const std::size_t b = embeddings.rows();
  Tensor s = gram(embeddings);

  // Hard mining on the current similarity values; the masks are constants.
  std::vector<bool> pos(b * b, false), neg(b * b, false);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b; ++i) {
    double hardest_neg = -kInf;
    double hardest_pos = kInf;
    for (std::size_t k = 0; k < b; ++k) {
      if (labels[k] != labels[i]) hardest_neg = std::max(hardest_neg, s[i * b + k]);
      else if (k != i) hardest_pos = std::min(hardest_pos, s[i * b + k]);
    }
    for (std::size_t j = 0; j < b; ++j) {
      const double sij = s[i * b + j];
      if (labels[j] == labels[i]) {
        if (j != i && sij < hardest_neg + cfg.epsilon) pos[i * b + j] = true;
      } else if (sij > hardest_pos - cfg.epsilon) {
        neg[i * b + j] = true;
      }
    }
  }

  Tensor shifted = add_scalar(s, -cfg.lambda);
  Tensor pos_term = log1p_sum_exp(scale(shifted, -cfg.alpha), pos);
  Tensor neg_term = log1p_sum_exp(scale(shifted, cfg.beta), neg);
  Tensor total = add(scale(sum(pos_term), 1.0 / cfg.alpha), scale(sum(neg_term), 1.0 / cfg.beta));
  return scale(total, 1.0 / static_cast<double>(b));
}

double ms_mining_margin(const Tensor& embeddings, std::span<const int> labels, const MsConfig& cfg) {
  check_batch(embeddings, labels, "ms_mining_margin");
  const std::size_t b = embeddings.rows();
  const Tensor s = gram(embeddings.detach());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  double margin = kInf;
  for (std::size_t i = 0; i < b; ++i) {
    double hardest_neg = -kInf;
    double hardest_pos = kInf;
    for (std::size_t k = 0; k < b; ++k) {
      if (labels[k] != labels[i]) hardest_neg = std::max(hardest_neg, s[i * b + k]);
      else if (k != i) hardest_pos = std::min(hardest_pos, s[i * b + k]);
    }
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const double threshold = labels[j] == labels[i] ? hardest_neg + cfg.epsilon : hardest_pos - cfg.epsilon;
      if (std::isfinite(threshold)) margin = std::min(margin, std::abs(s[i * b + j] - threshold));
    }
  }
  return margin;
}

Tensor entropy_estimate(const Tensor& embeddings, double delta) {
  if (!embeddings.defined() || embeddings.rank() != 2 || embeddings.rows() == 0)
    throw std::invalid_argument("entropy_estimate: expected a nonempty {batch, dim} tensor");
  if (!(delta > 0.0)) throw std::invalid_argument("entropy_estimate: delta must be > 0");
  const auto b = static_cast<double>(embeddings.rows());
  Tensor lse = log_sum_exp(scale(gram(embeddings), delta));
  return add_scalar(scale(mean(lse), -1.0), std::log(b));
}

Tensor triplet_loss(const Tensor& embeddings, std::span<const int> labels, double margin) {
  check_batch(embeddings, labels, "triplet_loss");
  const std::size_t b = embeddings.rows();
  Tensor s = gram(embeddings);
  std::vector<std::size_t> ap, an;
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        ap.push_back(a * b + p);
        an.push_back(a * b + n);
      }
    }
  if (ap.empty()) return attached_zero(embeddings);
  // |za - zp|^2 - |za - zn|^2 = 2 (S_an - S_ap) on the unit sphere.
  const std::size_t t = ap.size();
  Tensor gap = scale(sub(gather(s, an, {t}), gather(s, ap, {t})), 2.0);
  return mean(relu(add_scalar(gap, margin)));
}

Tensor n_pairs_loss(const Tensor& embeddings, std::span<const int> labels) {
  check_batch(embeddings, labels, "n_pairs_loss");
  const std::size_t b = embeddings.rows();
  Tensor s = gram(embeddings);
  std::vector<std::size_t> row_idx, pos_idx;
  std::vector<bool> mask;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      ++pairs;
      for (std::size_t n = 0; n < b; ++n) {
        row_idx.push_back(a * b + n);
        pos_idx.push_back(a * b + p);
        mask.push_back(labels[n] != labels[a]);
      }
    }
  if (pairs == 0) return attached_zero(embeddings);
  Tensor logits = sub(gather(s, row_idx, {pairs, b}), gather(s, pos_idx, {pairs, b}));
  return mean(log1p_sum_exp(logits, mask));
}

Tensor metric_loss(const Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg) {
  switch (cfg.metric) {
    case MetricLoss::triplet:
      return triplet_loss(embeddings, labels, cfg.triplet_margin);
    case MetricLoss::n_pairs:
      return n_pairs_loss(embeddings, labels);
    case MetricLoss::multi_similarity:
      break;
  }
  return ms_loss(embeddings, labels, cfg.ms);
}

Tensor mire_loss(const Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg) {
  cfg.validate();
  Tensor base = metric_loss(embeddings, labels, cfg);
  if (cfg.alpha == 0.0) return base;
  return sub(base, scale(entropy_estimate(embeddings, cfg.delta), cfg.alpha));
}

std::vector<double> CorrelationResult::values() const {
  std::vector<double> out(total_dims, 0.0);
  for (std::size_t k = 0; k < dims.size(); ++k) out[dims[k]] = rho[k];
  return out;
}

CorrelationResult cc_per_class(const Tensor& current, const Tensor& stored) {
  if (!current.defined() || !stored.defined() || current.rank() != 2 || current.shape() != stored.shape())
    throw std::invalid_argument("cc_per_class: current and stored must be aligned {rows, dim} tensors");
  CorrelationResult result;
  const std::size_t n = current.rows(), e = current.cols();
  result.total_dims = e;
  if (n < 2) return result;

  // Centered stored series and its per-dimension spread are constants.
  std::vector<double> z_mean(e, 0.0), f_mean(e, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) {
      z_mean[j] += stored[i * e + j];
      f_mean[j] += current[i * e + j];
    }
  for (std::size_t j = 0; j < e; ++j) {
    z_mean[j] /= static_cast<double>(n);
    f_mean[j] /= static_cast<double>(n);
  }
  constexpr double kDegenerate = 1e-20;
  for (std::size_t j = 0; j < e; ++j) {
    double zz = 0.0, ff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dz = stored[i * e + j] - z_mean[j];
      const double df = current[i * e + j] - f_mean[j];
      zz += dz * dz;
      ff += df * df;
    }
    if (zz > kDegenerate && ff > kDegenerate) result.dims.push_back(j);
  }
  const std::size_t k = result.dims.size();
  if (k == 0) return result;

  std::vector<std::size_t> idx;
  idx.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (auto j : result.dims) idx.push_back(i * e + j);

  std::vector<double> zc(n * k);
  std::vector<double> z_norm(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < k; ++q) {
      const double v = stored[i * e + result.dims[q]] - z_mean[result.dims[q]];
      zc[i * k + q] = v;
      z_norm[q] += v * v;
    }
  for (auto& v : z_norm) v = std::sqrt(v);

  Tensor f = gather(current, idx, {n, k});
  Tensor fc = sub(f, mean_rows(f));
  Tensor num = sum_rows(mul(fc, Tensor::matrix(n, k, std::move(zc))));
  Tensor f_norm = sqrt(sum_rows(mul(fc, fc)));
  result.rho = div(num, mul(f_norm, Tensor::matrix(1, k, std::move(z_norm))));
  return result;
}

Tensor cc_reward(const std::vector<CcGroup>& groups, const MireConfig& cfg) {
  Tensor total;
  for (const auto& g : groups) {
    auto r = cc_per_class(g.current, g.stored);
    if (r.empty()) continue;
    Tensor term = sum(r.rho);
    if (cfg.cc_mean_over_dims) term = scale(term, 1.0 / static_cast<double>(r.total_dims));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor mire_pp_loss(const Tensor& embeddings, std::span<const int> labels, const MireConfig& cfg,
                    const std::vector<CcGroup>& groups) {
  Tensor base = mire_loss(embeddings, labels, cfg);
  if (cfg.beta == 0.0) return base;
  Tensor reward = cc_reward(groups, cfg);
  if (!reward.defined()) return base;
  return sub(base, scale(reward, cfg.beta));
}

}  // namespace mire
