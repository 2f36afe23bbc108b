#include "mire/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mire/rng.hpp"

namespace mire {

using ndgrad::Tensor;

void ExtractorConfig::validate() const {
  if (input_dim < 1 || feature_dim < 1 || head_hidden < 1)
    throw std::invalid_argument("ExtractorConfig: dimensions must be >= 1");
  for (auto h : hidden)
    if (h < 1) throw std::invalid_argument("ExtractorConfig: hidden sizes must be >= 1");
  if (head_out < 2) throw std::invalid_argument("ExtractorConfig: head_out must be >= 2");
}

Tensor Linear::apply(const Tensor& x) const { return ndgrad::add(ndgrad::matmul(x, weight), bias); }

namespace {

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  // Nonzero biases keep a row whose hidden units are all dead from mapping
  // to the zero vector, which normalization rejects.
  const double bias_bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> b(out);
  for (auto& v : b) v = rng.uniform(-bias_bound, bias_bound);
  return {Tensor::matrix(in, out, std::move(w), true), Tensor::matrix(1, out, std::move(b), true)};
}

std::vector<std::pair<std::size_t, std::size_t>> layer_dims(const ExtractorConfig& cfg) {
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t in = cfg.input_dim;
  for (auto h : cfg.hidden) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, cfg.feature_dim);
  dims.emplace_back(cfg.feature_dim, cfg.head_hidden);
  dims.emplace_back(cfg.head_hidden, cfg.head_out);
  return dims;
}

}  // namespace

Extractor Extractor::init(const ExtractorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Extractor ex;
  ex.cfg_ = cfg;
  ex.cfg_.seed = seed;
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  const auto dims = layer_dims(cfg);
  const std::size_t trunk_layers = dims.size() - 2;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    auto layer = make_linear(dims[i].first, dims[i].second, rng);
    (i < trunk_layers ? ex.trunk_ : ex.head_).push_back(std::move(layer));
  }
  return ex;
}

Extractor Extractor::from_parameters(const ExtractorConfig& cfg, const std::vector<Vec>& values) {
  cfg.validate();
  const auto dims = layer_dims(cfg);
  if (values.size() != 2 * dims.size())
    throw std::invalid_argument("Extractor: expected " + std::to_string(2 * dims.size()) +
                                " parameter arrays, got " + std::to_string(values.size()));
  Extractor ex;
  ex.cfg_ = cfg;
  const std::size_t trunk_layers = dims.size() - 2;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    auto [in, out] = dims[i];
    if (values[2 * i].size() != in * out || values[2 * i + 1].size() != out)
      throw std::invalid_argument("Extractor: parameter array size mismatch in layer " + std::to_string(i));
    Linear layer{Tensor::matrix(in, out, values[2 * i], true), Tensor::matrix(1, out, values[2 * i + 1], true)};
    (i < trunk_layers ? ex.trunk_ : ex.head_).push_back(std::move(layer));
  }
  return ex;
}

Extractor::Outputs Extractor::forward(const Tensor& x) const {
  if (!x.defined() || x.rank() != 2 || x.rows() == 0)
    throw std::invalid_argument("Extractor: expected a nonempty {batch, d} input");
  if (x.cols() != cfg_.input_dim)
    throw std::invalid_argument("Extractor: input has " + std::to_string(x.cols()) + " columns, expected " +
                                std::to_string(cfg_.input_dim));
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (!std::isfinite(x[i])) throw std::invalid_argument("Extractor: non-finite input at index " + std::to_string(i));

  Tensor h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i].apply(h);
    if (i + 1 < trunk_.size()) h = ndgrad::relu(h);
  }
  Tensor head = ndgrad::relu(head_[0].apply(h));
  head = head_[1].apply(head);
  return {ndgrad::l2_normalize(h), ndgrad::l2_normalize(head)};
}

double Extractor::relu_margin(const Tensor& x) const {
  double margin = std::numeric_limits<double>::infinity();
  auto track = [&](const Tensor& pre) {
    for (double v : pre.data()) margin = std::min(margin, std::abs(v));
  };
  Tensor h = x.detach();
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i].apply(h).detach();
    if (i + 1 < trunk_.size()) {
      track(h);
      h = ndgrad::relu(h);
    }
  }
  Tensor pre = head_[0].apply(h).detach();
  track(pre);
  return margin;
}

std::vector<Vec> Extractor::features_of(const std::vector<Vec>& rows) const {
  if (rows.empty()) return {};
  Tensor f = features(stack_rows(rows));
  std::vector<Vec> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = f.row(i);
  return out;
}

std::vector<Tensor> Extractor::parameters() const {
  std::vector<Tensor> ps;
  for (const auto* layers : {&trunk_, &head_})
    for (const auto& l : *layers) {
      ps.push_back(l.weight);
      ps.push_back(l.bias);
    }
  return ps;
}

std::size_t Extractor::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

void Extractor::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

void Extractor::sgd_step(double lr) {
  for (auto& p : parameters()) {
    auto values = p.mutable_data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
  }
}

Extractor Extractor::clone() const {
  std::vector<Vec> values;
  for (const auto& p : parameters()) values.emplace_back(p.data().begin(), p.data().end());
  return from_parameters(cfg_, values);
}

Tensor stack_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("stack_rows: ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::matrix(rows.size(), cols, std::move(flat));
}

}  // namespace mire
