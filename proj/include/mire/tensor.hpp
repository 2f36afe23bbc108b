#pragma once

// Minimal reverse-mode automatic differentiation over dense double arrays.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a backward rule; the graph is
// rebuilt from scratch every training iteration and walked once by
// backward(). There is no global state: independent graphs may live on
// different threads.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mire::ndgrad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // non-empty iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Pushes this node's grad into the grads of its inputs.
  std::function<void(Node&)> backward;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Leading dimension (1 for scalars).
  std::size_t rows() const;
  /// Trailing dimension for rank-2 tensors, length for rank-1, 1 for scalars.
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Value copy that is detached from any graph.
  Tensor detach() const;
  std::vector<double> row(std::size_t r) const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Nodes reachable from a root, in topological order (inputs first).
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<Node* const> nodes() const { return order_; }
  /// Seeds d(root)/d(root) = 1 and runs every backward rule once, last node first.
  void backward();

 private:
  std::vector<Node*> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
void backward(const Tensor& loss);

// Primitive operations. All shapes are validated; mismatches throw
// std::invalid_argument with both shapes in the message.

Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or b a single row broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Elementwise a / b; zero divisors are rejected.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Rejects non-positive entries.
Tensor log(const Tensor& a);
/// Rejects negative entries.
Tensor sqrt(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column sums of a rank-2 tensor, shape {1, cols}.
Tensor sum_rows(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
/// Stabilized log-sum-exp over the last axis: rank-1 -> scalar, rank-2 -> {rows}.
Tensor log_sum_exp(const Tensor& a);
/// Row-wise log(1 + sum_{j : mask[i,j]} exp(a[i,j])), shape {rows}. Rows with
/// an empty mask evaluate to exactly 0 and receive no gradient.
Tensor log1p_sum_exp(const Tensor& a, const std::vector<bool>& mask);
/// Pairwise inner products of rows: A A^T.
Tensor gram(const Tensor& a);
/// Row-wise unit normalization; rows with norm <= kNormEpsilon are rejected.
Tensor l2_normalize(const Tensor& a);
/// out.flat[k] = a.flat[indices[k]], reshaped to `shape`.
Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices, Shape shape);

inline constexpr double kNormEpsilon = 1e-12;

}  // namespace mire::ndgrad
