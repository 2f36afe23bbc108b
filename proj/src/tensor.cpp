#include "mire/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mire/kernels.hpp"

namespace mire::ndgrad {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                              to_string(b));
}

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension in " + to_string(shape));
}

std::shared_ptr<Node> leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != values.size())
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return node;
}

// Builds an op result. The backward rule is attached only when some input
// participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(Node&)> rule) {
  auto node = leaf(std::move(shape), std::move(values), false);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), 0.0);
    for (auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

// Input i's grad buffer, or nullptr when that input is not differentiated.
double* grad_of(Node& out, std::size_t i) {
  Node& in = *out.inputs[i];
  return in.requires_grad ? in.grad.data() : nullptr;
}

std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : (s.size() == 1 ? 1 : s[0]); }
std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

bool row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) return false;
  if (b.numel() != a.cols()) return false;
  return b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = ndgrad::numel(shape);
  return Tensor(leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(leaf({}, {value}, requires_grad));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(leaf({rows, cols}, std::move(values), requires_grad));
}

std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item: tensor of shape " + to_string(shape()) + " is not scalar");
  return node_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (!node_->requires_grad) throw std::logic_error("grad: tensor does not require grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_->requires_grad) throw std::logic_error("grad: tensor does not require grad");
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(leaf(shape(), node_->data, false)); }

std::vector<double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return {node_->data.begin() + static_cast<std::ptrdiff_t>(r * c),
          node_->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& root) {
  require_defined(root, "Tape::record");
  Tape tape;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* r = root.node().get();
  if (!r->requires_grad) return tape;
  stack.emplace_back(r, 0);
  visited.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* in = node->inputs[next++].get();
      if (in->requires_grad && visited.insert(in).second) stack.emplace_back(in, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (order_.empty()) throw std::logic_error("backward: empty tape (loss does not require grad)");
  Node* root = order_.back();
  std::fill(root->grad.begin(), root->grad.end(), 1.0);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  Tape::record(loss).backward();
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  kernels::parallel::matmul(a.data(), b.data(), out, m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& o) {
    const Node& an = *o.inputs[0];
    const Node& bn = *o.inputs[1];
    if (double* ga = grad_of(o, 0))
      kernels::parallel::matmul_nt_acc(o.grad, bn.data, {ga, m * k}, m, n, k);
    if (double* gb = grad_of(o, 1))
      kernels::parallel::matmul_tn_acc(an.data, o.grad, {gb, k * n}, m, k, n);
  });
}

namespace {

Tensor add_sub(const Tensor& a, const Tensor& b, double sign, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + sign * b[i];
    return make_result(a.shape(), std::move(out), {a, b}, [sign](Node& o) {
      if (double* ga = grad_of(o, 0))
        for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
      if (double* gb = grad_of(o, 1))
        for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += sign * o.grad[i];
    });
  }
  if (!row_broadcast(a, b)) shape_error(op, a.shape(), b.shape());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + sign * b[j];
  return make_result(a.shape(), std::move(out), {a, b}, [sign, m, n](Node& o) {
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += sign * o.grad[i * n + j];
  });
}

template <typename F, typename D>
Tensor unary(const Tensor& a, const char* op, F value, D derivative) {
  require_defined(a, op);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(a[i]);
  return make_result(a.shape(), std::move(out), {a}, [derivative](Node& o) {
    const Node& in = *o.inputs[0];
    double* ga = grad_of(o, 0);
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * derivative(in.data[i], o.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_sub(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_sub(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    const Node& an = *o.inputs[0];
    const Node& bn = *o.inputs[1];
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * bn.data[i];
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * an.data[i];
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined(a, "div");
  require_defined(b, "div");
  if (a.shape() != b.shape()) shape_error("div", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b[i] == 0.0) throw std::invalid_argument("div: zero divisor at index " + std::to_string(i));
    out[i] = a[i] / b[i];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& o) {
    const Node& bn = *o.inputs[1];
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] / bn.data[i];
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i] * o.data[i] / bn.data[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (!(a[i] > 0.0))
      throw std::invalid_argument("log: non-positive input " + std::to_string(a[i]) + " at index " +
                                  std::to_string(i));
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  require_defined(a, "sqrt");
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] < 0.0) throw std::invalid_argument("sqrt: negative input at index " + std::to_string(i));
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [](Node& o) {
    double* ga = grad_of(o, 0);
    const std::size_t n = o.inputs[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_rows(const Tensor& a) {
  require_defined(a, "sum_rows");
  if (a.rank() != 2) throw std::invalid_argument("sum_rows: expected rank 2, got " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[i * n + j];
  return make_result({1, n}, std::move(out), {a}, [m, n](Node& o) {
    double* ga = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j];
  });
}

Tensor mean_rows(const Tensor& a) { return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows())); }

Tensor dot(const Tensor& a, const Tensor& b) {
  require_defined(a, "dot");
  require_defined(b, "dot");
  if (a.numel() != b.numel()) shape_error("dot", a.shape(), b.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return make_result({}, {s}, {a, b}, [](Node& o) {
    const Node& an = *o.inputs[0];
    const Node& bn = *o.inputs[1];
    const double g = o.grad[0];
    // Accumulate through both slots; when a and b are the same node this
    // correctly yields 2 * g * a.
    if (double* ga = grad_of(o, 0))
      for (std::size_t i = 0; i < an.data.size(); ++i) ga[i] += g * bn.data[i];
    if (double* gb = grad_of(o, 1))
      for (std::size_t i = 0; i < bn.data.size(); ++i) gb[i] += g * an.data[i];
  });
}

Tensor log_sum_exp(const Tensor& a) {
  require_defined(a, "log_sum_exp");
  if (a.rank() != 1 && a.rank() != 2)
    throw std::invalid_argument("log_sum_exp: expected rank 1 or 2, got " + to_string(a.shape()));
  const std::size_t m = a.rank() == 1 ? 1 : a.rows(), n = a.cols();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, a[i * n + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(a[i * n + j] - hi);
    out[i] = hi + std::log(s);
  }
  Shape shape = a.rank() == 1 ? Shape{} : Shape{m};
  return make_result(std::move(shape), std::move(out), {a}, [m, n](Node& o) {
    const Node& in = *o.inputs[0];
    double* ga = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += o.grad[i] * std::exp(in.data[i * n + j] - o.data[i]);
  });
}

Tensor log1p_sum_exp(const Tensor& a, const std::vector<bool>& mask) {
  require_defined(a, "log1p_sum_exp");
  if (a.rank() != 2) throw std::invalid_argument("log1p_sum_exp: expected rank 2, got " + to_string(a.shape()));
  if (mask.size() != a.numel())
    throw std::invalid_argument("log1p_sum_exp: mask has " + std::to_string(mask.size()) +
                                " entries for shape " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    // The implicit "1" is exp(0), so the shift starts at 0.
    double hi = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) {
        hi = std::max(hi, a[i * n + j]);
        any = true;
      }
    if (!any) continue;
    double s = std::exp(-hi);
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j]) s += std::exp(a[i * n + j] - hi);
    out[i] = hi + std::log(s);
  }
  return make_result({m}, std::move(out), {a}, [m, n, mask](Node& o) {
    const Node& in = *o.inputs[0];
    double* ga = grad_of(o, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (mask[i * n + j]) ga[i * n + j] += o.grad[i] * std::exp(in.data[i * n + j] - o.data[i]);
  });
}

Tensor gram(const Tensor& a) {
  require_defined(a, "gram");
  if (a.rank() != 2) throw std::invalid_argument("gram: expected rank 2, got " + to_string(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * m);
  kernels::parallel::gram(a.data(), out, m, n);
  return make_result({m, m}, std::move(out), {a}, [m, n](Node& o) {
    const Node& in = *o.inputs[0];
    double* ga = grad_of(o, 0);
    // d(A A^T) = (G + G^T) A
    std::vector<double> sym(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) sym[i * m + j] = o.grad[i * m + j] + o.grad[j * m + i];
    std::vector<double> tmp(m * n);
    kernels::parallel::matmul(sym, in.data, tmp, m, m, n);
    for (std::size_t i = 0; i < m * n; ++i) ga[i] += tmp[i];
  });
}

Tensor l2_normalize(const Tensor& a) {
  require_defined(a, "l2_normalize");
  if (a.rank() != 1 && a.rank() != 2)
    throw std::invalid_argument("l2_normalize: expected rank 1 or 2, got " + to_string(a.shape()));
  const std::size_t m = a.rank() == 1 ? 1 : a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    const double norm = std::sqrt(s);
    if (!(norm > kNormEpsilon))
      throw std::invalid_argument("l2_normalize: row " + std::to_string(i) + " has norm " +
                                  std::to_string(norm) + " <= epsilon");
    norms[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] / norm;
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n, norms = std::move(norms)](Node& o) {
    double* ga = grad_of(o, 0);
    // dv = (g - y (y . g)) / |v|
    for (std::size_t i = 0; i < m; ++i) {
      double yg = 0.0;
      for (std::size_t j = 0; j < n; ++j) yg += o.data[i * n + j] * o.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += (o.grad[i * n + j] - o.data[i * n + j] * yg) / norms[i];
    }
  });
}

Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices, Shape shape) {
  require_defined(a, "gather");
  if (numel(shape) != indices.size())
    throw std::invalid_argument("gather: " + std::to_string(indices.size()) + " indices for shape " +
                                to_string(shape));
  std::vector<double> out(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= a.numel())
      throw std::invalid_argument("gather: index " + std::to_string(indices[k]) + " out of range for " +
                                  to_string(a.shape()));
    out[k] = a[indices[k]];
  }
  return make_result(std::move(shape), std::move(out), {a}, [indices](Node& o) {
    double* ga = grad_of(o, 0);
    for (std::size_t k = 0; k < indices.size(); ++k) ga[indices[k]] += o.grad[k];
  });
}

}  // namespace mire::ndgrad
