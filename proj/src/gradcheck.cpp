#include "mire/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mire::ndgrad {

namespace {

double finite_value(const Tensor& t) {
  const double v = t.item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double h, double floor) {
  for (auto& p : params) {
    if (!p.requires_grad()) throw std::invalid_argument("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  Tensor loss = f();
  finite_value(loss);
  backward(loss);

  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(analytic[i]))
        throw std::domain_error("grad_check: non-finite analytic gradient at index " + std::to_string(i));
      const double saved = values[i];
      values[i] = saved + h;
      const double up = finite_value(f());
      values[i] = saved - h;
      const double down = finite_value(f());
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(floor, std::abs(analytic[i]) + std::abs(numeric));
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h, double floor) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  return grad_check([&] { return f(leaf); }, {leaf}, h, floor);
}

}  // namespace mire::ndgrad
