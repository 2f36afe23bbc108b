#pragma once

#include <functional>
#include <vector>

#include "mire/tensor.hpp"

namespace mire::ndgrad {

/// Compares backward() against central differences for a scalar function.
/// Returns max over coordinates of |analytic - numeric| / max(floor, |analytic| + |numeric|).
/// Throws std::domain_error if f or any gradient is non-finite.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5,
                  double floor = 1e-8);

/// Same, over every coordinate of a set of parameter leaves that `f` closes over.
/// Parameters are perturbed in place and restored before returning.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double h = 1e-5,
                  double floor = 1e-8);

}  // namespace mire::ndgrad
