#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "heracles/tensor.hpp"

namespace heracles {

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps per coordinate.
/// `f` must return a single-element tensor; it runs with recording disabled.
Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// Normwise relative error max|a - b| / max(max|a|, max|b|, floor).
double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-6);
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

using NamedTensor = std::pair<std::string, Tensor>;

struct ParamCheck {
    std::string name;
    double rel_error = 0.0;
    std::size_t coords_checked = 0;
};

/// Compares tape gradients of `loss_fn` against central differences for the
/// given parameters, perturbing them in place. At most `max_coords` seeded
/// coordinates per parameter are probed (all when 0).
std::vector<ParamCheck> check_parameter_gradients(const std::function<Tensor()>& loss_fn,
                                                  const std::vector<NamedTensor>& params, double eps,
                                                  std::size_t max_coords, std::uint64_t seed);

}  // namespace heracles
