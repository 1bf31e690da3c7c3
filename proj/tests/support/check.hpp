#pragma once

#include <functional>
#include <vector>

#include "heracles/gradcheck.hpp"
#include "heracles/ops.hpp"
#include "heracles/random.hpp"
#include "heracles/tensor.hpp"

namespace testing_support {

using heracles::Tensor;

/// Tape gradient of the scalar f(x) with respect to x.
inline Tensor tape_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    heracles::Tape tape;
    heracles::TapeScope scope(tape);
    Tensor leaf = x.detach();
    leaf.set_requires_grad();
    const Tensor loss = f(leaf);
    return tape.backward(loss).of(leaf);
}

/// Relative error between the tape gradient and central differences.
inline double input_grad_error(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-6) {
    const Tensor analytic = tape_grad(f, x);
    const Tensor numeric = heracles::finite_diff_grad(f, x, eps);
    return heracles::relative_error(analytic, numeric);
}

/// Contracts an output with a fixed random tensor so every element matters.
inline Tensor probe_loss(const Tensor& y, std::uint64_t seed) {
    const Tensor w = heracles::rng_tensor(y.shape(), heracles::Distribution::normal(), seed);
    return heracles::sum(heracles::mul(y, w));
}

inline Tensor randn(const heracles::Shape& shape, std::uint64_t seed, heracles::DType dtype = heracles::DType::f64) {
    return heracles::rng_tensor(shape, heracles::Distribution::normal(), seed, dtype);
}

}  // namespace testing_support
