#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "heracles/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the active
// tape when an input is tracked; gradient rules live next to the forward.
namespace heracles {

enum class ElementwiseOp { add, sub, mul, div, neg, exp, gelu, relu, silu };
enum class ReduceOp { sum, mean, max };

/// Broadcast shape of `a` and `b` under trailing-dimension rules.
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor rsqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }

/// Batched matrix product a[..., m, k] x b[..., k, n] with broadcast batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Reduces over `axes` (negative axes count from the back). An empty axis
/// list reduces everything. Max routes its gradient to the lowest index
/// among ties.
Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::int64_t> axes = {}, bool keepdim = false);
Tensor sum(const Tensor& a, std::vector<std::int64_t> axes = {}, bool keepdim = false);
Tensor mean(const Tensor& a, std::vector<std::int64_t> axes = {}, bool keepdim = false);
Tensor max(const Tensor& a, std::vector<std::int64_t> axes = {}, bool keepdim = false);

/// Sums `a` down to `shape`, the inverse of broadcasting.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

Tensor reshape(const Tensor& a, Shape shape);
/// Materialized axis permutation.
Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order);
Tensor transpose(const Tensor& a, std::int64_t axis0, std::int64_t axis1);
Tensor flip(const Tensor& a, std::int64_t axis);
Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length);
Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);

Tensor softmax(const Tensor& a);      // over the last axis
Tensor log_softmax(const Tensor& a);  // over the last axis

/// 2D convolution on channels-last maps.
/// x: [B, H, W, Cin], weight: [kh, kw, Cin / groups, Cout], bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::int64_t stride, std::int64_t pad_h,
              std::int64_t pad_w, std::int64_t groups = 1);

}  // namespace heracles
