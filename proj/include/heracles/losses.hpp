#pragma once

#include <cstdint>
#include <vector>

#include "heracles/tensor.hpp"

namespace heracles {

/// Mean over the batch of -log softmax(logits)[label], computed with the
/// log-sum-exp shift. logits [B, K]; throws LabelOutOfRange.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

Tensor mse(const Tensor& a, const Tensor& b);
Tensor mae(const Tensor& a, const Tensor& b);

/// Fraction of rows whose label is among the k largest logits (ties broken
/// toward the lower class index).
double topk_accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels, std::int64_t k);

}  // namespace heracles
