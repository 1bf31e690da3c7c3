#include "heracles/losses.hpp"

#include <algorithm>
#include <cmath>

#include "heracles/ops.hpp"

namespace heracles {

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    if (logits.dim() != 2) throw Error(Errc::ShapeMismatch, "cross_entropy expects logits [B,K], got " + shape_str(logits.shape()));
    const std::int64_t b = logits.size(0);
    const std::int64_t k = logits.size(1);
    if (static_cast<std::int64_t>(labels.size()) != b) {
        throw Error(Errc::ShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(b));
    }
    if (b == 0) throw Error(Errc::EmptyInput, "cross_entropy of an empty batch");
    for (auto y : labels) {
        if (y < 0 || y >= k) throw Error(Errc::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    auto z = logits.data();
    std::vector<double> probs(static_cast<std::size_t>(b * k));
    double total = 0.0;
    for (std::int64_t i = 0; i < b; ++i) {
        const double* row = z.data() + i * k;
        const double shift = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::int64_t j = 0; j < k; ++j) s += std::exp(row[j] - shift);
        const double lse = shift + std::log(s);
        total += lse - row[labels[static_cast<std::size_t>(i)]];
        for (std::int64_t j = 0; j < k; ++j) probs[static_cast<std::size_t>(i * k + j)] = std::exp(row[j] - lse);
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(b), logits.dtype());
    return Tape::record("cross_entropy", out, {logits}, [probs = std::move(probs), labels, b, k, dt = logits.dtype()](const Tensor& g) -> std::vector<Tensor> {
        const double scale = g.item() / static_cast<double>(b);
        std::vector<double> grad(probs);
        for (std::int64_t i = 0; i < b; ++i) grad[static_cast<std::size_t>(i * k + labels[static_cast<std::size_t>(i)])] -= 1.0;
        for (auto& v : grad) v *= scale;
        return {Tensor::from({b, k}, std::move(grad), dt)};
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error(Errc::ShapeMismatch, "mse shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return mean(square(sub(a, b)));
}

Tensor mae(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error(Errc::ShapeMismatch, "mae shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return mean(abs(sub(a, b)));
}

double topk_accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels, std::int64_t k) {
    if (logits.dim() != 2 || logits.size(0) != static_cast<std::int64_t>(labels.size())) {
        throw Error(Errc::ShapeMismatch, "topk_accuracy expects logits [B,K] and B labels");
    }
    const std::int64_t b = logits.size(0);
    const std::int64_t classes = logits.size(1);
    if (b == 0) throw Error(Errc::EmptySplit, "accuracy of an empty batch");
    auto z = logits.data();
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t y = labels[static_cast<std::size_t>(i)];
        const double* row = z.data() + i * classes;
        // Rank of the label: classes scoring strictly higher, or equal with a lower index.
        std::int64_t rank = 0;
        for (std::int64_t j = 0; j < classes; ++j) {
            if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

}  // namespace heracles
