#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heracles/gradcheck.hpp"
#include "heracles/tensor.hpp"

namespace heracles {

struct AdamWHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

/// Moment buffers aligned with the parameter list they were created for.
struct OptimState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;

    static OptimState for_params(const std::vector<NamedTensor>& params);
};

enum class StepResult { applied, skipped_nonfinite };

/// Norm scales, norm shifts and biases are exempt from weight decay.
bool decays(const std::string& param_name);

/// One AdamW update in place. Weight decay is decoupled: p -= lr * wd * p,
/// then p -= lr * m_hat / (sqrt(v_hat) + eps). When any gradient is
/// non-finite nothing changes and `skipped_nonfinite` is returned.
StepResult optimizer_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, OptimState& state,
                          const AdamWHyper& hyper, double lr);

/// Linear warm-up reaching base_lr at step warmup_steps - 1, then cosine
/// decay to 0 at total_steps. Steps are 0-based.
double lr_schedule(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps, double base_lr);

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace heracles
