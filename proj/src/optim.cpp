#include "heracles/optim.hpp"

#include <cmath>
#include <numbers>

namespace heracles {

OptimState OptimState::for_params(const std::vector<NamedTensor>& params) {
    OptimState s;
    for (const auto& [name, p] : params) {
        s.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        s.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
    return s;
}

bool decays(const std::string& name) {
    auto ends = [&](const char* suffix) { return name.ends_with(suffix); };
    return !(ends(".bias") || ends(".gamma") || ends(".beta"));
}

StepResult optimizer_step(const std::vector<NamedTensor>& params, const std::vector<Tensor>& grads, OptimState& state,
                          const AdamWHyper& hyper, double lr) {
    if (grads.size() != params.size() || state.m.size() != params.size()) {
        throw Error(Errc::ShapeMismatch, "optimizer: parameter, gradient and state counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].shape() != params[i].second.shape()) {
            throw Error(Errc::ShapeMismatch, "optimizer: gradient shape mismatch for '" + params[i].first + "'");
        }
        for (double g : grads[i].data()) {
            if (!std::isfinite(g)) return StepResult::skipped_nonfinite;
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].second;
        const bool f32 = p.dtype() == DType::f32;
        const double decay = decays(params[i].first) ? lr * hyper.weight_decay : 0.0;
        auto w = p.mutable_data();
        auto g = grads[i].data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            double x = w[j] - decay * w[j];
            x -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
            w[j] = f32 ? static_cast<double>(static_cast<float>(x)) : x;
        }
    }
    return StepResult::applied;
}

double lr_schedule(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps, double base_lr) {
    if (step < warmup_steps) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return base_lr;
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps));
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) {
        for (double x : g.data()) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& g : grads) {
            std::vector<double> v = g.to_vector();
            for (auto& x : v) x *= scale;
            g = Tensor::from(g.shape(), std::move(v), g.dtype());
        }
    }
    return norm;
}

}  // namespace heracles
