#include "heracles/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "heracles/random.hpp"

namespace heracles {

namespace {

double evaluate(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    try {
        Tensor y = f(x);
        if (y.numel() != 1) throw Error(Errc::NotScalarLoss, "finite_diff_grad needs a scalar function");
        double v = y.item();
        if (!std::isfinite(v)) throw Error(Errc::NonFiniteEvaluation, "function returned a non-finite value");
        return v;
    } catch (const Error& e) {
        if (e.code() == Errc::NonFinite) throw Error(Errc::NonFiniteEvaluation, e.what());
        throw;
    }
}

double evaluate_loss(const std::function<Tensor()>& loss_fn) {
    return evaluate([&](const Tensor&) { return loss_fn(); }, Tensor());
}

}  // namespace

Tensor finite_diff_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (!(eps > 0.0)) throw Error(Errc::BadInput, "finite difference step must be positive");
    NoGradGuard no_grad;
    auto base = x.to_vector();
    std::vector<double> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base;
        auto minus = base;
        plus[i] += eps;
        minus[i] -= eps;
        double fp = evaluate(f, Tensor::from(x.shape(), std::move(plus), x.dtype()));
        double fm = evaluate(f, Tensor::from(x.shape(), std::move(minus), x.dtype()));
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return Tensor::from(x.shape(), std::move(grad), DType::f64);
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
    if (analytic.size() != numeric.size()) throw Error(Errc::ShapeMismatch, "relative_error size mismatch");
    double diff = 0.0;
    double scale = floor;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::fabs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::fabs(analytic[i]), std::fabs(numeric[i])});
    }
    return diff / scale;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
    if (analytic.shape() != numeric.shape()) throw Error(Errc::ShapeMismatch, "relative_error shape mismatch");
    return relative_error(analytic.data(), numeric.data(), floor);
}

std::vector<ParamCheck> check_parameter_gradients(const std::function<Tensor()>& loss_fn,
                                                  const std::vector<NamedTensor>& params, double eps,
                                                  std::size_t max_coords, std::uint64_t seed) {
    Gradients grads;
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        grads = tape.backward(loss);
    }
    NoGradGuard no_grad;
    Rng rng(seed);
    std::vector<ParamCheck> results;
    for (auto [name, param] : params) {
        Tensor g = grads.of(param);
        auto values = param.mutable_data();
        std::vector<std::size_t> coords(values.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (max_coords != 0 && coords.size() > max_coords) {
            // Partial Fisher-Yates draw of `max_coords` distinct coordinates.
            for (std::size_t i = 0; i < max_coords; ++i) {
                std::size_t j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
                std::swap(coords[i], coords[j]);
            }
            coords.resize(max_coords);
        }
        std::vector<double> analytic;
        std::vector<double> numeric;
        for (auto c : coords) {
            const double saved = values[c];
            values[c] = saved + eps;
            double fp = evaluate_loss(loss_fn);
            values[c] = saved - eps;
            double fm = evaluate_loss(loss_fn);
            values[c] = saved;
            numeric.push_back((fp - fm) / (2.0 * eps));
            analytic.push_back(g.data()[c]);
        }
        results.push_back({name, relative_error(analytic, numeric), coords.size()});
    }
    return results;
}

}  // namespace heracles
