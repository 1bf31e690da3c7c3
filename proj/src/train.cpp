#include "heracles/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "heracles/losses.hpp"
#include "heracles/ops.hpp"
#include "heracles/random.hpp"
#include "heracles/tensor_io.hpp"

namespace heracles {

namespace {

std::vector<std::int64_t> iota(std::int64_t n) {
    std::vector<std::int64_t> v(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

void shuffle(std::vector<std::int64_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<NamedTensor> snapshot(const std::vector<NamedTensor>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.emplace_back(name, t.clone().set_requires_grad(false));
    return out;
}

/// Shared epoch/step driver. `batch_loss` builds the loss for a list of
/// sample indices; `validate` returns the epoch metrics; `better` compares two
/// validation results.
History run_training(Model& model, std::int64_t n_train, const TrainHyper& hyper,
                     const std::function<Tensor(const std::vector<std::int64_t>&)>& batch_loss,
                     const std::function<Metrics()>& validate, const std::function<Metrics()>& train_metrics,
                     const std::function<bool(const Metrics&, const Metrics&)>& better, const StopRule& stop) {
    if (n_train == 0) throw Error(Errc::EmptySplit, "training split is empty");
    if (hyper.batch_size < 1 || hyper.epochs < 1) throw Error(Errc::BadInput, "batch_size and epochs must be positive");
    const std::int64_t per_epoch = (n_train + hyper.batch_size - 1) / hyper.batch_size;
    std::int64_t total = per_epoch * hyper.epochs;
    if (hyper.max_steps > 0) total = std::min(total, hyper.max_steps);
    const auto warmup = static_cast<std::int64_t>(std::llround(hyper.warmup_frac * static_cast<double>(total)));

    AdamWHyper adam;
    adam.weight_decay = hyper.weight_decay;
    OptimState state = OptimState::for_params(model.registry);
    History history;
    std::int64_t step = 0;

    for (std::int64_t epoch = 1; epoch <= hyper.epochs && step < total; ++epoch) {
        std::vector<std::int64_t> order = iota(n_train);
        Rng rng(derive_seed(hyper.seed, static_cast<std::uint64_t>(epoch)));
        shuffle(order, rng);
        double loss_sum = 0.0;
        std::int64_t loss_count = 0;
        for (std::int64_t b = 0; b < per_epoch && step < total; ++b) {
            const auto first = order.begin() + b * hyper.batch_size;
            const auto last = order.begin() + std::min(n_train, (b + 1) * hyper.batch_size);
            std::vector<std::int64_t> idx(first, last);

            const double lr = lr_schedule(step, warmup, total, hyper.lr);
            Tape tape;
            Gradients grads;
            double loss_value = 0.0;
            {
                TapeScope scope(tape);
                Tensor loss = batch_loss(idx);
                loss_value = loss.item();
                grads = tape.backward(loss);
            }
            std::vector<Tensor> g;
            g.reserve(model.registry.size());
            for (const auto& [name, p] : model.registry) g.push_back(grads.of(p));
            if (hyper.clip > 0.0) clip_grad_norm(g, hyper.clip);
            StepResult r = optimizer_step(model.registry, g, state, adam, lr);
            history.steps.push_back({step, loss_value, lr, r == StepResult::skipped_nonfinite});
            ++step;
            if (std::isfinite(loss_value)) {
                loss_sum += loss_value;
                ++loss_count;
            }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.steps = step;
        rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : std::nan("");
        rec.val = validate();
        if (hyper.eval_train) rec.train = train_metrics();
        if (history.best_epoch == 0 || better(rec.val, history.best_val)) {
            history.best_epoch = epoch;
            history.best_val = rec.val;
            history.best_params = snapshot(model.registry);
        }
        history.epochs.push_back(rec);
        if (stop && stop(rec)) break;
    }
    return history;
}

}  // namespace

double metric(const Metrics& metrics, const std::string& name) {
    for (const auto& [k, v] : metrics) {
        if (k == name) return v;
    }
    throw Error(Errc::BadInput, "no metric named '" + name + "'");
}

ClassifyData ClassifyData::subset(const std::vector<std::int64_t>& indices) const {
    const Shape& s = images.shape();
    const std::int64_t per = s[1] * s[2] * s[3];
    std::vector<double> v(indices.size() * static_cast<std::size_t>(per));
    auto src = images.data();
    ClassifyData out;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::int64_t k = indices[i];
        if (k < 0 || k >= size()) throw Error(Errc::BadInput, "sample index out of range");
        std::copy(src.begin() + k * per, src.begin() + (k + 1) * per, v.begin() + static_cast<std::int64_t>(i) * per);
        out.labels.push_back(labels[static_cast<std::size_t>(k)]);
    }
    out.images = Tensor::from({static_cast<std::int64_t>(indices.size()), s[1], s[2], s[3]}, std::move(v), images.dtype());
    return out;
}

ClassifyData make_texture_dataset(std::int64_t n, std::int64_t size, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
    shuffle(labels, rng);
    std::vector<double> v(static_cast<std::size_t>(n * size * size * 3));
    for (std::int64_t i = 0; i < n; ++i) {
        const double freq = rng.uniform(1.5, 4.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const bool vertical = labels[static_cast<std::size_t>(i)] == 1;
        for (std::int64_t y = 0; y < size; ++y) {
            for (std::int64_t x = 0; x < size; ++x) {
                const double pos = static_cast<double>(vertical ? x : y) / static_cast<double>(size);
                const double base = std::sin(2.0 * std::numbers::pi * freq * pos + phase);
                for (std::int64_t c = 0; c < 3; ++c) {
                    v[static_cast<std::size_t>(((i * size + y) * size + x) * 3 + c)] = base + rng.normal(0.0, 0.3);
                }
            }
        }
    }
    ClassifyData d;
    d.images = Tensor::from({n, size, size, 3}, std::move(v), DType::f32);
    d.labels = std::move(labels);
    return d;
}

std::pair<ClassifyData, ClassifyData> split_classify(const ClassifyData& data, double val_frac) {
    const std::int64_t n = data.size();
    const auto n_val = static_cast<std::int64_t>(std::floor(static_cast<double>(n) * val_frac + 1e-9));
    std::vector<std::int64_t> tr = iota(n - n_val);
    std::vector<std::int64_t> va;
    for (std::int64_t i = n - n_val; i < n; ++i) va.push_back(i);
    return {data.subset(tr), data.subset(va)};
}

Metrics evaluate_classifier(const Model& model, const ClassifyData& data, std::int64_t batch) {
    if (data.size() == 0) throw Error(Errc::EmptySplit, "evaluation split is empty");
    NoGradGuard no_grad;
    double loss = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    for (std::int64_t s = 0; s < data.size(); s += batch) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = s; i < std::min(data.size(), s + batch); ++i) idx.push_back(i);
        ClassifyData part = data.subset(idx);
        Tensor logits = forward_classify(model, part.images.to(model.config.dtype));
        const auto count = static_cast<double>(idx.size());
        loss += cross_entropy(logits, part.labels).item() * count;
        top1 += topk_accuracy(logits, part.labels, 1) * count;
        top5 += topk_accuracy(logits, part.labels, 5) * count;
    }
    const auto n = static_cast<double>(data.size());
    return {{"loss", loss / n}, {"top1", top1 / n}, {"top5", top5 / n}};
}

Metrics evaluate_forecaster(const Model& model, const WindowSet& data, std::int64_t batch) {
    if (data.size() == 0) throw Error(Errc::EmptySplit, "evaluation split is empty");
    NoGradGuard no_grad;
    double sq = 0.0;
    double ab = 0.0;
    std::int64_t count = 0;
    for (std::int64_t s = 0; s < data.size(); s += batch) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = s; i < std::min(data.size(), s + batch); ++i) idx.push_back(i);
        WindowBatch wb = data.gather(idx);
        Tensor pred = forward_forecast(model, wb.x.to(model.config.dtype));
        auto p = pred.data();
        auto y = wb.y.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - y[i];
            sq += d * d;
            ab += std::fabs(d);
        }
        count += static_cast<std::int64_t>(p.size());
    }
    return {{"mse", sq / static_cast<double>(count)}, {"mae", ab / static_cast<double>(count)}};
}

double repeat_last_mse(const WindowSet& data) {
    if (data.size() == 0) throw Error(Errc::EmptySplit, "evaluation split is empty");
    const std::int64_t l = data.lookback();
    const std::int64_t t = data.horizon();
    const std::int64_t m = data.channels();
    double sq = 0.0;
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < data.size(); ++i) {
        WindowBatch wb = data.gather({i});
        auto x = wb.x.data();
        auto y = wb.y.data();
        for (std::int64_t k = 0; k < t; ++k) {
            for (std::int64_t c = 0; c < m; ++c) {
                const double d = y[k * m + c] - x[(l - 1) * m + c];
                sq += d * d;
                ++count;
            }
        }
    }
    return sq / static_cast<double>(count);
}

History train_classifier(Model& model, const ClassifyData& train, const ClassifyData& val, const TrainHyper& hyper,
                         const StopRule& stop) {
    if (model.config.task != Task::classify) throw Error(Errc::ConfigMismatch, "model is not a classifier");
    const DType dt = model.config.dtype;
    auto batch_loss = [&](const std::vector<std::int64_t>& idx) {
        ClassifyData part = train.subset(idx);
        return cross_entropy(forward_classify(model, part.images.to(dt)), part.labels);
    };
    auto validate = [&] { return evaluate_classifier(model, val, hyper.eval_batch); };
    auto train_metrics = [&] { return evaluate_classifier(model, train, hyper.eval_batch); };
    auto better = [](const Metrics& a, const Metrics& b) { return metric(a, "top1") > metric(b, "top1"); };
    return run_training(model, train.size(), hyper, batch_loss, validate, train_metrics, better, stop);
}

History train_forecaster(Model& model, const WindowSet& train, const WindowSet& val, const TrainHyper& hyper,
                         const StopRule& stop) {
    if (model.config.task != Task::forecast) throw Error(Errc::ConfigMismatch, "model is not a forecaster");
    if (train.channels() != model.config.channels || train.lookback() != model.config.lookback ||
        train.horizon() != model.config.horizon) {
        throw Error(Errc::ConfigMismatch, "windows do not match the model's lookback, horizon or channels");
    }
    const DType dt = model.config.dtype;
    auto batch_loss = [&](const std::vector<std::int64_t>& idx) {
        WindowBatch wb = train.gather(idx);
        return mse(forward_forecast(model, wb.x.to(dt)), wb.y.to(dt));
    };
    auto validate = [&] { return evaluate_forecaster(model, val, hyper.eval_batch); };
    auto train_metrics = [&] { return evaluate_forecaster(model, train, hyper.eval_batch); };
    auto better = [](const Metrics& a, const Metrics& b) { return metric(a, "mse") < metric(b, "mse"); };
    return run_training(model, train.size(), hyper, batch_loss, validate, train_metrics, better, stop);
}

void save_checkpoint(const std::string& path, const Model& model, const std::vector<NamedTensor>& params) {
    TensorFile file;
    file.tensors = params;
    file.blobs.emplace_back("__config", serialize_config(model.config));
    save_tensor_file(path, file);
}

void save_checkpoint(const std::string& path, const Model& model) { save_checkpoint(path, model, model.registry); }

Model load_checkpoint(const std::string& path) {
    TensorFile file = load_tensor_file(path);
    const std::string* cfg = file.find_blob("__config");
    if (!cfg) throw Error(Errc::BadInput, "'" + path + "' has no __config entry");
    Model model = build_model(parse_config(*cfg), 0);
    load_parameters(model, file.tensors);
    return model;
}

}  // namespace heracles
