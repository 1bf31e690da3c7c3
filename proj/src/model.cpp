#include "heracles/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "heracles/ops.hpp"

namespace heracles {

using namespace blocks;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::int64_t side_of(const ModelConfig& cfg, std::int64_t stage) { return cfg.input_size >> (stage + 2); }

Block make_block(const ModelConfig& cfg, const StageConfig& s, const Shape& domain, bool sequence, Rng& rng) {
    const DType dt = cfg.dtype;
    if (s.kind == StageKind::spectral) {
        HeraclesBlock b;
        b.norm1 = make_layer_norm(s.C, dt);
        b.gate = make_spectral_gate(cfg.transform, domain, s.C, s.G, rng, dt);
        b.gate.bidirectional = cfg.bidirectional;
        b.conv = make_local_conv(s.C, cfg.kernel, sequence, rng, dt);
        b.norm2 = make_layer_norm(s.C, dt);
        b.mlp = make_mlp(s.C, s.E, rng, dt);
        b.mode = cfg.merge;
        b.act = cfg.activation;
        return b;
    }
    AttentionBlock b;
    b.norm1 = make_layer_norm(s.C, dt);
    b.attn = make_attention(s.C, s.H, rng, dt);
    b.reduction = make_spatial_reduction(s.C, s.sr, rng, dt);
    b.norm2 = make_layer_norm(s.C, dt);
    b.mlp = make_mlp(s.C, s.E, rng, dt);
    return b;
}

Tensor run_block(const Block& block, const Tensor& x) {
    return std::visit(Overloaded{[&](const HeraclesBlock& b) { return heracles_block_forward(x, b); },
                                 [&](const AttentionBlock& b) { return attention_block_forward(x, b); }},
                      block);
}

void collect_block(const Block& block, const std::string& prefix, std::vector<NamedTensor>& out) {
    std::visit([&](const auto& b) { b.collect(prefix, out); }, block);
}

// ---- cost model ------------------------------------------------------------

std::int64_t transform_cost(std::int64_t n) {
    if (n <= 1) return 0;
    return std::llround(5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n)));
}

struct Geometry {
    std::int64_t batch = 1;
    std::int64_t h = 0;  // image height or sequence length
    std::int64_t w = 0;  // image width, 1 for sequences
};

std::int64_t spectral_block_flops(const ModelConfig& cfg, const StageConfig& s, std::int64_t h, std::int64_t w,
                                  bool sequence) {
    const std::int64_t n = h * w;
    std::int64_t transforms = sequence ? s.C * transform_cost(h) : s.C * (h * transform_cost(w) + w * transform_cost(h));
    transforms *= 2;  // forward and inverse
    if (cfg.bidirectional) transforms *= 2;
    const std::int64_t conv = n * (sequence ? cfg.kernel : cfg.kernel * cfg.kernel) * s.C;
    const std::int64_t mlp = 2 * n * s.C * s.E * s.C;
    return transforms + conv + mlp;
}

std::int64_t attention_block_flops(const StageConfig& s, std::int64_t h, std::int64_t w) {
    const std::int64_t n = h * w;
    const std::int64_t kv_tokens = s.sr > 1 ? (h / s.sr) * (w / s.sr) : n;
    const std::int64_t c = s.C;
    std::int64_t total = 2 * n * c * c;                 // query and output projections
    total += 2 * kv_tokens * c * c;                     // key and value projections
    total += 2 * n * kv_tokens * c;                     // logits and weighted sum
    if (s.sr > 1) total += kv_tokens * s.sr * s.sr * c * c;  // reduction conv
    total += 2 * n * c * s.E * c;                       // MLP
    return total;
}

std::int64_t block_params(const Block& block) {
    std::vector<NamedTensor> params;
    collect_block(block, "", params);
    std::int64_t total = 0;
    for (const auto& [name, t] : params) total += t.numel();
    return total;
}

std::int64_t conv_params(const Conv2d& c) {
    return (c.weight.defined() ? c.weight.numel() : 0) + (c.bias.defined() ? c.bias.numel() : 0);
}

Geometry geometry_for(const Model& model, const Shape& input_shape) {
    const ModelConfig& cfg = model.config;
    Geometry g;
    if (input_shape.size() != 3 && input_shape.size() != 4 && input_shape.size() != 2) {
        throw Error(Errc::ShapeMismatch, "input shape must be [B,H,W,C], [B,L,M] or [H,W]");
    }
    if (cfg.task == Task::classify) {
        if (input_shape.size() == 2) {
            g.h = input_shape[0];
            g.w = input_shape[1];
        } else if (input_shape.size() == 4) {
            g.batch = input_shape[0];
            g.h = input_shape[1];
            g.w = input_shape[2];
        } else {
            throw Error(Errc::ShapeMismatch, "classification input shape must be [B,H,W,C]");
        }
        const std::int64_t factor = std::int64_t{1} << (cfg.num_stages() + 1);
        if (g.h % factor != 0 || g.w % factor != 0) {
            throw Error(Errc::IndivisibleSpatial, "input " + shape_str(input_shape) + " not divisible by " +
                                                      std::to_string(factor));
        }
    } else {
        if (input_shape.size() != 3) throw Error(Errc::ShapeMismatch, "forecast input shape must be [B,L,M]");
        g.batch = input_shape[0];
        g.h = input_shape[1];
        g.w = 1;
    }
    return g;
}

}  // namespace

const Tensor& Model::param(const std::string& name) const {
    for (const auto& [n, t] : registry) {
        if (n == name) return t;
    }
    throw Error(Errc::BadInput, "no parameter named '" + name + "'");
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    validate(config);
    Model m;
    m.config = config;
    Rng rng(seed);
    const DType dt = config.dtype;
    const bool forecast = config.task == Task::forecast;
    const std::int64_t c_first = config.stages.front().C;
    const std::int64_t c_last = config.stages.back().C;

    if (forecast) {
        m.lift = make_linear(config.channels, c_first, true, rng, dt);
        m.lift.collect("lift", m.registry);
    } else {
        m.stem = make_patch_embed(config.in_channels, c_first, rng, dt);
        m.stem.collect("stem", m.registry);
    }

    for (std::int64_t i = 0; i < config.num_stages(); ++i) {
        const StageConfig& s = config.stages[static_cast<std::size_t>(i)];
        const std::string tag = "stage" + std::to_string(i + 1);
        StageModule stage;
        if (!forecast && i > 0) {
            stage.downsample = make_downsample(config.stages[static_cast<std::size_t>(i - 1)].C, s.C, rng, dt);
            stage.downsample.collect(tag + ".down", m.registry);
        }
        const Shape domain = forecast ? Shape{config.lookback} : Shape{side_of(config, i), side_of(config, i)};
        for (std::int64_t j = 0; j < s.depth; ++j) {
            stage.blocks.push_back(make_block(config, s, domain, forecast, rng));
            collect_block(stage.blocks.back(), tag + ".block" + std::to_string(j + 1), m.registry);
        }
        m.stages.push_back(std::move(stage));
    }

    m.final_norm = make_layer_norm(c_last, dt);
    m.final_norm.collect("norm", m.registry);
    if (forecast) {
        m.head = make_linear(c_last, config.channels, true, rng, dt);
        m.head.collect("head", m.registry);
        m.temporal = make_linear(config.lookback, config.horizon, true, rng, dt);
        m.temporal.collect("temporal", m.registry);
    } else {
        m.head = make_linear(c_last, config.num_classes, true, rng, dt);
        m.head.collect("head", m.registry);
    }
    return m;
}

std::int64_t count_params(const Model& model) {
    std::int64_t total = 0;
    for (const auto& [name, t] : model.registry) total += t.numel();
    return total;
}

std::vector<StageReport> stage_reports(const Model& model, const Shape& input_shape) {
    const ModelConfig& cfg = model.config;
    Geometry g = geometry_for(model, input_shape);
    const bool forecast = cfg.task == Task::forecast;
    std::vector<StageReport> reports;
    std::int64_t h = forecast ? g.h : g.h / 4;
    std::int64_t w = forecast ? 1 : g.w / 4;
    for (std::int64_t i = 0; i < cfg.num_stages(); ++i) {
        const StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
        const StageModule& mod = model.stages[static_cast<std::size_t>(i)];
        StageReport r;
        r.index = i + 1;
        r.stage = s;
        if (!forecast && i > 0) {
            h /= 2;
            w /= 2;
            r.flops += h * w * 9 * cfg.stages[static_cast<std::size_t>(i - 1)].C * s.C;
            r.params += conv_params(mod.downsample);
        }
        r.map_h = h;
        r.map_w = w;
        for (const Block& b : mod.blocks) {
            r.params += block_params(b);
            r.flops += s.kind == StageKind::spectral ? spectral_block_flops(cfg, s, h, w, forecast)
                                                     : attention_block_flops(s, h, w);
        }
        reports.push_back(r);
    }
    return reports;
}

std::int64_t estimate_flops(const Model& model, const Shape& input_shape) {
    const ModelConfig& cfg = model.config;
    Geometry g = geometry_for(model, input_shape);
    std::int64_t total = 0;
    const std::int64_t c_first = cfg.stages.front().C;
    const std::int64_t c_last = cfg.stages.back().C;
    if (cfg.task == Task::classify) {
        const std::int64_t mid = model.stem.conv1.weight.size(3);
        total += (g.h / 2) * (g.w / 2) * 9 * cfg.in_channels * mid;
        total += (g.h / 4) * (g.w / 4) * 9 * mid * c_first;
        total += c_last * cfg.num_classes;
    } else {
        total += g.h * cfg.channels * c_first;        // lift
        total += g.h * c_last * cfg.channels;         // head
        total += cfg.channels * g.h * cfg.horizon;    // temporal map
    }
    for (const auto& r : stage_reports(model, input_shape)) total += r.flops;
    return total * g.batch;
}

Tensor forward_classify(const Model& model, const Tensor& images) {
    const ModelConfig& cfg = model.config;
    if (cfg.task != Task::classify) throw Error(Errc::ConfigMismatch, "model is not a classifier");
    if (images.dim() != 4 || images.size(3) != cfg.in_channels) {
        throw Error(Errc::ShapeMismatch, "images must be [B,H,W," + std::to_string(cfg.in_channels) + "], got " +
                                             shape_str(images.shape()));
    }
    const std::int64_t factor = std::int64_t{1} << (cfg.num_stages() + 1);
    if (images.size(1) % factor != 0 || images.size(2) % factor != 0) {
        throw Error(Errc::IndivisibleSpatial, "image " + shape_str(images.shape()) + " not divisible by " +
                                                  std::to_string(factor));
    }
    if (images.size(1) != cfg.input_size || images.size(2) != cfg.input_size) {
        throw Error(Errc::ShapeMismatch, "model gates are sized for " + std::to_string(cfg.input_size) + "x" +
                                             std::to_string(cfg.input_size) + " inputs, got " + shape_str(images.shape()));
    }
    Tensor x = patch_embed(images, model.stem);
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        const StageModule& stage = model.stages[i];
        if (i > 0) x = downsample(x, stage.downsample);
        for (const Block& b : stage.blocks) x = run_block(b, x);
    }
    x = layer_norm(x, model.final_norm);
    Tensor pooled = mean(x, {1, 2});
    return linear_forward(pooled, model.head);
}

Tensor forward_forecast(const Model& model, const Tensor& window) {
    const ModelConfig& cfg = model.config;
    if (cfg.task != Task::forecast) throw Error(Errc::ConfigMismatch, "model is not a forecaster");
    if (window.dim() != 3 || window.size(1) != cfg.lookback || window.size(2) != cfg.channels) {
        throw Error(Errc::ShapeMismatch, "window must be [B," + std::to_string(cfg.lookback) + "," +
                                             std::to_string(cfg.channels) + "], got " + shape_str(window.shape()));
    }
    Tensor x = linear_forward(window, model.lift);  // [B, L, C]
    for (const StageModule& stage : model.stages) {
        for (const Block& b : stage.blocks) x = run_block(b, x);
    }
    x = linear_forward(layer_norm(x, model.final_norm), model.head);  // [B, L, M]
    Tensor y = linear_forward(permute(x, {0, 2, 1}), model.temporal);   // [B, M, T]
    return permute(y, {0, 2, 1});
}

std::vector<std::string> spectral_gate_names(const Model& model) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < model.stages.size(); ++i) {
        for (std::size_t j = 0; j < model.stages[i].blocks.size(); ++j) {
            const auto* hb = std::get_if<HeraclesBlock>(&model.stages[i].blocks[j]);
            if (!hb) continue;
            std::vector<NamedTensor> params;
            hb->gate.collect("stage" + std::to_string(i + 1) + ".block" + std::to_string(j + 1) + ".gate", params);
            for (auto& [name, t] : params) names.push_back(name);
        }
    }
    return names;
}

void load_parameters(Model& model, const std::vector<NamedTensor>& entries) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : entries) by_name[name] = &t;
    for (auto& [name, t] : model.registry) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw Error(Errc::ConfigMismatch, "checkpoint lacks parameter '" + name + "'");
        const Tensor& src = *it->second;
        if (src.shape() != t.shape()) {
            throw Error(Errc::ConfigMismatch, "parameter '" + name + "' has shape " + shape_str(src.shape()) +
                                                  ", model expects " + shape_str(t.shape()));
        }
        Tensor converted = src.to(t.dtype());
        auto dst = t.mutable_data();
        auto values = converted.data();
        std::copy(values.begin(), values.end(), dst.begin());
    }
}

}  // namespace heracles
