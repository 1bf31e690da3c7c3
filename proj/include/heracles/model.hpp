#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "heracles/blocks.hpp"
#include "heracles/config.hpp"
#include "heracles/gradcheck.hpp"

namespace heracles {

using Block = std::variant<blocks::HeraclesBlock, blocks::AttentionBlock>;

struct StageModule {
    blocks::Conv2d downsample;  // undefined weight on the first stage and for forecasting
    std::vector<Block> blocks;
};

/// A built network. Parameter tensors are shared handles: the registry and
/// the layer structs point at the same buffers.
struct Model {
    ModelConfig config;
    blocks::PatchEmbed stem;   // classify
    blocks::Linear lift;       // forecast: M -> C per time step
    std::vector<StageModule> stages;
    blocks::LayerNorm final_norm;
    blocks::Linear head;       // classify: C -> classes; forecast: C -> M
    blocks::Linear temporal;   // forecast: L -> T, shared across channels
    std::vector<NamedTensor> registry;

    /// Registry entry by name; throws BadInput when absent.
    const Tensor& param(const std::string& name) const;
};

/// Deterministic construction from (config, seed). Validates the config.
Model build_model(const ModelConfig& config, std::uint64_t seed);

std::int64_t count_params(const Model& model);

/// Multiply-accumulate count of one forward pass for `input_shape`
/// ([B,H,W,C] images or [B,L,M] windows). Accounting rules:
///   linear / matmul [m,k]x[k,n]: m k n
///   convolution: Hout Wout kh kw (Cin / groups) Cout
///   attention: T S C for the logits plus T S C for the weighted sum
///   1D transform of length N: 5 N log2 N, for each forward and inverse fiber
/// Elementwise ops, norms, softmax and pooling are not counted.
std::int64_t estimate_flops(const Model& model, const Shape& input_shape);

struct StageReport {
    std::int64_t index = 0;  // 1-based
    StageConfig stage;
    std::int64_t map_h = 0;  // tokens along each axis (map_w = 1 for sequences)
    std::int64_t map_w = 0;
    std::int64_t params = 0;  // blocks plus the incoming downsample
    std::int64_t flops = 0;
};

/// Per-stage breakdown for a single sample of `input_shape`.
std::vector<StageReport> stage_reports(const Model& model, const Shape& input_shape);

/// images [B,H,W,C] -> logits [B, num_classes].
Tensor forward_classify(const Model& model, const Tensor& images);
/// window [B,L,M] -> prediction [B,T,M].
Tensor forward_forecast(const Model& model, const Tensor& window);

/// Names of every spectral gate tensor, in registry order.
std::vector<std::string> spectral_gate_names(const Model& model);

/// Copies values from `entries` into the registry by name. Every registry
/// entry must be present with the same shape; throws ConfigMismatch otherwise.
void load_parameters(Model& model, const std::vector<NamedTensor>& entries);

}  // namespace heracles
