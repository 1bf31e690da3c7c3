#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "heracles/blocks.hpp"
#include "heracles/tensor.hpp"

namespace heracles {

enum class StageKind { spectral, attention };
enum class Task { classify, forecast };

std::string to_string(StageKind kind);
std::string to_string(Task task);

struct StageConfig {
    std::int64_t depth = 1;
    std::int64_t C = 64;
    StageKind kind = StageKind::spectral;
    std::int64_t E = 4;   // MLP expansion
    std::int64_t G = 1;   // gate tensors per spectral layer (0 on attention stages)
    std::int64_t H = 0;   // heads (0 on spectral stages)
    std::int64_t sr = 1;  // key/value reduction ratio on attention stages

    bool operator==(const StageConfig&) const = default;
};

struct ModelConfig {
    std::string name = "custom";
    std::vector<StageConfig> stages;
    std::int64_t alpha = 0;
    Task task = Task::classify;
    // classify
    std::int64_t num_classes = 1000;
    std::int64_t input_size = 224;
    std::int64_t in_channels = 3;
    // forecast
    std::int64_t lookback = 96;
    std::int64_t horizon = 96;
    std::int64_t channels = 7;
    // block options
    spectral::TransformKind transform = spectral::TransformKind::Cosine;
    blocks::MergeMode merge = blocks::MergeMode::parallel;
    blocks::Activation activation = blocks::Activation::gelu;
    bool bidirectional = false;
    std::int64_t kernel = 3;
    DType dtype = DType::f32;

    std::int64_t num_stages() const { return static_cast<std::int64_t>(stages.size()); }
    bool operator==(const ModelConfig&) const = default;
};

/// Names accepted by `preset_config`.
const std::vector<std::string>& preset_names();

/// Small configs for gradient checks and smoke runs.
const std::vector<std::string>& toy_preset_names();

/// Table values for heracles-s/b/l, the s-a0..a4 sweep and heracles-ts, plus
/// the toy configs. Throws UnknownPreset.
ModelConfig preset_config(const std::string& name);

/// Sets the stage kinds from `alpha` (first alpha stages spectral) and
/// fills G/H defaults where missing: G = 1, H = C / 32 (at least 1).
void apply_alpha(ModelConfig& cfg, std::int64_t alpha);

/// Checks every invariant; throws ConfigInvariantViolated (or
/// HeadDivisibility / IndivisibleSpatial for those specific failures).
void validate(const ModelConfig& cfg);

/// key=value lines with '#' comments. An optional `preset=<name>` line seeds
/// the config before the remaining keys override it.
ModelConfig parse_config(const std::string& text);
ModelConfig load_config_file(const std::string& path);
std::string serialize_config(const ModelConfig& cfg);

/// Applies a single key=value override (keys as in `serialize_config`).
void set_config_key(ModelConfig& cfg, const std::string& key, const std::string& value);

}  // namespace heracles
