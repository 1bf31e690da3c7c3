#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "heracles/model.hpp"
#include "heracles/optim.hpp"
#include "heracles/series.hpp"

namespace heracles {

/// Ordered metric list, e.g. {{"mse", 0.1}, {"mae", 0.2}}.
using Metrics = std::vector<std::pair<std::string, double>>;

double metric(const Metrics& metrics, const std::string& name);

struct ClassifyData {
    Tensor images;  // [N, H, W, C]
    std::vector<std::int64_t> labels;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    ClassifyData subset(const std::vector<std::int64_t>& indices) const;
};

/// Two textures on a size x size x 3 grid: class 0 carries horizontal
/// stripes, class 1 vertical stripes, each with a seeded frequency, phase
/// and additive noise. Labels alternate before a seeded shuffle.
ClassifyData make_texture_dataset(std::int64_t n, std::int64_t size, std::uint64_t seed);

/// Splits off the last `val_frac` of the samples.
std::pair<ClassifyData, ClassifyData> split_classify(const ClassifyData& data, double val_frac);

struct TrainHyper {
    std::int64_t epochs = 10;
    std::int64_t max_steps = 0;  // 0: no cap beyond epochs
    std::int64_t batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 0.05;
    double warmup_frac = 0.05;
    double clip = 1.0;
    std::uint64_t seed = 0;
    std::int64_t eval_batch = 256;
    bool eval_train = false;  // also measure the train split after each epoch
};

struct StepRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    bool skipped = false;
};

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    std::int64_t steps = 0;  // cumulative optimizer steps at the end of the epoch
    double train_loss = 0.0;
    Metrics val;
    Metrics train;  // empty unless eval_train
};

struct History {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    std::int64_t best_epoch = 0;
    Metrics best_val;
    std::vector<NamedTensor> best_params;  // deep copies
};

/// Stops training after the epoch for which it returns true.
using StopRule = std::function<bool(const EpochRecord&)>;

History train_classifier(Model& model, const ClassifyData& train, const ClassifyData& val, const TrainHyper& hyper,
                         const StopRule& stop = {});
History train_forecaster(Model& model, const WindowSet& train, const WindowSet& val, const TrainHyper& hyper,
                         const StopRule& stop = {});

/// {"loss", "top1", "top5"}. Throws EmptySplit.
Metrics evaluate_classifier(const Model& model, const ClassifyData& data, std::int64_t batch = 256);
/// {"mse", "mae"} over every predicted element. Throws EmptySplit.
Metrics evaluate_forecaster(const Model& model, const WindowSet& data, std::int64_t batch = 256);
/// MSE of repeating each window's last observed row over the horizon.
double repeat_last_mse(const WindowSet& data);

/// Tensor container holding every registry entry plus "__config".
void save_checkpoint(const std::string& path, const Model& model,
                     const std::vector<NamedTensor>& params);
void save_checkpoint(const std::string& path, const Model& model);
/// Rebuilds the model from the stored config and loads its parameters.
Model load_checkpoint(const std::string& path);

}  // namespace heracles
