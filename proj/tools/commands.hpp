#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "heracles/config.hpp"

namespace heracles::cli {

using json = nlohmann::json;

/// Bad flag combinations detected after parsing; exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-invocation state that ends up in the manifest.
class RunContext {
public:
    RunContext(std::string command, std::vector<std::string> argv);
    ~RunContext();
    RunContext(const RunContext&) = delete;
    RunContext& operator=(const RunContext&) = delete;

    /// Creates `dir`, takes its lockfile and places the manifest inside.
    /// Throws Io when another writer holds the lock.
    void use_output_dir(const std::string& dir);
    /// Manifest goes next to `file` as <file>.manifest.json.
    void use_output_file(const std::string& file);
    void add_output(const std::string& path);
    void set_config(const ModelConfig& cfg);
    void set_seed(std::uint64_t seed);

    void write_manifest(int exit_code, const std::string& error);

    std::string command;
    std::vector<std::string> argv;
    std::string manifest_override;
    json results = json::object();
    json timings = json::object();

private:
    std::string manifest_path_;
    std::string lock_path_;
    std::vector<std::string> outputs_;
    json config_ = nullptr;
    json seed_ = nullptr;
    double started_ = 0.0;
};

/// --seed when given, else HERACLES_SEED, else 0.
std::uint64_t resolve_seed(bool given, std::uint64_t value);

struct ModelOptions {
    std::string preset;
    std::string config;
    std::vector<std::string> sets;  // key=value overrides
};

/// Builds the config from a preset or config file plus overrides, without validating.
ModelConfig resolve_model_config(const ModelOptions& opts);

struct TransformOptions {
    std::string kind;
    std::string in;
    std::string out;
    std::string entry;
    bool inverse = false;
};

struct EnergyOptions {
    std::string in;
    std::string entry;
    std::vector<std::string> kinds = {"hartley", "cosine", "fourier"};
    std::vector<double> fractions = {0.9, 0.99};
    std::string out;
    bool split_complex = false;
};

struct GradcheckOptions {
    ModelOptions model;
    std::string dtype = "f64";
    double tol = 1e-4;
    double eps = 1e-5;
    std::int64_t samples = 8;
    std::int64_t instances = 1;
    std::int64_t batch = 2;
    std::int64_t input_size = 0;
    std::string fault;
    std::string out;
    bool seed_given = false;
    std::uint64_t seed = 0;
};

struct TrainOptions {
    ModelOptions model;
    std::string task;
    std::string data;
    std::string out;
    std::string dtype;
    std::string stop_at;
    std::int64_t epochs = 10;
    std::int64_t max_steps = 0;
    std::int64_t batch = 32;
    std::int64_t eval_batch = 256;
    double lr = 1e-3;
    double wd = 0.05;
    double warmup = 0.05;
    double clip = 1.0;
    double val_frac = 0.2;
    bool seed_given = false;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::string split = "val";
    std::string out;
    std::int64_t eval_batch = 256;
    double val_frac = 0.2;
};

struct InfoOptions {
    ModelOptions model;
    std::int64_t input_size = 0;
    std::string json_out;
    bool alpha_sweep = false;
};

struct FiltersOptions {
    std::string checkpoint;
    std::string out;
};

struct BenchOptions {
    ModelOptions model;
    std::int64_t batch = 1;
    std::int64_t repeats = 10;
    std::int64_t warmup = 3;
    std::int64_t input_size = 0;
    std::string out;
    bool seed_given = false;
    std::uint64_t seed = 0;
};

int cmd_transform(const TransformOptions& opts, RunContext& ctx);
int cmd_energy(const EnergyOptions& opts, RunContext& ctx);
int cmd_gradcheck(const GradcheckOptions& opts, RunContext& ctx);
int cmd_train(const TrainOptions& opts, RunContext& ctx);
int cmd_eval(const EvalOptions& opts, RunContext& ctx);
int cmd_info(const InfoOptions& opts, RunContext& ctx);
int cmd_filters(const FiltersOptions& opts, RunContext& ctx);
int cmd_bench(const BenchOptions& opts, RunContext& ctx);

}  // namespace heracles::cli
