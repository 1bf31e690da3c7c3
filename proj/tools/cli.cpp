#include "cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "heracles/error.hpp"
#include "heracles/parallel.hpp"

#ifndef HERACLES_VERSION
#define HERACLES_VERSION "0.0.0"
#endif

namespace heracles::cli {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::UnknownPreset:
            return kUsage;
        case Errc::ToleranceExceeded:
            return kVerificationFailure;
        case Errc::ShapeMismatch:
        case Errc::EmptyInput:
        case Errc::HeadDivisibility:
        case Errc::IndivisibleSpatial:
        case Errc::ConfigInvariantViolated:
        case Errc::ParseError:
        case Errc::TooFewRows:
        case Errc::ConstantChannel:
        case Errc::WindowTooLong:
        case Errc::BadMagic:
        case Errc::UnsupportedVersion:
        case Errc::TruncatedFile:
        case Errc::ChecksumMismatch:
        case Errc::LabelOutOfRange:
        case Errc::EmptySplit:
        case Errc::ConfigMismatch:
        case Errc::NoSpectralGates:
        case Errc::BadInput:
        case Errc::UnsupportedRank:
        case Errc::Io:
            return kDataError;
        default:
            return kInternal;
    }
}

}  // namespace

RunContext::RunContext(std::string cmd, std::vector<std::string> args)
    : command(std::move(cmd)), argv(std::move(args)), started_(now_seconds()) {
    manifest_path_ = command + ".manifest.json";
    timings["started_utc"] = utc_timestamp();
}

RunContext::~RunContext() {
    if (!lock_path_.empty()) {
        std::error_code ec;
        fs::remove(lock_path_, ec);
    }
}

void RunContext::use_output_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(Errc::Io, "cannot create directory '" + dir + "': " + ec.message());
    const std::string lock = (fs::path(dir) / ".heracles.lock").string();
    const int fd = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw Error(Errc::Io, "output directory '" + dir + "' is locked by another writer (" + lock + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
    lock_path_ = lock;
    manifest_path_ = (fs::path(dir) / "manifest.json").string();
}

void RunContext::use_output_file(const std::string& file) {
    const fs::path parent = fs::path(file).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        fs::create_directories(parent, ec);
    }
    manifest_path_ = file + ".manifest.json";
}

void RunContext::add_output(const std::string& path) { outputs_.push_back(path); }

void RunContext::set_config(const ModelConfig& cfg) {
    config_ = json::object();
    std::istringstream in(serialize_config(cfg));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string value = line.substr(eq + 1);
        std::int64_t n = 0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
        if (ec == std::errc() && ptr == value.data() + value.size()) {
            config_[line.substr(0, eq)] = n;
        } else {
            config_[line.substr(0, eq)] = value;
        }
    }
}

void RunContext::set_seed(std::uint64_t seed) { seed_ = seed; }

void RunContext::write_manifest(int exit_code, const std::string& error) {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config_;
    m["seed"] = seed_;
    m["versions"] = {
        {"heracles", HERACLES_VERSION},
        {"compiler", __VERSION__},
        {"cxx_standard", static_cast<long>(__cplusplus)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"cli11", CLI11_VERSION},
    };
    m["threads"] = worker_threads();
    m["outputs"] = outputs_;
    json t = timings;
    t["wall_seconds"] = now_seconds() - started_;
    m["timings"] = t;
    m["results"] = results;
    m["exit_code"] = exit_code;
    m["status"] = exit_code == kOk ? "ok" : "failed";
    if (!error.empty()) m["error"] = error;
    const std::string path = manifest_override.empty() ? manifest_path_ : manifest_override;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        std::cerr << "warning: cannot write manifest " << path << "\n";
        return;
    }
    out << m.dump(2) << "\n";
}

std::uint64_t resolve_seed(bool given, std::uint64_t value) {
    if (given) return value;
    if (const char* env = std::getenv("HERACLES_SEED")) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw UsageError(std::string("HERACLES_SEED is not an unsigned integer: '") + env + "'");
    }
    return 0;
}

ModelConfig resolve_model_config(const ModelOptions& opts) {
    if (opts.preset.empty() == opts.config.empty()) {
        throw UsageError("give exactly one of --preset or --config");
    }
    ModelConfig cfg = opts.preset.empty() ? load_config_file(opts.config) : preset_config(opts.preset);
    bool alpha_set = false;
    bool kind_set = false;
    for (const auto& kv : opts.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        set_config_key(cfg, key, kv.substr(eq + 1));
        alpha_set = alpha_set || key == "alpha";
        kind_set = kind_set || key.ends_with(".kind");
    }
    // As in config files, alpha re-derives the stage kinds unless they are given.
    if (alpha_set && !kind_set) apply_alpha(cfg, cfg.alpha);
    return cfg;
}

namespace {

void add_model_options(CLI::App* sub, ModelOptions& m) {
    sub->add_option("--preset", m.preset, "Named preset (heracles-s, heracles-ts, toy-hybrid, ...)");
    sub->add_option("--config", m.config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", m.sets, "Config override key=value (repeatable)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Heracles hybrid spectral/attention toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string manifest_override;
    int threads = 0;
    app.add_option("--manifest", manifest_override, "Write the run manifest here instead of the default location");
    app.add_option("--threads", threads, "Worker threads (default HERACLES_THREADS or 1)")->check(CLI::PositiveNumber);

    const std::vector<std::string> kinds = {"hartley", "cosine", "fourier"};

    TransformOptions transform;
    auto* t = app.add_subcommand("transform", "Apply a Hartley, cosine or Fourier transform to a tensor entry");
    t->add_option("--kind", transform.kind)->required()->check(CLI::IsMember(kinds));
    t->add_option("--in", transform.in)->required();
    t->add_option("--out", transform.out)->required();
    t->add_option("--entry", transform.entry, "Entry name (default: first tensor)");
    t->add_flag("--inverse", transform.inverse);

    EnergyOptions energy;
    auto* e = app.add_subcommand("energy", "Energy compaction curves of a 1D/2D signal");
    e->add_option("--in", energy.in)->required();
    e->add_option("--entry", energy.entry);
    e->add_option("--kinds", energy.kinds)->delimiter(',')->check(CLI::IsMember(kinds));
    e->add_option("--fractions", energy.fractions)->delimiter(',')->check(CLI::Range(0.0, 1.0));
    e->add_option("--out", energy.out)->required();
    e->add_flag("--split-complex", energy.split_complex, "Count Fourier re and im parts as separate coefficients");

    GradcheckOptions grad;
    auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
    add_model_options(g, grad.model);
    g->add_option("--dtype", grad.dtype)->check(CLI::IsMember({"f32", "f64"}));
    g->add_option("--tol", grad.tol)->check(CLI::PositiveNumber);
    g->add_option("--eps", grad.eps)->check(CLI::PositiveNumber);
    g->add_option("--samples", grad.samples, "Coordinates probed per parameter (0: all)")->check(CLI::NonNegativeNumber);
    g->add_option("--instances", grad.instances, "Seeded model/input instances")->check(CLI::PositiveNumber);
    g->add_option("--batch", grad.batch)->check(CLI::PositiveNumber);
    g->add_option("--input-size", grad.input_size)->check(CLI::NonNegativeNumber);
    g->add_option("--out", grad.out, "Directory for gradcheck.csv");
    auto* g_seed = g->add_option("--seed", grad.seed);
    g->add_option("--fault", grad.fault, "op:scale, corrupts one gradient rule")->group("");

    TrainOptions train;
    auto* tr = app.add_subcommand("train", "Train a classifier or forecaster");
    add_model_options(tr, train.model);
    tr->add_option("--task", train.task)->check(CLI::IsMember({"classify", "forecast"}));
    tr->add_option("--data", train.data, "CSV, tensor file, or synthetic:sinusoid?... / synthetic:texture?...")
        ->required();
    tr->add_option("--out", train.out)->required();
    tr->add_option("--dtype", train.dtype)->check(CLI::IsMember({"f32", "f64"}));
    tr->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
    tr->add_option("--max-steps", train.max_steps)->check(CLI::NonNegativeNumber);
    tr->add_option("--batch", train.batch)->check(CLI::PositiveNumber);
    tr->add_option("--eval-batch", train.eval_batch)->check(CLI::PositiveNumber);
    tr->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
    tr->add_option("--wd", train.wd)->check(CLI::NonNegativeNumber);
    tr->add_option("--warmup", train.warmup)->check(CLI::Range(0.0, 1.0));
    tr->add_option("--clip", train.clip)->check(CLI::NonNegativeNumber);
    tr->add_option("--val-frac", train.val_frac, "Held-out share for image data without a val split")
        ->check(CLI::Range(0.0, 1.0));
    tr->add_option("--stop-at", train.stop_at, "Stop once all hold, e.g. train.top1>=0.95,val.top1>=0.9");
    auto* tr_seed = tr->add_option("--seed", train.seed);

    EvalOptions eval;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a data split");
    ev->add_option("--checkpoint", eval.checkpoint)->required();
    ev->add_option("--data", eval.data)->required();
    ev->add_option("--split", eval.split)->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--out", eval.out)->required();
    ev->add_option("--eval-batch", eval.eval_batch)->check(CLI::PositiveNumber);
    ev->add_option("--val-frac", eval.val_frac)->check(CLI::Range(0.0, 1.0));

    InfoOptions info;
    auto* in = app.add_subcommand("info", "Parameter and FLOP accounting");
    add_model_options(in, info.model);
    in->add_option("--input-size", info.input_size)->check(CLI::NonNegativeNumber);
    in->add_option("--json", info.json_out, "Write the report as JSON");
    in->add_flag("--alpha-sweep", info.alpha_sweep, "Append the heracles-s-a0..a4 comparison");

    FiltersOptions filters;
    auto* fi = app.add_subcommand("filters", "Dump spectral gate magnitudes");
    fi->add_option("--checkpoint", filters.checkpoint)->required();
    fi->add_option("--out", filters.out)->required();

    BenchOptions bench;
    auto* b = app.add_subcommand("bench", "Forward latency benchmark");
    add_model_options(b, bench.model);
    b->add_option("--batch", bench.batch)->check(CLI::PositiveNumber);
    b->add_option("--repeats", bench.repeats)->check(CLI::PositiveNumber);
    b->add_option("--warmup", bench.warmup)->check(CLI::NonNegativeNumber);
    b->add_option("--input-size", bench.input_size)->check(CLI::NonNegativeNumber);
    b->add_option("--out", bench.out);
    auto* b_seed = b->add_option("--seed", bench.seed);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    if (args.empty()) argv.push_back("heracles");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }
    if (threads > 0) set_worker_threads(threads);

    CLI::App* sub = app.get_subcommands().front();
    RunContext ctx(sub->get_name(), std::vector<std::string>(args.begin() + (args.empty() ? 0 : 1), args.end()));
    ctx.manifest_override = manifest_override;
    int code = kOk;
    std::string error;
    try {
        grad.seed_given = g_seed->count() > 0;
        train.seed_given = tr_seed->count() > 0;
        bench.seed_given = b_seed->count() > 0;
        if (sub == t) code = cmd_transform(transform, ctx);
        else if (sub == e) code = cmd_energy(energy, ctx);
        else if (sub == g) code = cmd_gradcheck(grad, ctx);
        else if (sub == tr) code = cmd_train(train, ctx);
        else if (sub == ev) code = cmd_eval(eval, ctx);
        else if (sub == in) code = cmd_info(info, ctx);
        else if (sub == fi) code = cmd_filters(filters, ctx);
        else code = cmd_bench(bench, ctx);
    } catch (const UsageError& err) {
        code = kUsage;
        error = std::string("usage: ") + err.what();
    } catch (const Error& err) {
        code = exit_code_for(err.code());
        error = err.what();
        ctx.results["error_code"] = std::string(errc_name(err.code()));
    } catch (const std::exception& err) {
        code = kInternal;
        error = std::string("internal: ") + err.what();
    }
    if (!error.empty()) std::cerr << "error: " << error << "\n";
    ctx.write_manifest(code, error);
    return code;
}

}  // namespace heracles::cli
