#include "commands.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "analysis.hpp"
#include "cli.hpp"
#include "heracles/gradcheck.hpp"
#include "heracles/losses.hpp"
#include "heracles/model.hpp"
#include "heracles/parallel.hpp"
#include "heracles/random.hpp"
#include "heracles/series.hpp"
#include "heracles/tensor_io.hpp"
#include "heracles/train.hpp"

namespace heracles::cli {

namespace fs = std::filesystem;
using spectral::TransformKind;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Shortest text that reads back as `v`, for labels such as n@0.99.
std::string short_num(double v) {
    char buf[40];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write '" + path + "'");
    out << text;
    if (!out) throw Error(Errc::Io, "write failed for '" + path + "'");
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---------------------------------------------------------------- data specs

/// "synthetic:<kind>?k=v&k=v" split into kind and parameters.
struct SyntheticSpec {
    std::string kind;
    std::map<std::string, std::string> params;

    std::int64_t get(const std::string& key, std::int64_t fallback) const {
        const auto it = params.find(key);
        if (it == params.end()) return fallback;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(it->second, &used);
            if (used == it->second.size()) return v;
        } catch (const std::exception&) {
        }
        throw Error(Errc::BadInput, "synthetic parameter " + key + "='" + it->second + "' is not an integer");
    }
};

bool parse_synthetic(const std::string& spec, SyntheticSpec& out) {
    const std::string prefix = "synthetic:";
    if (spec.rfind(prefix, 0) != 0) return false;
    const std::string rest = spec.substr(prefix.size());
    const auto q = rest.find('?');
    out.kind = rest.substr(0, q);
    if (q != std::string::npos) {
        std::stringstream ss(rest.substr(q + 1));
        std::string item;
        while (std::getline(ss, item, '&')) {
            if (item.empty()) continue;
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw Error(Errc::BadInput, "synthetic parameter '" + item + "' lacks '='");
            out.params[item.substr(0, eq)] = item.substr(eq + 1);
        }
    }
    return true;
}

bool is_forecast_data(const std::string& spec) {
    SyntheticSpec s;
    if (parse_synthetic(spec, s)) return s.kind == "sinusoid";
    const std::string ext = fs::path(spec).extension().string();
    return ext == ".csv" || ext == ".CSV";
}

/// Raw (unstandardized) series from a CSV path or synthetic:sinusoid spec.
SeriesDataset load_series(const std::string& spec) {
    SyntheticSpec s;
    if (parse_synthetic(spec, s)) {
        if (s.kind != "sinusoid") throw Error(Errc::BadInput, "unknown series source '" + s.kind + "'");
        const auto rows = s.get("rows", 3000);
        const auto channels = s.get("channels", 3);
        const auto seed = static_cast<std::uint64_t>(s.get("seed", 7));
        if (rows < 2 || channels < 1) throw Error(Errc::BadInput, "synthetic series needs rows >= 2 and channels >= 1");
        SeriesDataset ds = make_series(make_sinusoid_series(rows, channels, seed));
        ds.stats = compute_stats(ds);
        return ds;
    }
    return load_timeseries_csv(spec);
}

/// Image classification data with its held-out part.
struct ImageData {
    ClassifyData train;
    ClassifyData val;
};

ClassifyData image_entries(const TensorFile& file, const std::string& images, const std::string& labels) {
    const Tensor* x = file.find(images);
    const Tensor* y = file.find(labels);
    if (x == nullptr || y == nullptr) {
        throw Error(Errc::BadInput, "tensor file lacks '" + images + "' or '" + labels + "'");
    }
    if (x->dim() != 4) throw Error(Errc::BadInput, "'" + images + "' must be [N,H,W,C], got " + shape_str(x->shape()));
    if (y->dim() != 1 || y->size(0) != x->size(0)) {
        throw Error(Errc::BadInput, "'" + labels + "' must be [N] matching the images");
    }
    ClassifyData d;
    d.images = *x;
    for (double v : y->data()) {
        if (v < 0 || v != std::floor(v)) throw Error(Errc::LabelOutOfRange, "label " + num(v) + " is not a class index");
        d.labels.push_back(static_cast<std::int64_t>(v));
    }
    return d;
}

ImageData load_images(const std::string& spec, double val_frac) {
    SyntheticSpec s;
    ClassifyData all;
    if (parse_synthetic(spec, s)) {
        if (s.kind != "texture") throw Error(Errc::BadInput, "unknown image source '" + s.kind + "'");
        const auto n = s.get("n", 2000);
        const auto size = s.get("size", 16);
        if (n < 2 || size < 1) throw Error(Errc::BadInput, "synthetic textures need n >= 2 and size >= 1");
        all = make_texture_dataset(n, size, static_cast<std::uint64_t>(s.get("seed", 3)));
    } else {
        const TensorFile file = load_tensor_file(spec);
        all = image_entries(file, "images", "labels");
        if (file.find("val_images") != nullptr) return {all, image_entries(file, "val_images", "val_labels")};
    }
    auto [train, val] = split_classify(all, val_frac);
    return {train, val};
}

std::int64_t num_classes_of(const ImageData& data) {
    std::int64_t k = 0;
    for (auto l : data.train.labels) k = std::max(k, l + 1);
    for (auto l : data.val.labels) k = std::max(k, l + 1);
    return std::max<std::int64_t>(k, 2);
}

bool has_set(const ModelOptions& m, const std::string& key) {
    return std::any_of(m.sets.begin(), m.sets.end(), [&](const std::string& kv) { return kv.rfind(key + "=", 0) == 0; });
}

void write_metrics_row(std::ostringstream& out, const Metrics& metrics) {
    for (const auto& [name, value] : metrics) out << "," << num(value);
}

std::string history_csv(const History& h) {
    std::ostringstream out;
    out << "step,loss,lr\n";
    for (const auto& s : h.steps) out << s.step << "," << num(s.loss) << "," << num(s.lr) << "\n";
    return out.str();
}

std::string metrics_csv(const History& h) {
    std::ostringstream out;
    out << "epoch,steps,train_loss";
    if (!h.epochs.empty()) {
        for (const auto& [name, v] : h.epochs.front().val) out << "," << (name == "loss" ? "val_loss" : name);
        for (const auto& [name, v] : h.epochs.front().train) out << ",train." << name;
    }
    out << "\n";
    for (const auto& e : h.epochs) {
        out << e.epoch << "," << e.steps << "," << num(e.train_loss);
        write_metrics_row(out, e.val);
        write_metrics_row(out, e.train);
        out << "\n";
    }
    return out.str();
}

json metrics_json(const Metrics& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

/// "train.top1>=0.95,val.top1>=0.9": every clause must hold.
struct StopClause {
    bool train = false;
    std::string metric;
    bool at_least = true;
    double value = 0.0;
};

std::vector<StopClause> parse_stop(const std::string& text) {
    std::vector<StopClause> clauses;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        StopClause c;
        auto op = item.find(">=");
        if (op == std::string::npos) {
            op = item.find("<=");
            c.at_least = false;
        }
        const auto dot = item.find('.');
        if (op == std::string::npos || dot == std::string::npos || dot > op) {
            throw UsageError("--stop-at clause '" + item + "' must look like split.metric>=value");
        }
        const std::string split = item.substr(0, dot);
        if (split != "train" && split != "val") throw UsageError("--stop-at split must be train or val: '" + item + "'");
        c.train = split == "train";
        c.metric = item.substr(dot + 1, op - dot - 1);
        try {
            c.value = std::stod(item.substr(op + 2));
        } catch (const std::exception&) {
            throw UsageError("--stop-at value is not a number: '" + item + "'");
        }
        clauses.push_back(c);
    }
    return clauses;
}

StopRule make_stop_rule(const std::vector<StopClause>& clauses) {
    if (clauses.empty()) return {};
    return [clauses](const EpochRecord& rec) {
        for (const auto& c : clauses) {
            const Metrics& m = c.train ? rec.train : rec.val;
            const double v = metric(m, c.metric);
            if (c.at_least ? !(v >= c.value) : !(v <= c.value)) return false;
        }
        return true;
    };
}

/// Smallest valid classify input for configs whose own size is too costly to probe.
std::int64_t smallest_input(const ModelConfig& cfg) {
    const std::int64_t unit = std::int64_t{1} << (cfg.num_stages() + 1);
    for (std::int64_t s = unit;; s += unit) {
        bool ok = true;
        for (std::int64_t i = 0; i < cfg.num_stages(); ++i) {
            const std::int64_t side = s >> (i + 2);
            if (side % std::max<std::int64_t>(1, cfg.stages[static_cast<std::size_t>(i)].sr) != 0) ok = false;
        }
        if (ok) return s;
    }
}

Shape sample_shape(const ModelConfig& cfg, std::int64_t batch) {
    if (cfg.task == Task::forecast) return {batch, cfg.lookback, cfg.channels};
    return {batch, cfg.input_size, cfg.input_size, cfg.in_channels};
}

/// Block type of a registry entry, e.g. "stage2.block1.gate.R" -> spectral_gate.
std::string block_type(const std::string& name) {
    std::vector<std::string> parts;
    std::stringstream ss(name);
    std::string p;
    while (std::getline(ss, p, '.')) parts.push_back(p);
    if (parts.empty()) return "other";
    if (parts[0] == "norm") return "norm";
    if (parts[0].rfind("stage", 0) != 0) return parts[0];
    if (parts.size() > 1 && parts[1] == "down") return "downsample";
    if (parts.size() < 3) return "other";
    const std::string& sub = parts[2];
    if (sub == "norm1" || sub == "norm2") return "norm";
    if (sub == "gate") return "spectral_gate";
    if (sub == "conv") return "local_conv";
    if (sub == "attn") return "attention";
    if (sub == "sr") return "reduction";
    return sub;
}

struct FaultGuard {
    ~FaultGuard() { clear_gradient_faults(); }
};

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

std::string cpu_model() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) return line.substr(colon + 2);
        }
    }
    return "unknown";
}

}  // namespace

// ---------------------------------------------------------------- transform

int cmd_transform(const TransformOptions& opts, RunContext& ctx) {
    ctx.use_output_file(opts.out);
    const TensorFile file = load_tensor_file(opts.in);
    const TransformKind kind = spectral::parse_transform_kind(opts.kind);
    TensorFile result;

    if (kind == TransformKind::Fourier && opts.inverse) {
        const Tensor* re = file.find("re");
        const Tensor* im = file.find("im");
        if (re == nullptr || im == nullptr) throw Error(Errc::BadInput, "inverse fourier needs entries 're' and 'im'");
        if (re->shape() != im->shape()) throw Error(Errc::BadInput, "'re' and 'im' differ in shape");
        if (re->dim() != 1 && re->dim() != 2) {
            throw Error(Errc::UnsupportedRank, "transform needs a 1D or 2D entry, got " + shape_str(re->shape()));
        }
        const spectral::ComplexSpectrum spec{re->to(DType::f64), im->to(DType::f64)};
        const auto out = re->dim() == 1 ? spectral::ifft_1d(spec) : spectral::ifft_2d(spec);
        result.tensors = {{"re", out.re}, {"im", out.im}};
    } else {
        const Tensor* src = nullptr;
        std::string name = opts.entry;
        if (name.empty()) {
            if (file.tensors.empty()) throw Error(Errc::BadInput, "'" + opts.in + "' holds no tensors");
            name = file.tensors.front().first;
            src = &file.tensors.front().second;
        } else {
            src = file.find(name);
            if (src == nullptr) throw Error(Errc::BadInput, "no entry '" + name + "' in '" + opts.in + "'");
        }
        if (src->dim() != 1 && src->dim() != 2) {
            throw Error(Errc::UnsupportedRank, "transform needs a 1D or 2D entry, got " + shape_str(src->shape()));
        }
        if (src->numel() == 0) throw Error(Errc::BadInput, "entry '" + name + "' is empty");
        const Tensor x = src->to(DType::f64);
        if (kind == TransformKind::Fourier) {
            const auto out = x.dim() == 1 ? spectral::fft_1d(x) : spectral::fft_2d(x);
            result.tensors = {{"re", out.re}, {"im", out.im}};
        } else if (x.dim() == 2) {
            result.tensors = {{name, opts.inverse ? spectral::inverse_2d(kind, x) : spectral::transform_2d(kind, x)}};
        } else if (kind == TransformKind::Hartley) {
            result.tensors = {{name, opts.inverse ? spectral::idht_1d(x) : spectral::dht_1d(x)}};
        } else {
            result.tensors = {{name, opts.inverse ? spectral::dct3_1d(x) : spectral::dct2_1d(x)}};
        }
    }
    save_tensor_file(opts.out, result);
    ctx.add_output(opts.out);
    ctx.results["kind"] = opts.kind;
    ctx.results["inverse"] = opts.inverse;
    ctx.results["shape"] = result.tensors.front().second.shape();
    json entries = json::array();
    for (const auto& [n, t] : result.tensors) entries.push_back(n);
    ctx.results["entries"] = entries;
    return kOk;
}

// ---------------------------------------------------------------- energy

int cmd_energy(const EnergyOptions& opts, RunContext& ctx) {
    ctx.use_output_file(opts.out);
    const TensorFile file = load_tensor_file(opts.in);
    const Tensor* src = opts.entry.empty() ? (file.tensors.empty() ? nullptr : &file.tensors.front().second)
                                           : file.find(opts.entry);
    if (src == nullptr) throw Error(Errc::BadInput, "no usable entry in '" + opts.in + "'");

    std::ostringstream csv;
    csv << "kind,n_coeffs,cumulative_fraction\n";
    std::vector<std::string> summary_rows;
    json summary = json::object();
    for (const auto& kind_name : opts.kinds) {
        const auto curve = energy_curve(spectral::parse_transform_kind(kind_name), *src, opts.split_complex);
        for (std::size_t i = 0; i < curve.cumulative.size(); ++i) {
            csv << kind_name << "," << (i + 1) << "," << num(curve.cumulative[i]) << "\n";
        }
        json per_kind = json::object();
        per_kind["coefficients"] = curve.cumulative.size();
        for (double f : opts.fractions) {
            const auto n = coeffs_for_fraction(curve, f);
            const std::string label = "n@" + short_num(f);
            std::ostringstream row;
            row << label << ":" << kind_name << "," << n << "," << num(curve.cumulative[static_cast<std::size_t>(n - 1)]);
            summary_rows.push_back(row.str());
            per_kind[label] = n;
            std::cout << kind_name << " " << label << " = " << n << " of " << curve.cumulative.size() << "\n";
        }
        summary[kind_name] = per_kind;
    }
    for (const auto& row : summary_rows) csv << row << "\n";
    write_text(opts.out, csv.str());
    ctx.add_output(opts.out);
    ctx.results["summary"] = summary;
    ctx.results["fourier_counting"] = opts.split_complex ? "re and im separately" : "complex coefficient, |re|^2+|im|^2";
    return kOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const GradcheckOptions& opts, RunContext& ctx) {
    if (!opts.out.empty()) ctx.use_output_dir(opts.out);
    const std::uint64_t seed = resolve_seed(opts.seed_given, opts.seed);
    ctx.set_seed(seed);
    ModelConfig cfg = resolve_model_config(opts.model);
    cfg.dtype = opts.dtype == "f32" ? DType::f32 : DType::f64;
    if (cfg.task == Task::classify) {
        if (opts.input_size > 0) {
            cfg.input_size = opts.input_size;
        } else if (!has_set(opts.model, "input_size") && cfg.input_size > 64) {
            cfg.input_size = smallest_input(cfg);
        }
    }
    validate(cfg);
    ctx.set_config(cfg);

    FaultGuard guard;
    if (!opts.fault.empty()) {
        const auto colon = opts.fault.rfind(':');
        if (colon == std::string::npos) throw UsageError("--fault expects op:scale");
        set_gradient_fault(opts.fault.substr(0, colon), std::stod(opts.fault.substr(colon + 1)));
    }

    struct TypeStats {
        double max_rel = 0.0;
        std::size_t params = 0;
        std::size_t coords = 0;
        std::string worst;
    };
    std::map<std::string, TypeStats> stats;
    std::vector<std::string> order;
    for (std::int64_t inst = 0; inst < opts.instances; ++inst) {
        const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(inst));
        Model model = build_model(cfg, derive_seed(s, 1));
        const Shape shape = sample_shape(cfg, opts.batch);
        const Tensor x = rng_tensor(shape, Distribution::normal(), derive_seed(s, 2), cfg.dtype);
        std::function<Tensor()> loss_fn;
        if (cfg.task == Task::classify) {
            std::vector<std::int64_t> labels;
            for (std::int64_t b = 0; b < opts.batch; ++b) labels.push_back(b % cfg.num_classes);
            loss_fn = [&model, x, labels] { return cross_entropy(forward_classify(model, x), labels); };
        } else {
            const Tensor y =
                rng_tensor({opts.batch, cfg.horizon, cfg.channels}, Distribution::normal(), derive_seed(s, 3), cfg.dtype);
            loss_fn = [&model, x, y] { return mse(forward_forecast(model, x), y); };
        }
        const auto checks = check_parameter_gradients(loss_fn, model.registry, opts.eps,
                                                      static_cast<std::size_t>(opts.samples), derive_seed(s, 4));
        for (const auto& c : checks) {
            const std::string type = block_type(c.name);
            if (!stats.count(type)) order.push_back(type);
            auto& st = stats[type];
            if (inst == 0) ++st.params;
            st.coords += c.coords_checked;
            if (c.rel_error >= st.max_rel) {
                st.max_rel = c.rel_error;
                st.worst = c.name;
            }
        }
    }

    std::ostringstream csv;
    csv << "block_type,parameters,coords_checked,max_rel_error,worst_parameter,status\n";
    json report = json::object();
    std::string failed;
    std::printf("%-14s %6s %8s %14s  %s\n", "block", "params", "coords", "max_rel_err", "status");
    for (const auto& type : order) {
        const auto& st = stats[type];
        const bool ok = st.max_rel < opts.tol;
        if (!ok && failed.empty()) failed = type;
        std::printf("%-14s %6zu %8zu %14.3e  %s\n", type.c_str(), st.params, st.coords, st.max_rel, ok ? "pass" : "FAIL");
        csv << type << "," << st.params << "," << st.coords << "," << num(st.max_rel) << "," << st.worst << ","
            << (ok ? "pass" : "fail") << "\n";
        report[type] = {{"max_rel_error", st.max_rel}, {"parameters", st.params}, {"coords_checked", st.coords},
                        {"worst_parameter", st.worst}, {"pass", ok}};
    }
    if (!opts.out.empty()) {
        const std::string path = join(opts.out, "gradcheck.csv");
        write_text(path, csv.str());
        ctx.add_output(path);
    }
    ctx.results["tolerance"] = opts.tol;
    ctx.results["instances"] = opts.instances;
    ctx.results["blocks"] = report;
    if (!failed.empty()) {
        const auto& st = stats[failed];
        throw Error(Errc::ToleranceExceeded, "block '" + failed + "' (" + st.worst + ") relative error " +
                                                 num(st.max_rel) + " exceeds " + num(opts.tol));
    }
    return kOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const TrainOptions& opts, RunContext& ctx) {
    ctx.use_output_dir(opts.out);
    const std::uint64_t seed = resolve_seed(opts.seed_given, opts.seed);
    ctx.set_seed(seed);
    ModelConfig cfg = resolve_model_config(opts.model);
    if (!opts.task.empty()) {
        const Task want = opts.task == "forecast" ? Task::forecast : Task::classify;
        if (want != cfg.task) {
            throw Error(Errc::ConfigMismatch, "--task " + opts.task + " but the config is a " + to_string(cfg.task) +
                                                  " model");
        }
    }
    if (!opts.dtype.empty()) cfg.dtype = opts.dtype == "f32" ? DType::f32 : DType::f64;

    TrainHyper hyper;
    hyper.epochs = opts.epochs;
    hyper.max_steps = opts.max_steps;
    hyper.batch_size = opts.batch;
    hyper.eval_batch = opts.eval_batch;
    hyper.lr = opts.lr;
    hyper.weight_decay = opts.wd;
    hyper.warmup_frac = opts.warmup;
    hyper.clip = opts.clip;
    hyper.seed = seed;
    const auto clauses = parse_stop(opts.stop_at);
    hyper.eval_train = std::any_of(clauses.begin(), clauses.end(), [](const StopClause& c) { return c.train; });
    const StopRule stop = make_stop_rule(clauses);

    History history;
    Model model;
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.task == Task::forecast) {
        if (!is_forecast_data(opts.data)) throw Error(Errc::ConfigMismatch, "forecast models need series data");
        const SeriesDataset ds = standardize(load_series(opts.data));
        if (!has_set(opts.model, "channels")) cfg.channels = ds.channels();
        if (cfg.channels != ds.channels()) {
            throw Error(Errc::ConfigMismatch, "config expects " + std::to_string(cfg.channels) + " channels, data has " +
                                                  std::to_string(ds.channels()));
        }
        validate(cfg);
        ctx.set_config(cfg);
        const WindowSet train_set = make_windows(ds, cfg.lookback, cfg.horizon, Split::train);
        const WindowSet val_set = make_windows(ds, cfg.lookback, cfg.horizon, Split::val);
        model = build_model(cfg, seed);
        history = train_forecaster(model, train_set, val_set, hyper, stop);
        const double baseline = repeat_last_mse(val_set);
        ctx.results["repeat_last_val_mse"] = baseline;
        ctx.results["train_windows"] = train_set.size();
        ctx.results["val_windows"] = val_set.size();
    } else {
        if (is_forecast_data(opts.data)) throw Error(Errc::ConfigMismatch, "classify models need image data");
        const ImageData data = load_images(opts.data, opts.val_frac);
        const Shape& s = data.train.images.shape();
        if (s[1] != s[2]) throw Error(Errc::BadInput, "images must be square, got " + shape_str(s));
        if (!has_set(opts.model, "input_size")) cfg.input_size = s[1];
        if (!has_set(opts.model, "in_channels")) cfg.in_channels = s[3];
        if (!has_set(opts.model, "num_classes")) cfg.num_classes = num_classes_of(data);
        if (cfg.input_size != s[1] || cfg.in_channels != s[3]) {
            throw Error(Errc::ConfigMismatch, "config expects " + std::to_string(cfg.input_size) + "x" +
                                                  std::to_string(cfg.input_size) + "x" + std::to_string(cfg.in_channels) +
                                                  " images, data has " + shape_str(s));
        }
        validate(cfg);
        ctx.set_config(cfg);
        model = build_model(cfg, seed);
        history = train_classifier(model, data.train, data.val, hyper, stop);
        ctx.results["train_samples"] = data.train.size();
        ctx.results["val_samples"] = data.val.size();
    }
    ctx.timings["train_seconds"] = seconds_since(t0);

    const std::string history_path = join(opts.out, "history.csv");
    const std::string metrics_path = join(opts.out, "metrics.csv");
    const std::string best_path = join(opts.out, "best.hten");
    const std::string final_path = join(opts.out, "final.hten");
    write_text(history_path, history_csv(history));
    write_text(metrics_path, metrics_csv(history));
    save_checkpoint(best_path, model, history.best_params);
    save_checkpoint(final_path, model);
    for (const auto& p : {history_path, metrics_path, best_path, final_path}) ctx.add_output(p);

    std::int64_t skipped = 0;
    for (const auto& s : history.steps) skipped += s.skipped ? 1 : 0;
    ctx.results["steps"] = history.steps.size();
    ctx.results["skipped_steps"] = skipped;
    ctx.results["epochs"] = history.epochs.size();
    ctx.results["best_epoch"] = history.best_epoch;
    ctx.results["best_val"] = metrics_json(history.best_val);
    if (!history.epochs.empty()) {
        ctx.results["final_val"] = metrics_json(history.epochs.back().val);
        if (!history.epochs.back().train.empty()) ctx.results["final_train"] = metrics_json(history.epochs.back().train);
    }
    for (const auto& e : history.epochs) {
        std::cout << "epoch " << e.epoch << " steps " << e.steps << " train_loss " << num(e.train_loss);
        for (const auto& [k, v] : e.val) std::cout << " val." << k << " " << num(v);
        for (const auto& [k, v] : e.train) std::cout << " train." << k << " " << num(v);
        std::cout << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const EvalOptions& opts, RunContext& ctx) {
    ctx.use_output_dir(opts.out);
    const Model model = load_checkpoint(opts.checkpoint);
    const ModelConfig& cfg = model.config;
    ctx.set_config(cfg);
    Metrics metrics;
    if (cfg.task == Task::forecast) {
        if (!is_forecast_data(opts.data)) throw Error(Errc::ConfigMismatch, "forecast checkpoints need series data");
        const SeriesDataset ds = standardize(load_series(opts.data));
        if (ds.channels() != cfg.channels) {
            throw Error(Errc::ConfigMismatch, "checkpoint expects " + std::to_string(cfg.channels) +
                                                  " channels, data has " + std::to_string(ds.channels()));
        }
        const Split split = opts.split == "train" ? Split::train : opts.split == "test" ? Split::test : Split::val;
        const WindowSet windows = make_windows(ds, cfg.lookback, cfg.horizon, split);
        metrics = evaluate_forecaster(model, windows, opts.eval_batch);
        ctx.results["repeat_last_mse"] = repeat_last_mse(windows);
    } else {
        if (is_forecast_data(opts.data)) throw Error(Errc::ConfigMismatch, "classify checkpoints need image data");
        if (opts.split == "test") throw UsageError("image data has train and val splits only");
        const ImageData data = load_images(opts.data, opts.val_frac);
        const ClassifyData& part = opts.split == "train" ? data.train : data.val;
        const Shape& s = part.images.shape();
        if (s[1] != cfg.input_size || s[2] != cfg.input_size || s[3] != cfg.in_channels) {
            throw Error(Errc::ConfigMismatch, "checkpoint expects " + std::to_string(cfg.input_size) + "x" +
                                                  std::to_string(cfg.input_size) + "x" +
                                                  std::to_string(cfg.in_channels) + " images, data has " + shape_str(s));
        }
        metrics = evaluate_classifier(model, part, opts.eval_batch);
    }
    std::ostringstream csv;
    csv << "split";
    for (const auto& [k, v] : metrics) csv << "," << k;
    csv << "\n" << opts.split;
    write_metrics_row(csv, metrics);
    csv << "\n";
    const std::string path = join(opts.out, "metrics.csv");
    write_text(path, csv.str());
    ctx.add_output(path);
    ctx.results["split"] = opts.split;
    ctx.results["metrics"] = metrics_json(metrics);
    for (const auto& [k, v] : metrics) std::cout << opts.split << "." << k << " " << num(v) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- info

namespace {

json info_report(const ModelConfig& cfg, std::int64_t input_size) {
    ModelConfig c = cfg;
    if (input_size > 0) c.input_size = input_size;
    validate(c);
    const Model model = build_model(c, 0);
    const Shape shape = sample_shape(c, 1);
    json j;
    j["name"] = c.name;
    j["task"] = to_string(c.task);
    j["input_shape"] = shape;
    j["params"] = count_params(model);
    j["flops_mac"] = estimate_flops(model, shape);
    j["real_ops"] = 2 * j["flops_mac"].get<std::int64_t>();
    json stages = json::array();
    for (const auto& r : stage_reports(model, shape)) {
        stages.push_back({{"index", r.index},
                          {"kind", to_string(r.stage.kind)},
                          {"depth", r.stage.depth},
                          {"C", r.stage.C},
                          {"E", r.stage.E},
                          {"G", r.stage.G},
                          {"H", r.stage.H},
                          {"sr", r.stage.sr},
                          {"map_h", r.map_h},
                          {"map_w", r.map_w},
                          {"params", r.params},
                          {"flops_mac", r.flops}});
    }
    j["stages"] = stages;
    return j;
}

}  // namespace

int cmd_info(const InfoOptions& opts, RunContext& ctx) {
    if (!opts.json_out.empty()) ctx.use_output_file(opts.json_out);
    const ModelConfig cfg = resolve_model_config(opts.model);
    ctx.set_config(cfg);
    json report = info_report(cfg, opts.input_size);
    report["flops_convention"] = "one multiply-accumulate counts as one FLOP; real_ops counts multiplies and adds";

    std::printf("%s (%s) input %s\n", report["name"].get<std::string>().c_str(),
                report["task"].get<std::string>().c_str(), shape_str(report["input_shape"].get<Shape>()).c_str());
    std::printf("%-6s %-9s %5s %5s %3s %3s %3s %3s %9s %12s %10s\n", "stage", "kind", "depth", "C", "E", "G", "H", "sr",
                "map", "params", "GFLOPs");
    for (const auto& s : report["stages"]) {
        const std::string map = std::to_string(s["map_h"].get<std::int64_t>()) + "x" +
                                std::to_string(s["map_w"].get<std::int64_t>());
        std::printf("%-6lld %-9s %5lld %5lld %3lld %3lld %3lld %3lld %9s %12lld %10.4f\n",
                    static_cast<long long>(s["index"].get<std::int64_t>()), s["kind"].get<std::string>().c_str(),
                    static_cast<long long>(s["depth"].get<std::int64_t>()),
                    static_cast<long long>(s["C"].get<std::int64_t>()),
                    static_cast<long long>(s["E"].get<std::int64_t>()),
                    static_cast<long long>(s["G"].get<std::int64_t>()),
                    static_cast<long long>(s["H"].get<std::int64_t>()),
                    static_cast<long long>(s["sr"].get<std::int64_t>()), map.c_str(),
                    static_cast<long long>(s["params"].get<std::int64_t>()),
                    static_cast<double>(s["flops_mac"].get<std::int64_t>()) / 1e9);
    }
    const auto params = report["params"].get<std::int64_t>();
    const auto flops = report["flops_mac"].get<std::int64_t>();
    std::printf("total params %lld (%.3f M), FLOPs %lld (%.3f G MAC), real ops %.3f G\n",
                static_cast<long long>(params), static_cast<double>(params) / 1e6, static_cast<long long>(flops),
                static_cast<double>(flops) / 1e9, 2.0 * static_cast<double>(flops) / 1e9);

    if (opts.alpha_sweep) {
        json sweep = json::array();
        std::int64_t prev = -1;
        bool strict = true;
        std::printf("\n%-18s %5s %12s %10s\n", "preset", "alpha", "params (M)", "GFLOPs");
        for (int a = 0; a <= 4; ++a) {
            const std::string name = "heracles-s-a" + std::to_string(a);
            const ModelConfig c = preset_config(name);
            const json r = info_report(c, opts.input_size);
            const auto p = r["params"].get<std::int64_t>();
            if (prev >= 0 && !(p < prev)) strict = false;
            prev = p;
            std::printf("%-18s %5lld %12.3f %10.3f\n", name.c_str(), static_cast<long long>(c.alpha),
                        static_cast<double>(p) / 1e6, static_cast<double>(r["flops_mac"].get<std::int64_t>()) / 1e9);
            sweep.push_back({{"preset", name}, {"alpha", c.alpha}, {"params", p}, {"flops_mac", r["flops_mac"]}});
        }
        std::printf("strict ordering a0 > a1 > a2 > a3 > a4: %s\n", strict ? "yes" : "no");
        report["alpha_sweep"] = sweep;
        report["alpha_sweep_strict"] = strict;
    }
    if (!opts.json_out.empty()) {
        write_text(opts.json_out, report.dump(2) + "\n");
        ctx.add_output(opts.json_out);
    }
    ctx.results = report;
    return kOk;
}

// ---------------------------------------------------------------- filters

int cmd_filters(const FiltersOptions& opts, RunContext& ctx) {
    ctx.use_output_dir(opts.out);
    const Model model = load_checkpoint(opts.checkpoint);
    ctx.set_config(model.config);
    const auto names = spectral_gate_names(model);
    if (names.empty()) throw Error(Errc::NoSpectralGates, "checkpoint '" + opts.checkpoint + "' has no spectral gates");
    const std::string grid_dir = join(opts.out, "grids");
    fs::create_directories(grid_dir);

    std::ostringstream summary;
    summary << "gate,rows,cols,low_freq_share,area_fraction\n";
    json gates = json::array();
    double stage1_share = 0.0;
    double stage1_area = 0.0;
    int stage1_count = 0;
    for (const auto& name : names) {
        const GateSummary s = summarize_gate(name, model.param(name));
        std::ostringstream grid;
        const auto d = s.grid.data();
        for (std::int64_t i = 0; i < s.rows; ++i) {
            for (std::int64_t j = 0; j < s.cols; ++j) {
                if (j) grid << ",";
                grid << num(d[static_cast<std::size_t>(i * s.cols + j)]);
            }
            grid << "\n";
        }
        const std::string path = join(grid_dir, name + ".csv");
        write_text(path, grid.str());
        ctx.add_output(path);
        summary << name << "," << s.rows << "," << s.cols << "," << num(s.low_freq_share) << "," << num(s.area_fraction)
                << "\n";
        gates.push_back({{"gate", name}, {"low_freq_share", s.low_freq_share}, {"area_fraction", s.area_fraction}});
        if (name.rfind("stage1.", 0) == 0) {
            stage1_share += s.low_freq_share;
            stage1_area += s.area_fraction;
            ++stage1_count;
        }
    }
    const std::string summary_path = join(opts.out, "summary.csv");
    write_text(summary_path, summary.str());
    ctx.add_output(summary_path);
    ctx.results["gates"] = gates;
    ctx.results["low_region"] = "indices below N/4 on every transform axis (DC at index 0)";
    ctx.results["grid_layout"] = "spatial gates: H x W of |R| averaged over channels; sequence gates: L x channels";
    if (stage1_count > 0) {
        ctx.results["stage1_mean_low_freq_share"] = stage1_share / stage1_count;
        ctx.results["stage1_mean_area_fraction"] = stage1_area / stage1_count;
        std::printf("stage-1 gates: mean low-frequency share %.6f, area fraction %.6f\n", stage1_share / stage1_count,
                    stage1_area / stage1_count);
    }
    std::printf("wrote %zu gate grids to %s\n", names.size(), grid_dir.c_str());
    return kOk;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const BenchOptions& opts, RunContext& ctx) {
    if (!opts.out.empty()) ctx.use_output_dir(opts.out);
    const std::uint64_t seed = resolve_seed(opts.seed_given, opts.seed);
    ctx.set_seed(seed);
    ModelConfig cfg = resolve_model_config(opts.model);
    if (opts.input_size > 0) cfg.input_size = opts.input_size;
    validate(cfg);
    ctx.set_config(cfg);
    const Model model = build_model(cfg, seed);
    const Tensor x = rng_tensor(sample_shape(cfg, opts.batch), Distribution::normal(), derive_seed(seed, 1), cfg.dtype);
    auto forward = [&] {
        NoGradGuard no_grad;
        return cfg.task == Task::forecast ? forward_forecast(model, x) : forward_classify(model, x);
    };
    for (std::int64_t i = 0; i < opts.warmup; ++i) forward();
    std::vector<double> seconds;
    for (std::int64_t i = 0; i < opts.repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const Tensor y = forward();
        seconds.push_back(seconds_since(t0));
    }
    std::vector<double> per_sample_ms;
    for (double s : seconds) per_sample_ms.push_back(1e3 * s / static_cast<double>(opts.batch));
    const double mean = std::accumulate(per_sample_ms.begin(), per_sample_ms.end(), 0.0) /
                        static_cast<double>(per_sample_ms.size());
    double var = 0.0;
    for (double v : per_sample_ms) var += (v - mean) * (v - mean);
    const double stddev = per_sample_ms.size() > 1 ? std::sqrt(var / static_cast<double>(per_sample_ms.size() - 1)) : 0.0;
    const double median = percentile(per_sample_ms, 0.5);
    const double p90 = percentile(per_sample_ms, 0.9);
    const double cv = mean > 0.0 ? stddev / mean : 0.0;

    utsname uts{};
    uname(&uts);
    json machine = {{"cpu", cpu_model()},
                    {"hardware_threads", std::thread::hardware_concurrency()},
                    {"worker_threads", worker_threads()},
                    {"system", std::string(uts.sysname) + " " + uts.release},
                    {"arch", uts.machine}};

    std::printf("%s batch %lld: per-sample latency median %.3f ms, p90 %.3f ms, mean %.3f ms, cv %.3f (%lld repeats)\n",
                cfg.name.c_str(), static_cast<long long>(opts.batch), median, p90, mean, cv,
                static_cast<long long>(opts.repeats));
    if (!opts.out.empty()) {
        std::ostringstream csv;
        csv << "repeat,seconds,per_sample_ms\n";
        for (std::size_t i = 0; i < seconds.size(); ++i) {
            csv << (i + 1) << "," << num(seconds[i]) << "," << num(per_sample_ms[i]) << "\n";
        }
        const std::string path = join(opts.out, "bench.csv");
        write_text(path, csv.str());
        ctx.add_output(path);
    }
    ctx.results["batch"] = opts.batch;
    ctx.results["warmup"] = opts.warmup;
    ctx.results["repeats"] = opts.repeats;
    ctx.results["raw_seconds"] = seconds;
    ctx.results["per_sample_ms"] = {{"median", median}, {"p90", p90}, {"mean", mean}, {"stddev", stddev}, {"cv", cv}};
    ctx.results["machine"] = machine;
    ctx.results["params"] = count_params(model);
    return kOk;
}

}  // namespace heracles::cli
