#include "heracles/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace heracles {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(Errc::ConfigInvariantViolated, msg); }

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw Error(Errc::BadInput, "config key '" + key + "' expects an integer, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw Error(Errc::BadInput, "config key '" + key + "' expects 0/1, got '" + value + "'");
}

StageConfig stage(std::int64_t depth, std::int64_t c, std::int64_t e) {
    StageConfig s;
    s.depth = depth;
    s.C = c;
    s.E = e;
    return s;
}

ModelConfig hierarchical(const std::string& name, std::vector<StageConfig> stages, std::vector<std::int64_t> heads,
                         std::int64_t alpha) {
    ModelConfig cfg;
    cfg.name = name;
    cfg.stages = std::move(stages);
    // Heads for stages 3-4 come from the architecture table; shallower
    // attention stages (alpha < 2) use 32-channel heads.
    cfg.stages[2].H = heads[0];
    cfg.stages[3].H = heads[1];
    apply_alpha(cfg, alpha);
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        if (cfg.stages[i].kind == StageKind::attention) cfg.stages[i].sr = std::int64_t{8} >> i;
    }
    return cfg;
}

ModelConfig small(const std::string& name, std::int64_t alpha) {
    return hierarchical(name, {stage(3, 64, 8), stage(4, 128, 8), stage(6, 320, 4), stage(3, 448, 4)}, {10, 14}, alpha);
}

}  // namespace

std::string to_string(StageKind kind) { return kind == StageKind::spectral ? "spectral" : "attention"; }
std::string to_string(Task task) { return task == Task::classify ? "classify" : "forecast"; }

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"heracles-s",    "heracles-b",    "heracles-l",
                                                   "heracles-s-a0", "heracles-s-a1", "heracles-s-a2",
                                                   "heracles-s-a3", "heracles-s-a4", "heracles-ts"};
    return names;
}

ModelConfig preset_config(const std::string& name) {
    if (name == "heracles-s") return small(name, 2);
    if (name == "heracles-b") {
        return hierarchical(name, {stage(3, 64, 8), stage(4, 128, 8), stage(12, 320, 4), stage(3, 512, 4)}, {10, 16}, 2);
    }
    if (name == "heracles-l") {
        return hierarchical(name, {stage(3, 96, 8), stage(6, 192, 8), stage(18, 384, 4), stage(3, 512, 4)}, {12, 16}, 2);
    }
    if (name.rfind("heracles-s-a", 0) == 0 && name.size() == 13 && name[12] >= '0' && name[12] <= '4') {
        return small(name, name[12] - '0');
    }
    if (name == "heracles-ts") {
        ModelConfig cfg;
        cfg.name = name;
        cfg.task = Task::forecast;
        for (int i = 0; i < 4; ++i) cfg.stages.push_back(stage(1, 128, 4));
        for (auto& s : cfg.stages) s.H = 4;
        apply_alpha(cfg, 2);
        return cfg;
    }
    if (name == "toy-spectral") {
        ModelConfig cfg;
        cfg.name = name;
        cfg.stages = {stage(1, 8, 2)};
        cfg.num_classes = 3;
        cfg.input_size = 16;
        apply_alpha(cfg, 1);
        return cfg;
    }
    if (name == "toy-hybrid") {
        ModelConfig cfg;
        cfg.name = name;
        cfg.stages = {stage(1, 16, 4), stage(1, 32, 4)};
        cfg.stages[1].H = 2;
        cfg.num_classes = 2;
        cfg.input_size = 16;
        apply_alpha(cfg, 1);
        return cfg;
    }
    if (name == "toy-forecast") {
        ModelConfig cfg;
        cfg.name = name;
        cfg.task = Task::forecast;
        cfg.stages = {stage(1, 16, 2), stage(1, 16, 2)};
        cfg.stages[1].H = 2;
        cfg.lookback = 24;
        cfg.horizon = 24;
        cfg.channels = 1;
        apply_alpha(cfg, 1);
        return cfg;
    }
    throw Error(Errc::UnknownPreset, "unknown preset '" + name + "'");
}

const std::vector<std::string>& toy_preset_names() {
    static const std::vector<std::string> names = {"toy-spectral", "toy-hybrid", "toy-forecast"};
    return names;
}

void apply_alpha(ModelConfig& cfg, std::int64_t alpha) {
    cfg.alpha = alpha;
    for (std::int64_t i = 0; i < cfg.num_stages(); ++i) {
        StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
        if (i < alpha) {
            s.kind = StageKind::spectral;
            if (s.G < 1) s.G = 1;
            s.H = 0;
            s.sr = 1;
        } else {
            s.kind = StageKind::attention;
            s.G = 0;
            if (s.H < 1) {
                std::int64_t h = std::max<std::int64_t>(1, s.C / 32);
                while (h > 1 && s.C % h != 0) --h;
                s.H = h;
            }
            if (s.sr < 1) s.sr = 1;
        }
    }
}

void validate(const ModelConfig& cfg) {
    const std::int64_t n = cfg.num_stages();
    if (n < 1 || n > 4) invalid("a model has 1 to 4 stages, got " + std::to_string(n));
    if (cfg.alpha < 0 || cfg.alpha > n) invalid("alpha must lie in [0, " + std::to_string(n) + "]");
    std::int64_t spectral = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
        const std::string tag = "stage" + std::to_string(i + 1);
        if (s.depth < 1) invalid(tag + ".depth must be >= 1");
        if (s.C < 1) invalid(tag + ".C must be >= 1");
        if (s.E < 1) invalid(tag + ".E must be >= 1");
        if (s.kind == StageKind::spectral) {
            ++spectral;
            if (i >= cfg.alpha) invalid(tag + " is spectral but lies beyond alpha");
            if (s.H != 0) invalid(tag + " is spectral and must not carry heads");
            if (s.G < 1 || s.C % s.G != 0) invalid(tag + ".G must divide C");
            if (s.sr != 1) invalid(tag + " is spectral and must not carry a reduction ratio");
        } else {
            if (i < cfg.alpha) invalid(tag + " is attention but lies within alpha");
            if (s.G != 0) invalid(tag + " is attention and must not carry gate groups");
            if (s.H < 1 || s.C % s.H != 0) {
                throw Error(Errc::HeadDivisibility, tag + ".C=" + std::to_string(s.C) + " not divisible by H=" +
                                                        std::to_string(s.H));
            }
            if (s.sr < 1) invalid(tag + ".sr must be >= 1");
        }
    }
    if (spectral != cfg.alpha) invalid("spectral stage count must equal alpha");
    if (cfg.kernel < 1 || cfg.kernel % 2 == 0) invalid("kernel must be odd");
    if (cfg.transform == spectral::TransformKind::Fourier) invalid("gates use hartley or cosine transforms");
    if (cfg.task == Task::classify) {
        if (cfg.num_classes < 1) invalid("num_classes must be >= 1");
        if (cfg.in_channels < 1) invalid("in_channels must be >= 1");
        const std::int64_t factor = std::int64_t{1} << (n + 1);
        if (cfg.input_size < factor || cfg.input_size % factor != 0) {
            throw Error(Errc::IndivisibleSpatial, "input_size " + std::to_string(cfg.input_size) +
                                                      " must be a positive multiple of " + std::to_string(factor));
        }
        for (std::int64_t i = 0; i < n; ++i) {
            const StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
            const std::int64_t side = cfg.input_size >> (i + 2);
            if (s.kind == StageKind::attention && side % s.sr != 0) {
                throw Error(Errc::IndivisibleSpatial, "stage" + std::to_string(i + 1) + " map " + std::to_string(side) +
                                                          " not divisible by sr=" + std::to_string(s.sr));
            }
        }
    } else {
        if (cfg.lookback < 1 || cfg.horizon < 1 || cfg.channels < 1) invalid("lookback, horizon, channels must be >= 1");
        for (const auto& s : cfg.stages) {
            if (s.C != cfg.stages.front().C) invalid("forecast stages share one channel width");
            if (s.sr != 1) invalid("forecast attention stages use sr=1");
        }
    }
}

void set_config_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
    if (key.rfind("stage", 0) == 0 && key.find('.') != std::string::npos) {
        const auto dot = key.find('.');
        const std::int64_t idx = parse_int(key, key.substr(5, dot - 5));
        if (idx < 1 || idx > 4) throw Error(Errc::BadInput, "stage index out of range in '" + key + "'");
        if (cfg.num_stages() < idx) cfg.stages.resize(static_cast<std::size_t>(idx));
        StageConfig& s = cfg.stages[static_cast<std::size_t>(idx - 1)];
        const std::string field = key.substr(dot + 1);
        if (field == "depth") s.depth = parse_int(key, value);
        else if (field == "C") s.C = parse_int(key, value);
        else if (field == "E") s.E = parse_int(key, value);
        else if (field == "G") s.G = parse_int(key, value);
        else if (field == "H") s.H = parse_int(key, value);
        else if (field == "sr") s.sr = parse_int(key, value);
        else if (field == "kind") {
            if (value == "spectral") s.kind = StageKind::spectral;
            else if (value == "attention") s.kind = StageKind::attention;
            else throw Error(Errc::BadInput, "unknown stage kind '" + value + "'");
        } else {
            throw Error(Errc::BadInput, "unknown config key '" + key + "'");
        }
        return;
    }
    if (key == "name") cfg.name = value;
    else if (key == "preset") cfg = preset_config(value);
    else if (key == "alpha") cfg.alpha = parse_int(key, value);
    else if (key == "stages") {
        const std::int64_t n = parse_int(key, value);
        if (n < 1 || n > 4) throw Error(Errc::BadInput, "stages must be 1..4");
        cfg.stages.resize(static_cast<std::size_t>(n));
    } else if (key == "task") {
        if (value == "classify") cfg.task = Task::classify;
        else if (value == "forecast") cfg.task = Task::forecast;
        else throw Error(Errc::BadInput, "unknown task '" + value + "'");
    } else if (key == "num_classes") cfg.num_classes = parse_int(key, value);
    else if (key == "input_size") cfg.input_size = parse_int(key, value);
    else if (key == "in_channels") cfg.in_channels = parse_int(key, value);
    else if (key == "lookback") cfg.lookback = parse_int(key, value);
    else if (key == "horizon") cfg.horizon = parse_int(key, value);
    else if (key == "channels") cfg.channels = parse_int(key, value);
    else if (key == "transform") cfg.transform = spectral::parse_transform_kind(value);
    else if (key == "merge") cfg.merge = blocks::parse_merge_mode(value);
    else if (key == "activation") cfg.activation = blocks::parse_activation(value);
    else if (key == "bidirectional") cfg.bidirectional = parse_bool(key, value);
    else if (key == "kernel") cfg.kernel = parse_int(key, value);
    else if (key == "dtype") {
        if (value == "f32") cfg.dtype = DType::f32;
        else if (value == "f64") cfg.dtype = DType::f64;
        else throw Error(Errc::BadInput, "unknown dtype '" + value + "'");
    } else {
        throw Error(Errc::BadInput, "unknown config key '" + key + "'");
    }
}

ModelConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(Errc::BadInput, "config line " + std::to_string(lineno) + " is not key=value");
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    ModelConfig cfg;
    bool explicit_kind = false;
    bool has_alpha = false;
    for (const auto& [k, v] : entries) {
        if (k == "preset") set_config_key(cfg, k, v);
    }
    for (const auto& [k, v] : entries) {
        if (k == "preset") continue;
        set_config_key(cfg, k, v);
        if (k.size() > 5 && k.ends_with(".kind")) explicit_kind = true;
        if (k == "alpha") has_alpha = true;
    }
    // Without explicit kinds, alpha decides which stages are spectral.
    if (!explicit_kind && (has_alpha || !cfg.stages.empty())) {
        apply_alpha(cfg, cfg.alpha);
    }
    validate(cfg);
    return cfg;
}

ModelConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::Io, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "name=" << cfg.name << "\n";
    out << "task=" << to_string(cfg.task) << "\n";
    out << "alpha=" << cfg.alpha << "\n";
    out << "num_classes=" << cfg.num_classes << "\n";
    out << "input_size=" << cfg.input_size << "\n";
    out << "in_channels=" << cfg.in_channels << "\n";
    out << "lookback=" << cfg.lookback << "\n";
    out << "horizon=" << cfg.horizon << "\n";
    out << "channels=" << cfg.channels << "\n";
    out << "transform=" << spectral::to_string(cfg.transform) << "\n";
    out << "merge=" << blocks::to_string(cfg.merge) << "\n";
    out << "activation=" << blocks::to_string(cfg.activation) << "\n";
    out << "bidirectional=" << (cfg.bidirectional ? 1 : 0) << "\n";
    out << "kernel=" << cfg.kernel << "\n";
    out << "dtype=" << (cfg.dtype == DType::f32 ? "f32" : "f64") << "\n";
    out << "stages=" << cfg.num_stages() << "\n";
    for (std::int64_t i = 0; i < cfg.num_stages(); ++i) {
        const StageConfig& s = cfg.stages[static_cast<std::size_t>(i)];
        const std::string p = "stage" + std::to_string(i + 1) + ".";
        out << p << "depth=" << s.depth << "\n";
        out << p << "C=" << s.C << "\n";
        out << p << "kind=" << to_string(s.kind) << "\n";
        out << p << "E=" << s.E << "\n";
        out << p << "G=" << s.G << "\n";
        out << p << "H=" << s.H << "\n";
        out << p << "sr=" << s.sr << "\n";
    }
    return out.str();
}

}  // namespace heracles
