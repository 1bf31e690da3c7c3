#include "heracles/series.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "heracles/random.hpp"

namespace heracles {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_real(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::int64_t frac_rows(std::int64_t rows, double frac) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(rows) * frac + 1e-9));
}

}  // namespace

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

std::pair<std::int64_t, std::int64_t> SeriesDataset::bounds(Split split) const {
    switch (split) {
        case Split::train: return {0, train_end};
        case Split::val: return {train_end, val_end};
        case Split::test: return {val_end, rows()};
    }
    return {0, 0};
}

SeriesDataset make_series(Tensor values, double train_frac, double val_frac) {
    if (values.dim() != 2) throw Error(Errc::ShapeMismatch, "series values must be [rows, M]");
    if (values.size(0) < 2) throw Error(Errc::TooFewRows, "a series needs at least 2 rows, got " + std::to_string(values.size(0)));
    if (values.size(1) < 1) throw Error(Errc::BadInput, "a series needs at least one value column");
    SeriesDataset ds;
    const std::int64_t rows = values.size(0);
    ds.train_end = frac_rows(rows, train_frac);
    ds.val_end = std::min(rows, ds.train_end + frac_rows(rows, val_frac));
    ds.values = std::move(values);
    for (std::int64_t c = 0; c < ds.channels(); ++c) ds.columns.push_back("c" + std::to_string(c));
    return ds;
}

SeriesDataset parse_timeseries_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(Errc::TooFewRows, "empty CSV");
    std::vector<std::string> header;
    for (auto f : split_fields(line)) header.emplace_back(f);
    if (header.size() < 2) throw Error(Errc::BadInput, "CSV needs a date column and at least one value column");
    const std::size_t width = header.size();

    std::vector<double> values;
    std::vector<std::string> stamps;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != width) {
            throw ParseError(row, std::min(fields.size(), width),
                             "expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
        }
        stamps.emplace_back(fields[0]);
        for (std::size_t c = 1; c < width; ++c) {
            double v = 0.0;
            if (!parse_real(fields[c], v)) throw ParseError(row, c, "not a real number: '" + std::string(fields[c]) + "'");
            values.push_back(v);
        }
        ++row;
    }
    const auto rows = static_cast<std::int64_t>(row);
    if (rows < 2) throw Error(Errc::TooFewRows, "a series needs at least 2 rows, got " + std::to_string(rows));
    SeriesDataset ds = make_series(Tensor::from({rows, static_cast<std::int64_t>(width - 1)}, std::move(values)));
    ds.timestamps = std::move(stamps);
    ds.columns.clear();
    for (std::size_t c = 1; c < width; ++c) ds.columns.emplace_back(header[c]);
    ds.stats = compute_stats(ds);
    return ds;
}

SeriesDataset load_timeseries_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_timeseries_csv(ss.str());
}

NormStats compute_stats(const SeriesDataset& ds) {
    const std::int64_t m = ds.channels();
    const std::int64_t n = ds.train_end;
    if (n < 1) throw Error(Errc::EmptySplit, "train split is empty");
    auto v = ds.values.data();
    NormStats s;
    s.mean.assign(static_cast<std::size_t>(m), 0.0);
    s.std.assign(static_cast<std::size_t>(m), 0.0);
    for (std::int64_t c = 0; c < m; ++c) {
        double sum = 0.0;
        for (std::int64_t r = 0; r < n; ++r) sum += v[r * m + c];
        const double mu = sum / static_cast<double>(n);
        double sq = 0.0;
        for (std::int64_t r = 0; r < n; ++r) {
            const double d = v[r * m + c] - mu;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / static_cast<double>(n));
        if (!(sd > 1e-12 * std::max(1.0, std::fabs(mu)))) {
            const std::string name = static_cast<std::size_t>(c) < ds.columns.size() ? ds.columns[c] : std::to_string(c);
            throw Error(Errc::ConstantChannel, "channel " + std::to_string(c) + " ('" + name + "') is constant on the train split");
        }
        s.mean[static_cast<std::size_t>(c)] = mu;
        s.std[static_cast<std::size_t>(c)] = sd;
    }
    return s;
}

SeriesDataset standardize(const SeriesDataset& ds) {
    SeriesDataset out = ds;
    out.stats = compute_stats(ds);
    const std::int64_t m = ds.channels();
    std::vector<double> v = ds.values.to_vector();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto c = i % static_cast<std::size_t>(m);
        v[i] = (v[i] - out.stats.mean[c]) / out.stats.std[c];
    }
    out.values = Tensor::from(ds.values.shape(), std::move(v), ds.values.dtype());
    out.standardized = true;
    return out;
}

Tensor destandardize(const Tensor& values, const NormStats& stats) {
    const auto m = stats.mean.size();
    if (values.dim() < 1 || static_cast<std::size_t>(values.size(-1)) != m) {
        throw Error(Errc::ShapeMismatch, "destandardize expects last axis " + std::to_string(m));
    }
    std::vector<double> v = values.to_vector();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * stats.std[i % m] + stats.mean[i % m];
    return Tensor::from(values.shape(), std::move(v), values.dtype());
}

WindowSet::WindowSet(const SeriesDataset& ds, std::int64_t lookback, std::int64_t horizon, Split split, std::int64_t stride)
    : values_(ds.values), lookback_(lookback), horizon_(horizon), channels_(ds.channels()) {
    if (lookback < 1 || horizon < 1 || stride < 1) throw Error(Errc::BadInput, "lookback, horizon and stride must be positive");
    auto [begin, end] = ds.bounds(split);
    if (lookback + horizon > end - begin) {
        throw Error(Errc::WindowTooLong, "L+T=" + std::to_string(lookback + horizon) + " exceeds " + to_string(split) +
                                             " split length " + std::to_string(end - begin));
    }
    for (std::int64_t s = begin; s + lookback + horizon <= end; s += stride) starts_.push_back(s);
}

WindowBatch WindowSet::gather(const std::vector<std::int64_t>& indices) const {
    const auto b = static_cast<std::int64_t>(indices.size());
    const std::int64_t m = channels_;
    std::vector<double> x(static_cast<std::size_t>(b * lookback_ * m));
    std::vector<double> y(static_cast<std::size_t>(b * horizon_ * m));
    auto v = values_.data();
    for (std::int64_t i = 0; i < b; ++i) {
        const std::int64_t s = start(indices[static_cast<std::size_t>(i)]);
        std::copy(v.begin() + s * m, v.begin() + (s + lookback_) * m, x.begin() + i * lookback_ * m);
        std::copy(v.begin() + (s + lookback_) * m, v.begin() + (s + lookback_ + horizon_) * m, y.begin() + i * horizon_ * m);
    }
    return {Tensor::from({b, lookback_, m}, std::move(x), values_.dtype()),
            Tensor::from({b, horizon_, m}, std::move(y), values_.dtype())};
}

WindowSet make_windows(const SeriesDataset& ds, std::int64_t lookback, std::int64_t horizon, Split split, std::int64_t stride) {
    return WindowSet(ds, lookback, horizon, split, stride);
}

Tensor make_sinusoid_series(std::int64_t rows, std::int64_t channels, std::uint64_t seed) {
    Rng rng(seed);
    constexpr int kComponents = 3;
    std::vector<double> period, phase, amp;
    for (std::int64_t c = 0; c < channels * kComponents; ++c) {
        period.push_back(rng.uniform(8.0, 48.0));
        phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
        amp.push_back(rng.uniform(0.5, 1.5));
    }
    std::vector<double> v(static_cast<std::size_t>(rows * channels));
    for (std::int64_t t = 0; t < rows; ++t) {
        for (std::int64_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (int j = 0; j < kComponents; ++j) {
                const auto k = static_cast<std::size_t>(c * kComponents + j);
                s += amp[k] * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period[k] + phase[k]);
            }
            v[static_cast<std::size_t>(t * channels + c)] = s;
        }
    }
    return Tensor::from({rows, channels}, std::move(v));
}

std::string format_timeseries_csv(const Tensor& values) {
    using namespace std::chrono;
    if (values.dim() != 2) throw Error(Errc::ShapeMismatch, "series values must be [rows, M]");
    std::string out = "date";
    for (std::int64_t c = 0; c < values.size(1); ++c) out += ",c" + std::to_string(c);
    out += "\n";
    const sys_days base = year{2016} / July / 1;
    auto v = values.data();
    char buf[64];
    for (std::int64_t r = 0; r < values.size(0); ++r) {
        const auto tp = base + hours(r);
        const auto day = floor<days>(tp);
        const year_month_day ymd(day);
        const auto hh = duration_cast<hours>(tp - day).count();
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:00:00", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<long long>(hh));
        out += buf;
        for (std::int64_t c = 0; c < values.size(1); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", v[r * values.size(1) + c]);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace heracles
