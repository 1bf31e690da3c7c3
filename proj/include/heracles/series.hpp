#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heracles/tensor.hpp"

namespace heracles {

enum class Split { train, val, test };

std::string to_string(Split split);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

/// Multivariate series [rows, M] with time-ordered splits
/// train = [0, train_end), val = [train_end, val_end), test = [val_end, rows).
struct SeriesDataset {
    Tensor values;
    std::vector<std::string> timestamps;
    std::vector<std::string> columns;
    std::int64_t train_end = 0;
    std::int64_t val_end = 0;
    NormStats stats;
    bool standardized = false;

    std::int64_t rows() const { return values.size(0); }
    std::int64_t channels() const { return values.size(1); }
    std::pair<std::int64_t, std::int64_t> bounds(Split split) const;
};

/// Wraps values [rows, M] with the default 70/10/20 split. Throws TooFewRows below 2 rows.
SeriesDataset make_series(Tensor values, double train_frac = 0.7, double val_frac = 0.1);

/// CSV with a header row; the first column is a date or ID string and the
/// rest parse as reals. Throws ParseError(row, col) with a 0-based data row
/// and 0-based column (the date column is column 0), TooFewRows, ConstantChannel.
SeriesDataset parse_timeseries_csv(const std::string& text);
SeriesDataset load_timeseries_csv(const std::string& path);

/// Per-channel mean and population std over the train rows only.
NormStats compute_stats(const SeriesDataset& ds);
/// Stats from the train split applied to every row. Throws ConstantChannel.
SeriesDataset standardize(const SeriesDataset& ds);
/// Maps standardized values [..., M] back to original units.
Tensor destandardize(const Tensor& values, const NormStats& stats);

struct WindowBatch {
    Tensor x;  // [B, L, M]
    Tensor y;  // [B, T, M]
};

/// Sliding windows over one split: window i covers rows
/// start_i .. start_i + L + T - 1 with start_i = split_begin + i * stride.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(const SeriesDataset& ds, std::int64_t lookback, std::int64_t horizon, Split split, std::int64_t stride = 1);

    std::int64_t size() const { return static_cast<std::int64_t>(starts_.size()); }
    std::int64_t lookback() const { return lookback_; }
    std::int64_t horizon() const { return horizon_; }
    std::int64_t channels() const { return channels_; }
    /// First source row of window `i`.
    std::int64_t start(std::int64_t i) const { return starts_.at(static_cast<std::size_t>(i)); }
    WindowBatch gather(const std::vector<std::int64_t>& indices) const;

private:
    Tensor values_;
    std::vector<std::int64_t> starts_;
    std::int64_t lookback_ = 0;
    std::int64_t horizon_ = 0;
    std::int64_t channels_ = 0;
};

/// Throws WindowTooLong when L + T exceeds the split length.
WindowSet make_windows(const SeriesDataset& ds, std::int64_t lookback, std::int64_t horizon, Split split,
                       std::int64_t stride = 1);

/// Noiseless sum of sinusoids, `channels` columns of `rows` samples. Each
/// channel mixes three components with seeded periods in [8, 48], phases and
/// amplitudes.
Tensor make_sinusoid_series(std::int64_t rows, std::int64_t channels, std::uint64_t seed);

/// Writes `values` [rows, M] as an ETT-style CSV (date column plus M reals).
std::string format_timeseries_csv(const Tensor& values);

}  // namespace heracles
