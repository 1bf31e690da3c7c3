#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heracles/spectral.hpp"
#include "heracles/tensor.hpp"

namespace heracles::cli {

/// Coefficient energies sorted descending and their running share of the total.
struct EnergyCurve {
    spectral::TransformKind kind = spectral::TransformKind::Hartley;
    std::vector<double> energies;
    std::vector<double> cumulative;  // cumulative[i]: share of the top i+1 coefficients
};

/// Transforms a rank-1 or rank-2 signal and builds its curve. Fourier
/// coefficients count once with |re|^2 + |im|^2, or as separate re and im
/// entries when `split_complex`. Throws UnsupportedRank, BadInput (zero energy).
EnergyCurve energy_curve(spectral::TransformKind kind, const Tensor& signal, bool split_complex = false);

/// Smallest n whose cumulative share reaches `fraction`.
std::int64_t coeffs_for_fraction(const EnergyCurve& curve, double fraction);

/// Stationary AR(1) series x[t] = phi x[t-1] + e[t], e ~ N(0, 1), seeded.
Tensor ar1_signal(std::int64_t n, double phi, std::uint64_t seed);

struct GateSummary {
    std::string name;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    double low_freq_share = 0.0;
    double area_fraction = 0.0;
    Tensor grid;  // [rows, cols] of |R|
};

/// Spatial gates [H, W, c] map to an H x W grid of |R| averaged over c with
/// both axes in the transform domain; sequence gates [L, c] map to an L x c
/// grid with only the row axis in the transform domain. The low region keeps
/// indices below N/4 on every transform axis.
GateSummary summarize_gate(const std::string& name, const Tensor& gate);

}  // namespace heracles::cli
