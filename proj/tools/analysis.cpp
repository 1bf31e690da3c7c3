#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "heracles/error.hpp"
#include "heracles/random.hpp"

namespace heracles::cli {

using spectral::TransformKind;

EnergyCurve energy_curve(TransformKind kind, const Tensor& signal, bool split_complex) {
    if (signal.dim() != 1 && signal.dim() != 2) {
        throw Error(Errc::UnsupportedRank, "energy needs a 1D or 2D tensor, got " + shape_str(signal.shape()));
    }
    if (signal.numel() == 0) throw Error(Errc::BadInput, "empty signal");
    const Tensor x = signal.to(DType::f64);
    EnergyCurve curve;
    curve.kind = kind;
    if (kind == TransformKind::Fourier) {
        const auto spec = x.dim() == 1 ? spectral::fft_1d(x) : spectral::fft_2d(x);
        const auto re = spec.re.data();
        const auto im = spec.im.data();
        for (std::size_t i = 0; i < re.size(); ++i) {
            if (split_complex) {
                curve.energies.push_back(re[i] * re[i]);
                curve.energies.push_back(im[i] * im[i]);
            } else {
                curve.energies.push_back(re[i] * re[i] + im[i] * im[i]);
            }
        }
    } else {
        Tensor coeffs;
        if (x.dim() == 1) {
            coeffs = kind == TransformKind::Hartley ? spectral::dht_1d(x) : spectral::dct2_1d(x);
        } else {
            coeffs = spectral::transform_2d(kind, x);
        }
        for (double v : coeffs.data()) curve.energies.push_back(v * v);
    }
    std::sort(curve.energies.begin(), curve.energies.end(), std::greater<>());
    double total = 0.0;
    for (double e : curve.energies) total += e;
    if (!(total > 0.0) || !std::isfinite(total)) throw Error(Errc::BadInput, "signal has no finite nonzero energy");
    double running = 0.0;
    curve.cumulative.reserve(curve.energies.size());
    for (double e : curve.energies) {
        running += e;
        curve.cumulative.push_back(std::min(1.0, running / total));
    }
    curve.cumulative.back() = 1.0;
    return curve;
}

std::int64_t coeffs_for_fraction(const EnergyCurve& curve, double fraction) {
    for (std::size_t i = 0; i < curve.cumulative.size(); ++i) {
        if (curve.cumulative[i] >= fraction - 1e-12) return static_cast<std::int64_t>(i + 1);
    }
    return static_cast<std::int64_t>(curve.cumulative.size());
}

Tensor ar1_signal(std::int64_t n, double phi, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(n));
    double prev = rng.normal() / std::sqrt(1.0 - phi * phi);
    for (std::int64_t t = 0; t < n; ++t) {
        v[static_cast<std::size_t>(t)] = prev;
        prev = phi * prev + rng.normal();
    }
    return Tensor::from({n}, std::move(v));
}

GateSummary summarize_gate(const std::string& name, const Tensor& gate) {
    GateSummary s;
    s.name = name;
    const auto d = gate.data();
    const Shape& shape = gate.shape();
    auto low = [](std::int64_t n) { return (n + 3) / 4; };
    double total = 0.0;
    double low_sum = 0.0;
    if (gate.dim() == 3) {
        const std::int64_t h = shape[0], w = shape[1], c = shape[2];
        s.rows = h;
        s.cols = w;
        std::vector<double> grid(static_cast<std::size_t>(h * w), 0.0);
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                double acc = 0.0;
                for (std::int64_t k = 0; k < c; ++k) {
                    const double v = d[static_cast<std::size_t>((i * w + j) * c + k)];
                    acc += std::abs(v);
                    total += v * v;
                    if (i < low(h) && j < low(w)) low_sum += v * v;
                }
                grid[static_cast<std::size_t>(i * w + j)] = acc / static_cast<double>(c);
            }
        }
        s.grid = Tensor::from({h, w}, std::move(grid));
        s.area_fraction = static_cast<double>(low(h) * low(w)) / static_cast<double>(h * w);
    } else if (gate.dim() == 2) {
        const std::int64_t l = shape[0], c = shape[1];
        s.rows = l;
        s.cols = c;
        std::vector<double> grid(d.size());
        for (std::int64_t i = 0; i < l; ++i) {
            for (std::int64_t k = 0; k < c; ++k) {
                const double v = d[static_cast<std::size_t>(i * c + k)];
                grid[static_cast<std::size_t>(i * c + k)] = std::abs(v);
                total += v * v;
                if (i < low(l)) low_sum += v * v;
            }
        }
        s.grid = Tensor::from({l, c}, std::move(grid));
        s.area_fraction = static_cast<double>(low(l)) / static_cast<double>(l);
    } else {
        throw Error(Errc::UnsupportedRank, "gate '" + name + "' has shape " + shape_str(shape));
    }
    s.low_freq_share = total > 0.0 ? low_sum / total : 0.0;
    return s;
}

}  // namespace heracles::cli
