#pragma once

#include <cstdint>

#include "heracles/tensor.hpp"

namespace heracles {

/// Counter-based generator: the i-th draw is SplitMix64(seed + (i+1) * golden),
/// so a stream is fully determined by its seed and position on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal by Box-Muller; consumes two uniforms per draw.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Normal resampled until it lies within `bound` standard deviations.
    double truncated_normal(double stddev, double bound = 2.0);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t state_;
};

/// Derives an independent stream seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

struct Distribution {
    enum class Kind { uniform, normal } kind = Kind::uniform;
    double a = 0.0;  // low bound or mean
    double b = 1.0;  // high bound or standard deviation

    static Distribution uniform(double lo = 0.0, double hi = 1.0) { return {Kind::uniform, lo, hi}; }
    static Distribution normal(double mean = 0.0, double stddev = 1.0) { return {Kind::normal, mean, stddev}; }
};

Tensor rng_tensor(const Shape& shape, Distribution dist, std::uint64_t seed, DType dtype = DType::f64);

}  // namespace heracles
