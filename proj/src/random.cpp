#include "heracles/random.hpp"

#include <cmath>
#include <numbers>

namespace heracles {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    state_ += kGolden;
    return mix(state_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double bound) {
    for (;;) {
        double z = normal();
        if (std::fabs(z) <= bound) return z * stddev;
    }
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
        std::uint64_t v = next_u64();
        if (v < limit) return v % n;
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) { return mix(seed ^ mix(salt + kGolden)); }

Tensor rng_tensor(const Shape& shape, Distribution dist, std::uint64_t seed, DType dtype) {
    Rng rng(seed);
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) {
        v = dist.kind == Distribution::Kind::uniform ? rng.uniform(dist.a, dist.b) : rng.normal(dist.a, dist.b);
    }
    return Tensor::from(shape, std::move(values), dtype);
}

}  // namespace heracles
