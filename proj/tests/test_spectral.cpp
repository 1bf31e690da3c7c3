#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "heracles/spectral.hpp"
#include "support/check.hpp"
#include "support/oracles.hpp"

using namespace heracles;
using namespace heracles::spectral;
using testing_support::randn;

namespace {

std::vector<std::int64_t> lengths() {
    std::vector<std::int64_t> n;
    for (std::int64_t i = 1; i <= 17; ++i) n.push_back(i);
    for (std::int64_t i : {32, 37, 64, 196}) n.push_back(i);
    return n;
}

std::vector<double> interleave(const ComplexSpectrum& s) {
    std::vector<double> out;
    for (std::int64_t i = 0; i < s.re.numel(); ++i) {
        out.push_back(s.re.data()[static_cast<std::size_t>(i)]);
        out.push_back(s.im.data()[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<double> interleave(const std::vector<oracle::cplx>& s) {
    std::vector<double> out;
    for (const auto& c : s) {
        out.push_back(c.real());
        out.push_back(c.imag());
    }
    return out;
}

}  // namespace

TEST_CASE("hand-computed values") {
    const Tensor x = Tensor::from({4}, {1, 2, 3, 4});
    CHECK(oracle::max_abs_diff(dht_1d(x).to_vector(), {10, -4, -2, 0}) < 1e-14);
    const auto f = fft_1d(x);
    CHECK(oracle::max_abs_diff(f.re.to_vector(), {10, -2, -2, -2}) < 1e-14);
    CHECK(oracle::max_abs_diff(f.im.to_vector(), {0, 2, 0, -2}) < 1e-14);
    const Tensor dc = dct2_1d(Tensor::from({4}, {1, 1, 1, 1}));
    CHECK(dc.data()[0] == doctest::Approx(2.0));
    for (int k = 1; k < 4; ++k) CHECK(std::abs(dc.data()[static_cast<std::size_t>(k)]) < 1e-15);
}

TEST_CASE("fast transforms equal the direct sums") {
    for (std::int64_t n : lengths()) {
        CAPTURE(n);
        const Tensor x = randn({n}, static_cast<std::uint64_t>(100 + n));
        const auto xv = x.to_vector();
        CHECK(oracle::rel_diff(interleave(fft_1d(x)), interleave(oracle::dft(xv))) < 1e-12);
        CHECK(oracle::rel_diff(dht_1d(x).to_vector(), oracle::dht(xv)) < 1e-12);
        CHECK(oracle::rel_diff(dct2_1d(x).to_vector(), oracle::dct2(xv)) < 1e-12);
        CHECK(oracle::rel_diff(dct3_1d(x).to_vector(), oracle::dct3(xv)) < 1e-12);
    }
}

TEST_CASE("inverse pairs round trip") {
    for (std::int64_t n : lengths()) {
        CAPTURE(n);
        const Tensor x = randn({n}, static_cast<std::uint64_t>(200 + n));
        const auto xv = x.to_vector();
        CHECK(oracle::rel_diff(idht_1d(dht_1d(x)).to_vector(), xv) < 1e-12);
        CHECK(oracle::rel_diff(dct3_1d(dct2_1d(x)).to_vector(), xv) < 1e-12);
        const auto back = ifft_1d(fft_1d(x));
        CHECK(oracle::rel_diff(back.re.to_vector(), xv) < 1e-12);
        for (double v : back.im.data()) CHECK(std::abs(v) < 1e-12);
    }
}

TEST_CASE("dht is an involution up to N and equals Re - Im of the fft") {
    for (std::int64_t n : lengths()) {
        CAPTURE(n);
        const Tensor x = randn({n}, static_cast<std::uint64_t>(300 + n));
        auto twice = dht_1d(dht_1d(x)).to_vector();
        for (double& v : twice) v /= static_cast<double>(n);
        CHECK(oracle::rel_diff(twice, x.to_vector()) < 1e-12);
        const auto f = fft_1d(x);
        std::vector<double> h(static_cast<std::size_t>(n));
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = f.re.data()[k] - f.im.data()[k];
        CHECK(oracle::rel_diff(dht_1d(x).to_vector(), h) < 1e-12);
    }
}

TEST_CASE("orthonormal dct preserves the norm") {
    const Tensor x = randn({37}, 7);
    double a = 0.0, b = 0.0;
    for (double v : x.data()) a += v * v;
    for (double v : dct2_1d(x).to_vector()) b += v * v;
    CHECK(b == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("fourier output of real input is conjugate symmetric") {
    const Tensor x = randn({12}, 8);
    const auto f = fft_1d(x);
    for (std::size_t k = 1; k < 12; ++k) {
        CHECK(f.re.data()[k] == doctest::Approx(f.re.data()[12 - k]).epsilon(1e-12));
        CHECK(f.im.data()[k] == doctest::Approx(-f.im.data()[12 - k]).epsilon(1e-12));
    }
}

TEST_CASE("2d transforms are separable and invertible") {
    for (const auto& [h, w] : std::vector<std::pair<std::int64_t, std::int64_t>>{{4, 4}, {7, 5}, {14, 14}, {1, 6}}) {
        CAPTURE(h);
        CAPTURE(w);
        const Tensor x = randn({h, w}, static_cast<std::uint64_t>(h * 100 + w));
        const auto xv = x.to_vector();
        const auto hu = static_cast<std::size_t>(h), wu = static_cast<std::size_t>(w);
        CHECK(oracle::rel_diff(transform_2d(TransformKind::Hartley, x).to_vector(),
                               oracle::separable_2d(xv, hu, wu, oracle::dht)) < 1e-12);
        CHECK(oracle::rel_diff(transform_2d(TransformKind::Cosine, x).to_vector(),
                               oracle::separable_2d(xv, hu, wu, oracle::dct2)) < 1e-12);
        CHECK(oracle::rel_diff(interleave(fft_2d(x)), interleave(oracle::dft_2d(xv, hu, wu))) < 1e-12);
        for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
            CHECK(oracle::rel_diff(inverse_2d(kind, transform_2d(kind, x)).to_vector(), xv) < 1e-12);
        }
        CHECK(oracle::rel_diff(ifft_2d(fft_2d(x)).re.to_vector(), xv) < 1e-12);
    }
}

TEST_CASE("transform along an axis matches per-fiber transforms") {
    const Tensor x = randn({3, 5, 4}, 9);
    for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
        const Tensor y = transform_along_axis(kind, x, 1, false);
        for (int a = 0; a < 3; ++a)
            for (int c = 0; c < 4; ++c) {
                std::vector<double> fiber;
                for (int b = 0; b < 5; ++b) fiber.push_back(x.at({a, b, c}));
                const auto ref = kind == TransformKind::Hartley ? oracle::dht(fiber) : oracle::dct2(fiber);
                for (int b = 0; b < 5; ++b) CHECK(y.at({a, b, c}) == doctest::Approx(ref[static_cast<std::size_t>(b)]));
            }
        const Tensor back = transform_along_axis(kind, y, 1, true);
        CHECK(oracle::rel_diff(back.to_vector(), x.to_vector()) < 1e-12);
    }
    CHECK_THROWS_AS(transform_along_axis(TransformKind::Hartley, x, 3, false), Error);
}

TEST_CASE("kind names parse") {
    CHECK(parse_transform_kind("hartley") == TransformKind::Hartley);
    CHECK(parse_transform_kind("cosine") == TransformKind::Cosine);
    CHECK(parse_transform_kind("fourier") == TransformKind::Fourier);
    CHECK(to_string(TransformKind::Cosine) == "cosine");
    CHECK_THROWS_AS(parse_transform_kind("wavelet"), Error);
}
