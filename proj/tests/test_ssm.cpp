#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "heracles/random.hpp"
#include "heracles/ssm.hpp"
#include "support/check.hpp"
#include "support/oracles.hpp"

using namespace heracles;
using namespace heracles::ssm;
using testing_support::randn;

namespace {

DiagonalSsm random_diagonal(Rng& rng, std::size_t n) {
    DiagonalSsm s;
    for (std::size_t i = 0; i < n; ++i) {
        s.lambda.push_back(stable_lambda(rng.uniform(-3.0, 1.0), rng.uniform(-3.0, 3.0)));
        s.b.emplace_back(rng.normal(), rng.normal());
        s.c.emplace_back(rng.normal(), rng.normal());
    }
    s.d = rng.normal();
    return s;
}

ContinuousSsm random_dense(Rng& rng, std::int64_t n) {
    ContinuousSsm s;
    s.n = n;
    for (std::int64_t i = 0; i < n * n; ++i) s.a.push_back(0.3 * rng.normal());
    for (std::int64_t i = 0; i < n; ++i) s.a[static_cast<std::size_t>(i * n + i)] -= 1.5;
    for (std::int64_t i = 0; i < n; ++i) {
        s.b.push_back(rng.normal());
        s.c.push_back(rng.normal());
    }
    s.d = rng.normal();
    return s;
}

std::vector<double> plus_du(std::vector<double> y, const Tensor& u, double d) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += d * u.data()[i];
    return y;
}

}  // namespace

TEST_CASE("dense kernel equals explicit matrix powers") {
    Rng rng(1);
    for (std::int64_t n : {1, 3, 6}) {
        const auto disc = discretize_bilinear(random_dense(rng, n), 0.1);
        const Tensor k = kernel_unroll(disc, 40);
        const auto ref = oracle::ssm_kernel(disc.a_bar, disc.b_bar, disc.c_bar, static_cast<std::size_t>(n), 40);
        CHECK(oracle::rel_diff(k.to_vector(), ref) < 1e-12);
    }
}

TEST_CASE("fft long convolution equals the direct causal sum") {
    for (std::int64_t len : {1, 2, 5, 64, 100, 256}) {
        const Tensor k = randn({len}, static_cast<std::uint64_t>(len));
        const Tensor u = randn({len}, static_cast<std::uint64_t>(len + 1000));
        CHECK(oracle::rel_diff(long_conv_fft(k, u).to_vector(), oracle::causal_conv(k.to_vector(), u.to_vector())) <
              1e-12);
    }
    CHECK_THROWS_AS(long_conv_fft(randn({3}, 1), randn({4}, 2)), Error);
}

TEST_CASE("dense scan equals kernel convolution") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto cont = random_dense(rng, 4);
        const auto disc = discretize_bilinear(cont, 0.05);
        const Tensor u = randn({80}, static_cast<std::uint64_t>(trial));
        const auto conv = plus_du(long_conv_fft(kernel_unroll(disc, 80), u).to_vector(), u, cont.d);
        CHECK(oracle::rel_diff(ssm_scan(disc, cont.d, u).to_vector(), conv) < 1e-10);
    }
}

TEST_CASE("diagonal scan equals kernel convolution") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(16);
        const std::int64_t len = 1 + static_cast<std::int64_t>(rng.below(256));
        const auto cont = random_diagonal(rng, n);
        const auto disc = discretize_zoh_diagonal(cont, softplus(rng.normal(-2.0, 1.0)));
        CHECK(spectral_radius(disc) < 1.0);
        const Tensor u = randn({len}, static_cast<std::uint64_t>(trial + 50));
        const auto conv = plus_du(long_conv_fft(kernel_unroll(disc, len), u).to_vector(), u, cont.d);
        CHECK(oracle::rel_diff(ssm_scan(disc, cont.d, u).to_vector(), conv) < 1e-9);
    }
}

TEST_CASE("zoh and bilinear agree to second order") {
    // Real diagonal system expressed both ways.
    DiagonalSsm diag;
    ContinuousSsm dense;
    dense.n = 3;
    dense.a.assign(9, 0.0);
    const double lambdas[] = {-0.5, -1.0, -2.0};
    for (int i = 0; i < 3; ++i) {
        diag.lambda.emplace_back(lambdas[i], 0.0);
        diag.b.emplace_back(1.0 + i, 0.0);
        diag.c.emplace_back(0.5 - i, 0.0);
        dense.a[static_cast<std::size_t>(i * 3 + i)] = lambdas[i];
        dense.b.push_back(1.0 + i);
        dense.c.push_back(0.5 - i);
    }
    auto gap = [&](double dt) {
        const auto steps = static_cast<std::int64_t>(std::llround(1.0 / dt));
        const auto kz = kernel_unroll(discretize_zoh_diagonal(diag, dt), steps).to_vector();
        const auto kb = kernel_unroll(discretize_bilinear(dense, dt), steps).to_vector();
        // Compare per unit time: both kernels carry a factor dt.
        return oracle::max_abs_diff(kz, kb) / dt;
    };
    const double coarse = gap(0.02);
    const double fine = gap(0.01);
    CHECK(fine < coarse);
    CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("discretization preconditions") {
    DiagonalSsm s;
    s.lambda = {{-1.0, 0.0}};
    s.b = {{1.0, 0.0}};
    s.c = {{1.0, 0.0}};
    CHECK_THROWS_AS(discretize_zoh_diagonal(s, 0.0), Error);
    s.c.clear();
    CHECK_THROWS_AS(discretize_zoh_diagonal(s, 0.1), Error);
    ContinuousSsm singular;
    singular.n = 1;
    singular.a = {2.0};
    singular.b = {1.0};
    singular.c = {1.0};
    try {
        discretize_bilinear(singular, 1.0);  // I - dt/2 A = 0
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SingularMatrix);
    }
}

TEST_CASE("stable parameterization") {
    CHECK(stable_lambda(0.0, 2.0).real() == -1.0);
    CHECK(stable_lambda(0.0, 2.0).imag() == 2.0);
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(50.0) == 50.0);
    CHECK(softplus(-50.0) > 0.0);
}
