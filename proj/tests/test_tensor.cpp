#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "heracles/gradcheck.hpp"
#include "heracles/ops.hpp"
#include "heracles/parallel.hpp"
#include "heracles/random.hpp"
#include "heracles/tensor.hpp"
#include "support/check.hpp"
#include "support/oracles.hpp"

using namespace heracles;
using testing_support::input_grad_error;
using testing_support::probe_loss;
using testing_support::randn;

TEST_CASE("construction and shape helpers") {
    const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.dim() == 2);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK(shape_str(t.shape()) == "(2,3)");
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), Error);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK(promote(DType::f32, DType::f64) == DType::f64);
}

TEST_CASE("f32 tensors hold rounded floats") {
    const Tensor t = Tensor::from({1}, {0.1}, DType::f32);
    CHECK(t.data()[0] == static_cast<double>(0.1f));
    const Tensor s = add(t, t);
    CHECK(s.dtype() == DType::f32);
    CHECK(s.data()[0] == static_cast<double>(0.1f + 0.1f));
    const Tensor m = add(t, Tensor::from({1}, {0.1}));
    CHECK(m.dtype() == DType::f64);
}

TEST_CASE("broadcasting follows trailing dimensions") {
    CHECK(broadcast_shape({2, 1, 3}, {4, 1}) == Shape{2, 4, 3});
    CHECK_THROWS_AS(broadcast_shape({2, 3}, {4}), Error);
    const Tensor a = Tensor::from({2, 1}, {1, 2});
    const Tensor b = Tensor::from({3}, {10, 20, 30});
    CHECK((a + b).to_vector() == std::vector<double>{11, 21, 31, 12, 22, 32});
    CHECK(sum_to(Tensor::ones({2, 3}), {3}).to_vector() == std::vector<double>{2, 2, 2});
}

TEST_CASE("shape mismatch is reported with the code") {
    try {
        add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("matmul matches the triple loop") {
    const Tensor a = randn({2, 5, 7}, 1);
    const Tensor b = randn({7, 3}, 2);
    const Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 5, 3});
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 7; ++k) acc += a.at({n, i, k}) * b.at({k, j});
                CHECK(c.at({n, i, j}) == doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("matmul on blocked sizes matches the triple loop") {
    const Tensor a = randn({37, 300}, 3);
    const Tensor b = randn({300, 530}, 4);
    const Tensor c = matmul(a, b);
    double worst = 0.0;
    for (int i = 0; i < 37; i += 5)
        for (int j = 0; j < 530; j += 7) {
            double acc = 0.0;
            for (int k = 0; k < 300; ++k) acc += a.at({i, k}) * b.at({k, j});
            worst = std::max(worst, std::abs(acc - c.at({i, j})));
        }
    CHECK(worst < 1e-10);
}

TEST_CASE("reductions, permute, slice, concat") {
    const Tensor x = Tensor::from({2, 3}, {1, 5, 3, 4, 2, 6});
    CHECK(sum(x, {1}).to_vector() == std::vector<double>{9, 12});
    CHECK(mean(x, {0}).to_vector() == std::vector<double>{2.5, 3.5, 4.5});
    CHECK(max(x, {1}).to_vector() == std::vector<double>{5, 6});
    CHECK(sum(x, {-1}, true).shape() == Shape{2, 1});
    CHECK(permute(x, {1, 0}).to_vector() == std::vector<double>{1, 4, 5, 2, 3, 6});
    CHECK(slice(x, 1, 1, 2).to_vector() == std::vector<double>{5, 3, 2, 6});
    CHECK(flip(x, 1).to_vector() == std::vector<double>{3, 5, 1, 6, 2, 4});
    CHECK(concat({x, x}, 0).shape() == Shape{4, 3});
    CHECK_THROWS_AS(permute(x, {0, 0}), Error);
    CHECK_THROWS_AS(sum(x, {2}), Error);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
    const Tensor x = Tensor::from({2, 3}, {1000, 1001, 1002, -5, 0, 5});
    const Tensor p = softmax(x);
    for (int r = 0; r < 2; ++r) {
        CHECK(p.at({r, 0}) + p.at({r, 1}) + p.at({r, 2}) == doctest::Approx(1.0));
    }
    const Tensor lp = log_softmax(x);
    CHECK(std::isfinite(lp.at({0, 0})));
    CHECK(std::exp(lp.at({0, 2})) == doctest::Approx(p.at({0, 2})));
}

TEST_CASE("elementwise gradients match central differences") {
    const Tensor x = randn({3, 4}, 11);
    const Tensor y = add_scalar(abs(randn({3, 4}, 12)), 0.5);
    auto check = [&](const char* name, const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
        INFO(name);
        CHECK(input_grad_error(f, at) < 1e-7);
    };
    check("add", [&](const Tensor& t) { return probe_loss(t + y, 1); }, x);
    check("sub", [&](const Tensor& t) { return probe_loss(y - t, 1); }, x);
    check("mul", [&](const Tensor& t) { return probe_loss(t * y, 1); }, x);
    check("div", [&](const Tensor& t) { return probe_loss(t / y, 1); }, x);
    check("div denominator", [&](const Tensor& t) { return probe_loss(x / t, 1); }, y);
    check("exp", [&](const Tensor& t) { return probe_loss(exp(t), 1); }, x);
    check("log", [&](const Tensor& t) { return probe_loss(log(t), 1); }, y);
    check("sqrt", [&](const Tensor& t) { return probe_loss(sqrt(t), 1); }, y);
    check("rsqrt", [&](const Tensor& t) { return probe_loss(rsqrt(t), 1); }, y);
    check("square", [&](const Tensor& t) { return probe_loss(square(t), 1); }, x);
    check("gelu", [&](const Tensor& t) { return probe_loss(gelu(t), 1); }, x);
    check("silu", [&](const Tensor& t) { return probe_loss(silu(t), 1); }, x);
    check("relu", [&](const Tensor& t) { return probe_loss(relu(t), 1); }, x);
    check("neg", [&](const Tensor& t) { return probe_loss(-t, 1); }, x);
    check("scalar ops", [&](const Tensor& t) { return probe_loss(t * 3.0 + 2.0, 1); }, x);
}

TEST_CASE("structural op gradients match central differences") {
    const Tensor x = randn({2, 3, 4}, 21);
    const Tensor w = randn({4, 5}, 22);
    auto check = [&](const char* name, const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
        INFO(name);
        CHECK(input_grad_error(f, at) < 1e-7);
    };
    check("matmul lhs", [&](const Tensor& t) { return probe_loss(matmul(t, w), 2); }, x);
    check("matmul rhs", [&](const Tensor& t) { return probe_loss(matmul(x, t), 2); }, w);
    check("broadcast add", [&](const Tensor& t) { return probe_loss(x + t, 2); }, randn({4}, 23));
    check("sum", [&](const Tensor& t) { return probe_loss(sum(t, {1}), 2); }, x);
    check("mean", [&](const Tensor& t) { return probe_loss(mean(t, {0, 2}, true), 2); }, x);
    check("max", [&](const Tensor& t) { return probe_loss(max(t, {2}), 2); }, x);
    check("reshape", [&](const Tensor& t) { return probe_loss(reshape(t, {6, 4}), 2); }, x);
    check("permute", [&](const Tensor& t) { return probe_loss(permute(t, {2, 0, 1}), 2); }, x);
    check("flip", [&](const Tensor& t) { return probe_loss(flip(t, 1), 2); }, x);
    check("slice", [&](const Tensor& t) { return probe_loss(slice(t, 2, 1, 2), 2); }, x);
    check("concat", [&](const Tensor& t) { return probe_loss(concat({t, t * 2.0}, 1), 2); }, x);
    check("softmax", [&](const Tensor& t) { return probe_loss(softmax(t), 2); }, x);
    check("log_softmax", [&](const Tensor& t) { return probe_loss(log_softmax(t), 2); }, x);
    check("broadcast_to", [&](const Tensor& t) { return probe_loss(broadcast_to(t, {3, 2, 4}), 2); }, randn({2, 1}, 24));
}

TEST_CASE("conv2d matches direct summation") {
    const std::int64_t B = 2, H = 7, W = 6, Cin = 4, Cout = 6;
    for (const auto& [stride, pad, groups] : std::vector<std::tuple<int, int, int>>{{1, 1, 1}, {2, 1, 1}, {1, 1, 2}, {2, 0, 2}}) {
        const Tensor x = randn({B, H, W, Cin}, 31);
        const Tensor w = randn({3, 3, Cin / groups, Cout}, 32);
        const Tensor b = randn({Cout}, 33);
        const Tensor y = conv2d(x, w, b, stride, pad, pad, groups);
        std::int64_t ho = 0, wo = 0;
        const auto ref = oracle::conv2d(x.to_vector(), B, H, W, Cin, w.to_vector(), 3, 3, Cout, b.to_vector(), stride,
                                        pad, pad, groups, ho, wo);
        REQUIRE(y.shape() == Shape{B, ho, wo, Cout});
        CHECK(oracle::max_abs_diff(y.to_vector(), ref) < 1e-12);
    }
}

TEST_CASE("conv2d gradients match central differences") {
    const Tensor x = randn({1, 5, 5, 4}, 41);
    const Tensor w = randn({3, 3, 2, 4}, 42);
    const Tensor b = randn({4}, 43);
    CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(conv2d(t, w, b, 2, 1, 1, 2), 3); }, x) < 1e-7);
    CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(conv2d(x, t, b, 2, 1, 1, 2), 3); }, w) < 1e-7);
    CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(conv2d(x, w, t, 2, 1, 1, 2), 3); }, b) < 1e-7);
}

TEST_CASE("tape bookkeeping") {
    Tape tape;
    TapeScope scope(tape);
    Tensor a = Tensor::from({2}, {1, 2});
    a.set_requires_grad();
    Tensor unused = Tensor::from({3}, {1, 2, 3});
    unused.set_requires_grad();
    const Tensor loss = sum(a * a);
    const Gradients g = tape.backward(loss);
    CHECK(g.of(a).to_vector() == std::vector<double>{2, 4});
    CHECK_FALSE(g.reached(unused));
    CHECK(g.of(unused).to_vector() == std::vector<double>{0, 0, 0});

    SUBCASE("non-scalar loss") {
        try {
            tape.backward(a * a);
            FAIL("expected a throw");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::NotScalarLoss);
        }
    }
    SUBCASE("no grad guard") {
        const std::size_t before = tape.size();
        {
            NoGradGuard guard;
            const Tensor y = a * a;
            CHECK(y.node_id() == -1);
        }
        CHECK(tape.size() == before);
    }
}

TEST_CASE("gradients accumulate over reused inputs") {
    const Tensor x = Tensor::from({1}, {3.0});
    const Tensor g = testing_support::tape_grad([](const Tensor& t) { return sum(t * t * t + t); }, x);
    CHECK(g.item() == doctest::Approx(28.0));
}

TEST_CASE("max routes ties to the lowest index") {
    const Tensor x = Tensor::from({1, 3}, {2, 2, 1});
    const Tensor g = testing_support::tape_grad([](const Tensor& t) { return sum(max(t, {1})); }, x);
    CHECK(g.to_vector() == std::vector<double>{1, 0, 0});
}

TEST_CASE("gradient fault hook corrupts one rule") {
    const Tensor x = randn({4}, 51);
    auto f = [](const Tensor& t) { return sum(t * t); };
    CHECK(input_grad_error(f, x) < 1e-8);
    set_gradient_fault("mul", 1.5);
    CHECK(input_grad_error(f, x) > 0.1);
    clear_gradient_faults();
    CHECK(input_grad_error(f, x) < 1e-8);
}

TEST_CASE("relative error uses the normwise definition") {
    const std::vector<double> a = {1.0, 2.0};
    const std::vector<double> b = {1.0, 2.2};
    CHECK(relative_error(a, b) == doctest::Approx(0.2 / 2.2));
    const std::vector<double> z = {0.0, 0.0};
    CHECK(relative_error(z, z) == 0.0);
}

TEST_CASE("check_parameter_gradients flags a corrupted rule") {
    Tensor w = randn({3}, 61);
    w.set_requires_grad();
    auto loss = [&] { return sum(exp(w) * w); };
    auto ok = check_parameter_gradients(loss, {{"w", w}}, 1e-6, 0, 1);
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].rel_error < 1e-8);
    CHECK(ok[0].coords_checked == 3);
    set_gradient_fault("exp", 2.0);
    auto bad = check_parameter_gradients(loss, {{"w", w}}, 1e-6, 2, 1);
    clear_gradient_faults();
    CHECK(bad[0].rel_error > 1e-2);
    CHECK(bad[0].coords_checked == 2);
}

TEST_CASE("rng streams are reproducible and frozen") {
    Rng a(42), b(42);
    for (int i = 0; i < 5; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(7);
    const std::uint64_t first = c.next_u64();
    CHECK(first == Rng(7).next_u64());
    CHECK(first != Rng(8).next_u64());
    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK((v >= 0.0 && v < 1.0));
    }
    Rng t(5);
    for (int i = 0; i < 1000; ++i) CHECK(std::abs(t.truncated_normal(1.0)) <= 2.0);
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
}

TEST_CASE("rng moments are plausible") {
    Rng r(99);
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    CHECK(std::abs(s / n) < 0.03);
    CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("parallel_for covers every index once") {
    for (int threads : {1, 3}) {
        set_worker_threads(threads);
        std::vector<int> hits(1000, 0);
        parallel_for(1000, 7, [&](std::int64_t a, std::int64_t b) {
            for (std::int64_t i = a; i < b; ++i) ++hits[static_cast<std::size_t>(i)];
        });
        CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
    set_worker_threads(1);
}

TEST_CASE("matmul is identical across thread counts") {
    const Tensor a = randn({64, 80}, 71);
    const Tensor b = randn({80, 40}, 72);
    set_worker_threads(1);
    const auto one = matmul(a, b).to_vector();
    set_worker_threads(4);
    const auto four = matmul(a, b).to_vector();
    set_worker_threads(1);
    CHECK(one == four);
}
