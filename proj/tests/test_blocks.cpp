#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "heracles/blocks.hpp"
#include "heracles/ops.hpp"
#include "support/check.hpp"
#include "support/oracles.hpp"

using namespace heracles;
using namespace heracles::blocks;
using testing_support::input_grad_error;
using testing_support::probe_loss;
using testing_support::randn;

namespace {

/// Overwrites every parameter in place with seeded values around `center`.
void randomize(const std::vector<NamedTensor>& params, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (const auto& [name, t] : params) {
        const double center = name.find("gamma") != std::string::npos || name.find(".R") != std::string::npos ? 1.0 : 0.0;
        auto d = const_cast<Tensor&>(t).mutable_data();
        for (double& v : d) v = center + scale * rng.normal();
    }
}

std::vector<NamedTensor> params_of(const auto& layer) {
    std::vector<NamedTensor> out;
    layer.collect("p", out);
    return out;
}

double max_param_error(const std::function<Tensor()>& loss, const std::vector<NamedTensor>& params) {
    double worst = 0.0;
    for (const auto& c : check_parameter_gradients(loss, params, 1e-6, 0, 1)) worst = std::max(worst, c.rel_error);
    return worst;
}

/// Reference gate on one [H,W] slice per (batch, channel), built from the 2D oracles.
std::vector<double> gate_oracle(const Tensor& v, const Tensor& r, TransformKind kind) {
    const auto B = v.size(0), H = v.size(1), W = v.size(2), C = v.size(3);
    const auto hu = static_cast<std::size_t>(H), wu = static_cast<std::size_t>(W);
    std::vector<double> out(static_cast<std::size_t>(v.numel()));
    auto fwd = kind == TransformKind::Hartley ? oracle::dht : oracle::dct2;
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            std::vector<double> slice(hu * wu);
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < W; ++j) slice[static_cast<std::size_t>(i * W + j)] = v.at({b, i, j, c});
            auto spec = oracle::separable_2d(slice, hu, wu, fwd);
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < W; ++j) spec[static_cast<std::size_t>(i * W + j)] *= r.at({i, j, c});
            std::vector<double> back;
            if (kind == TransformKind::Hartley) {
                back = oracle::separable_2d(spec, hu, wu, oracle::dht);
                for (double& x : back) x /= static_cast<double>(H * W);
            } else {
                back = oracle::separable_2d(spec, hu, wu, oracle::dct3);
            }
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < W; ++j)
                    out[static_cast<std::size_t>(((b * H + i) * W + j) * C + c)] = back[static_cast<std::size_t>(i * W + j)];
        }
    return out;
}

LayerNorm random_norm(std::int64_t c, std::uint64_t seed) {
    LayerNorm n = make_layer_norm(c, DType::f64);
    randomize(params_of(n), seed, 0.2);
    return n;
}

}  // namespace

TEST_CASE("linear layer") {
    Rng rng(1);
    Linear l = make_linear(3, 2, true, rng, DType::f64);
    randomize(params_of(l), 2);
    const Tensor x = randn({4, 3}, 3);
    const Tensor y = linear_forward(x, l);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = l.bias.at({j});
            for (int k = 0; k < 3; ++k) acc += x.at({i, k}) * l.weight.at({k, j});
            CHECK(y.at({i, j}) == doctest::Approx(acc));
        }
}

TEST_CASE("initialization statistics") {
    Rng rng(5);
    Linear l = make_linear(200, 100, true, rng, DType::f64);
    double s2 = 0.0, mx = 0.0;
    for (double v : l.weight.data()) {
        s2 += v * v;
        mx = std::max(mx, std::abs(v));
    }
    // Truncated at two standard deviations of 0.02.
    CHECK(mx <= 0.04);
    CHECK(std::sqrt(s2 / 20000.0) == doctest::Approx(0.0176).epsilon(0.05));
    for (double v : l.bias.data()) CHECK(v == 0.0);
    const SpectralGate g = make_spectral_gate(TransformKind::Cosine, {8, 8}, 16, 2, rng, DType::f64);
    REQUIRE(g.num_groups() == 2);
    CHECK(g.groups[0].shape() == Shape{8, 8, 8});
    for (const auto& t : g.groups)
        for (double v : t.data()) CHECK(std::abs(v - 1.0) <= 0.1);
    CHECK(g.full().shape() == Shape{8, 8, 16});
}

TEST_CASE("layer norm normalizes the last axis") {
    const Tensor x = randn({3, 5, 8}, 7);
    const LayerNorm n = make_layer_norm(8, DType::f64);
    const Tensor y = layer_norm(x, n);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 5; ++b) {
            double m = 0.0, v = 0.0;
            for (int c = 0; c < 8; ++c) m += y.at({a, b, c});
            m /= 8;
            for (int c = 0; c < 8; ++c) v += (y.at({a, b, c}) - m) * (y.at({a, b, c}) - m);
            CHECK(std::abs(m) < 1e-12);
            CHECK(v / 8 == doctest::Approx(1.0).epsilon(1e-4));
        }
}

TEST_CASE("spatial gate matches the transform oracle") {
    for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
        for (std::int64_t groups : {1, 2}) {
            CAPTURE(groups);
            Rng rng(11);
            SpectralGate g = make_spectral_gate(kind, {5, 6}, 4, groups, rng, DType::f64);
            std::vector<NamedTensor> p;
            g.collect("g", p);
            randomize(p, 12);
            const Tensor v = randn({2, 5, 6, 4}, 13);
            const Tensor y = spectral_gate_forward(v, g);
            CHECK(oracle::rel_diff(y.to_vector(), gate_oracle(v, g.full(), kind)) < 1e-12);
        }
    }
}

TEST_CASE("gate parameter names") {
    Rng rng(1);
    std::vector<NamedTensor> one, two;
    make_spectral_gate(TransformKind::Hartley, {4, 4}, 4, 1, rng, DType::f64).collect("x.gate", one);
    make_spectral_gate(TransformKind::Hartley, {4, 4}, 4, 2, rng, DType::f64).collect("x.gate", two);
    REQUIRE(one.size() == 1);
    CHECK(one[0].first == "x.gate.R");
    REQUIRE(two.size() == 2);
    CHECK(two[1].first == "x.gate.R1");
}

TEST_CASE("unit gate is the identity") {
    for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
        SpectralGate g;
        g.kind = kind;
        g.groups = {Tensor::ones({4, 7, 3})};
        const Tensor v = randn({2, 4, 7, 3}, 17);
        CHECK(oracle::rel_diff(spectral_gate_forward(v, g).to_vector(), v.to_vector()) < 1e-12);
        SpectralGate s;
        s.kind = kind;
        s.groups = {Tensor::ones({9, 3})};
        const Tensor seq = randn({2, 9, 3}, 18);
        CHECK(oracle::rel_diff(sequence_spectral_gate(seq, s).to_vector(), seq.to_vector()) < 1e-12);
    }
}

TEST_CASE("sequence gate filters along the time axis") {
    Rng rng(19);
    SpectralGate g = make_spectral_gate(TransformKind::Cosine, {10}, 3, 1, rng, DType::f64);
    randomize(params_of(g), 20);
    const Tensor v = randn({2, 10, 3}, 21);
    const Tensor y = sequence_spectral_gate(v, g);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c) {
            std::vector<double> fiber;
            for (int t = 0; t < 10; ++t) fiber.push_back(v.at({b, t, c}));
            auto spec = oracle::dct2(fiber);
            for (int k = 0; k < 10; ++k) spec[static_cast<std::size_t>(k)] *= g.groups[0].at({k, c});
            const auto ref = oracle::dct3(spec);
            for (int t = 0; t < 10; ++t) CHECK(y.at({b, t, c}) == doctest::Approx(ref[static_cast<std::size_t>(t)]));
        }
}

TEST_CASE("constant sequence has only a DC coefficient") {
    const Tensor v = Tensor::full({1, 96, 2}, 3.0);
    const Tensor spec = spectral_transform(TransformKind::Hartley, v, 1, false);
    CHECK(spec.at({0, 0, 0}) == doctest::Approx(288.0));
    for (int k = 1; k < 96; ++k) CHECK(std::abs(spec.at({0, k, 1})) < 1e-10);
}

TEST_CASE("gate shape must match the input") {
    Rng rng(1);
    const SpectralGate g = make_spectral_gate(TransformKind::Hartley, {4, 4}, 8, 1, rng, DType::f64);
    try {
        spectral_gate_forward(randn({1, 4, 5, 8}, 1), g);
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("bidirectional gate averages with the flipped branch") {
    Rng rng(23);
    SpectralGate g = make_spectral_gate(TransformKind::Hartley, {4, 5}, 2, 1, rng, DType::f64);
    randomize(params_of(g), 24);
    const Tensor v = randn({1, 4, 5, 2}, 25);
    const Tensor plain = spectral_gate_forward(v, g);
    g.bidirectional = true;
    const Tensor both = spectral_gate_forward(v, g);
    g.bidirectional = false;
    const Tensor flipped = flip(flip(spectral_gate_forward(flip(flip(v, 1), 2), g), 1), 2);
    const Tensor expect = (plain + flipped) * 0.5;
    CHECK(oracle::rel_diff(both.to_vector(), expect.to_vector()) < 1e-12);
}

TEST_CASE("local conv is a zero-padded depthwise convolution") {
    Rng rng(29);
    LocalConvOp op = make_local_conv(5, 3, false, rng, DType::f64);
    randomize(params_of(op), 30);
    const Tensor v = randn({2, 6, 7, 5}, 31);
    const auto ref = oracle::depthwise(v.to_vector(), 2, 6, 7, 5, op.weight.to_vector(), 3, 3, op.bias.to_vector());
    CHECK(oracle::rel_diff(local_conv_forward(v, op).to_vector(), ref) < 1e-12);

    LocalConvOp seq = make_local_conv(4, 3, true, rng, DType::f64);
    randomize(params_of(seq), 32);
    CHECK(seq.kernel_h() == 1);
    const Tensor s = randn({2, 9, 4}, 33);
    const auto sref = oracle::depthwise(s.to_vector(), 2, 1, 9, 4, seq.weight.to_vector(), 1, 3, seq.bias.to_vector());
    CHECK(oracle::rel_diff(local_conv_forward(s, seq).to_vector(), sref) < 1e-12);
}

TEST_CASE("merge modes") {
    Rng rng(37);
    SpectralGate g = make_spectral_gate(TransformKind::Cosine, {4, 4}, 3, 1, rng, DType::f64);
    LocalConvOp c = make_local_conv(3, 3, false, rng, DType::f64);
    randomize(params_of(g), 38);
    randomize(params_of(c), 39);
    const Tensor v = randn({1, 4, 4, 3}, 40);
    const Tensor par = heracles_mix(v, g, c, MergeMode::parallel);
    const Tensor ser = heracles_mix(v, g, c, MergeMode::series);
    CHECK(oracle::rel_diff(par.to_vector(), (gelu(spectral_gate_forward(v, g)) + local_conv_forward(v, c)).to_vector()) <
          1e-12);
    CHECK(oracle::rel_diff(ser.to_vector(), local_conv_forward(gelu(spectral_gate_forward(v, g)), c).to_vector()) < 1e-12);
    CHECK(parse_merge_mode("series") == MergeMode::series);
    CHECK(to_string(MergeMode::parallel) == "parallel");
    CHECK_THROWS_AS(parse_merge_mode("both"), Error);
    CHECK(parse_activation("silu") == Activation::silu);
}

TEST_CASE("attention matches the per-head oracle") {
    Rng rng(41);
    const AttentionParams p = make_attention(8, 2, rng, DType::f64);
    randomize(params_of(p), 42, 0.4);
    const Tensor x = randn({2, 5, 8}, 43);
    const Tensor kv = randn({2, 3, 8}, 44);
    Tensor probs;
    const Tensor y = mha_forward(x, p, kv, &probs);
    REQUIRE(probs.shape() == Shape{2, 2, 5, 3});
    for (int b = 0; b < 2; ++b) {
        const Tensor xb = slice(x, 0, b, 1);
        const Tensor kb = slice(kv, 0, b, 1);
        const auto q = linear_forward(xb, p.q).to_vector();
        const auto k = linear_forward(kb, p.k).to_vector();
        const auto v = linear_forward(kb, p.v).to_vector();
        const auto heads = oracle::attention(q, k, v, 5, 3, 8, 2);
        const auto ref = linear_forward(Tensor::from({1, 5, 8}, heads), p.o).to_vector();
        CHECK(oracle::rel_diff(slice(y, 0, b, 1).to_vector(), ref) < 1e-12);
    }
    for (int t = 0; t < 5; ++t) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += probs.at({1, 1, t, j});
        CHECK(s == doctest::Approx(1.0));
    }
}

TEST_CASE("attention head divisibility") {
    Rng rng(1);
    try {
        make_attention(10, 3, rng, DType::f64);
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::HeadDivisibility);
    }
}

TEST_CASE("heracles block residual wiring") {
    Rng rng(47);
    HeraclesBlock blk;
    blk.norm1 = random_norm(4, 48);
    blk.gate = make_spectral_gate(TransformKind::Hartley, {4, 4}, 4, 1, rng, DType::f64);
    blk.conv = make_local_conv(4, 3, false, rng, DType::f64);
    blk.norm2 = random_norm(4, 49);
    blk.mlp = make_mlp(4, 2, rng, DType::f64);
    randomize(params_of(blk.mlp), 50);
    const Tensor v = randn({2, 4, 4, 4}, 51);
    const Tensor u = v + heracles_mix(layer_norm(v, blk.norm1), blk.gate, blk.conv, blk.mode, blk.act);
    const Tensor z = u + mlp_forward(layer_norm(u, blk.norm2), blk.mlp);
    CHECK(oracle::rel_diff(heracles_block_forward(v, blk).to_vector(), z.to_vector()) < 1e-12);
}

TEST_CASE("attention block with token reduction") {
    Rng rng(53);
    AttentionBlock blk;
    blk.norm1 = random_norm(8, 54);
    blk.attn = make_attention(8, 2, rng, DType::f64);
    blk.reduction = make_spatial_reduction(8, 2, rng, DType::f64);
    blk.norm2 = random_norm(8, 55);
    blk.mlp = make_mlp(8, 2, rng, DType::f64);
    const Tensor v = randn({1, 4, 6, 8}, 56);
    const Tensor y = attention_block_forward(v, blk);
    CHECK(y.shape() == v.shape());
    const Tensor tokens = reshape(v, {1, 24, 8});
    const Tensor n = layer_norm(tokens, blk.norm1);
    const Tensor red = conv_forward(reshape(n, v.shape()), blk.reduction.conv);
    CHECK(red.shape() == Shape{1, 2, 3, 8});
    const Tensor kv = layer_norm(reshape(red, {1, 6, 8}), blk.reduction.norm);
    const Tensor u = tokens + mha_forward(n, blk.attn, kv);
    const Tensor z = u + mlp_forward(layer_norm(u, blk.norm2), blk.mlp);
    CHECK(oracle::rel_diff(y.to_vector(), reshape(z, v.shape()).to_vector()) < 1e-12);
    try {
        attention_block_forward(randn({1, 5, 6, 8}, 57), blk);
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::IndivisibleSpatial);
    }
}

TEST_CASE("stem and downsample shapes") {
    Rng rng(59);
    const PatchEmbed stem = make_patch_embed(3, 8, rng, DType::f64);
    CHECK(patch_embed(randn({2, 16, 12, 3}, 60), stem).shape() == Shape{2, 4, 3, 8});
    CHECK_THROWS_AS(patch_embed(randn({1, 10, 12, 3}, 61), stem), Error);
    const Conv2d down = make_downsample(8, 16, rng, DType::f64);
    CHECK(downsample(randn({1, 4, 6, 8}, 62), down).shape() == Shape{1, 2, 3, 16});
}

TEST_CASE("spectral transform gradients for both kinds and directions") {
    const Tensor x = randn({2, 6, 3}, 63);
    for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
        for (bool inverse : {false, true}) {
            CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(spectral_transform(kind, t, 1, inverse), 4); },
                                   x) < 1e-8);
        }
    }
}

TEST_CASE("block gradients match central differences") {
    Rng rng(67);
    const Tensor map = randn({2, 4, 4, 4}, 68);
    const Tensor seq = randn({2, 6, 4}, 69);

    SUBCASE("spectral gate, both kinds") {
        for (auto kind : {TransformKind::Hartley, TransformKind::Cosine}) {
            SpectralGate g = make_spectral_gate(kind, {4, 4}, 4, 2, rng, DType::f64);
            const auto p = params_of(g);
            CHECK(max_param_error([&] { return probe_loss(spectral_gate_forward(map, g), 5); }, p) < 1e-6);
            CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(spectral_gate_forward(t, g), 5); }, map) <
                  1e-6);
            SpectralGate s = make_spectral_gate(kind, {6}, 4, 1, rng, DType::f64);
            CHECK(max_param_error([&] { return probe_loss(sequence_spectral_gate(seq, s), 5); }, params_of(s)) < 1e-6);
        }
    }
    SUBCASE("local conv") {
        LocalConvOp op = make_local_conv(4, 3, false, rng, DType::f64);
        CHECK(max_param_error([&] { return probe_loss(local_conv_forward(map, op), 6); }, params_of(op)) < 1e-6);
        CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(local_conv_forward(t, op), 6); }, map) < 1e-6);
    }
    SUBCASE("merge, both modes") {
        SpectralGate g = make_spectral_gate(TransformKind::Cosine, {4, 4}, 4, 1, rng, DType::f64);
        LocalConvOp op = make_local_conv(4, 3, false, rng, DType::f64);
        auto p = params_of(g);
        for (const auto& e : params_of(op)) p.push_back(e);
        for (auto mode : {MergeMode::parallel, MergeMode::series}) {
            CHECK(max_param_error([&] { return probe_loss(heracles_mix(map, g, op, mode), 7); }, p) < 1e-6);
        }
    }
    SUBCASE("mlp and norm") {
        Mlp mlp = make_mlp(4, 2, rng, DType::f64);
        CHECK(max_param_error([&] { return probe_loss(mlp_forward(seq, mlp), 8); }, params_of(mlp)) < 1e-6);
        LayerNorm n = random_norm(4, 70);
        CHECK(max_param_error([&] { return probe_loss(layer_norm(seq, n), 8); }, params_of(n)) < 1e-6);
        CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(layer_norm(t, n), 8); }, seq) < 1e-6);
    }
    SUBCASE("attention") {
        AttentionParams a = make_attention(4, 2, rng, DType::f64);
        randomize(params_of(a), 71, 0.4);
        // Softmax ignores a shift shared by all keys, so the key bias gets an exact zero gradient.
        std::vector<NamedTensor> p;
        for (const auto& e : params_of(a))
            if (e.first != "p.k.bias") p.push_back(e);
        CHECK(max_param_error([&] { return probe_loss(mha_forward(seq, a), 9); }, p) < 1e-6);
        const Tensor kb = a.k.bias;
        a.k.bias = kb.detach();
        const Tensor g = testing_support::tape_grad(
            [&](const Tensor& b) {
                a.k.bias = b;
                return probe_loss(mha_forward(seq, a), 9);
            },
            kb);
        a.k.bias = kb;
        for (double v : g.to_vector()) CHECK(std::abs(v) < 1e-12);
        CHECK(input_grad_error([&](const Tensor& t) { return probe_loss(mha_forward(t, a), 9); }, seq) < 1e-6);
    }
}
