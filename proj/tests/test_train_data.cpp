#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "heracles/losses.hpp"
#include "heracles/tensor_io.hpp"
#include "heracles/train.hpp"
#include "support/check.hpp"

using namespace heracles;
using testing_support::randn;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a throw");
    return Errc::BadInput;
}

std::pair<std::size_t, std::size_t> parse_error_at(const std::string& csv) {
    try {
        parse_timeseries_csv(csv);
    } catch (const ParseError& e) {
        return {e.row(), e.col()};
    }
    FAIL("expected a ParseError");
    return {};
}

std::string series_csv(std::int64_t rows) {
    std::string s = "date,a,b\n";
    for (std::int64_t i = 0; i < rows; ++i)
        s += "t" + std::to_string(i) + "," + std::to_string(i) + "," + std::to_string(i * i % 7) + "\n";
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("heracles_test_" + name)).string();
}

}  // namespace

TEST_CASE("csv parsing") {
    const SeriesDataset ds = parse_timeseries_csv(series_csv(20));
    CHECK(ds.rows() == 20);
    CHECK(ds.channels() == 2);
    CHECK(ds.columns == std::vector<std::string>{"a", "b"});
    CHECK(ds.timestamps[3] == "t3");
    CHECK(ds.values.at({5, 0}) == 5.0);
    CHECK(ds.train_end == 14);
    CHECK(ds.val_end == 16);
}

TEST_CASE("csv errors carry 0-based data row and column") {
    CHECK(parse_error_at("date,a,b\nx,1,2\ny,1,oops\n") == std::pair<std::size_t, std::size_t>{1, 2});
    CHECK(parse_error_at("date,a,b\nx,bad,2\n") == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(parse_error_at("date,a,b\nx,1,2\ny,1\n").first == 1);
    CHECK(code_of([] { parse_timeseries_csv(""); }) == Errc::TooFewRows);
    CHECK(code_of([] { parse_timeseries_csv("date,a\nx,1\n"); }) == Errc::TooFewRows);
}

TEST_CASE("standardization uses train rows only") {
    const SeriesDataset ds = parse_timeseries_csv(series_csv(20));
    const NormStats st = compute_stats(ds);
    CHECK(st.mean[0] == doctest::Approx(6.5));  // rows 0..13
    double var = 0.0;
    for (int i = 0; i < 14; ++i) var += (i - 6.5) * (i - 6.5);
    CHECK(st.std[0] == doctest::Approx(std::sqrt(var / 14)));
    const SeriesDataset z = standardize(ds);
    CHECK(z.standardized);
    double m = 0.0;
    for (int i = 0; i < 14; ++i) m += z.values.at({i, 0});
    CHECK(std::abs(m) < 1e-12);
    CHECK(z.values.at({19, 0}) == doctest::Approx((19 - 6.5) / st.std[0]));
    const Tensor back = destandardize(z.values, z.stats);
    for (int i = 0; i < 20; ++i) CHECK(back.at({i, 1}) == doctest::Approx(ds.values.at({i, 1})));
}

TEST_CASE("constant channel") {
    std::string s = "date,a,b\n";
    for (int i = 0; i < 20; ++i) s += "t," + std::to_string(i) + ",4\n";
    CHECK(code_of([&] { standardize(parse_timeseries_csv(s)); }) == Errc::ConstantChannel);
}

TEST_CASE("windows stay inside their split") {
    const SeriesDataset ds = standardize(make_series(make_sinusoid_series(200, 2, 1)));
    CHECK(ds.train_end == 140);
    CHECK(ds.val_end == 160);
    const WindowSet train = make_windows(ds, 16, 8, Split::train);
    CHECK(train.size() == 140 - 24 + 1);
    CHECK(train.start(train.size() - 1) + 24 == ds.train_end);
    const WindowSet val = make_windows(ds, 12, 8, Split::val);
    CHECK(val.size() == 1);
    CHECK(val.start(0) == 140);
    const WindowSet test = make_windows(ds, 16, 8, Split::test, 4);
    for (std::int64_t i = 0; i < test.size(); ++i) {
        CHECK(test.start(i) >= ds.val_end);
        CHECK(test.start(i) + 24 <= ds.rows());
    }
    const WindowBatch b = train.gather({0, 5});
    CHECK(b.x.shape() == Shape{2, 16, 2});
    CHECK(b.y.shape() == Shape{2, 8, 2});
    CHECK(b.x.at({1, 0, 1}) == ds.values.at({5, 1}));
    CHECK(b.y.at({1, 0, 1}) == ds.values.at({21, 1}));
    CHECK(code_of([&] { make_windows(ds, 16, 8, Split::val); }) == Errc::WindowTooLong);
}

TEST_CASE("texture dataset and classification split") {
    const ClassifyData d = make_texture_dataset(100, 16, 3);
    CHECK(d.images.shape() == Shape{100, 16, 16, 3});
    std::int64_t ones = 0;
    for (auto l : d.labels) ones += l;
    CHECK(ones == 50);
    const auto [train, val] = split_classify(d, 0.2);
    CHECK(train.size() == 80);
    CHECK(val.size() == 20);
    CHECK(val.images.at({0, 3, 4, 1}) == d.images.at({80, 3, 4, 1}));
    CHECK(val.labels[0] == d.labels[80]);
    const ClassifyData again = make_texture_dataset(100, 16, 3);
    CHECK(again.images.to_vector() == d.images.to_vector());
}

TEST_CASE("tensor file round trip is bit exact") {
    TensorFile f;
    f.tensors.emplace_back("a", randn({3, 4}, 1));
    f.tensors.emplace_back("b", randn({5}, 2, DType::f32));
    f.tensors.emplace_back("scalar", Tensor::from({}, {-0.0}));
    f.blobs.emplace_back("__config", std::string("x=1\n\0y", 7));
    const std::string bytes = encode_tensor_file(f);
    CHECK(bytes.substr(0, 4) == "HTEN");
    const TensorFile g = decode_tensor_file(bytes);
    REQUIRE(g.tensors.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g.tensors[i].first == f.tensors[i].first);
        CHECK(g.tensors[i].second.dtype() == f.tensors[i].second.dtype());
        CHECK(g.tensors[i].second.shape() == f.tensors[i].second.shape());
        const auto x = f.tensors[i].second.to_vector(), y = g.tensors[i].second.to_vector();
        CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    }
    REQUIRE(g.find_blob("__config") != nullptr);
    CHECK(*g.find_blob("__config") == f.blobs[0].second);
    CHECK(g.find("missing") == nullptr);
    CHECK(encode_tensor_file(g) == bytes);
}

TEST_CASE("tensor file corruption") {
    TensorFile f;
    f.tensors.emplace_back("w", randn({4}, 3));
    const std::string bytes = encode_tensor_file(f);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK(code_of([&] { decode_tensor_file(bad); }) == Errc::BadMagic);
    bad = bytes;
    bad[4] = 2;
    CHECK(code_of([&] { decode_tensor_file(bad); }) == Errc::UnsupportedVersion);
    CHECK(code_of([&] { decode_tensor_file(bytes.substr(0, bytes.size() - 3)); }) == Errc::TruncatedFile);
    CHECK(code_of([&] { decode_tensor_file(bytes.substr(0, 20)); }) == Errc::TruncatedFile);
    bad = bytes;
    bad[bytes.size() - 12] ^= 0x01;
    CHECK(code_of([&] { decode_tensor_file(bad); }) == Errc::ChecksumMismatch);
    const auto* p = reinterpret_cast<const std::uint8_t*>("a");
    CHECK(fnv1a64(p, 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(code_of([] { load_tensor_file(temp_path("does_not_exist.hten")); }) == Errc::Io);
}

TEST_CASE("losses") {
    const Tensor logits = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 0.5, 0.5, 0.5});
    const double ce = cross_entropy(logits, {2, 0}).item();
    const double ref = 0.5 * ((std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0) + std::log(3.0));
    CHECK(ce == doctest::Approx(ref));
    CHECK(cross_entropy(Tensor::from({1, 2}, {20.0, 0.0}), {0}).item() < 1e-6);
    CHECK(cross_entropy(Tensor::from({1, 2}, {20.0, 0.0}), {0}).item() >= 0.0);
    CHECK(std::isfinite(cross_entropy(Tensor::from({1, 2}, {1000.0, -1000.0}), {1}).item()));
    CHECK(code_of([&] { cross_entropy(logits, {3, 0}); }) == Errc::LabelOutOfRange);
    CHECK(mse(Tensor::from({2}, {1, 3}), Tensor::from({2}, {0, 0})).item() == 5.0);
    CHECK(mae(Tensor::from({2}, {1, -3}), Tensor::from({2}, {0, 0})).item() == 2.0);

    const Tensor many = randn({50, 10}, 4);
    std::vector<std::int64_t> labels;
    for (int i = 0; i < 50; ++i) labels.push_back(i % 10);
    const double top1 = topk_accuracy(many, labels, 1), top5 = topk_accuracy(many, labels, 5);
    CHECK(top5 >= top1);
    CHECK(topk_accuracy(many, labels, 10) == 1.0);
    // Ties go to the lower index.
    CHECK(topk_accuracy(logits, {0, 0}, 1) == 0.5);
    CHECK(code_of([] { topk_accuracy(Tensor::zeros({0, 3}), {}, 1); }) == Errc::EmptySplit);
}

TEST_CASE("learning rate schedule") {
    CHECK(lr_schedule(0, 10, 100, 1.0) == doctest::Approx(0.1));
    CHECK(lr_schedule(9, 10, 100, 1.0) == doctest::Approx(1.0));
    CHECK(lr_schedule(55, 10, 100, 1.0) == doctest::Approx(0.5));
    CHECK(lr_schedule(100, 10, 100, 1.0) == doctest::Approx(0.0));
    CHECK(lr_schedule(0, 0, 100, 2.0) == doctest::Approx(2.0));
    for (std::int64_t s = 10; s < 100; ++s) CHECK(lr_schedule(s + 1, 10, 100, 1.0) <= lr_schedule(s, 10, 100, 1.0));
}

TEST_CASE("gradient clipping") {
    std::vector<Tensor> g = {Tensor::from({2}, {3.0, 0.0}), Tensor::from({1}, {4.0})};
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0].at({0}) == doctest::Approx(0.6));
    CHECK(g[1].at({0}) == doctest::Approx(0.8));
    std::vector<Tensor> small = {Tensor::from({1}, {0.5})};
    clip_grad_norm(small, 1.0);
    CHECK(small[0].at({0}) == 0.5);
}

TEST_CASE("adamw step") {
    CHECK(decays("stage1.block1.mlp.fc1.weight"));
    CHECK_FALSE(decays("stage1.block1.mlp.fc1.bias"));
    CHECK_FALSE(decays("norm.gamma"));
    CHECK_FALSE(decays("norm.beta"));

    std::vector<NamedTensor> p = {{"w.weight", Tensor::from({2}, {1.0, -2.0})}};
    OptimState st = OptimState::for_params(p);
    AdamWHyper h;
    h.weight_decay = 0.1;
    CHECK(optimizer_step(p, {Tensor::from({2}, {0.5, -0.25})}, st, h, 0.01) == StepResult::applied);
    // First step: m_hat/sqrt(v_hat) = sign(g).
    CHECK(p[0].second.at({0}) == doctest::Approx(1.0 * (1 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8)));
    CHECK(p[0].second.at({1}) == doctest::Approx(-2.0 * (1 - 0.001) + 0.01));
    CHECK(st.step == 1);

    const auto before = p[0].second.to_vector();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Tensor bad = Tensor::from({2}, {0.0, 1.0});
    bad.mutable_data()[0] = nan;
    CHECK(optimizer_step(p, {bad}, st, h, 0.01) == StepResult::skipped_nonfinite);
    CHECK(p[0].second.to_vector() == before);
    CHECK(st.step == 1);
}

TEST_CASE("forecaster training is deterministic and loss falls") {
    ModelConfig cfg = preset_config("toy-forecast");
    const SeriesDataset ds = standardize(make_series(make_sinusoid_series(600, 1, 11)));
    const WindowSet train = make_windows(ds, 24, 24, Split::train);
    const WindowSet val = make_windows(ds, 24, 24, Split::val);
    TrainHyper h;
    h.epochs = 5;
    h.max_steps = 200;
    h.batch_size = 8;
    h.lr = 3e-3;
    h.seed = 5;
    Model a = build_model(cfg, 1);
    const History ha = train_forecaster(a, train, val, h);
    Model b = build_model(cfg, 1);
    const History hb = train_forecaster(b, train, val, h);
    REQUIRE(ha.steps.size() == 200);
    for (std::size_t i = 0; i < ha.steps.size(); ++i) CHECK(ha.steps[i].loss == hb.steps[i].loss);
    for (std::size_t i = 0; i < a.registry.size(); ++i)
        CHECK(a.registry[i].second.to_vector() == b.registry[i].second.to_vector());

    std::vector<double> windows;
    for (std::size_t w = 0; w < 4; ++w) {
        double s = 0.0;
        for (std::size_t i = w * 50; i < (w + 1) * 50; ++i) s += ha.steps[i].loss;
        windows.push_back(s / 50);
    }
    for (std::size_t w = 1; w < windows.size(); ++w) CHECK(windows[w] <= windows[w - 1]);

    CHECK(ha.epochs.back().steps == 200);
    CHECK(ha.best_epoch >= 1);
    CHECK(metric(ha.epochs.back().val, "mse") == doctest::Approx(evaluate_forecaster(a, val)[0].second));
    CHECK(repeat_last_mse(val) > 0.0);
}

TEST_CASE("stop rule ends training after the epoch") {
    const auto [train, val] = split_classify(make_texture_dataset(40, 16, 2), 0.25);
    Model m = build_model(preset_config("toy-spectral"), 1);
    TrainHyper h;
    h.epochs = 5;
    h.batch_size = 10;
    h.eval_train = true;
    const History hist = train_classifier(m, train, val, h, [](const EpochRecord& r) { return r.epoch == 2; });
    CHECK(hist.epochs.size() == 2);
    CHECK(hist.steps.size() == 6);
    CHECK(hist.epochs[0].train.size() == 3);
    CHECK(metric(hist.epochs[0].val, "top5") == 1.0);
    CHECK(code_of([&] { metric(hist.epochs[0].val, "f1"); }) == Errc::BadInput);
}

TEST_CASE("checkpoint round trip") {
    const Model m = build_model(preset_config("toy-hybrid"), 9);
    const std::string path = temp_path("ckpt.hten");
    save_checkpoint(path, m);
    const Model r = load_checkpoint(path);
    CHECK(r.config == m.config);
    REQUIRE(r.registry.size() == m.registry.size());
    for (std::size_t i = 0; i < m.registry.size(); ++i)
        CHECK(r.registry[i].second.to_vector() == m.registry[i].second.to_vector());
    const TensorFile raw = load_tensor_file(path);
    REQUIRE(raw.find_blob("__config") != nullptr);
    CHECK(*raw.find_blob("__config") == serialize_config(m.config));
    std::filesystem::remove(path);
}
