#include "heracles/tensor.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace heracles {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NonFinite: return "NonFinite";
        case Errc::InvalidAxis: return "InvalidAxis";
        case Errc::NotScalarLoss: return "NotScalarLoss";
        case Errc::DetachedTensor: return "DetachedTensor";
        case Errc::NonFiniteEvaluation: return "NonFiniteEvaluation";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::SingularMatrix: return "SingularMatrix";
        case Errc::HeadDivisibility: return "HeadDivisibility";
        case Errc::IndivisibleSpatial: return "IndivisibleSpatial";
        case Errc::UnknownPreset: return "UnknownPreset";
        case Errc::ConfigInvariantViolated: return "ConfigInvariantViolated";
        case Errc::ParseError: return "ParseError";
        case Errc::TooFewRows: return "TooFewRows";
        case Errc::ConstantChannel: return "ConstantChannel";
        case Errc::WindowTooLong: return "WindowTooLong";
        case Errc::BadMagic: return "BadMagic";
        case Errc::UnsupportedVersion: return "UnsupportedVersion";
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::ChecksumMismatch: return "ChecksumMismatch";
        case Errc::LabelOutOfRange: return "LabelOutOfRange";
        case Errc::EmptySplit: return "EmptySplit";
        case Errc::ConfigMismatch: return "ConfigMismatch";
        case Errc::ToleranceExceeded: return "ToleranceExceeded";
        case Errc::NoSpectralGates: return "NoSpectralGates";
        case Errc::BadInput: return "BadInput";
        case Errc::UnsupportedRank: return "UnsupportedRank";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto extent : shape) {
        if (extent < 0) throw Error(Errc::ShapeMismatch, "negative extent in " + shape_str(shape));
        n *= extent;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

DType promote(DType a, DType b) { return (a == DType::f64 || b == DType::f64) ? DType::f64 : DType::f32; }

namespace {

void round_to(std::vector<double>& values, DType dtype) {
    if (dtype == DType::f32) {
        for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
    }
}

void check_finite(const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw Error(Errc::NonFinite, "tensor contains a non-finite value");
    }
}

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dtype) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw Error(Errc::ShapeMismatch,
                    "shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) + " values");
    }
    round_to(values, dtype);
    check_finite(values);
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->storage = std::make_shared<std::vector<double>>(std::move(values));
    impl->dtype = dtype;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }
Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    auto n = static_cast<std::size_t>(shape_numel(shape));
    return from(std::move(shape), std::vector<double>(n, value), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return from({}, {value}, dtype); }
Tensor Tensor::zeros_like(const Tensor& other) { return zeros(other.shape(), other.dtype()); }
Tensor Tensor::ones_like(const Tensor& other) { return ones(other.shape(), other.dtype()); }

const Shape& Tensor::shape() const {
    if (!impl_) throw Error(Errc::BadInput, "undefined tensor");
    return impl_->shape;
}

std::int64_t Tensor::size(std::int64_t axis) const {
    auto d = dim();
    if (axis < 0) axis += d;
    if (axis < 0 || axis >= d) throw Error(Errc::InvalidAxis, "axis " + std::to_string(axis) + " for " + shape_str(shape()));
    return impl_->shape[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

DType Tensor::dtype() const {
    if (!impl_) throw Error(Errc::BadInput, "undefined tensor");
    return impl_->dtype;
}

std::span<const double> Tensor::data() const {
    if (!impl_) throw Error(Errc::BadInput, "undefined tensor");
    return {impl_->storage->data(), impl_->storage->size()};
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) throw Error(Errc::BadInput, "undefined tensor");
    return {impl_->storage->data(), impl_->storage->size()};
}

std::vector<double> Tensor::to_vector() const {
    auto d = data();
    return {d.begin(), d.end()};
}

double Tensor::item() const {
    if (numel() != 1) throw Error(Errc::ShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
    return (*impl_->storage)[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw Error(Errc::InvalidAxis, "index rank mismatch for " + shape_str(s));
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= s[axis]) throw Error(Errc::InvalidAxis, "index out of range for " + shape_str(s));
        flat = flat * s[axis] + i;
        ++axis;
    }
    return (*impl_->storage)[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
    if (!impl_) throw Error(Errc::BadInput, "undefined tensor");
    impl_->requires_grad = flag;
    return *this;
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape();
    impl->storage = impl_->storage;
    impl->dtype = impl_->dtype;
    return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape();
    impl->storage = std::make_shared<std::vector<double>>(*impl_->storage);
    impl->dtype = impl_->dtype;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::to(DType dtype) const {
    if (dtype == this->dtype()) return *this;
    return from(shape(), to_vector(), dtype);
}

std::int64_t Tensor::node_id() const { return impl_ ? impl_->node : -1; }
std::uint64_t Tensor::tape_id() const { return impl_ ? impl_->tape_id : 0; }

// ---------------------------------------------------------------------------

Tensor Gradients::of(const Tensor& leaf) const {
    auto it = grads_.find(leaf.impl());
    if (it == grads_.end()) return Tensor::zeros_like(leaf);
    return it->second.grad;
}

bool Gradients::reached(const Tensor& leaf) const { return grads_.count(leaf.impl()) != 0; }

namespace {

Tensor add_raw(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw Error(Errc::ShapeMismatch, "gradient accumulation " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return Tensor::from(a.shape(), std::move(out), promote(a.dtype(), b.dtype()));
}

}  // namespace

void Gradients::accumulate(const std::shared_ptr<detail::TensorImpl>& leaf, const Tensor& grad) {
    auto it = grads_.find(leaf.get());
    if (it == grads_.end()) {
        if (grad.shape() != leaf->shape) {
            throw Error(Errc::ShapeMismatch,
                        "leaf gradient " + shape_str(grad.shape()) + " for leaf " + shape_str(leaf->shape));
        }
        grads_.emplace(leaf.get(), Entry{leaf, grad.to(leaf->dtype)});
    } else {
        it->second.grad = add_raw(it->second.grad, grad).to(leaf->dtype);
    }
}

// ---------------------------------------------------------------------------

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

std::mutex g_fault_mutex;
std::map<std::string, double, std::less<>> g_faults;

double fault_scale(std::string_view op) {
    std::lock_guard<std::mutex> lock(g_fault_mutex);
    if (g_faults.empty()) return 1.0;
    auto it = g_faults.find(op);
    return it == g_faults.end() ? 1.0 : it->second;
}

Tensor scale_raw(const Tensor& t, double s) {
    auto v = t.to_vector();
    for (auto& x : v) x *= s;
    return Tensor::from(t.shape(), std::move(v), t.dtype());
}

}  // namespace

void set_gradient_fault(const std::string& op, double scale) {
    std::lock_guard<std::mutex> lock(g_fault_mutex);
    if (scale == 1.0) {
        g_faults.erase(op);
    } else {
        g_faults[op] = scale;
    }
}

void clear_gradient_faults() {
    std::lock_guard<std::mutex> lock(g_fault_mutex);
    g_faults.clear();
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tape* Tape::active() noexcept { return g_active_tape; }

Tensor Tape::record(const char* op, Tensor out, std::initializer_list<Tensor> inputs, BackwardFn backward) {
    return record(op, std::move(out), std::vector<Tensor>(inputs), std::move(backward));
}

Tensor Tape::record(const char* op, Tensor out, const std::vector<Tensor>& inputs, BackwardFn backward) {
    Tape* tape = g_active_tape;
    if (tape == nullptr) return out;
    std::vector<Input> recorded;
    recorded.reserve(inputs.size());
    bool tracked = false;
    for (const auto& t : inputs) {
        Input in;
        if (t.defined()) {
            const auto* impl = t.impl();
            if (impl->node >= 0 && impl->tape_id == tape->id_) {
                in.node = impl->node;
                tracked = true;
            } else if (impl->requires_grad && impl->node < 0) {
                in.leaf = t.impl_ptr();
                tracked = true;
            }
        }
        recorded.push_back(std::move(in));
    }
    if (!tracked) return out;
    auto impl = out.impl_ptr();
    impl->node = static_cast<std::int64_t>(tape->nodes_.size());
    impl->tape_id = tape->id_;
    tape->nodes_.push_back(Node{op, std::move(recorded), std::move(backward), impl->shape, impl->dtype});
    return out;
}

Gradients Tape::backward(const Tensor& loss) const {
    if (!loss.defined() || loss.numel() != 1) {
        throw Error(Errc::NotScalarLoss, "loss must be a single-element tensor");
    }
    if (loss.node_id() < 0 || loss.tape_id() != id_) {
        throw Error(Errc::DetachedTensor, "loss was not recorded on this tape");
    }
    NoGradGuard no_grad;
    Gradients result;
    std::vector<Tensor> grads(nodes_.size());
    auto root = static_cast<std::size_t>(loss.node_id());
    grads[root] = Tensor::ones(nodes_[root].shape, nodes_[root].dtype);
    for (std::size_t i = root + 1; i-- > 0;) {
        if (!grads[i].defined()) continue;
        const Node& node = nodes_[i];
        auto input_grads = node.backward(grads[i]);
        grads[i] = Tensor();
        double scale = fault_scale(node.op);
        for (std::size_t j = 0; j < node.inputs.size() && j < input_grads.size(); ++j) {
            Tensor g = input_grads[j];
            if (!g.defined()) continue;
            if (scale != 1.0) g = scale_raw(g, scale);
            const Input& in = node.inputs[j];
            if (in.node >= 0) {
                auto k = static_cast<std::size_t>(in.node);
                grads[k] = grads[k].defined() ? add_raw(grads[k], g) : g;
            } else if (in.leaf) {
                result.accumulate(in.leaf, g);
            }
        }
    }
    return result;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = previous_; }

}  // namespace heracles
