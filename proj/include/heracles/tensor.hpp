#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "heracles/error.hpp"

namespace heracles {

/// Storage precision. Values are held as doubles; f32 tensors round every
/// produced value to the nearest float, so an f32 tensor always holds
/// exactly-representable floats and serializes bit-exactly.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
DType promote(DType a, DType b);

class Tape;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::shared_ptr<std::vector<double>> storage;
    DType dtype = DType::f64;
    bool requires_grad = false;
    std::int64_t node = -1;      // index into the recording tape, -1 when untracked
    std::uint64_t tape_id = 0;   // identity of the tape that owns `node`
};

}  // namespace detail

/// Dense row-major real tensor. Copies are cheap handles; the element buffer
/// is shared and treated as immutable except through `mutable_data()`, which
/// only the optimizer uses on leaf parameters between steps.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, DType dtype = DType::f64);
    static Tensor zeros(Shape shape, DType dtype = DType::f64);
    static Tensor ones(Shape shape, DType dtype = DType::f64);
    static Tensor full(Shape shape, double value, DType dtype = DType::f64);
    static Tensor scalar(double value, DType dtype = DType::f64);
    static Tensor zeros_like(const Tensor& other);
    static Tensor ones_like(const Tensor& other);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim() const { return static_cast<std::int64_t>(shape().size()); }
    std::int64_t size(std::int64_t axis) const;
    std::int64_t numel() const;
    DType dtype() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    std::vector<double> to_vector() const;
    double item() const;
    double at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag = true);
    /// Same values, new handle, never on a tape.
    Tensor detach() const;
    /// Deep copy with a fresh buffer.
    Tensor clone() const;
    /// Converts precision; a no-op handle copy when already `dtype`.
    Tensor to(DType dtype) const;

    std::int64_t node_id() const;
    std::uint64_t tape_id() const;

    const detail::TensorImpl* impl() const noexcept { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const noexcept { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Gradients of a backward pass keyed by leaf identity.
class Gradients {
public:
    /// Gradient of `leaf`; zeros of matching shape when the loss does not reach it.
    Tensor of(const Tensor& leaf) const;
    bool reached(const Tensor& leaf) const;
    void accumulate(const std::shared_ptr<detail::TensorImpl>& leaf, const Tensor& grad);
    std::size_t size() const { return grads_.size(); }

private:
    struct Entry {
        std::shared_ptr<detail::TensorImpl> leaf;
        Tensor grad;
    };
    std::unordered_map<const detail::TensorImpl*, Entry> grads_;
};

using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

/// Ordered record of differentiable ops. Nodes are appended as ops execute,
/// so every node's inputs precede it. A tape is single-owner; activate it for
/// the current thread with `TapeScope`.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const noexcept { return id_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::string_view op_name(std::size_t node) const { return nodes_.at(node).op; }

    /// Reverse-mode accumulation from a scalar loss recorded on this tape.
    Gradients backward(const Tensor& loss) const;

    /// Tape recording ops on the current thread, or nullptr.
    static Tape* active() noexcept;

    /// Records `out` as produced by `op` from `inputs` when any input is tracked.
    /// Returns `out`, tagged with a node id if recorded.
    static Tensor record(const char* op, Tensor out, std::initializer_list<Tensor> inputs, BackwardFn backward);
    static Tensor record(const char* op, Tensor out, const std::vector<Tensor>& inputs, BackwardFn backward);

private:
    friend class TapeScope;
    friend class NoGradGuard;

    struct Input {
        std::int64_t node = -1;
        std::shared_ptr<detail::TensorImpl> leaf;
    };
    struct Node {
        const char* op;
        std::vector<Input> inputs;
        BackwardFn backward;
        Shape shape;
        DType dtype;
    };

    std::uint64_t id_;
    std::vector<Node> nodes_;
};

/// Makes `tape` the recording tape for this thread while in scope.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Suspends recording while in scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* previous_;
};

/// Test hook: scales the gradient produced by every recorded op named `op`.
/// Used by negative-control tests of the gradient checker. Scale 1 clears it.
void set_gradient_fault(const std::string& op, double scale);
void clear_gradient_faults();

}  // namespace heracles
