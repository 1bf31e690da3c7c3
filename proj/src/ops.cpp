#include "heracles/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemm.hpp"
#include "heracles/parallel.hpp"

namespace heracles {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor make(Shape shape, std::vector<double> values, DType dtype) {
    return Tensor::from(std::move(shape), std::move(values), dtype);
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw Error(Errc::InvalidAxis, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return axis;
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// Strides of `in` laid over `out` (zero on broadcast axes).
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::int64_t> result(out.size(), 0);
    auto in_strides = strides_of(in);
    std::size_t offset = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        result[offset + i] = in[i] == 1 ? 0 : in_strides[i];
    }
    return result;
}

/// Calls fn(out_index, a_index, b_index) for every element of `out`.
template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
    const std::int64_t n = shape_numel(out);
    if (a == out && b == out) {
        for (std::int64_t i = 0; i < n; ++i) fn(i, i, i);
        return;
    }
    auto sa = broadcast_strides(a, out);
    auto sb = broadcast_strides(b, out);
    const std::size_t rank = out.size();
    if (rank == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<std::int64_t> counter(rank, 0);
    std::int64_t ia = 0;
    std::int64_t ib = 0;
    const std::int64_t inner = out[rank - 1];
    const std::int64_t inner_sa = sa[rank - 1];
    const std::int64_t inner_sb = sb[rank - 1];
    for (std::int64_t i = 0; i < n; i += inner) {
        for (std::int64_t j = 0; j < inner; ++j) fn(i + j, ia + j * inner_sa, ib + j * inner_sb);
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++counter[d];
            ia += sa[d];
            ib += sb[d];
            if (counter[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            counter[d] = 0;
        }
    }
}

template <typename Fn>
Tensor map_unary(const Tensor& a, Fn&& fn) {
    auto src = a.data();
    std::vector<double> out(src.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(src[i]);
    return make(a.shape(), std::move(out), a.dtype());
}

/// Unary op whose derivative is a function of the input value.
template <typename F, typename D>
Tensor unary_op(const char* name, const Tensor& a, F&& f, D&& df) {
    Tensor out = map_unary(a, f);
    return Tape::record(name, out, {a}, [a, df](const Tensor& g) -> std::vector<Tensor> {
        auto x = a.data();
        auto gd = g.data();
        std::vector<double> r(x.size());
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = gd[i] * df(x[i]);
        return {make(a.shape(), std::move(r), a.dtype())};
    });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

enum class Binary { add, sub, mul, div };

Tensor binary_forward(Binary op, const Tensor& a, const Tensor& b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
    auto ad = a.data();
    auto bd = b.data();
    switch (op) {
        case Binary::add:
            for_each_broadcast(out_shape, a.shape(), b.shape(),
                               [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = ad[ia] + bd[ib]; });
            break;
        case Binary::sub:
            for_each_broadcast(out_shape, a.shape(), b.shape(),
                               [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = ad[ia] - bd[ib]; });
            break;
        case Binary::mul:
            for_each_broadcast(out_shape, a.shape(), b.shape(),
                               [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = ad[ia] * bd[ib]; });
            break;
        case Binary::div:
            for_each_broadcast(out_shape, a.shape(), b.shape(),
                               [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { out[i] = ad[ia] / bd[ib]; });
            break;
    }
    return make(std::move(out_shape), std::move(out), promote(a.dtype(), b.dtype()));
}

Tensor binary_op(Binary op, const char* name, const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward(op, a, b);
    return Tape::record(name, out, {a, b}, [op, a, b](const Tensor& g) -> std::vector<Tensor> {
        switch (op) {
            case Binary::add: return {sum_to(g, a.shape()).to(a.dtype()), sum_to(g, b.shape()).to(b.dtype())};
            case Binary::sub: return {sum_to(g, a.shape()).to(a.dtype()), sum_to(neg(g), b.shape()).to(b.dtype())};
            case Binary::mul:
                return {sum_to(mul(g, b), a.shape()).to(a.dtype()), sum_to(mul(g, a), b.shape()).to(b.dtype())};
            case Binary::div: {
                Tensor ga = div(g, b);
                Tensor gb = neg(div(mul(ga, a), b));
                return {sum_to(ga, a.shape()).to(a.dtype()), sum_to(gb, b.shape()).to(b.dtype())};
            }
        }
        return {};
    });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        std::int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        std::int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw Error(Errc::ShapeMismatch, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(Binary::add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(Binary::sub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(Binary::mul, "mul", a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(Binary::div, "div", a, b); }

Tensor add_scalar(const Tensor& a, double s) {
    Tensor out = map_unary(a, [s](double x) { return x + s; });
    return Tape::record("add_scalar", out, {a}, [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = map_unary(a, [s](double x) { return x * s; });
    return Tape::record("mul_scalar", out, {a},
                        [s](const Tensor& g) -> std::vector<Tensor> { return {map_unary(g, [s](double x) { return x * s; })}; });
}

Tensor neg(const Tensor& a) {
    return unary_op("neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    Tensor out = map_unary(a, [](double x) { return std::exp(x); });
    return Tape::record("exp", out, {a}, [out](const Tensor& g) -> std::vector<Tensor> { return {mul(g, out.detach())}; });
}

Tensor log(const Tensor& a) {
    return unary_op("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op("sqrt", a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Tensor rsqrt(const Tensor& a) {
    return unary_op(
        "rsqrt", a, [](double x) { return 1.0 / std::sqrt(x); }, [](double x) { return -0.5 / (x * std::sqrt(x)); });
}

Tensor square(const Tensor& a) {
    return unary_op("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor gelu(const Tensor& a) { return unary_op("gelu", a, gelu_value, gelu_grad); }

Tensor relu(const Tensor& a) {
    return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
    return unary_op(
        "silu", a, [](double x) { return x * sigmoid(x); },
        [](double x) {
            double s = sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b) {
    auto need_b = [&]() -> const Tensor& {
        if (!b || !b->defined()) throw Error(Errc::ShapeMismatch, "binary elementwise op needs a second operand");
        return *b;
    };
    switch (op) {
        case ElementwiseOp::add: return add(a, need_b());
        case ElementwiseOp::sub: return sub(a, need_b());
        case ElementwiseOp::mul: return mul(a, need_b());
        case ElementwiseOp::div: return div(a, need_b());
        case ElementwiseOp::neg: return neg(a);
        case ElementwiseOp::exp: return exp(a);
        case ElementwiseOp::gelu: return gelu(a);
        case ElementwiseOp::relu: return relu(a);
        case ElementwiseOp::silu: return silu(a);
    }
    return a;
}

// ---------------------------------------------------------------------------
// matmul

namespace {

Tensor matmul_forward(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.dim() < 2 || b.dim() < 2) throw Error(Errc::ShapeMismatch, "matmul needs rank >= 2 operands");
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    std::int64_t m = trans_a ? as[as.size() - 1] : as[as.size() - 2];
    std::int64_t ka = trans_a ? as[as.size() - 2] : as[as.size() - 1];
    std::int64_t kb = trans_b ? bs[bs.size() - 1] : bs[bs.size() - 2];
    std::int64_t n = trans_b ? bs[bs.size() - 2] : bs[bs.size() - 1];
    if (ka != kb) {
        throw Error(Errc::ShapeMismatch, "matmul inner extents " + shape_str(as) + " x " + shape_str(bs));
    }
    Shape a_batch(as.begin(), as.end() - 2);
    Shape b_batch(bs.begin(), bs.end() - 2);
    Shape out_shape;
    std::vector<double> out;
    if (b_batch.empty() && !trans_a) {
        // Flatten leading dims of a into rows.
        std::int64_t rows = shape_numel(a_batch) * m;
        out.assign(static_cast<std::size_t>(rows * n), 0.0);
        detail::gemm(false, trans_b, rows, n, ka, a.data().data(), b.data().data(), out.data(), false);
        out_shape = a_batch;
    } else {
        Shape batch = broadcast_shape(a_batch, b_batch);
        std::int64_t nb = shape_numel(batch);
        out.assign(static_cast<std::size_t>(nb * m * n), 0.0);
        auto sa = broadcast_strides(a_batch, batch);
        auto sb = broadcast_strides(b_batch, batch);
        auto bstrides = strides_of(batch);
        const double* ad = a.data().data();
        const double* bd = b.data().data();
        for (std::int64_t i = 0; i < nb; ++i) {
            std::int64_t oa = 0;
            std::int64_t ob = 0;
            std::int64_t rem = i;
            for (std::size_t d = 0; d < batch.size(); ++d) {
                std::int64_t idx = rem / bstrides[d];
                rem %= bstrides[d];
                oa += idx * sa[d];
                ob += idx * sb[d];
            }
            detail::gemm(trans_a, trans_b, m, n, ka, ad + oa * m * ka, bd + ob * ka * n, out.data() + i * m * n,
                         false);
        }
        out_shape = batch;
    }
    out_shape.push_back(m);
    out_shape.push_back(n);
    return make(std::move(out_shape), std::move(out), promote(a.dtype(), b.dtype()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out = matmul_forward(a, b, false, false);
    return Tape::record("matmul", out, {a, b}, [a, b](const Tensor& g) -> std::vector<Tensor> {
        Tensor ga;
        Tensor gb;
        if (b.dim() == 2) {
            // Weight-style right operand: fold all leading dims into rows.
            std::int64_t k = a.shape().back();
            std::int64_t n = b.shape().back();
            std::int64_t rows = a.numel() / k;
            ga = matmul_forward(g, b, false, true).to(a.dtype());
            std::vector<double> w(static_cast<std::size_t>(k * n));
            detail::gemm(true, false, k, n, rows, a.data().data(), g.data().data(), w.data(), false);
            gb = make(b.shape(), std::move(w), b.dtype());
        } else {
            ga = sum_to(matmul_forward(g, b, false, true), a.shape()).to(a.dtype());
            gb = sum_to(matmul_forward(a, g, true, false), b.shape()).to(b.dtype());
        }
        return {ga, gb};
    });
}

// ---------------------------------------------------------------------------
// reductions

namespace {

struct ReducePlan {
    Shape keep_shape;  // input shape with reduced axes set to 1
    Shape out_shape;   // keepdim-aware output shape
    std::int64_t count = 1;
};

ReducePlan plan_reduce(const Shape& in, std::vector<std::int64_t> axes, bool keepdim) {
    auto rank = static_cast<std::int64_t>(in.size());
    std::vector<bool> reduced(in.size(), axes.empty());
    for (auto ax : axes) reduced[static_cast<std::size_t>(normalize_axis(ax, rank))] = true;
    ReducePlan plan;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (reduced[i]) {
            plan.count *= in[i];
            plan.keep_shape.push_back(1);
            if (keepdim) plan.out_shape.push_back(1);
        } else {
            plan.keep_shape.push_back(in[i]);
            plan.out_shape.push_back(in[i]);
        }
    }
    return plan;
}

}  // namespace

Tensor reduce(ReduceOp op, const Tensor& a, std::vector<std::int64_t> axes, bool keepdim) {
    ReducePlan plan = plan_reduce(a.shape(), std::move(axes), keepdim);
    const std::int64_t n_out = shape_numel(plan.keep_shape);
    auto ad = a.data();
    std::vector<double> out(static_cast<std::size_t>(n_out), op == ReduceOp::max ? -INFINITY : 0.0);
    std::vector<std::int64_t> argmax(op == ReduceOp::max ? static_cast<std::size_t>(n_out) : 0, -1);
    // Iterate input, map to output index via keep_shape broadcasting.
    for_each_broadcast(a.shape(), plan.keep_shape, a.shape(), [&](std::int64_t i, std::int64_t io, std::int64_t) {
        if (op == ReduceOp::max) {
            if (argmax[io] < 0 || ad[i] > out[io]) {
                out[io] = ad[i];
                argmax[io] = i;
            }
        } else {
            out[io] += ad[i];
        }
    });
    if (op == ReduceOp::mean) {
        for (auto& v : out) v /= static_cast<double>(plan.count);
    }
    Tensor result = make(plan.out_shape, std::move(out), a.dtype());
    Shape in_shape = a.shape();
    Shape keep_shape = plan.keep_shape;
    auto count = static_cast<double>(plan.count);
    DType dtype = a.dtype();
    return Tape::record(op == ReduceOp::sum ? "sum" : (op == ReduceOp::mean ? "mean" : "max"), result, {a},
                        [op, in_shape, keep_shape, count, dtype, argmax](const Tensor& g) -> std::vector<Tensor> {
                            auto gd = g.data();
                            std::vector<double> r(static_cast<std::size_t>(shape_numel(in_shape)), 0.0);
                            if (op == ReduceOp::max) {
                                for (std::size_t o = 0; o < argmax.size(); ++o) r[argmax[o]] += gd[o];
                            } else {
                                double scale = op == ReduceOp::mean ? 1.0 / count : 1.0;
                                for_each_broadcast(in_shape, keep_shape, in_shape,
                                                   [&](std::int64_t i, std::int64_t io, std::int64_t) {
                                                       r[i] = gd[io] * scale;
                                                   });
                            }
                            return {make(in_shape, std::move(r), dtype)};
                        });
}

Tensor sum(const Tensor& a, std::vector<std::int64_t> axes, bool keepdim) {
    return reduce(ReduceOp::sum, a, std::move(axes), keepdim);
}
Tensor mean(const Tensor& a, std::vector<std::int64_t> axes, bool keepdim) {
    return reduce(ReduceOp::mean, a, std::move(axes), keepdim);
}
Tensor max(const Tensor& a, std::vector<std::int64_t> axes, bool keepdim) {
    return reduce(ReduceOp::max, a, std::move(axes), keepdim);
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    const Shape& in = a.shape();
    if (shape.size() > in.size()) throw Error(Errc::ShapeMismatch, "sum_to cannot expand rank");
    std::size_t lead = in.size() - shape.size();
    std::vector<std::int64_t> axes;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (i < lead) {
            axes.push_back(static_cast<std::int64_t>(i));
        } else if (shape[i - lead] == 1 && in[i] != 1) {
            axes.push_back(static_cast<std::int64_t>(i));
        } else if (shape[i - lead] != in[i]) {
            throw Error(Errc::ShapeMismatch, "sum_to " + shape_str(in) + " -> " + shape_str(shape));
        }
    }
    if (axes.empty()) return reshape(a, shape);
    return reshape(sum(a, axes, true), shape);
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    Shape target = broadcast_shape(a.shape(), shape);
    if (target != shape) throw Error(Errc::ShapeMismatch, "broadcast_to " + shape_str(a.shape()) + " -> " + shape_str(shape));
    std::vector<double> out(static_cast<std::size_t>(shape_numel(shape)));
    auto ad = a.data();
    for_each_broadcast(shape, a.shape(), shape, [&](std::int64_t i, std::int64_t ia, std::int64_t) { out[i] = ad[ia]; });
    Tensor result = make(shape, std::move(out), a.dtype());
    Shape in_shape = a.shape();
    return Tape::record("broadcast_to", result, {a},
                        [in_shape](const Tensor& g) -> std::vector<Tensor> { return {sum_to(g, in_shape)}; });
}

// ---------------------------------------------------------------------------
// layout

Tensor reshape(const Tensor& a, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw Error(Errc::ShapeMismatch, "reshape with two inferred extents");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || a.numel() % known != 0) throw Error(Errc::ShapeMismatch, "reshape cannot infer extent");
        shape[static_cast<std::size_t>(infer)] = a.numel() / known;
    }
    if (shape_numel(shape) != a.numel()) {
        throw Error(Errc::ShapeMismatch, "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape;
    impl->storage = a.impl_ptr()->storage;
    impl->dtype = a.dtype();
    Tensor out(std::move(impl));
    Shape in_shape = a.shape();
    return Tape::record("reshape", out, {a},
                        [in_shape](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, in_shape)}; });
}

Tensor permute(const Tensor& a, const std::vector<std::int64_t>& order) {
    const Shape& in = a.shape();
    auto rank = static_cast<std::int64_t>(in.size());
    if (static_cast<std::int64_t>(order.size()) != rank) throw Error(Errc::InvalidAxis, "permute order rank mismatch");
    std::vector<std::int64_t> axes(order.size());
    std::vector<bool> seen(order.size(), false);
    for (std::size_t i = 0; i < order.size(); ++i) {
        axes[i] = normalize_axis(order[i], rank);
        if (seen[static_cast<std::size_t>(axes[i])]) throw Error(Errc::InvalidAxis, "permute repeats an axis");
        seen[static_cast<std::size_t>(axes[i])] = true;
    }
    Shape out_shape(in.size());
    auto in_strides = strides_of(in);
    std::vector<std::int64_t> src_strides(in.size());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        out_shape[i] = in[static_cast<std::size_t>(axes[i])];
        src_strides[i] = in_strides[static_cast<std::size_t>(axes[i])];
    }
    std::vector<double> out(static_cast<std::size_t>(a.numel()));
    auto ad = a.data();
    if (!out.empty()) {
        std::vector<std::int64_t> counter(in.size(), 0);
        std::int64_t src = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = ad[static_cast<std::size_t>(src)];
            for (std::size_t d = in.size(); d-- > 0;) {
                ++counter[d];
                src += src_strides[d];
                if (counter[d] < out_shape[d]) break;
                src -= src_strides[d] * out_shape[d];
                counter[d] = 0;
            }
        }
    }
    Tensor result = make(out_shape, std::move(out), a.dtype());
    std::vector<std::int64_t> inverse(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inverse[static_cast<std::size_t>(axes[i])] = static_cast<std::int64_t>(i);
    return Tape::record("permute", result, {a},
                        [inverse](const Tensor& g) -> std::vector<Tensor> { return {permute(g, inverse)}; });
}

Tensor transpose(const Tensor& a, std::int64_t axis0, std::int64_t axis1) {
    auto rank = a.dim();
    std::vector<std::int64_t> order(static_cast<std::size_t>(rank));
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[static_cast<std::size_t>(normalize_axis(axis0, rank))],
              order[static_cast<std::size_t>(normalize_axis(axis1, rank))]);
    return permute(a, order);
}

Tensor flip(const Tensor& a, std::int64_t axis) {
    axis = normalize_axis(axis, a.dim());
    const Shape& s = a.shape();
    std::int64_t outer = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    std::int64_t len = s[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t l = 0; l < len; ++l) {
            const double* src = ad.data() + (o * len + (len - 1 - l)) * inner;
            std::copy(src, src + inner, out.data() + (o * len + l) * inner);
        }
    }
    Tensor result = make(s, std::move(out), a.dtype());
    return Tape::record("flip", result, {a}, [axis](const Tensor& g) -> std::vector<Tensor> { return {flip(g, axis)}; });
}

Tensor slice(const Tensor& a, std::int64_t axis, std::int64_t start, std::int64_t length) {
    axis = normalize_axis(axis, a.dim());
    const Shape& s = a.shape();
    std::int64_t len = s[static_cast<std::size_t>(axis)];
    if (start < 0 || length < 0 || start + length > len) {
        throw Error(Errc::ShapeMismatch, "slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                                             ") out of range for " + shape_str(s));
    }
    std::int64_t outer = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = length;
    auto ad = a.data();
    std::vector<double> out(static_cast<std::size_t>(outer * length * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = ad.data() + (o * len + start) * inner;
        std::copy(src, src + length * inner, out.data() + o * length * inner);
    }
    Tensor result = make(out_shape, std::move(out), a.dtype());
    Shape in_shape = s;
    DType dtype = a.dtype();
    return Tape::record("slice", result, {a},
                        [in_shape, axis, start, length, outer, inner, len, dtype](const Tensor& g) -> std::vector<Tensor> {
                            std::vector<double> r(static_cast<std::size_t>(shape_numel(in_shape)), 0.0);
                            auto gd = g.data();
                            for (std::int64_t o = 0; o < outer; ++o) {
                                std::copy(gd.data() + o * length * inner, gd.data() + (o + 1) * length * inner,
                                          r.data() + (o * len + start) * inner);
                            }
                            return {make(in_shape, std::move(r), dtype)};
                        });
}

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis) {
    if (parts.empty()) throw Error(Errc::EmptyInput, "concat of no tensors");
    if (parts.size() == 1) return parts.front();
    axis = normalize_axis(axis, parts.front().dim());
    Shape out_shape = parts.front().shape();
    std::int64_t total = 0;
    DType dtype = parts.front().dtype();
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw Error(Errc::ShapeMismatch, "concat rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (static_cast<std::int64_t>(i) != axis && s[i] != out_shape[i]) {
                throw Error(Errc::ShapeMismatch, "concat extent mismatch " + shape_str(s) + " vs " + shape_str(out_shape));
            }
        }
        total += s[static_cast<std::size_t>(axis)];
        dtype = promote(dtype, p.dtype());
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    std::int64_t outer = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= out_shape[static_cast<std::size_t>(i)];
    std::int64_t inner = 1;
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
    std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
    std::vector<std::int64_t> lengths;
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        std::int64_t len = p.shape()[static_cast<std::size_t>(axis)];
        auto pd = p.data();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy(pd.data() + o * len * inner, pd.data() + (o + 1) * len * inner,
                      out.data() + (o * total + offset) * inner);
        }
        lengths.push_back(len);
        offset += len;
    }
    Tensor result = make(out_shape, std::move(out), dtype);
    return Tape::record("concat", result, parts, [lengths, axis](const Tensor& g) -> std::vector<Tensor> {
        std::vector<Tensor> grads;
        std::int64_t start = 0;
        for (auto len : lengths) {
            grads.push_back(slice(g, axis, start, len));
            start += len;
        }
        return grads;
    });
}

// ---------------------------------------------------------------------------
// softmax

namespace {

std::vector<double> softmax_rows(std::span<const double> x, std::int64_t rows, std::int64_t cols, bool log_space) {
    std::vector<double> out(x.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = out.data() + r * cols;
        double m = -INFINITY;
        for (std::int64_t c = 0; c < cols; ++c) m = std::max(m, xr[c]);
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += std::exp(xr[c] - m);
        if (log_space) {
            double lse = m + std::log(s);
            for (std::int64_t c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
        } else {
            for (std::int64_t c = 0; c < cols; ++c) yr[c] = std::exp(xr[c] - m) / s;
        }
    }
    return out;
}

}  // namespace

Tensor softmax(const Tensor& a) {
    if (a.dim() < 1) throw Error(Errc::InvalidAxis, "softmax of a scalar");
    std::int64_t cols = a.shape().back();
    std::int64_t rows = cols == 0 ? 0 : a.numel() / cols;
    Tensor out = make(a.shape(), softmax_rows(a.data(), rows, cols, false), a.dtype());
    Tensor saved = out.detach();
    return Tape::record("softmax", out, {a}, [saved, rows, cols](const Tensor& g) -> std::vector<Tensor> {
        auto y = saved.data();
        auto gd = g.data();
        std::vector<double> r(y.size());
        for (std::int64_t i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) dot += gd[i * cols + c] * y[i * cols + c];
            for (std::int64_t c = 0; c < cols; ++c) r[i * cols + c] = y[i * cols + c] * (gd[i * cols + c] - dot);
        }
        return {make(saved.shape(), std::move(r), saved.dtype())};
    });
}

Tensor log_softmax(const Tensor& a) {
    if (a.dim() < 1) throw Error(Errc::InvalidAxis, "log_softmax of a scalar");
    std::int64_t cols = a.shape().back();
    std::int64_t rows = cols == 0 ? 0 : a.numel() / cols;
    Tensor out = make(a.shape(), softmax_rows(a.data(), rows, cols, true), a.dtype());
    Tensor saved = out.detach();
    return Tape::record("log_softmax", out, {a}, [saved, rows, cols](const Tensor& g) -> std::vector<Tensor> {
        auto y = saved.data();
        auto gd = g.data();
        std::vector<double> r(y.size());
        for (std::int64_t i = 0; i < rows; ++i) {
            double total = 0.0;
            for (std::int64_t c = 0; c < cols; ++c) total += gd[i * cols + c];
            for (std::int64_t c = 0; c < cols; ++c) r[i * cols + c] = gd[i * cols + c] - std::exp(y[i * cols + c]) * total;
        }
        return {make(saved.shape(), std::move(r), saved.dtype())};
    });
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvGeom {
    std::int64_t batch, h, w, cin, kh, kw, cout, stride, ph, pw, groups, hout, wout;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& weight, std::int64_t stride, std::int64_t ph, std::int64_t pw,
                       std::int64_t groups) {
    if (x.dim() != 4) throw Error(Errc::ShapeMismatch, "conv2d input must be [B,H,W,C], got " + shape_str(x.shape()));
    if (weight.dim() != 4) throw Error(Errc::ShapeMismatch, "conv2d weight must be [kh,kw,Cin/g,Cout]");
    ConvGeom g{};
    g.batch = x.size(0);
    g.h = x.size(1);
    g.w = x.size(2);
    g.cin = x.size(3);
    g.kh = weight.size(0);
    g.kw = weight.size(1);
    g.cout = weight.size(3);
    g.stride = stride;
    g.ph = ph;
    g.pw = pw;
    g.groups = groups;
    if (groups < 1 || g.cin % groups != 0 || g.cout % groups != 0 || weight.size(2) != g.cin / groups) {
        throw Error(Errc::ShapeMismatch,
                    "conv2d channels: input " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()));
    }
    if (stride < 1) throw Error(Errc::ShapeMismatch, "conv2d stride must be positive");
    g.hout = (g.h + 2 * ph - g.kh) / stride + 1;
    g.wout = (g.w + 2 * pw - g.kw) / stride + 1;
    if (g.hout <= 0 || g.wout <= 0) throw Error(Errc::ShapeMismatch, "conv2d output would be empty");
    return g;
}

/// Patch matrix [B*Hout*Wout, kh*kw*Cin] for dense convolution.
std::vector<double> im2col(const ConvGeom& g, const double* x) {
    const std::int64_t patch = g.kh * g.kw * g.cin;
    std::vector<double> cols(static_cast<std::size_t>(g.batch * g.hout * g.wout * patch), 0.0);
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t oy = 0; oy < g.hout; ++oy) {
            for (std::int64_t ox = 0; ox < g.wout; ++ox) {
                double* row = cols.data() + ((b * g.hout + oy) * g.wout + ox) * patch;
                for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                    std::int64_t iy = oy * g.stride + ky - g.ph;
                    if (iy < 0 || iy >= g.h) continue;
                    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                        std::int64_t ix = ox * g.stride + kx - g.pw;
                        if (ix < 0 || ix >= g.w) continue;
                        const double* src = x + ((b * g.h + iy) * g.w + ix) * g.cin;
                        std::copy(src, src + g.cin, row + (ky * g.kw + kx) * g.cin);
                    }
                }
            }
        }
    }
    return cols;
}

void col2im(const ConvGeom& g, const double* cols, double* dx) {
    const std::int64_t patch = g.kh * g.kw * g.cin;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t oy = 0; oy < g.hout; ++oy) {
            for (std::int64_t ox = 0; ox < g.wout; ++ox) {
                const double* row = cols + ((b * g.hout + oy) * g.wout + ox) * patch;
                for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                    std::int64_t iy = oy * g.stride + ky - g.ph;
                    if (iy < 0 || iy >= g.h) continue;
                    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                        std::int64_t ix = ox * g.stride + kx - g.pw;
                        if (ix < 0 || ix >= g.w) continue;
                        double* dst = dx + ((b * g.h + iy) * g.w + ix) * g.cin;
                        const double* src = row + (ky * g.kw + kx) * g.cin;
                        for (std::int64_t c = 0; c < g.cin; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
}

/// Grouped convolution by direct summation. Accumulates into the outputs
/// that are non-null.
void grouped_conv(const ConvGeom& g, const double* x, const double* w, double* y, const double* gy, double* gx,
                  double* gw) {
    const std::int64_t cin_g = g.cin / g.groups;
    const std::int64_t cout_g = g.cout / g.groups;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t oy = 0; oy < g.hout; ++oy) {
            for (std::int64_t ox = 0; ox < g.wout; ++ox) {
                const std::int64_t out_base = ((b * g.hout + oy) * g.wout + ox) * g.cout;
                for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                    std::int64_t iy = oy * g.stride + ky - g.ph;
                    if (iy < 0 || iy >= g.h) continue;
                    for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                        std::int64_t ix = ox * g.stride + kx - g.pw;
                        if (ix < 0 || ix >= g.w) continue;
                        const std::int64_t in_base = ((b * g.h + iy) * g.w + ix) * g.cin;
                        const std::int64_t w_base = (ky * g.kw + kx) * cin_g * g.cout;
                        for (std::int64_t co = 0; co < g.cout; ++co) {
                            const std::int64_t grp = co / cout_g;
                            for (std::int64_t ci = 0; ci < cin_g; ++ci) {
                                const std::int64_t xi = in_base + grp * cin_g + ci;
                                const std::int64_t wi = w_base + ci * g.cout + co;
                                if (y) y[out_base + co] += x[xi] * w[wi];
                                if (gx) gx[xi] += gy[out_base + co] * w[wi];
                                if (gw) gw[wi] += gy[out_base + co] * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::int64_t stride, std::int64_t pad_h,
              std::int64_t pad_w, std::int64_t groups) {
    ConvGeom g = conv_geometry(x, weight, stride, pad_h, pad_w, groups);
    if (bias.defined() && (bias.dim() != 1 || bias.size(0) != g.cout)) {
        throw Error(Errc::ShapeMismatch, "conv2d bias must be [Cout]");
    }
    const std::int64_t positions = g.batch * g.hout * g.wout;
    std::vector<double> out(static_cast<std::size_t>(positions * g.cout), 0.0);
    if (groups == 1) {
        auto cols = im2col(g, x.data().data());
        detail::gemm(false, false, positions, g.cout, g.kh * g.kw * g.cin, cols.data(), weight.data().data(),
                     out.data(), false);
    } else {
        grouped_conv(g, x.data().data(), weight.data().data(), out.data(), nullptr, nullptr, nullptr);
    }
    if (bias.defined()) {
        auto bd = bias.data();
        for (std::int64_t p = 0; p < positions; ++p) {
            for (std::int64_t c = 0; c < g.cout; ++c) out[static_cast<std::size_t>(p * g.cout + c)] += bd[c];
        }
    }
    DType dtype = promote(x.dtype(), weight.dtype());
    Tensor result = make({g.batch, g.hout, g.wout, g.cout}, std::move(out), dtype);
    return Tape::record("conv2d", result, {x, weight, bias}, [x, weight, bias, g](const Tensor& gy) -> std::vector<Tensor> {
        const std::int64_t positions = g.batch * g.hout * g.wout;
        std::vector<double> gx(static_cast<std::size_t>(x.numel()), 0.0);
        std::vector<double> gw(static_cast<std::size_t>(weight.numel()), 0.0);
        if (g.groups == 1) {
            const std::int64_t patch = g.kh * g.kw * g.cin;
            auto cols = im2col(g, x.data().data());
            detail::gemm(true, false, patch, g.cout, positions, cols.data(), gy.data().data(), gw.data(), false);
            std::vector<double> gcols(cols.size(), 0.0);
            detail::gemm(false, true, positions, patch, g.cout, gy.data().data(), weight.data().data(), gcols.data(),
                         false);
            col2im(g, gcols.data(), gx.data());
        } else {
            grouped_conv(g, x.data().data(), weight.data().data(), nullptr, gy.data().data(), gx.data(), gw.data());
        }
        Tensor gb;
        if (bias.defined()) {
            std::vector<double> gbv(static_cast<std::size_t>(g.cout), 0.0);
            auto gd = gy.data();
            for (std::int64_t p = 0; p < positions; ++p) {
                for (std::int64_t c = 0; c < g.cout; ++c) gbv[static_cast<std::size_t>(c)] += gd[p * g.cout + c];
            }
            gb = make(bias.shape(), std::move(gbv), bias.dtype());
        }
        return {make(x.shape(), std::move(gx), x.dtype()), make(weight.shape(), std::move(gw), weight.dtype()), gb};
    });
}

}  // namespace heracles
