#include "heracles/blocks.hpp"

#include <cmath>
#include <vector>

#include "heracles/ops.hpp"

namespace heracles::blocks {

namespace {

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw Error(Errc::InvalidAxis, "axis out of range");
    return axis;
}

Tensor filled(const Shape& shape, DType dtype, Rng& rng, double stddev) {
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) v = rng.truncated_normal(stddev);
    return Tensor::from(shape, std::move(values), dtype);
}

void push(std::vector<NamedTensor>& out, const std::string& name, const Tensor& t) {
    if (t.defined()) out.push_back({name, t});
}

}  // namespace

std::string to_string(Activation act) {
    switch (act) {
        case Activation::gelu: return "gelu";
        case Activation::relu: return "relu";
        case Activation::silu: return "silu";
        case Activation::identity: return "identity";
    }
    return "gelu";
}

std::string to_string(MergeMode mode) { return mode == MergeMode::parallel ? "parallel" : "series"; }

Activation parse_activation(const std::string& name) {
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") return Activation::relu;
    if (name == "silu") return Activation::silu;
    if (name == "identity") return Activation::identity;
    throw Error(Errc::BadInput, "unknown activation '" + name + "'");
}

MergeMode parse_merge_mode(const std::string& name) {
    if (name == "parallel") return MergeMode::parallel;
    if (name == "series") return MergeMode::series;
    throw Error(Errc::BadInput, "unknown merge mode '" + name + "'");
}

Tensor activate(Activation act, const Tensor& x) {
    switch (act) {
        case Activation::gelu: return gelu(x);
        case Activation::relu: return relu(x);
        case Activation::silu: return silu(x);
        case Activation::identity: return x;
    }
    return x;
}

Tensor spectral_transform(TransformKind kind, const Tensor& x, std::int64_t axis, bool inverse) {
    if (kind == TransformKind::Fourier) throw Error(Errc::BadInput, "spectral_transform needs a real-to-real kind");
    const Shape& shape = x.shape();
    axis = normalize_axis(axis, x.dim());
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
    for (std::int64_t d = axis + 1; d < x.dim(); ++d) inner *= shape[static_cast<std::size_t>(d)];
    const std::int64_t n = shape[static_cast<std::size_t>(axis)];
    std::vector<double> buf = x.to_vector();
    spectral::transform_fibers(kind, inverse, buf, outer, n, inner);
    Tensor out = Tensor::from(shape, std::move(buf), x.dtype());
    // The Hartley matrices are symmetric; the orthonormal DCT-II transposes to DCT-III.
    const bool back_inverse = kind == TransformKind::Hartley ? inverse : !inverse;
    return Tape::record("spectral_transform", out, {x}, [kind, axis, back_inverse](const Tensor& g) -> std::vector<Tensor> {
        return {spectral_transform(kind, g, axis, back_inverse)};
    });
}

// ---------------------------------------------------------------------------

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    push(out, prefix + ".weight", weight);
    push(out, prefix + ".bias", bias);
}

Linear make_linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng, DType dtype) {
    Linear layer;
    layer.weight = filled({in, out}, dtype, rng, 0.02).set_requires_grad();
    if (bias) layer.bias = Tensor::zeros({out}, dtype).set_requires_grad();
    return layer;
}

Tensor linear_forward(const Tensor& x, const Linear& layer) {
    if (x.dim() < 1 || x.size(-1) != layer.in_features()) {
        throw Error(Errc::ShapeMismatch, "linear expects last axis " + std::to_string(layer.in_features()) + ", got " +
                                             shape_str(x.shape()));
    }
    Tensor y = matmul(x, layer.weight);
    return layer.bias.defined() ? add(y, layer.bias) : y;
}

void LayerNorm::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    push(out, prefix + ".gamma", gamma);
    push(out, prefix + ".beta", beta);
}

LayerNorm make_layer_norm(std::int64_t channels, DType dtype) {
    LayerNorm n;
    n.gamma = Tensor::ones({channels}, dtype).set_requires_grad();
    n.beta = Tensor::zeros({channels}, dtype).set_requires_grad();
    return n;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (gamma.dim() != 1 || gamma.size(0) != x.size(-1) || beta.shape() != gamma.shape()) {
        throw Error(Errc::ShapeMismatch, "layer_norm affine must be [" + std::to_string(x.size(-1)) + "]");
    }
    Tensor mu = mean(x, {-1}, true);
    Tensor xc = sub(x, mu);
    Tensor var = mean(square(xc), {-1}, true);
    Tensor xhat = mul(xc, rsqrt(add_scalar(var, eps)));
    return add(mul(xhat, gamma), beta);
}

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

Mlp make_mlp(std::int64_t channels, std::int64_t expansion, Rng& rng, DType dtype) {
    Mlp m;
    m.fc1 = make_linear(channels, channels * expansion, true, rng, dtype);
    m.fc2 = make_linear(channels * expansion, channels, true, rng, dtype);
    return m;
}

Tensor mlp_forward(const Tensor& x, const Mlp& mlp) { return linear_forward(gelu(linear_forward(x, mlp.fc1)), mlp.fc2); }

void Conv2d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    push(out, prefix + ".weight", weight);
    push(out, prefix + ".bias", bias);
}

Conv2d make_conv2d(std::int64_t kh, std::int64_t kw, std::int64_t cin, std::int64_t cout, std::int64_t stride,
                   std::int64_t groups, Rng& rng, DType dtype) {
    Conv2d c;
    const std::int64_t fan_in = kh * kw * (cin / groups);
    c.weight = filled({kh, kw, cin / groups, cout}, dtype, rng, std::sqrt(2.0 / static_cast<double>(fan_in)))
                   .set_requires_grad();
    c.bias = Tensor::zeros({cout}, dtype).set_requires_grad();
    c.stride = stride;
    c.groups = groups;
    return c;
}

Tensor conv_forward(const Tensor& x, const Conv2d& conv) {
    return conv2d(x, conv.weight, conv.bias, conv.stride, conv.pad_h, conv.pad_w, conv.groups);
}

// ---------------------------------------------------------------------------

Tensor SpectralGate::full() const {
    if (groups.empty()) throw Error(Errc::ShapeMismatch, "spectral gate has no tensors");
    return groups.size() == 1 ? groups.front() : concat(groups, -1);
}

void SpectralGate::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    if (groups.size() == 1) {
        push(out, prefix + ".R", groups.front());
        return;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) push(out, prefix + ".R" + std::to_string(g), groups[g]);
}

SpectralGate make_spectral_gate(TransformKind kind, const Shape& domain, std::int64_t channels, std::int64_t groups,
                                Rng& rng, DType dtype) {
    if (kind == TransformKind::Fourier) throw Error(Errc::BadInput, "spectral gates are Hartley or Cosine");
    if (groups < 1 || channels % groups != 0) {
        throw Error(Errc::ConfigInvariantViolated,
                    "gate groups " + std::to_string(groups) + " must divide channels " + std::to_string(channels));
    }
    SpectralGate gate;
    gate.kind = kind;
    Shape shape = domain;
    shape.push_back(channels / groups);
    for (std::int64_t g = 0; g < groups; ++g) {
        std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : values) v = 1.0 + rng.normal(0.0, 0.02);
        gate.groups.push_back(Tensor::from(shape, std::move(values), dtype).set_requires_grad());
    }
    return gate;
}

namespace {

Tensor gate_once(const Tensor& v, const Tensor& r, TransformKind kind, const std::vector<std::int64_t>& axes) {
    Tensor x = v;
    for (auto axis : axes) x = spectral_transform(kind, x, axis, false);
    x = mul(x, r);
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) x = spectral_transform(kind, x, *it, true);
    return x;
}

Tensor flip_axes(Tensor x, const std::vector<std::int64_t>& axes) {
    for (auto axis : axes) x = flip(x, axis);
    return x;
}

Tensor apply_gate(const Tensor& v, const SpectralGate& gate, const std::vector<std::int64_t>& axes) {
    Tensor r = gate.full();
    Shape expect(v.shape().begin() + 1, v.shape().end());
    if (r.shape() != expect) {
        throw Error(Errc::ShapeMismatch,
                    "gate " + shape_str(r.shape()) + " does not match feature map " + shape_str(v.shape()));
    }
    Tensor y = gate_once(v, r, gate.kind, axes);
    if (!gate.bidirectional) return y;
    Tensor back = flip_axes(gate_once(flip_axes(v, axes), r, gate.kind, axes), axes);
    return mul_scalar(add(y, back), 0.5);
}

}  // namespace

Tensor spectral_gate_forward(const Tensor& v, const SpectralGate& gate) {
    if (v.dim() != 4) throw Error(Errc::ShapeMismatch, "spectral_gate_forward expects [B,H,W,C], got " + shape_str(v.shape()));
    // Rows (the W axis) first, then columns.
    return apply_gate(v, gate, {2, 1});
}

Tensor sequence_spectral_gate(const Tensor& v, const SpectralGate& gate) {
    if (v.dim() != 3) throw Error(Errc::ShapeMismatch, "sequence_spectral_gate expects [B,L,C], got " + shape_str(v.shape()));
    return apply_gate(v, gate, {1});
}

void LocalConvOp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    push(out, prefix + ".weight", weight);
    push(out, prefix + ".bias", bias);
}

LocalConvOp make_local_conv(std::int64_t channels, std::int64_t kernel, bool sequence, Rng& rng, DType dtype) {
    if (kernel < 1 || kernel % 2 == 0) throw Error(Errc::ConfigInvariantViolated, "local conv kernel must be odd");
    LocalConvOp op;
    const std::int64_t kh = sequence ? 1 : kernel;
    op.weight = filled({kh, kernel, channels}, dtype, rng, std::sqrt(2.0 / static_cast<double>(kh * kernel)))
                    .set_requires_grad();
    op.bias = Tensor::zeros({channels}, dtype).set_requires_grad();
    return op;
}

Tensor local_conv_forward(const Tensor& v, const LocalConvOp& op) {
    const std::int64_t kh = op.kernel_h();
    const std::int64_t kw = op.kernel_w();
    const std::int64_t c = op.weight.size(2);
    if (kh % 2 == 0 || kw % 2 == 0) throw Error(Errc::ShapeMismatch, "local conv kernel must be odd");
    if (v.size(-1) != c) throw Error(Errc::ShapeMismatch, "local conv channels do not match input");
    Tensor w = reshape(op.weight, {kh, kw, 1, c});
    if (v.dim() == 3) {
        if (kh != 1) throw Error(Errc::ShapeMismatch, "sequence conv needs a 1 x k kernel");
        Tensor x = reshape(v, {v.size(0), 1, v.size(1), c});
        Tensor y = conv2d(x, w, op.bias, 1, 0, (kw - 1) / 2, c);
        return reshape(y, v.shape());
    }
    if (v.dim() != 4) throw Error(Errc::ShapeMismatch, "local conv expects [B,H,W,C] or [B,L,C]");
    return conv2d(v, w, op.bias, 1, (kh - 1) / 2, (kw - 1) / 2, c);
}

Tensor heracles_mix(const Tensor& v, const SpectralGate& gate, const LocalConvOp& conv, MergeMode mode, Activation act) {
    Tensor spectral = v.dim() == 3 ? sequence_spectral_gate(v, gate) : spectral_gate_forward(v, gate);
    Tensor s = activate(act, spectral);
    if (mode == MergeMode::series) return local_conv_forward(s, conv);
    return add(s, local_conv_forward(v, conv));
}

// ---------------------------------------------------------------------------

void AttentionParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
}

AttentionParams make_attention(std::int64_t channels, std::int64_t heads, Rng& rng, DType dtype) {
    if (heads < 1 || channels % heads != 0) {
        throw Error(Errc::HeadDivisibility,
                    "channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
    }
    AttentionParams p;
    p.heads = heads;
    p.q = make_linear(channels, channels, true, rng, dtype);
    p.k = make_linear(channels, channels, true, rng, dtype);
    p.v = make_linear(channels, channels, true, rng, dtype);
    p.o = make_linear(channels, channels, true, rng, dtype);
    return p;
}

namespace {

/// [B, T, C] -> [B, heads, T, d]
Tensor split_heads(const Tensor& x, std::int64_t heads) {
    const std::int64_t d = x.size(2) / heads;
    return permute(reshape(x, {x.size(0), x.size(1), heads, d}), {0, 2, 1, 3});
}

}  // namespace

Tensor mha_forward(const Tensor& x, const AttentionParams& p, const Tensor& kv, Tensor* probs) {
    if (x.dim() != 3) throw Error(Errc::ShapeMismatch, "mha_forward expects [B,T,C], got " + shape_str(x.shape()));
    const std::int64_t c = x.size(2);
    if (p.heads < 1 || c % p.heads != 0) {
        throw Error(Errc::HeadDivisibility, "channels " + std::to_string(c) + " not divisible by heads " +
                                                std::to_string(p.heads));
    }
    const Tensor& src = kv.defined() ? kv : x;
    if (src.dim() != 3 || src.size(0) != x.size(0) || src.size(2) != c) {
        throw Error(Errc::ShapeMismatch, "attention key/value source must be [B,S,C]");
    }
    const std::int64_t d = c / p.heads;
    Tensor q = split_heads(linear_forward(x, p.q), p.heads);
    Tensor k = split_heads(linear_forward(src, p.k), p.heads);
    Tensor v = split_heads(linear_forward(src, p.v), p.heads);
    Tensor logits = mul_scalar(matmul(q, transpose(k, -1, -2)), 1.0 / std::sqrt(static_cast<double>(d)));
    Tensor attn = softmax(logits);
    if (probs) *probs = attn;
    Tensor ctx = matmul(attn, v);  // [B, heads, T, d]
    Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {x.size(0), x.size(1), c});
    return linear_forward(merged, p.o);
}

void SpatialReduction::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    if (ratio <= 1) return;
    conv.collect(prefix + ".conv", out);
    norm.collect(prefix + ".norm", out);
}

SpatialReduction make_spatial_reduction(std::int64_t channels, std::int64_t ratio, Rng& rng, DType dtype) {
    SpatialReduction sr;
    sr.ratio = ratio;
    if (ratio > 1) {
        sr.conv = make_conv2d(ratio, ratio, channels, channels, ratio, 1, rng, dtype);
        sr.norm = make_layer_norm(channels, dtype);
    }
    return sr;
}

// ---------------------------------------------------------------------------

void HeraclesBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    norm1.collect(prefix + ".norm1", out);
    gate.collect(prefix + ".gate", out);
    conv.collect(prefix + ".conv", out);
    norm2.collect(prefix + ".norm2", out);
    mlp.collect(prefix + ".mlp", out);
}

Tensor heracles_block_forward(const Tensor& v, const HeraclesBlock& block) {
    Tensor u = add(v, heracles_mix(layer_norm(v, block.norm1), block.gate, block.conv, block.mode, block.act));
    return add(u, mlp_forward(layer_norm(u, block.norm2), block.mlp));
}

void AttentionBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    norm1.collect(prefix + ".norm1", out);
    attn.collect(prefix + ".attn", out);
    reduction.collect(prefix + ".sr", out);
    norm2.collect(prefix + ".norm2", out);
    mlp.collect(prefix + ".mlp", out);
}

Tensor attention_block_forward(const Tensor& v, const AttentionBlock& block) {
    const bool spatial = v.dim() == 4;
    if (!spatial && v.dim() != 3) throw Error(Errc::ShapeMismatch, "attention block expects [B,H,W,C] or [B,T,C]");
    const std::int64_t c = v.size(-1);
    Tensor tokens = spatial ? reshape(v, {v.size(0), v.size(1) * v.size(2), c}) : v;
    Tensor n = layer_norm(tokens, block.norm1);
    Tensor kv;
    const std::int64_t r = block.reduction.ratio;
    if (r > 1) {
        if (!spatial) throw Error(Errc::ConfigInvariantViolated, "token reduction needs a 2D feature map");
        if (v.size(1) % r != 0 || v.size(2) % r != 0) {
            throw Error(Errc::IndivisibleSpatial,
                        "map " + shape_str(v.shape()) + " not divisible by reduction ratio " + std::to_string(r));
        }
        Tensor reduced = conv_forward(reshape(n, v.shape()), block.reduction.conv);
        kv = layer_norm(reshape(reduced, {v.size(0), reduced.size(1) * reduced.size(2), c}), block.reduction.norm);
    }
    Tensor u = add(tokens, mha_forward(n, block.attn, kv));
    Tensor z = add(u, mlp_forward(layer_norm(u, block.norm2), block.mlp));
    return spatial ? reshape(z, v.shape()) : z;
}

// ---------------------------------------------------------------------------

void PatchEmbed::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
}

PatchEmbed make_patch_embed(std::int64_t in_channels, std::int64_t channels, Rng& rng, DType dtype) {
    PatchEmbed stem;
    const std::int64_t mid = std::max<std::int64_t>(1, channels / 2);
    stem.conv1 = make_conv2d(3, 3, in_channels, mid, 2, 1, rng, dtype);
    stem.conv1.pad_h = stem.conv1.pad_w = 1;
    stem.conv2 = make_conv2d(3, 3, mid, channels, 2, 1, rng, dtype);
    stem.conv2.pad_h = stem.conv2.pad_w = 1;
    return stem;
}

Tensor patch_embed(const Tensor& img, const PatchEmbed& stem) {
    if (img.dim() != 4) throw Error(Errc::ShapeMismatch, "patch_embed expects [B,H,W,C], got " + shape_str(img.shape()));
    if (img.size(1) % 4 != 0 || img.size(2) % 4 != 0) {
        throw Error(Errc::IndivisibleSpatial, "image " + shape_str(img.shape()) + " not divisible by 4");
    }
    return conv_forward(gelu(conv_forward(img, stem.conv1)), stem.conv2);
}

Conv2d make_downsample(std::int64_t cin, std::int64_t cout, Rng& rng, DType dtype) {
    Conv2d c = make_conv2d(3, 3, cin, cout, 2, 1, rng, dtype);
    c.pad_h = c.pad_w = 1;
    return c;
}

Tensor downsample(const Tensor& x, const Conv2d& conv) {
    if (x.dim() != 4) throw Error(Errc::ShapeMismatch, "downsample expects [B,H,W,C]");
    if (x.size(1) % 2 != 0 || x.size(2) % 2 != 0) {
        throw Error(Errc::IndivisibleSpatial, "map " + shape_str(x.shape()) + " not divisible by 2");
    }
    return conv_forward(x, conv);
}

}  // namespace heracles::blocks
