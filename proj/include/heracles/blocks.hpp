#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "heracles/gradcheck.hpp"
#include "heracles/random.hpp"
#include "heracles/spectral.hpp"
#include "heracles/tensor.hpp"

// Layer zoo. Spatial feature maps are channels-last [B, H, W, C]; sequences
// are [B, L, C]. Every layer is a plain struct of parameter tensors plus a
// free forward function, and `collect` appends its parameters under a
// dotted name prefix.
namespace heracles::blocks {

using spectral::TransformKind;

enum class Activation { gelu, relu, silu, identity };
enum class MergeMode { parallel, series };

std::string to_string(Activation act);
std::string to_string(MergeMode mode);
Activation parse_activation(const std::string& name);
MergeMode parse_merge_mode(const std::string& name);

Tensor activate(Activation act, const Tensor& x);

/// Differentiable real-to-real transform (Hartley or Cosine) along `axis`.
/// The gradient applies the transposed transform.
Tensor spectral_transform(TransformKind kind, const Tensor& x, std::int64_t axis, bool inverse);

// ---------------------------------------------------------------------------

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out] or undefined

    std::int64_t in_features() const { return weight.size(0); }
    std::int64_t out_features() const { return weight.size(1); }
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Linear make_linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng, DType dtype);
Tensor linear_forward(const Tensor& x, const Linear& layer);

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-6;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

LayerNorm make_layer_norm(std::int64_t channels, DType dtype);
/// Per position: zero mean and unit variance over the last axis, then gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);
inline Tensor layer_norm(const Tensor& x, const LayerNorm& n) { return layer_norm(x, n.gamma, n.beta, n.eps); }

struct Mlp {
    Linear fc1;
    Linear fc2;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Mlp make_mlp(std::int64_t channels, std::int64_t expansion, Rng& rng, DType dtype);
/// Linear(C -> E C) -> GELU -> Linear(E C -> C).
Tensor mlp_forward(const Tensor& x, const Mlp& mlp);

struct Conv2d {
    Tensor weight;  // [kh, kw, Cin / groups, Cout]
    Tensor bias;    // [Cout]
    std::int64_t stride = 1;
    std::int64_t pad_h = 0;
    std::int64_t pad_w = 0;
    std::int64_t groups = 1;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

Conv2d make_conv2d(std::int64_t kh, std::int64_t kw, std::int64_t cin, std::int64_t cout, std::int64_t stride,
                   std::int64_t groups, Rng& rng, DType dtype);
Tensor conv_forward(const Tensor& x, const Conv2d& conv);

// ---------------------------------------------------------------------------
// Global branch: learnable real gate applied in the transform domain.

struct SpectralGate {
    TransformKind kind = TransformKind::Hartley;
    /// G gate tensors partitioning the channel axis: each [H', W', C/G]
    /// (spatial) or [L', C/G] (sequence).
    std::vector<Tensor> groups;
    /// Average with the branch run on the reversed token order.
    bool bidirectional = false;

    std::int64_t num_groups() const { return static_cast<std::int64_t>(groups.size()); }
    /// All groups joined along the channel axis.
    Tensor full() const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Near-identity gate: 1 + N(0, 0.02) per entry. `domain` excludes channels.
SpectralGate make_spectral_gate(TransformKind kind, const Shape& domain, std::int64_t channels, std::int64_t groups,
                                Rng& rng, DType dtype);

/// v [B, H, W, C] -> per channel inverse_2d(R * transform_2d(v)).
Tensor spectral_gate_forward(const Tensor& v, const SpectralGate& gate);
/// v [B, L, C] -> per channel 1D inverse(R * transform(v)).
Tensor sequence_spectral_gate(const Tensor& v, const SpectralGate& gate);

// Local branch: depthwise convolution with zero padding (k - 1) / 2.

struct LocalConvOp {
    Tensor weight;  // [kh, kw, C]
    Tensor bias;    // [C]

    std::int64_t kernel_h() const { return weight.size(0); }
    std::int64_t kernel_w() const { return weight.size(1); }
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Square k x k kernel for maps, 1 x k for sequences. k must be odd.
LocalConvOp make_local_conv(std::int64_t channels, std::int64_t kernel, bool sequence, Rng& rng, DType dtype);
/// Accepts [B, H, W, C] or [B, L, C] (convolved along L).
Tensor local_conv_forward(const Tensor& v, const LocalConvOp& op);

/// Token mixer of a Heracles block:
///   parallel: act(gate(v)) + conv(v)
///   series:   conv(act(gate(v)))
/// Dispatches on rank: [B,H,W,C] uses the 2D gate, [B,L,C] the sequence gate.
Tensor heracles_mix(const Tensor& v, const SpectralGate& gate, const LocalConvOp& conv, MergeMode mode,
                    Activation act = Activation::gelu);

// ---------------------------------------------------------------------------
// Attention.

struct AttentionParams {
    std::int64_t heads = 1;
    Linear q, k, v, o;

    std::int64_t channels() const { return q.in_features(); }
    std::int64_t head_dim() const { return channels() / heads; }
    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

AttentionParams make_attention(std::int64_t channels, std::int64_t heads, Rng& rng, DType dtype);

/// softmax(Q K^T / sqrt(d_head)) V per head, concatenated and projected.
/// x: [B, T, C]. Keys and values come from `kv` [B, S, C] when given, else x.
/// `probs`, when non-null, receives the attention weights [B, heads, T, S].
Tensor mha_forward(const Tensor& x, const AttentionParams& p, const Tensor& kv = Tensor(), Tensor* probs = nullptr);

/// Key/value token reduction for attention on large maps: an r x r stride-r
/// convolution followed by layer norm. Ratio 1 disables it.
struct SpatialReduction {
    std::int64_t ratio = 1;
    Conv2d conv;
    LayerNorm norm;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

SpatialReduction make_spatial_reduction(std::int64_t channels, std::int64_t ratio, Rng& rng, DType dtype);

// ---------------------------------------------------------------------------
// Residual blocks (pre-norm, two residual hops).

struct HeraclesBlock {
    LayerNorm norm1;
    SpectralGate gate;
    LocalConvOp conv;
    LayerNorm norm2;
    Mlp mlp;
    MergeMode mode = MergeMode::parallel;
    Activation act = Activation::gelu;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// u = v + mix(norm1(v)); z = u + mlp(norm2(u)). v is [B,H,W,C] or [B,L,C].
Tensor heracles_block_forward(const Tensor& v, const HeraclesBlock& block);

struct AttentionBlock {
    LayerNorm norm1;
    AttentionParams attn;
    SpatialReduction reduction;
    LayerNorm norm2;
    Mlp mlp;

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Same residual layout with attention as the mixer. Maps are flattened to
/// tokens and restored.
Tensor attention_block_forward(const Tensor& v, const AttentionBlock& block);

// ---------------------------------------------------------------------------
// Image stem and stage transitions.

struct PatchEmbed {
    Conv2d conv1;  // 3 -> C/2, stride 2
    Conv2d conv2;  // C/2 -> C, stride 2

    void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

PatchEmbed make_patch_embed(std::int64_t in_channels, std::int64_t channels, Rng& rng, DType dtype);
/// img [B, H, W, 3] -> [B, H/4, W/4, C]: two 3x3 stride-2 convolutions with GELU between.
Tensor patch_embed(const Tensor& img, const PatchEmbed& stem);

/// One 3x3 stride-2 convolution C_i -> C_{i+1}; halves the spatial extent.
Conv2d make_downsample(std::int64_t cin, std::int64_t cout, Rng& rng, DType dtype);
Tensor downsample(const Tensor& x, const Conv2d& conv);

}  // namespace heracles::blocks
