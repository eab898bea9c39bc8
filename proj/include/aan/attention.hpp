#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aan/errors.hpp"
#include "aan/ops.hpp"
#include "aan/tensor.hpp"

namespace aan {

struct AttentionConfig {
    std::size_t d_model = 8;
    std::size_t heads = 2;
    std::size_t n_layers = 2;
    std::size_t ffn_dim = 8;
    double dropout_rate = 0.1;

    std::size_t d_k() const { return d_model / heads; }
    std::size_t d_v() const { return d_model / heads; }

    void validate() const {
        if (heads < 1) throw ParameterError("attention: need at least one head");
        if (n_layers < 1) throw ParameterError("attention: need at least one layer");
        if (d_model % heads != 0) {
            throw ParameterError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                                 std::to_string(heads) + " heads");
        }
        // The feed-forward sublayer is a single map inside a residual block.
        if (ffn_dim != d_model) {
            throw ParameterError("attention: ffn_dim " + std::to_string(ffn_dim) + " must equal d_model " +
                                 std::to_string(d_model));
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("attention: dropout rate outside [0,1)");
    }
};

/// Allow/forbid flags over (query position, key position).
class AttentionMask {
   public:
    AttentionMask(std::size_t n_q, std::size_t n_k, std::vector<std::uint8_t> allow)
        : n_q_(n_q), n_k_(n_k), allow_(std::move(allow)) {
        if (allow_.size() != n_q_ * n_k_) throw DimensionError("AttentionMask: flag count does not match shape");
    }

    static AttentionMask all(std::size_t n_q, std::size_t n_k) {
        return AttentionMask(n_q, n_k, std::vector<std::uint8_t>(n_q * n_k, 1));
    }

    std::size_t n_q() const { return n_q_; }
    std::size_t n_k() const { return n_k_; }
    bool allowed(std::size_t q, std::size_t k) const { return allow_[q * n_k_ + k] != 0; }
    std::size_t count_allowed() const {
        std::size_t c = 0;
        for (auto f : allow_) c += f != 0;
        return c;
    }
    std::span<const std::uint8_t> flags() const { return allow_; }

   private:
    std::size_t n_q_, n_k_;
    std::vector<std::uint8_t> allow_;
};

// Position i may attend to 0..i.
inline AttentionMask make_causal_mask(std::size_t n) {
    if (n < 1) throw ParameterError("make_causal_mask: n must be >= 1");
    std::vector<std::uint8_t> allow(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) allow[i * n + j] = 1;
    return AttentionMask(n, n, std::move(allow));
}

// Dropout settings threaded through a forward pass.
struct DropoutContext {
    double rate = 0.0;
    bool training = false;
    Rng* rng = nullptr;

    Tensor apply(const Tensor& x) const { return dropout(x, rate, training, rng); }
};

/// Learned affine map; weight is [in, out] so inputs multiply from the left.
struct Linear {
    Tensor weight;
    Tensor bias;

    // uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) for weight and bias.
    static Linear init(std::size_t in, std::size_t out, Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(in * out), b(out);
        for (auto& v : w) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        return {Tensor({in, out}, std::move(w), true), Tensor({out}, std::move(b), true)};
    }

    static Linear zeros(std::size_t in, std::size_t out) {
        return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
    }

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }

    Tensor operator()(const Tensor& x) const {
        if (x.dim(-1) != in_features()) {
            throw DimensionError("linear: input width " + std::to_string(x.dim(-1)) + " != " + std::to_string(in_features()));
        }
        if (x.rank() == 1) return add(reshape(matmul(reshape(x, {1, x.dim(0)}), weight), {out_features()}), bias);
        return add(matmul(x, weight), bias);
    }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        fn(prefix + ".weight", weight);
        fn(prefix + ".bias", bias);
    }
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    static LayerNormParams identity(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        fn(prefix + ".gain", gain);
        fn(prefix + ".bias", bias);
    }
};

/// Attention weights softmax(Q Kᵀ / sqrt(d_k)) with optional mask; Q is
/// [..., n_q, d_k] and K is [..., n_k, d_k].
inline Tensor attention_weights(const Tensor& q, const Tensor& k, const AttentionMask* mask = nullptr) {
    if (q.rank() < 2 || k.rank() < 2 || q.dim(-1) != k.dim(-1)) {
        throw DimensionError("attention: query " + shape_str(q.shape()) + " and key " + shape_str(k.shape()) +
                             " widths differ");
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
    Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    if (mask == nullptr) return softmax_rows(logits);
    return masked_softmax(logits, mask->flags(), mask->n_q(), mask->n_k());
}

inline Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                           const AttentionMask* mask = nullptr) {
    if (k.dim(-2) != v.dim(-2)) {
        throw DimensionError("attention: key " + shape_str(k.shape()) + " and value " + shape_str(v.shape()) +
                             " row counts differ");
    }
    return matmul(attention_weights(q, k, mask), v);
}

struct MultiHeadAttentionParams {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    static MultiHeadAttentionParams init(std::size_t d_model, std::size_t heads, Rng& rng) {
        auto q = Linear::init(d_model, d_model, rng);
        auto k = Linear::init(d_model, d_model, rng);
        auto v = Linear::init(d_model, d_model, rng);
        auto o = Linear::init(d_model, d_model, rng);
        return {q, k, v, o, heads};
    }

    static MultiHeadAttentionParams zeros(std::size_t d_model, std::size_t heads) {
        return {Linear::zeros(d_model, d_model), Linear::zeros(d_model, d_model), Linear::zeros(d_model, d_model),
                Linear::zeros(d_model, d_model), heads};
    }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        query.for_each_parameter(prefix + ".query", fn);
        key.for_each_parameter(prefix + ".key", fn);
        value.for_each_parameter(prefix + ".value", fn);
        output.for_each_parameter(prefix + ".output", fn);
    }
};

/// Projects queries from `query_seq` and keys/values from `kv_seq`, runs each
/// head on its column block of the projections, concatenates the heads and
/// applies the output projection.
inline Tensor multi_head_attention(const Tensor& query_seq, const Tensor& kv_seq, const AttentionMask* mask,
                                   const MultiHeadAttentionParams& p) {
    const std::size_t d_model = p.query.in_features();
    if (query_seq.dim(-1) != d_model || kv_seq.dim(-1) != d_model) {
        throw DimensionError("multi_head_attention: widths " + shape_str(query_seq.shape()) + " / " +
                             shape_str(kv_seq.shape()) + " != d_model " + std::to_string(d_model));
    }
    if (p.heads == 0 || d_model % p.heads != 0) throw ParameterError("multi_head_attention: bad head count");
    Tensor q = p.query(query_seq);
    Tensor k = p.key(kv_seq);
    Tensor v = p.value(kv_seq);
    if (p.heads == 1) return p.output(scaled_dot_product_attention(q, k, v, mask));
    const std::size_t width = d_model / p.heads;
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        const std::size_t lo = h * width, hi = lo + width;
        heads.push_back(scaled_dot_product_attention(slice_last_axis(q, lo, hi), slice_last_axis(k, lo, hi),
                                                     slice_last_axis(v, lo, hi), mask));
    }
    return p.output(concat_last_axis(heads));
}

/// Sinusoidal table: (pos, 2k) = sin(w_k pos), (pos, 2k+1) = cos(w_k pos),
/// w_k = 10000^(-2k/d).
inline Tensor positional_encoding(std::size_t n_positions, std::size_t d) {
    if (n_positions < 1) throw ParameterError("positional_encoding: need at least one position");
    if (d == 0 || d % 2 != 0) throw ParameterError("positional_encoding: width must be even, got " + std::to_string(d));
    std::vector<double> table(n_positions * d);
    for (std::size_t pos = 0; pos < n_positions; ++pos) {
        for (std::size_t k = 0; k < d / 2; ++k) {
            const double omega = 1.0 / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d));
            table[pos * d + 2 * k] = std::sin(omega * static_cast<double>(pos));
            table[pos * d + 2 * k + 1] = std::cos(omega * static_cast<double>(pos));
        }
    }
    return Tensor({n_positions, d}, std::move(table));
}

// The single-map feed-forward sublayer: relu(x W + b), position-wise.
struct FeedForwardParams {
    Linear linear;

    static FeedForwardParams init(std::size_t d_model, Rng& rng) { return {Linear::init(d_model, d_model, rng)}; }
    static FeedForwardParams zeros(std::size_t d_model) { return {Linear::zeros(d_model, d_model)}; }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        linear.for_each_parameter(prefix + ".linear", fn);
    }
};

inline Tensor reduced_ffn(const Tensor& x, const FeedForwardParams& p) {
    if (x.dim(-1) != p.linear.in_features()) {
        throw DimensionError("reduced_ffn: width " + std::to_string(x.dim(-1)) + " != " +
                             std::to_string(p.linear.in_features()));
    }
    return relu(p.linear(x));
}

struct EncoderLayerParams {
    MultiHeadAttentionParams self_attention;
    LayerNormParams norm1;
    FeedForwardParams ffn;
    LayerNormParams norm2;

    static EncoderLayerParams init(const AttentionConfig& cfg, Rng& rng) {
        auto attn = MultiHeadAttentionParams::init(cfg.d_model, cfg.heads, rng);
        auto ffn = FeedForwardParams::init(cfg.d_model, rng);
        return {attn, LayerNormParams::identity(cfg.d_model), ffn, LayerNormParams::identity(cfg.d_model)};
    }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        self_attention.for_each_parameter(prefix + ".self_attention", fn);
        norm1.for_each_parameter(prefix + ".norm1", fn);
        ffn.for_each_parameter(prefix + ".ffn", fn);
        norm2.for_each_parameter(prefix + ".norm2", fn);
    }
};

// x' = LN(x + drop(SelfAttn(x))); out = LN(x' + drop(FFN(x')))
inline Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p, const DropoutContext& drop) {
    Tensor h = p.norm1(add(x, drop.apply(multi_head_attention(x, x, nullptr, p.self_attention))));
    return p.norm2(add(h, drop.apply(reduced_ffn(h, p.ffn))));
}

inline Tensor encoder_stack(const Tensor& x, const std::vector<EncoderLayerParams>& layers, const DropoutContext& drop) {
    if (layers.empty()) throw ParameterError("encoder_stack: no layers");
    Tensor h = x;
    for (const auto& layer : layers) h = encoder_layer(h, layer, drop);
    return h;
}

struct DecoderLayerParams {
    MultiHeadAttentionParams self_attention;
    LayerNormParams norm1;
    MultiHeadAttentionParams cross_attention;
    LayerNormParams norm2;
    FeedForwardParams ffn;
    LayerNormParams norm3;

    static DecoderLayerParams init(const AttentionConfig& cfg, Rng& rng) {
        auto self_attn = MultiHeadAttentionParams::init(cfg.d_model, cfg.heads, rng);
        auto cross_attn = MultiHeadAttentionParams::init(cfg.d_model, cfg.heads, rng);
        auto ffn = FeedForwardParams::init(cfg.d_model, rng);
        return {self_attn, LayerNormParams::identity(cfg.d_model), cross_attn, LayerNormParams::identity(cfg.d_model),
                ffn, LayerNormParams::identity(cfg.d_model)};
    }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        self_attention.for_each_parameter(prefix + ".self_attention", fn);
        norm1.for_each_parameter(prefix + ".norm1", fn);
        cross_attention.for_each_parameter(prefix + ".cross_attention", fn);
        norm2.for_each_parameter(prefix + ".norm2", fn);
        ffn.for_each_parameter(prefix + ".ffn", fn);
        norm3.for_each_parameter(prefix + ".norm3", fn);
    }
};

/// Masked self-attention over the target stream, cross-attention into the
/// memory (queries from targets, keys/values from memory), then the
/// feed-forward map; each sublayer wrapped in residual + layer norm.
inline Tensor decoder_layer(const Tensor& targets, const Tensor& memory, const AttentionMask* self_mask,
                            const AttentionMask* cross_mask, const DecoderLayerParams& p, const DropoutContext& drop) {
    Tensor h = p.norm1(add(targets, drop.apply(multi_head_attention(targets, targets, self_mask, p.self_attention))));
    h = p.norm2(add(h, drop.apply(multi_head_attention(h, memory, cross_mask, p.cross_attention))));
    return p.norm3(add(h, drop.apply(reduced_ffn(h, p.ffn))));
}

inline Tensor decoder_stack(const Tensor& targets, const Tensor& memory, const AttentionMask* self_mask,
                            const AttentionMask* cross_mask, const std::vector<DecoderLayerParams>& layers,
                            const DropoutContext& drop) {
    if (layers.empty()) throw ParameterError("decoder_stack: no layers");
    Tensor h = targets;
    for (const auto& layer : layers) h = decoder_layer(h, memory, self_mask, cross_mask, layer, drop);
    return h;
}

}  // namespace aan
