#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aan/attention.hpp"
#include "aan/errors.hpp"
#include "aan/features.hpp"
#include "aan/ops.hpp"
#include "aan/tensor.hpp"

namespace aan {

enum class ModelKind { feature, temporal, feature_temporal };

inline std::string_view model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::feature:
            return "feature";
        case ModelKind::temporal:
            return "temporal";
        case ModelKind::feature_temporal:
            return "feature_temporal";
    }
    return "?";
}

inline std::optional<ModelKind> model_kind_from_name(std::string_view name) {
    if (name == "feature") return ModelKind::feature;
    if (name == "temporal") return ModelKind::temporal;
    if (name == "feature_temporal") return ModelKind::feature_temporal;
    return std::nullopt;
}

/// One 8-neuron affine map per modality (input widths differ, so nothing is shared).
struct ModalityProjections {
    std::array<Linear, kNumModalities> maps;

    static ModalityProjections init(Rng& rng) {
        ModalityProjections p;
        for (std::size_t i = 0; i < kNumModalities; ++i) p.maps[i] = Linear::init(kModalities[i].input_dim, kTokenWidth, rng);
        return p;
    }

    // [N] records -> [N, 5*8], modality blocks in the fixed order.
    Tensor project_concat(std::span<const FeatureRecord* const> records) const {
        std::vector<Tensor> parts;
        parts.reserve(kNumModalities);
        for (std::size_t i = 0; i < kNumModalities; ++i) {
            parts.push_back(maps[i](stack_modality(records, static_cast<Modality>(i))));
        }
        return concat_last_axis(parts);
    }

    template <typename F>
    void for_each_parameter(const std::string& prefix, F&& fn) {
        for (std::size_t i = 0; i < kNumModalities; ++i) maps[i].for_each_parameter(prefix + "." + std::string(kModalities[i].name), fn);
    }
};

// [5, 8]: one token per modality.
inline Tensor project_modalities(const FeatureRecord& record, const ModalityProjections& p) {
    record.validate();
    const FeatureRecord* ptr = &record;
    return reshape(p.project_concat(std::span<const FeatureRecord* const>(&ptr, 1)), {kNumModalities, kTokenWidth});
}

/// y repeated d times; stands in for an output embedding.
inline Tensor duplicate_output(double y, std::size_t d = kNumModalities * kTokenWidth) {
    if (!std::isfinite(y)) throw NumericError("duplicate_output: non-finite value");
    return Tensor({d}, std::vector<double>(d, y));
}

struct FeatureAANParams {
    AttentionConfig config;
    ModalityProjections projections;
    std::vector<EncoderLayerParams> encoder;
    Linear head;

    static FeatureAANParams init(AttentionConfig cfg, Rng& rng) {
        cfg.d_model = kTokenWidth;
        cfg.ffn_dim = kTokenWidth;
        cfg.validate();
        FeatureAANParams p;
        p.config = cfg;
        p.projections = ModalityProjections::init(rng);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) p.encoder.push_back(EncoderLayerParams::init(cfg, rng));
        p.head = Linear::init(kTokenWidth, 1, rng);
        return p;
    }

    template <typename F>
    void for_each_parameter(F&& fn) {
        projections.for_each_parameter("projection", fn);
        for (std::size_t l = 0; l < encoder.size(); ++l) encoder[l].for_each_parameter("encoder." + std::to_string(l), fn);
        head.for_each_parameter("head", fn);
    }
};

/// Forward from already-projected tokens [B, 5, 8] (or [5, 8]): encoder, mean
/// over tokens, dropout, scalar head. Returns [B].
inline Tensor feature_aan_from_tokens(const Tensor& tokens, const FeatureAANParams& p, const DropoutContext& drop) {
    Tensor t = tokens.rank() == 2 ? reshape(tokens, {1, tokens.dim(0), tokens.dim(1)}) : tokens;
    const std::size_t batch = t.dim(0);
    Tensor pooled = mean_over_axis(encoder_stack(t, p.encoder, drop), 1);
    return reshape(p.head(drop.apply(pooled)), {batch});
}

inline Tensor feature_aan_forward(std::span<const FeatureRecord* const> records, const FeatureAANParams& p,
                                  const DropoutContext& drop) {
    const std::size_t batch = records.size();
    Tensor tokens = reshape(p.projections.project_concat(records), {batch, kNumModalities, kTokenWidth});
    return feature_aan_from_tokens(tokens, p, drop);
}

inline double feature_aan_forward(const FeatureRecord& record, const FeatureAANParams& p, bool training, Rng* rng) {
    record.validate();
    NoGradGuard no_grad;
    const FeatureRecord* ptr = &record;
    DropoutContext drop{p.config.dropout_rate, training, rng};
    return feature_aan_forward(std::span<const FeatureRecord* const>(&ptr, 1), p, drop).item();
}

struct TemporalAANParams {
    AttentionConfig config;
    ModalityProjections projections;
    std::vector<DecoderLayerParams> decoder;
    Linear head;

    static TemporalAANParams init(AttentionConfig cfg, Rng& rng) {
        cfg.d_model = kNumModalities * kTokenWidth;
        cfg.ffn_dim = cfg.d_model;
        cfg.validate();
        TemporalAANParams p;
        p.config = cfg;
        p.projections = ModalityProjections::init(rng);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) p.decoder.push_back(DecoderLayerParams::init(cfg, rng));
        p.head = Linear::init(cfg.d_model, 1, rng);
        return p;
    }

    // Concatenated projections plus positions: [B, L, 40].
    Tensor encode_segments(std::span<const FeatureRecord* const> records, std::size_t batch, std::size_t len,
                           const DropoutContext&) const {
        Tensor seq = reshape(projections.project_concat(records), {batch, len, config.d_model});
        return add(seq, positional_encoding(len, config.d_model));
    }

    template <typename F>
    void for_each_parameter(F&& fn) {
        projections.for_each_parameter("projection", fn);
        for (std::size_t l = 0; l < decoder.size(); ++l) decoder[l].for_each_parameter("decoder." + std::to_string(l), fn);
        head.for_each_parameter("head", fn);
    }
};

struct FeatureTemporalAANParams {
    AttentionConfig config;
    ModalityProjections projections;
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    Linear head;

    static FeatureTemporalAANParams init(AttentionConfig cfg, Rng& rng) {
        cfg.d_model = kTokenWidth;
        cfg.ffn_dim = kTokenWidth;
        cfg.validate();
        FeatureTemporalAANParams p;
        p.config = cfg;
        p.projections = ModalityProjections::init(rng);
        for (std::size_t l = 0; l < cfg.n_layers; ++l) p.encoder.push_back(EncoderLayerParams::init(cfg, rng));
        for (std::size_t l = 0; l < cfg.n_layers; ++l) p.decoder.push_back(DecoderLayerParams::init(cfg, rng));
        p.head = Linear::init(kTokenWidth, 1, rng);
        return p;
    }

    // Per-segment feature self-attention pooled to one 8-wide summary: [B*L, 8].
    Tensor summarize(const Tensor& tokens, const DropoutContext& drop) const {
        return mean_over_axis(encoder_stack(tokens, encoder, drop), 1);
    }

    Tensor encode_segments(std::span<const FeatureRecord* const> records, std::size_t batch, std::size_t len,
                           const DropoutContext& drop) const {
        Tensor tokens = reshape(projections.project_concat(records), {batch * len, kNumModalities, kTokenWidth});
        Tensor seq = reshape(summarize(tokens, drop), {batch, len, kTokenWidth});
        return add(seq, positional_encoding(len, kTokenWidth));
    }

    template <typename F>
    void for_each_parameter(F&& fn) {
        projections.for_each_parameter("projection", fn);
        for (std::size_t l = 0; l < encoder.size(); ++l) encoder[l].for_each_parameter("encoder." + std::to_string(l), fn);
        for (std::size_t l = 0; l < decoder.size(); ++l) decoder[l].for_each_parameter("decoder." + std::to_string(l), fn);
        head.for_each_parameter("head", fn);
    }
};

namespace detail {

/// Shared decoder path of the sequence models. `records` holds B windows of
/// L segments row-major; `prev_outputs` is [B, L], position t carrying the
/// output of position t-1 (position 0 carries the seed value).
template <typename Params>
Tensor sequence_forward(const Params& p, std::span<const FeatureRecord* const> records, const Tensor& prev_outputs,
                        const DropoutContext& drop) {
    if (prev_outputs.rank() != 2) throw ContractError("sequence model: previous outputs must be [B, L]");
    const std::size_t batch = prev_outputs.dim(0), len = prev_outputs.dim(1);
    if (records.size() != batch * len) {
        throw ContractError("sequence model: " + std::to_string(records.size()) + " segments for " +
                            std::to_string(len) + " previous outputs x " + std::to_string(batch) + " windows");
    }
    const std::size_t d = p.config.d_model;
    Tensor memory = p.encode_segments(records, batch, len, drop);
    Tensor targets = add(expand_last(prev_outputs, d), positional_encoding(len, d));
    const AttentionMask causal = make_causal_mask(len);
    Tensor h = decoder_stack(targets, memory, &causal, &causal, p.decoder, drop);
    return reshape(p.head(drop.apply(h)), {batch, len});
}

template <typename Params>
std::vector<double> sequence_autoregressive(const Params& p, std::span<const FeatureRecord* const> records,
                                            std::size_t batch, std::size_t len, double start_value) {
    if (len == 0 || records.size() != batch * len) throw ContractError("autoregressive_predict: segment count mismatch");
    NoGradGuard no_grad;
    DropoutContext eval{p.config.dropout_rate, false, nullptr};
    // Positions past t are masked out of position t, so their filler value is irrelevant.
    std::vector<double> prev(batch * len, start_value);
    std::vector<double> last(batch);
    for (std::size_t t = 0; t < len; ++t) {
        Tensor out = sequence_forward(p, records, Tensor({batch, len}, prev), eval);
        for (std::size_t b = 0; b < batch; ++b) {
            const double y = out.at(b, t);
            if (t + 1 < len) prev[b * len + t + 1] = y;
            last[b] = y;
        }
    }
    return last;
}

}  // namespace detail

/// Predictions at every position, [L] for one window.
inline std::vector<double> temporal_aan_forward(std::span<const FeatureRecord> segments, std::span<const double> prev_outputs,
                                                const TemporalAANParams& p, bool training, Rng* rng) {
    if (segments.size() != prev_outputs.size()) {
        throw ContractError("temporal_aan_forward: " + std::to_string(segments.size()) + " segments but " +
                            std::to_string(prev_outputs.size()) + " previous outputs");
    }
    std::vector<const FeatureRecord*> ptrs;
    for (const auto& s : segments) {
        s.validate();
        ptrs.push_back(&s);
    }
    NoGradGuard no_grad;
    Tensor prev({1, prev_outputs.size()}, std::vector<double>(prev_outputs.begin(), prev_outputs.end()));
    Tensor out = detail::sequence_forward(p, ptrs, prev, DropoutContext{p.config.dropout_rate, training, rng});
    return {out.data().begin(), out.data().end()};
}

inline std::vector<double> feature_temporal_forward(std::span<const FeatureRecord> segments,
                                                    std::span<const double> prev_outputs,
                                                    const FeatureTemporalAANParams& p, bool training, Rng* rng) {
    if (segments.size() != prev_outputs.size()) {
        throw ContractError("feature_temporal_forward: " + std::to_string(segments.size()) + " segments but " +
                            std::to_string(prev_outputs.size()) + " previous outputs");
    }
    std::vector<const FeatureRecord*> ptrs;
    for (const auto& s : segments) {
        s.validate();
        ptrs.push_back(&s);
    }
    NoGradGuard no_grad;
    Tensor prev({1, prev_outputs.size()}, std::vector<double>(prev_outputs.begin(), prev_outputs.end()));
    Tensor out = detail::sequence_forward(p, ptrs, prev, DropoutContext{p.config.dropout_rate, training, rng});
    return {out.data().begin(), out.data().end()};
}

/// Generates outputs one position at a time, re-feeding each prediction as the
/// next previous output; returns the last position's value.
template <typename Params>
double autoregressive_predict(std::span<const FeatureRecord> segments, const Params& p, double start_value) {
    std::vector<const FeatureRecord*> ptrs;
    for (const auto& s : segments) ptrs.push_back(&s);
    return detail::sequence_autoregressive(p, ptrs, 1, ptrs.size(), start_value).front();
}

using ModelParams = std::variant<FeatureAANParams, TemporalAANParams, FeatureTemporalAANParams>;

/// Any of the three variants behind one training/prediction surface.
class AffectModel {
   public:
    static AffectModel create(ModelKind kind, const AttentionConfig& cfg, std::size_t seq_len, Rng& rng) {
        AffectModel m;
        m.kind_ = kind;
        switch (kind) {
            case ModelKind::feature:
                m.params_ = FeatureAANParams::init(cfg, rng);
                m.seq_len_ = 1;
                break;
            case ModelKind::temporal:
                m.params_ = TemporalAANParams::init(cfg, rng);
                m.seq_len_ = seq_len;
                break;
            case ModelKind::feature_temporal:
                m.params_ = FeatureTemporalAANParams::init(cfg, rng);
                m.seq_len_ = seq_len;
                break;
        }
        if (m.seq_len_ < 1) throw ParameterError("model: sequence length must be >= 1");
        return m;
    }

    ModelKind kind() const { return kind_; }
    std::size_t seq_len() const { return seq_len_; }
    const AttentionConfig& config() const {
        return std::visit([](const auto& p) -> const AttentionConfig& { return p.config; }, params_);
    }
    double start_value() const { return start_value_; }
    void set_start_value(double v) { start_value_ = v; }
    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }

    /// Training-time predictions for the last position of each window, [B].
    /// Sequence models see teacher-forced history: the seed value, then the
    /// window's own labels shifted by one.
    Tensor train_forward(std::span<const Window> windows, const DropoutContext& drop) const {
        if (windows.empty()) throw ContractError("train_forward: empty batch");
        if (kind_ == ModelKind::feature) {
            std::vector<const FeatureRecord*> recs;
            for (const auto& w : windows) recs.push_back(w.segments.back());
            return feature_aan_forward(recs, std::get<FeatureAANParams>(params_), drop);
        }
        const std::size_t len = windows.front().length();
        std::vector<const FeatureRecord*> recs;
        std::vector<double> prev;
        for (const auto& w : windows) {
            if (w.length() != len) throw ContractError("train_forward: windows of different lengths in one batch");
            recs.insert(recs.end(), w.segments.begin(), w.segments.end());
            prev.push_back(start_value_);
            prev.insert(prev.end(), w.labels.begin(), w.labels.end() - 1);
        }
        Tensor prev_t({windows.size(), len}, std::move(prev));
        Tensor all = std::visit(
            [&](const auto& p) -> Tensor {
                if constexpr (std::is_same_v<std::decay_t<decltype(p)>, FeatureAANParams>) {
                    throw ContractError("unreachable");
                } else {
                    return detail::sequence_forward(p, recs, prev_t, drop);
                }
            },
            params_);
        return reshape(slice_last_axis(all, len - 1, len), {windows.size()});
    }

    /// Evaluation-mode prediction of each window's last segment (autoregressive
    /// for sequence models). Windows may differ in length.
    std::vector<double> predict(std::span<const Window> windows) const {
        std::vector<double> out(windows.size());
        if (windows.empty()) return out;
        NoGradGuard no_grad;
        if (kind_ == ModelKind::feature) {
            std::vector<const FeatureRecord*> recs;
            for (const auto& w : windows) recs.push_back(w.segments.back());
            const auto& p = std::get<FeatureAANParams>(params_);
            Tensor y = feature_aan_forward(recs, p, DropoutContext{p.config.dropout_rate, false, nullptr});
            std::copy(y.data().begin(), y.data().end(), out.begin());
            return out;
        }
        std::map<std::size_t, std::vector<std::size_t>> by_length;
        for (std::size_t i = 0; i < windows.size(); ++i) by_length[windows[i].length()].push_back(i);
        for (const auto& [len, idx] : by_length) {
            std::vector<const FeatureRecord*> recs;
            for (auto i : idx) recs.insert(recs.end(), windows[i].segments.begin(), windows[i].segments.end());
            std::vector<double> y = std::visit(
                [&](const auto& p) -> std::vector<double> {
                    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, FeatureAANParams>) {
                        throw ContractError("unreachable");
                    } else {
                        return detail::sequence_autoregressive(p, recs, idx.size(), len, start_value_);
                    }
                },
                params_);
            for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = y[j];
        }
        return out;
    }

    template <typename F>
    void for_each_parameter(F&& fn) {
        std::visit([&](auto& p) { p.for_each_parameter(fn); }, params_);
    }

    std::vector<Tensor> parameters() {
        std::vector<Tensor> out;
        for_each_parameter([&](const std::string&, Tensor& t) { out.push_back(t); });
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each_parameter([&](const std::string&, Tensor& t) { n += t.numel(); });
        return n;
    }

    std::vector<std::vector<double>> snapshot() {
        std::vector<std::vector<double>> out;
        for_each_parameter([&](const std::string&, Tensor& t) { out.emplace_back(t.data().begin(), t.data().end()); });
        return out;
    }

    void restore(const std::vector<std::vector<double>>& values) {
        std::size_t i = 0;
        for_each_parameter([&](const std::string& name, Tensor& t) {
            if (i >= values.size() || values[i].size() != t.numel()) {
                throw ContractError("restore: parameter " + name + " does not match the snapshot");
            }
            std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
            ++i;
        });
        if (i != values.size()) throw ContractError("restore: snapshot has extra tensors");
    }

   private:
    ModelKind kind_ = ModelKind::feature;
    std::size_t seq_len_ = 1;
    double start_value_ = 0.0;
    ModelParams params_;
};

}  // namespace aan
