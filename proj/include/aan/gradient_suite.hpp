#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aan/attention.hpp"
#include "aan/gradcheck.hpp"
#include "aan/models.hpp"
#include "aan/ops.hpp"
#include "aan/synth.hpp"
#include "aan/training.hpp"

namespace aan {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

using MultiFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Scalar probe sum(f(inputs) * W) with W fixed, so every output element
// contributes a distinct weight (a plain sum would hide softmax/normalization errors).
inline std::function<Tensor(const std::vector<Tensor>&)> weighted_probe(const MultiFn& f,
                                                                        const std::vector<Tensor>& inputs, Rng& rng) {
    Tensor shape_probe;
    {
        NoGradGuard no_grad;
        shape_probe = f(inputs);
    }
    Tensor weights = random_tensor(shape_probe.shape(), rng);
    return [f, weights](const std::vector<Tensor>& in) { return sum(mul(f(in), weights)); };
}

// Checks the gradient with respect to every input in turn; reports the worst.
inline GradCheckReport check_inputs(const std::string& name, const std::vector<Tensor>& inputs, const MultiFn& f, Rng& rng) {
    auto probe = weighted_probe(f, inputs, rng);
    GradCheckReport total{name, 0.0, 0, kGradTolerance, true};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto one = grad_check(
            [&](const Tensor& x) {
                auto v = inputs;
                v[i] = x;
                return probe(v);
            },
            inputs[i], kGradStep, kGradTolerance, name);
        total.max_rel_error = std::max(total.max_rel_error, one.max_rel_error);
        total.checked += one.checked;
    }
    total.passed = total.max_rel_error < total.tolerance;
    return total;
}

template <typename Params>
std::vector<Tensor> collect_parameters(Params& p) {
    std::vector<Tensor> out;
    p.for_each_parameter("p", [&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

inline void merge_into(GradCheckReport& into, const GradCheckReport& other) {
    into.max_rel_error = std::max(into.max_rel_error, other.max_rel_error);
    into.checked += other.checked;
    into.passed = into.max_rel_error < into.tolerance;
}

// Non-zero layer-norm affine parameters so their gradients are exercised.
template <typename Params>
void randomize_all(Params& p, Rng& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    p.for_each_parameter("p", [&](const std::string&, Tensor& t) {
        for (auto& v : t.mutable_data()) v = dist(rng);
    });
}

inline GradCheckReport check_model(const std::string& name, ModelKind kind, std::size_t seq_len, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_movies = 1;
    spec.segments_per_movie = seq_len + 1;
    spec.seed = seed;
    const Dataset data = synth_generate(spec);
    auto windows = build_windows(data.manifest, data.records, seq_len, AffectDimension::arousal);
    windows.resize(2);
    std::vector<double> targets = {windows[0].target(), windows[1].target()};

    Rng rng(seed);
    AttentionConfig cfg;
    cfg.dropout_rate = 0.1;
    auto model = AffectModel::create(kind, cfg, seq_len, rng);
    model.set_start_value(0.1);
    auto loss_fn = [&]() {
        Rng drop_rng(seed + 1);
        return affect_loss(model.train_forward(windows, DropoutContext{cfg.dropout_rate, true, &drop_rng}), targets);
    };
    return grad_check_parameters(loss_fn, model.parameters(), kGradStep, kGradTolerance, 12, rng, name);
}

}  // namespace detail

/// Finite-difference checks of every differentiable primitive, the attention
/// layers and the three full models. `inject_fault` adds an operation with a
/// deliberately wrong derivative, which must fail.
inline std::vector<GradCheckReport> run_gradient_suite(std::uint64_t seed = 7, bool inject_fault = false) {
    using detail::check_inputs;
    using detail::random_tensor;
    Rng rng(seed);
    std::vector<GradCheckReport> reports;
    auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };

    reports.push_back(check_inputs("matmul", {r({3, 4}), r({4, 2})}, [](const auto& v) { return matmul(v[0], v[1]); }, rng));
    reports.push_back(check_inputs("matmul_batched", {r({2, 3, 4}), r({2, 4, 2})},
                                   [](const auto& v) { return matmul(v[0], v[1]); }, rng));
    reports.push_back(check_inputs("add_broadcast", {r({2, 3, 4}), r({4})}, [](const auto& v) { return add(v[0], v[1]); }, rng));
    reports.push_back(check_inputs("sub", {r({3, 3}), r({3, 3})}, [](const auto& v) { return sub(v[0], v[1]); }, rng));
    reports.push_back(check_inputs("mul", {r({3, 3}), r({3, 3})}, [](const auto& v) { return mul(v[0], v[1]); }, rng));
    reports.push_back(check_inputs("scale", {r({4})}, [](const auto& v) { return scale(v[0], -1.7); }, rng));
    reports.push_back(check_inputs("relu", {r({12})}, [](const auto& v) { return relu(v[0]); }, rng));
    reports.push_back(check_inputs("softmax_rows", {r({3, 5})}, [](const auto& v) { return softmax_rows(v[0]); }, rng));
    {
        const AttentionMask causal = make_causal_mask(4);
        reports.push_back(check_inputs("masked_softmax", {r({2, 4, 4})},
                                       [causal](const auto& v) { return masked_softmax(v[0], causal.flags(), 4, 4); }, rng));
    }
    reports.push_back(check_inputs("layer_norm", {r({3, 6}), r({6}), r({6})},
                                   [](const auto& v) { return layer_norm(v[0], v[1], v[2]); }, rng));
    reports.push_back(check_inputs("transpose", {r({2, 3, 4})}, [](const auto& v) { return transpose(v[0]); }, rng));
    reports.push_back(check_inputs("concat_last_axis", {r({3, 2}), r({3, 4})},
                                   [](const auto& v) { return concat_last_axis({v[0], v[1]}); }, rng));
    reports.push_back(check_inputs("slice_last_axis", {r({3, 6})}, [](const auto& v) { return slice_last_axis(v[0], 1, 4); }, rng));
    reports.push_back(check_inputs("mean_over_axis", {r({2, 5, 3})}, [](const auto& v) { return mean_over_axis(v[0], 1); }, rng));
    reports.push_back(check_inputs("sum", {r({2, 3})}, [](const auto& v) { return sum(v[0]); }, rng));
    reports.push_back(check_inputs("reshape", {r({2, 6})}, [](const auto& v) { return reshape(v[0], {3, 4}); }, rng));
    reports.push_back(check_inputs("expand_last", {r({2, 3})}, [](const auto& v) { return expand_last(v[0], 5); }, rng));
    reports.push_back(check_inputs(
        "dropout", {r({4, 5})},
        [](const auto& v) {
            Rng drop_rng(99);
            return dropout(v[0], 0.3, true, &drop_rng);
        },
        rng));
    {
        const std::vector<double> target = {0.3, -0.2, 0.9, 0.1, -0.7, 0.4};
        reports.push_back(grad_check([&](const Tensor& x) { return affect_loss(x, target); }, r({6}), kGradStep,
                                     kGradTolerance, "affect_loss"));
    }
    reports.push_back(check_inputs("scaled_dot_product_attention", {r({3, 4}), r({5, 4}), r({5, 3})},
                                   [](const auto& v) { return scaled_dot_product_attention(v[0], v[1], v[2]); }, rng));

    {
        auto mha = MultiHeadAttentionParams::init(8, 2, rng);
        const AttentionMask causal = make_causal_mask(4);
        auto rep = check_inputs("multi_head_attention", {r({4, 8}), r({4, 8})},
                                [&](const auto& v) { return multi_head_attention(v[0], v[1], &causal, mha); }, rng);
        Tensor q = r({4, 8}), kv = r({4, 8});
        auto probe = detail::weighted_probe([&](const auto& v) { return multi_head_attention(v[0], v[1], &causal, mha); },
                                            {q, kv}, rng);
        detail::merge_into(rep, grad_check_parameters([&] { return probe({q, kv}); }, detail::collect_parameters(mha),
                                                      kGradStep, kGradTolerance, 0, rng));
        reports.push_back(rep);
    }
    {
        AttentionConfig cfg;
        auto layer = EncoderLayerParams::init(cfg, rng);
        detail::randomize_all(layer, rng);
        const DropoutContext drop{0.0, false, nullptr};
        auto f = [&](const auto& v) { return encoder_layer(v[0], layer, drop); };
        auto rep = check_inputs("encoder_layer", {r({5, 8})}, f, rng);
        Tensor x = r({5, 8});
        auto probe = detail::weighted_probe(f, {x}, rng);
        detail::merge_into(rep, grad_check_parameters([&] { return probe({x}); }, detail::collect_parameters(layer),
                                                      kGradStep, kGradTolerance, 0, rng));
        reports.push_back(rep);
    }
    {
        AttentionConfig cfg;
        auto layer = DecoderLayerParams::init(cfg, rng);
        detail::randomize_all(layer, rng);
        const AttentionMask causal = make_causal_mask(4);
        const DropoutContext drop{0.0, false, nullptr};
        auto f = [&](const auto& v) { return decoder_layer(v[0], v[1], &causal, &causal, layer, drop); };
        auto rep = check_inputs("decoder_layer", {r({4, 8}), r({4, 8})}, f, rng);
        Tensor t = r({4, 8}), m = r({4, 8});
        auto probe = detail::weighted_probe(f, {t, m}, rng);
        detail::merge_into(rep, grad_check_parameters([&] { return probe({t, m}); }, detail::collect_parameters(layer),
                                                      kGradStep, kGradTolerance, 0, rng));
        reports.push_back(rep);
    }

    reports.push_back(detail::check_model("feature_aan_model", ModelKind::feature, 1, seed));
    reports.push_back(detail::check_model("temporal_aan_model", ModelKind::temporal, 3, seed));
    reports.push_back(detail::check_model("feature_temporal_aan_model", ModelKind::feature_temporal, 3, seed));

    if (inject_fault) {
        // d/dx x^2 reported as x: off by a factor of two everywhere.
        reports.push_back(check_inputs(
            "injected_wrong_square",
            {r({5})},
            [](const auto& v) {
                return map_unary(v[0], [](double x) { return x * x; }, [](double x) { return x; }, "wrong_square");
            },
            rng));
    }
    return reports;
}

}  // namespace aan
