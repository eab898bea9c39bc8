#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aan/errors.hpp"
#include "aan/features.hpp"
#include "aan/metrics.hpp"
#include "aan/models.hpp"
#include "aan/ops.hpp"
#include "aan/tensor.hpp"

namespace aan {

struct LossReport {
    double mse = 0.0;
    double pcc = 0.0;
    double total = 0.0;  // mse + (1 - pcc)
};

inline LossReport loss_report(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw ContractError("loss: prediction/target lengths differ");
    if (pred.size() < 2) throw ContractError("loss: needs at least two predictions");
    LossReport r;
    r.mse = mean_squared_error(pred, target);
    r.pcc = pcc(pred, target);
    r.total = r.mse + (1.0 - r.pcc);
    return r;
}

/// Differentiable L = MSE + (1 - rho) over a batch, as a scalar tensor.
/// Gradient flows through both terms; a degenerate rho contributes none.
inline Tensor affect_loss(const Tensor& pred, std::span<const double> target) {
    if (pred.rank() != 1) throw ContractError("affect_loss: predictions must be a vector, got " + shape_str(pred.shape()));
    const LossReport r = loss_report(pred.data(), target);
    const std::size_t n = target.size();
    const double nd = static_cast<double>(n);
    std::vector<double> grad(n);
    double pm = 0.0, tm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pm += pred[i];
        tm += target[i];
    }
    pm /= nd;
    tm /= nd;
    double spp = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        spp += (pred[i] - pm) * (pred[i] - pm);
        stt += (target[i] - tm) * (target[i] - tm);
    }
    const bool degenerate = spp / nd < kDegenerateVariance || stt / nd < kDegenerateVariance;
    for (std::size_t i = 0; i < n; ++i) {
        grad[i] = 2.0 * (pred[i] - target[i]) / nd;
        if (!degenerate) {
            // d rho / d p_i = t_i' / (|p'| |t'|) - rho p_i' / |p'|^2 with primes = centered
            const double drho = (target[i] - tm) / std::sqrt(spp * stt) - r.pcc * (pred[i] - pm) / spp;
            grad[i] -= drho;
        }
    }
    return Tensor::make_result({1}, {r.total}, {pred}, "affect_loss", [grad = std::move(grad)](detail::Node& self) {
        auto& p = *self.inputs[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < grad.size(); ++i) p.grad[i] += self.grad[0] * grad[i];
    });
}

struct TrainConfig {
    double learning_rate = 5e-4;
    int max_epochs = 500;
    double dropout_rate = 0.1;
    std::size_t batch_size = 30;
    int patience = 30;
    std::size_t seq_len = 5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 42;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ParameterError("train config: learning rate must be positive");
        if (max_epochs < 1) throw ParameterError("train config: max_epochs must be >= 1");
        if (batch_size < 2) throw ParameterError("train config: batch size must be >= 2");
        if (patience < 1) throw ParameterError("train config: patience must be >= 1");
        if (seq_len < 1) throw ParameterError("train config: seq_len must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("train config: dropout outside [0,1)");
    }
};

inline const std::vector<std::string_view>& preset_names() {
    static const std::vector<std::string_view> names = {"cognimuse_feature", "cognimuse_temporal", "eimt16_feature",
                                                        "eimt16_temporal"};
    return names;
}

/// Per-dataset hyperparameter presets. EIMT16 batch size depends on the
/// predicted dimension (40 arousal, 20 valence).
inline std::optional<TrainConfig> preset(std::string_view name, AffectDimension target) {
    TrainConfig c;
    if (name == "cognimuse_feature") {
        c.learning_rate = 0.0005;
        c.max_epochs = 500;
        c.dropout_rate = 0.1;
        c.batch_size = 30;
        c.seq_len = 5;
    } else if (name == "cognimuse_temporal") {
        c.learning_rate = 0.001;
        c.max_epochs = 1000;
        c.dropout_rate = 0.5;
        c.batch_size = 30;
        c.seq_len = 5;
    } else if (name == "eimt16_feature") {
        c.learning_rate = 0.01;
        c.max_epochs = 500;
        c.dropout_rate = 0.1;
        c.batch_size = target == AffectDimension::arousal ? 40 : 20;
        c.seq_len = 4;
    } else if (name == "eimt16_temporal") {
        c.learning_rate = 0.01;
        c.max_epochs = 1000;
        c.dropout_rate = 0.5;
        c.batch_size = target == AffectDimension::arousal ? 40 : 20;
        c.seq_len = 4;
    } else {
        return std::nullopt;
    }
    c.patience = 30;
    return c;
}

inline constexpr std::size_t kPresetHeads = 2;

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamConfig from(const TrainConfig& c) { return {c.learning_rate, c.adam_beta1, c.adam_beta2, c.adam_eps}; }
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update using each parameter's accumulated grad
/// (absent grad = zero). Initializes the state on first use.
inline void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty() && state.t == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                            std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel()) {
            throw ContractError("adam_step: state shape mismatch for tensor " + std::to_string(i));
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].mutable_data();
        const bool has = params[i].has_grad();
        auto grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = has ? grad[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            values[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

struct TrainLogRow {
    int epoch = 0;
    LossReport train;
    LossReport val;
};

struct FitResult {
    std::vector<TrainLogRow> log;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

// Splits a shuffled index list into batches of `batch_size`; a trailing
// singleton joins the previous batch since batch PCC needs two values.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

using EpochCallback = std::function<void(const TrainLogRow&)>;

/// Mini-batch Adam on L = MSE + (1 - rho) with early stopping on validation
/// loss. On return `model` holds the parameters of the best validation epoch.
inline FitResult fit(AffectModel& model, std::span<const Window> train, std::span<const Window> val,
                     const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train.size() < 2) throw ContractError("fit: need at least two training samples");
    if (val.size() < 2) throw ContractError("fit: need at least two validation samples");

    std::vector<Tensor> params = model.parameters();
    AdamState adam;
    const AdamConfig adam_cfg = AdamConfig::from(cfg);
    const DropoutContext drop{cfg.dropout_rate, true, &rng};

    std::vector<double> val_targets;
    for (const auto& w : val) val_targets.push_back(w.target());

    FitResult result;
    std::vector<std::vector<double>> best = model.snapshot();
    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<double> epoch_pred, epoch_target;
        double loss_sum = 0.0;
        for (const auto& idx : make_batches(order, cfg.batch_size)) {
            std::vector<Window> batch;
            std::vector<double> targets;
            for (auto i : idx) {
                batch.push_back(train[i]);
                targets.push_back(train[i].target());
            }
            for (auto& p : params) p.zero_grad();
            Tensor pred, loss;
            try {
                pred = model.train_forward(batch, drop);
                loss = affect_loss(pred, targets);
            } catch (const NumericError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what(), epoch);
            }
            if (!std::isfinite(loss.item())) {
                throw TrainingError("training diverged (non-finite loss) at epoch " + std::to_string(epoch), epoch);
            }
            backward(loss);
            adam_step(params, adam, adam_cfg);
            loss_sum += loss.item() * static_cast<double>(idx.size());
            epoch_pred.insert(epoch_pred.end(), pred.data().begin(), pred.data().end());
            epoch_target.insert(epoch_target.end(), targets.begin(), targets.end());
        }
        TrainLogRow row;
        row.epoch = epoch;
        row.train.mse = mean_squared_error(epoch_pred, epoch_target);
        row.train.pcc = pcc(epoch_pred, epoch_target);
        row.train.total = loss_sum / static_cast<double>(train.size());

        std::vector<double> val_pred;
        try {
            val_pred = model.predict(val);
        } catch (const NumericError& e) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what(), epoch);
        }
        for (double v : val_pred) {
            if (!std::isfinite(v)) {
                throw TrainingError("training diverged (non-finite validation prediction) at epoch " + std::to_string(epoch),
                                    epoch);
            }
        }
        row.val = loss_report(val_pred, val_targets);
        result.log.push_back(row);
        if (on_epoch) on_epoch(row);

        if (row.val.total < best_loss) {
            best_loss = row.val.total;
            best = model.snapshot();
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    model.restore(best);
    result.best_val_loss = best_loss;
    return result;
}

}  // namespace aan
