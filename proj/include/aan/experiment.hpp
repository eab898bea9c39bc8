#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aan/dataio.hpp"
#include "aan/metrics.hpp"
#include "aan/models.hpp"
#include "aan/training.hpp"

namespace aan {

/// Everything needed to reproduce one leave-one-movie-out run.
struct ExperimentConfig {
    ModelKind model = ModelKind::feature;
    AffectDimension target = AffectDimension::arousal;
    std::string preset_name = "cognimuse_feature";
    TrainConfig train;
    std::size_t n_layers = 2;
    std::size_t heads = kPresetHeads;
    double val_fraction = 0.1;
    std::optional<double> start_value;  // default: mean of the fold's training targets

    std::size_t effective_seq_len() const { return model == ModelKind::feature ? 1 : train.seq_len; }

    AttentionConfig attention() const {
        AttentionConfig a;
        a.heads = heads;
        a.n_layers = n_layers;
        a.dropout_rate = train.dropout_rate;
        return a;
    }
};

struct PredictionRow {
    std::size_t fold = 0;
    std::string movie_id;
    int segment_index = 0;
    std::optional<double> truth;
    double prediction = 0.0;
};

struct FoldOutcome {
    Fold fold;
    AffectModel model;
    FitResult fit;
    std::vector<PredictionRow> predictions;
    PooledMetrics metrics;
};

struct EvalReport {
    std::vector<FoldOutcome> folds;
    PooledMetrics pooled;
    std::vector<PredictionRow> predictions;
};

/// Evaluation-mode prediction of every segment in `rows` (one trace row each).
inline std::vector<PredictionRow> predict_rows(const AffectModel& model, const Dataset& data,
                                               std::span<const std::size_t> rows, AffectDimension target,
                                               std::size_t fold_index = 0) {
    const auto windows = build_prediction_windows(data.manifest, data.records, rows, model.seq_len(), target);
    const auto values = model.predict(windows);
    std::vector<PredictionRow> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        PredictionRow r;
        r.fold = fold_index;
        r.movie_id = windows[i].movie_id;
        r.segment_index = windows[i].segment_indices.back();
        if (!std::isnan(windows[i].target())) r.truth = windows[i].target();
        r.prediction = values[i];
        out.push_back(std::move(r));
    }
    return out;
}

inline PooledMetrics metrics_of(std::span<const PredictionRow> rows) {
    std::vector<double> p, t;
    for (const auto& r : rows) {
        if (!r.truth) continue;
        p.push_back(r.prediction);
        t.push_back(*r.truth);
    }
    if (p.empty()) return {};
    return pooled_metrics(p, t);
}

/// Trains one fold: seeded 10% validation hold-out from the training movies,
/// start value from the remaining targets, early-stopped fit.
inline FoldOutcome train_fold(const Dataset& data, const Fold& fold, const ExperimentConfig& cfg,
                              const EpochCallback& on_epoch = {}) {
    Rng rng(cfg.train.seed + fold.index);
    auto windows = build_windows(data.manifest, data.records, cfg.effective_seq_len(), cfg.target,
                                 std::span<const std::size_t>(fold.train));
    std::erase_if(windows, [](const Window& w) { return std::isnan(w.target()); });
    std::shuffle(windows.begin(), windows.end(), rng);
    const auto n_val = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(windows.size()))));
    if (windows.size() < n_val + 2) throw ContractError("fold " + std::to_string(fold.index) + ": too few training windows");
    std::vector<Window> val(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Window> train(windows.begin() + static_cast<std::ptrdiff_t>(n_val), windows.end());

    FoldOutcome out{fold, AffectModel::create(cfg.model, cfg.attention(), cfg.effective_seq_len(), rng), {}, {}, {}};
    double mean = 0.0;
    for (const auto& w : train) mean += w.target();
    out.model.set_start_value(cfg.start_value.value_or(mean / static_cast<double>(train.size())));
    try {
        out.fit = fit(out.model, train, val, cfg.train, rng, on_epoch);
    } catch (const TrainingError& e) {
        throw TrainingError("fold " + std::to_string(fold.index) + " (" + fold.test_movie + "): " + e.what(), e.epoch());
    }
    out.predictions = predict_rows(out.model, data, fold.test, cfg.target, fold.index);
    out.metrics = metrics_of(out.predictions);
    return out;
}

inline EvalReport collect_report(std::vector<FoldOutcome> folds) {
    EvalReport report;
    report.folds = std::move(folds);
    for (const auto& f : report.folds) report.predictions.insert(report.predictions.end(), f.predictions.begin(), f.predictions.end());
    report.pooled = metrics_of(report.predictions);
    return report;
}

/// Leave-one-movie-out over the dataset; `only` restricts to some fold indices.
inline EvalReport run_cross_validation(const Dataset& data, const ExperimentConfig& cfg,
                                       const std::vector<std::size_t>& only = {},
                                       const std::function<void(const FoldOutcome&)>& on_fold = {}) {
    std::vector<FoldOutcome> outcomes;
    for (const auto& fold : split_leave_one_movie_out(data.manifest)) {
        if (!only.empty() && std::find(only.begin(), only.end(), fold.index) == only.end()) continue;
        outcomes.push_back(train_fold(data, fold, cfg));
        if (on_fold) on_fold(outcomes.back());
    }
    return collect_report(std::move(outcomes));
}

}  // namespace aan
