#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aan/dataio.hpp"
#include "aan/errors.hpp"
#include "aan/experiment.hpp"
#include "aan/models.hpp"

namespace aan {

inline constexpr const char* kParamsFormat = "aan-params";
inline constexpr int kParamsVersion = 1;

/// Trained model plus the metadata needed to reuse it.
struct SavedModel {
    AffectModel model;
    AffectDimension target = AffectDimension::arousal;
    std::size_t fold = 0;
    std::string test_movie;
    int best_epoch = 0;
    int epochs_run = 0;
};

inline nlohmann::ordered_json model_to_json(AffectModel& model, AffectDimension target, std::size_t fold,
                                            const std::string& test_movie, int best_epoch = 0, int epochs_run = 0) {
    const auto& c = model.config();
    nlohmann::ordered_json j;
    j["format"] = kParamsFormat;
    j["version"] = kParamsVersion;
    j["model"] = model_kind_name(model.kind());
    j["target"] = affect_dimension_name(target);
    j["seq_len"] = model.seq_len();
    j["start_value"] = model.start_value();
    j["attention"] = {{"d_model", c.d_model},
                      {"heads", c.heads},
                      {"n_layers", c.n_layers},
                      {"ffn_dim", c.ffn_dim},
                      {"dropout_rate", c.dropout_rate}};
    j["fold"] = fold;
    j["test_movie"] = test_movie;
    j["best_epoch"] = best_epoch;
    j["epochs_run"] = epochs_run;
    auto tensors = nlohmann::ordered_json::array();
    model.for_each_parameter([&](const std::string& name, Tensor& t) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}});
    });
    j["tensors"] = std::move(tensors);
    return j;
}

inline SavedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kParamsFormat || j.at("version").get<int>() != kParamsVersion) {
            throw SchemaError("params: unsupported format or version");
        }
        const auto kind = model_kind_from_name(j.at("model").get<std::string>());
        if (!kind) throw SchemaError("params: unknown model '" + j.at("model").get<std::string>() + "'");
        const auto target = affect_dimension_from_name(j.at("target").get<std::string>());
        if (!target) throw SchemaError("params: unknown target");

        const auto& a = j.at("attention");
        AttentionConfig cfg;
        a.at("heads").get_to(cfg.heads);
        a.at("n_layers").get_to(cfg.n_layers);
        a.at("ffn_dim").get_to(cfg.ffn_dim);
        a.at("dropout_rate").get_to(cfg.dropout_rate);

        Rng rng(0);
        SavedModel s{AffectModel::create(*kind, cfg, j.at("seq_len").get<std::size_t>(), rng), *target,
                     j.at("fold").get<std::size_t>(), j.at("test_movie").get<std::string>(), j.value("best_epoch", 0),
                     j.value("epochs_run", 0)};
        if (s.model.config().d_model != a.at("d_model").get<std::size_t>()) {
            throw SchemaError("params: d_model does not match the model variant");
        }
        s.model.set_start_value(j.at("start_value").get<double>());

        std::map<std::string, const nlohmann::json*> by_name;
        for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
        std::size_t used = 0;
        s.model.for_each_parameter([&](const std::string& name, Tensor& t) {
            auto it = by_name.find(name);
            if (it == by_name.end()) throw SchemaError("params: missing tensor " + name);
            if (it->second->at("shape").get<Shape>() != t.shape()) {
                throw SchemaError("params: tensor " + name + " has shape " + shape_str(it->second->at("shape").get<Shape>()) +
                                  ", expected " + shape_str(t.shape()));
            }
            const auto data = it->second->at("data").get<std::vector<double>>();
            if (data.size() != t.numel()) throw SchemaError("params: tensor " + name + " has the wrong number of values");
            std::copy(data.begin(), data.end(), t.mutable_data().begin());
            ++used;
        });
        if (used != by_name.size()) throw SchemaError("params: file has unexpected extra tensors");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("params: ") + e.what());
    }
}

inline void save_model_file(const fs::path& path, AffectModel& model, AffectDimension target, std::size_t fold,
                            const std::string& test_movie, int best_epoch = 0, int epochs_run = 0) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << model_to_json(model, target, fold, test_movie, best_epoch, epochs_run).dump(1) << '\n';
}

inline SavedModel load_model_file(const fs::path& path) {
    const std::string text = detail::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

namespace detail {

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string shortest(double v) {
    std::string s;
    append_number(s, v);
    return s;
}

}  // namespace detail

inline std::string fold_file_stem(std::size_t fold) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fold_%02zu", fold);
    return buf;
}

/// Results table: resolved config as `#` comments, one row per fold, then
/// the pooled row (epoch columns empty). Fixed six-decimal numbers.
struct ResultsRow {
    std::string fold;
    std::string movie_id;
    std::size_t segments = 0;
    PooledMetrics metrics;
    int best_epoch = 0;
    int epochs = 0;
};

inline std::string format_config_comment(const ExperimentConfig& cfg) {
    const auto& t = cfg.train;
    std::string out;
    auto line = [&](const std::string& k, const std::string& v) { out += "# " + k + "=" + v + "\n"; };
    line("model", std::string(model_kind_name(cfg.model)));
    line("target", std::string(affect_dimension_name(cfg.target)));
    line("preset", cfg.preset_name);
    line("learning_rate", detail::shortest(t.learning_rate));
    line("max_epochs", std::to_string(t.max_epochs));
    line("dropout", detail::shortest(t.dropout_rate));
    line("batch_size", std::to_string(t.batch_size));
    line("patience", std::to_string(t.patience));
    line("seq_len", std::to_string(cfg.effective_seq_len()));
    line("n_layers", std::to_string(cfg.n_layers));
    line("heads", std::to_string(cfg.heads));
    line("d_model", std::to_string(cfg.model == ModelKind::temporal ? kNumModalities * kTokenWidth : kTokenWidth));
    line("val_fraction", detail::shortest(cfg.val_fraction));
    line("start_value", cfg.start_value ? detail::shortest(*cfg.start_value) : std::string("train_mean"));
    line("seed", std::to_string(t.seed));
    return out;
}

inline std::string format_results(const ExperimentConfig& cfg, const std::vector<ResultsRow>& rows, const ResultsRow& pooled) {
    std::string out = format_config_comment(cfg);
    out += "fold,movie_id,segments,mse,pcc,best_epoch,epochs\n";
    auto emit = [&](const ResultsRow& r) {
        out += r.fold + "," + r.movie_id + "," + std::to_string(r.segments) + "," + detail::fixed6(r.metrics.mse) + "," +
               detail::fixed6(r.metrics.pcc) + ",";
        out += &r == &pooled ? std::string(",") : std::to_string(r.best_epoch) + "," + std::to_string(r.epochs);
        out += "\n";
    };
    for (const auto& r : rows) emit(r);
    emit(pooled);
    return out;
}

inline std::string format_training_log(const FitResult& fit) {
    std::string out = "epoch,train_mse,train_pcc,train_loss,val_mse,val_pcc,val_loss\n";
    for (const auto& r : fit.log) {
        out += std::to_string(r.epoch);
        for (double v : {r.train.mse, r.train.pcc, r.train.total, r.val.mse, r.val.pcc, r.val.total}) {
            out += ',';
            detail::append_number(out, v);
        }
        out += '\n';
    }
    return out;
}

/// Per-segment trace; the ground_truth column is present only when every row
/// has a label.
inline std::string format_trace(const std::vector<PredictionRow>& rows) {
    bool labelled = !rows.empty();
    for (const auto& r : rows) labelled = labelled && r.truth.has_value();
    std::string out = labelled ? "movie_id,segment_index,ground_truth,prediction\n" : "movie_id,segment_index,prediction\n";
    for (const auto& r : rows) {
        out += r.movie_id + "," + std::to_string(r.segment_index) + ",";
        if (labelled) {
            detail::append_number(out, *r.truth);
            out += ',';
        }
        detail::append_number(out, r.prediction);
        out += '\n';
    }
    return out;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace aan
