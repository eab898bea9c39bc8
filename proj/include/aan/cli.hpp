#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aan/dataio.hpp"
#include "aan/experiment.hpp"
#include "aan/gradient_suite.hpp"
#include "aan/serialize.hpp"
#include "aan/synth.hpp"

namespace aan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad invocation detected after parsing (exit code 2).
class UsageError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Flags shared by `train` and `eval`. Unset optionals fall back to the preset.
struct RunOptions {
    std::string data;
    std::string out = "aan_out";
    std::string model = "feature";
    std::string target = "arousal";
    std::optional<std::string> preset_name;
    std::optional<double> lr;
    std::optional<int> epochs;
    std::optional<double> dropout;
    std::optional<std::size_t> batch;
    std::optional<int> patience;
    std::optional<std::size_t> seq_len;
    std::optional<std::size_t> layers;
    std::optional<std::size_t> heads;
    std::optional<double> val_fraction;
    std::optional<double> start_value;
    std::uint64_t seed = 42;
    std::vector<std::size_t> folds;
    std::size_t jobs = 1;
    std::string params_dir;
    std::string config;
};

/// Preset defaults, then explicit overrides.
inline ExperimentConfig resolve_experiment(const RunOptions& o) {
    ExperimentConfig cfg;
    const auto kind = model_kind_from_name(o.model);
    if (!kind) throw UsageError("unknown model '" + o.model + "' (feature, temporal, feature_temporal)");
    const auto target = affect_dimension_from_name(o.target);
    if (!target) throw UsageError("unknown target '" + o.target + "' (arousal, valence)");
    cfg.model = *kind;
    cfg.target = *target;
    cfg.preset_name = o.preset_name.value_or(*kind == ModelKind::feature ? "cognimuse_feature" : "cognimuse_temporal");
    const auto base = preset(cfg.preset_name, cfg.target);
    if (!base) throw UsageError("unknown preset '" + cfg.preset_name + "'");
    cfg.train = *base;
    if (o.lr) cfg.train.learning_rate = *o.lr;
    if (o.epochs) cfg.train.max_epochs = *o.epochs;
    if (o.dropout) cfg.train.dropout_rate = *o.dropout;
    if (o.batch) cfg.train.batch_size = *o.batch;
    if (o.patience) cfg.train.patience = *o.patience;
    if (o.seq_len) cfg.train.seq_len = *o.seq_len;
    if (o.layers) cfg.n_layers = *o.layers;
    if (o.heads) cfg.heads = *o.heads;
    if (o.val_fraction) cfg.val_fraction = *o.val_fraction;
    cfg.start_value = o.start_value;
    cfg.train.seed = o.seed;
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) throw UsageError("val-fraction must be in (0,1)");
    try {
        cfg.train.validate();
        cfg.attention().validate();
    } catch (const ParameterError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

namespace detail {

inline ResultsRow results_row(const FoldOutcome& f) {
    return {std::to_string(f.fold.index), f.fold.test_movie, f.predictions.size(), f.metrics, f.fit.best_epoch,
            static_cast<int>(f.fit.log.size())};
}

inline void write_report(const fs::path& out_dir, const ExperimentConfig& cfg, const EvalReport& report) {
    std::vector<ResultsRow> rows;
    for (const auto& f : report.folds) rows.push_back(results_row(f));
    const ResultsRow pooled{"pooled", "all", report.predictions.size(), report.pooled, 0, 0};
    write_text_file(out_dir / "results.csv", format_results(cfg, rows, pooled));
    write_text_file(out_dir / "predictions.csv", format_trace(report.predictions));
}

inline std::vector<Fold> selected_folds(const Dataset& data, const std::vector<std::size_t>& only) {
    auto folds = split_leave_one_movie_out(data.manifest);
    for (auto i : only) {
        if (i >= folds.size()) {
            throw UsageError("fold " + std::to_string(i) + " out of range (dataset has " + std::to_string(folds.size()) +
                             " movies)");
        }
    }
    if (only.empty()) return folds;
    std::vector<Fold> out;
    for (auto& f : folds) {
        if (std::find(only.begin(), only.end(), f.index) != only.end()) out.push_back(std::move(f));
    }
    return out;
}

inline Dataset load_data_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("--data is required");
    if (!fs::is_directory(dir)) throw UsageError("data directory not found: " + dir);
    return load_dataset(dir);
}

// Folds are independent, so they can train on separate threads; outputs are
// collected and written in fold order.
inline std::vector<FoldOutcome> train_folds(const Dataset& data, const std::vector<Fold>& folds,
                                            const ExperimentConfig& cfg, std::size_t jobs, std::ostream& err) {
    std::vector<FoldOutcome> outcomes;
    outcomes.reserve(folds.size());
    auto report = [&](const FoldOutcome& f) {
        err << "fold " << f.fold.index << " (" << f.fold.test_movie << "): mse=" << fixed6(f.metrics.mse)
            << " pcc=" << fixed6(f.metrics.pcc) << " epochs=" << f.fit.log.size() << " best=" << f.fit.best_epoch << "\n";
    };
    for (std::size_t start = 0; start < folds.size(); start += std::max<std::size_t>(jobs, 1)) {
        std::vector<std::future<FoldOutcome>> running;
        for (std::size_t i = start; i < std::min(folds.size(), start + std::max<std::size_t>(jobs, 1)); ++i) {
            running.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                         [&, i] { return train_fold(data, folds[i], cfg); }));
        }
        for (auto& r : running) {
            outcomes.push_back(r.get());
            report(outcomes.back());
        }
    }
    return outcomes;
}

}  // namespace detail

inline int cmd_train(const RunOptions& o, std::ostream& out, std::ostream& err) {
    const ExperimentConfig cfg = resolve_experiment(o);
    const Dataset data = detail::load_data_dir(o.data);
    const auto folds = detail::selected_folds(data, o.folds);
    const fs::path out_dir = o.out;
    fs::create_directories(out_dir);

    auto outcomes = detail::train_folds(data, folds, cfg, o.jobs, err);
    for (auto& f : outcomes) {
        const std::string stem = fold_file_stem(f.fold.index);
        save_model_file(out_dir / (stem + ".params.json"), f.model, cfg.target, f.fold.index, f.fold.test_movie,
                        f.fit.best_epoch, static_cast<int>(f.fit.log.size()));
        write_text_file(out_dir / (stem + "_log.csv"), format_training_log(f.fit));
        write_text_file(out_dir / (stem + "_predictions.csv"), format_trace(f.predictions));
    }
    const EvalReport report = collect_report(std::move(outcomes));
    detail::write_report(out_dir, cfg, report);
    out << "pooled mse=" << detail::fixed6(report.pooled.mse) << " pcc=" << detail::fixed6(report.pooled.pcc)
        << " segments=" << report.predictions.size() << "\n";
    return kExitOk;
}

/// Without --params-dir this is a full train + evaluate run. With it, stored
/// fold parameters are evaluated on their held-out movies.
inline int cmd_eval(const RunOptions& o, std::ostream& out, std::ostream& err) {
    if (o.params_dir.empty()) return cmd_train(o, out, err);
    const ExperimentConfig cfg = resolve_experiment(o);
    const Dataset data = detail::load_data_dir(o.data);
    const auto folds = detail::selected_folds(data, o.folds);
    std::vector<FoldOutcome> outcomes;
    for (const auto& fold : folds) {
        const fs::path path = fs::path(o.params_dir) / (fold_file_stem(fold.index) + ".params.json");
        if (!fs::exists(path)) throw UsageError("missing parameters file " + path.string());
        SavedModel saved = load_model_file(path);
        if (saved.test_movie != fold.test_movie) {
            throw UsageError(path.string() + " was trained for held-out movie " + saved.test_movie + ", not " + fold.test_movie);
        }
        FoldOutcome f{fold, saved.model, {}, {}, {}};
        f.fit.best_epoch = saved.best_epoch;
        f.fit.log.resize(static_cast<std::size_t>(saved.epochs_run));
        f.predictions = predict_rows(f.model, data, fold.test, saved.target, fold.index);
        f.metrics = metrics_of(f.predictions);
        outcomes.push_back(std::move(f));
    }
    const fs::path out_dir = o.out;
    fs::create_directories(out_dir);
    const EvalReport report = collect_report(std::move(outcomes));
    detail::write_report(out_dir, cfg, report);
    out << "pooled mse=" << detail::fixed6(report.pooled.mse) << " pcc=" << detail::fixed6(report.pooled.pcc)
        << " segments=" << report.predictions.size() << "\n";
    return kExitOk;
}

struct PredictOptions {
    std::string data;
    std::string params;
    std::string movie;
    std::string out;
};

inline int cmd_predict(const PredictOptions& o, std::ostream& out) {
    if (o.params.empty() || !fs::exists(o.params)) throw UsageError("parameters file not found: " + o.params);
    SavedModel saved = load_model_file(o.params);
    const Dataset data = detail::load_data_dir(o.data);
    const std::string movie = o.movie.empty() ? saved.test_movie : o.movie;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.manifest.size(); ++i) {
        if (data.manifest[i].movie_id == movie) rows.push_back(i);
    }
    if (rows.empty()) throw UsageError("movie '" + movie + "' not in " + o.data);
    const std::string trace = format_trace(predict_rows(saved.model, data, rows, saved.target, saved.fold));
    if (o.out.empty() || o.out == "-") {
        out << trace;
    } else {
        write_text_file(o.out, trace);
    }
    return kExitOk;
}

struct SynthOptions {
    SyntheticSpec spec;
    std::string out = "aan_synth";
    std::string format = "binary";
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
    const Dataset d = synth_generate(o.spec);
    const fs::path dir = o.out;
    fs::create_directories(dir);
    save_manifest(dir / "manifest.json", d.manifest);
    if (o.format == "binary" || o.format == "both") save_features(dir, d.records, FeatureFormat::binary);
    if (o.format == "text" || o.format == "both") save_features(dir, d.records, FeatureFormat::text);
    out << "wrote " << d.manifest.size() << " segments (" << o.spec.n_movies << " movies) to " << dir.string() << "\n";
    return kExitOk;
}

inline int cmd_gradcheck(std::uint64_t seed, bool inject_fault, std::ostream& out) {
    const auto reports = run_gradient_suite(seed, inject_fault);
    bool ok = true;
    out << "operation,max_rel_error,checked,status\n";
    for (const auto& r : reports) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3e", r.max_rel_error);
        out << r.name << "," << buf << "," << r.checked << "," << (r.passed ? "pass" : "FAIL") << "\n";
        ok = ok && r.passed;
    }
    out << (ok ? "gradcheck: all passed" : "gradcheck: FAILED") << " (tolerance " << kGradTolerance << ")\n";
    return ok ? kExitOk : kExitFailure;
}

namespace detail {

inline void add_run_options(CLI::App& sub, RunOptions& o) {
    std::vector<std::string> presets(preset_names().begin(), preset_names().end());
    sub.add_option("--config", o.config, "key=value config file (flags and AAN_ variables override it)")->envname("AAN_CONFIG");
    sub.add_option("--data", o.data, "dataset directory (manifest.json + feature files)")->envname("AAN_DATA");
    sub.add_option("--out", o.out, "output directory")->envname("AAN_OUT")->capture_default_str();
    sub.add_option("--model", o.model, "feature | temporal | feature_temporal")
        ->envname("AAN_MODEL")
        ->check(CLI::IsMember({"feature", "temporal", "feature_temporal"}))
        ->capture_default_str();
    sub.add_option("--target", o.target, "arousal | valence")
        ->envname("AAN_TARGET")
        ->check(CLI::IsMember({"arousal", "valence"}))
        ->capture_default_str();
    sub.add_option("--preset", o.preset_name, "hyperparameter preset")->envname("AAN_PRESET")->check(CLI::IsMember(presets));
    sub.add_option("--lr", o.lr, "learning rate")->envname("AAN_LR");
    sub.add_option("--epochs", o.epochs, "maximum epochs")->envname("AAN_EPOCHS");
    sub.add_option("--dropout", o.dropout, "dropout rate")->envname("AAN_DROPOUT");
    sub.add_option("--batch", o.batch, "batch size")->envname("AAN_BATCH");
    sub.add_option("--patience", o.patience, "early-stopping patience (epochs)")->envname("AAN_PATIENCE");
    sub.add_option("--seq-len", o.seq_len, "segments per sequence (sequence models)")->envname("AAN_SEQ_LEN");
    sub.add_option("--layers", o.layers, "encoder/decoder layers")->envname("AAN_LAYERS");
    sub.add_option("--heads", o.heads, "attention heads")->envname("AAN_HEADS");
    sub.add_option("--val-fraction", o.val_fraction, "validation hold-out fraction")->envname("AAN_VAL_FRACTION");
    sub.add_option("--start-value", o.start_value, "seed value for the previous-output stream")->envname("AAN_START_VALUE");
    sub.add_option("--seed", o.seed, "random seed")->envname("AAN_SEED")->capture_default_str();
    sub.add_option("--fold", o.folds, "only these fold indices")->envname("AAN_FOLD");
    sub.add_option("--jobs", o.jobs, "folds trained concurrently")->envname("AAN_JOBS")->check(CLI::PositiveNumber);
}

// Fills options that neither a flag nor an AAN_ variable has set. Keys are
// long option names without the leading dashes (`seq-len` or `seq_len`);
// a [<subcommand>] section may be used.
inline void apply_config_file(CLI::App& sub, const std::string& path) {
    if (path.empty()) return;
    if (!fs::is_regular_file(path)) throw UsageError("config file not found: " + path);
    for (const auto& item : CLI::ConfigINI().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub.get_name())) continue;
        CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
        if (opt == nullptr) {
            std::string dashed = item.name;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            opt = sub.get_option_no_throw("--" + dashed);
        }
        if (opt == nullptr || opt->get_name() == "--config") {
            throw UsageError(path + ": unknown key '" + item.name + "' for " + sub.get_name());
        }
        if (opt->count() > 0) continue;
        for (const auto& v : item.inputs) opt->add_result(v);
        opt->run_callback();
    }
}

}  // namespace detail

/// Entry point of the `aan` tool. `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Self-attention models for affect (valence/arousal) prediction from movie features", "aan"};
    app.require_subcommand(1);

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset with a planted signal");
    std::string synth_config;
    synth_cmd->add_option("--config", synth_config, "key=value config file")->envname("AAN_CONFIG");
    synth_cmd->add_option("--out", synth.out, "output directory")->envname("AAN_OUT")->capture_default_str();
    synth_cmd->add_option("--movies", synth.spec.n_movies, "number of movies")->envname("AAN_MOVIES")->capture_default_str();
    synth_cmd->add_option("--segments", synth.spec.segments_per_movie, "segments per movie")
        ->envname("AAN_SEGMENTS")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth.spec.seed, "random seed")->envname("AAN_SEED")->capture_default_str();
    synth_cmd->add_option("--noise", synth.spec.noise_std, "feature noise std")->envname("AAN_NOISE")->capture_default_str();
    synth_cmd->add_option("--smoothing", synth.spec.smoothing_window, "latent smoothing window")
        ->envname("AAN_SMOOTHING")
        ->capture_default_str();
    synth_cmd->add_option("--duration", synth.spec.duration_s, "segment duration in seconds")
        ->envname("AAN_DURATION")
        ->capture_default_str();
    synth_cmd->add_option("--format", synth.format, "feature file format")
        ->envname("AAN_FORMAT")
        ->check(CLI::IsMember({"binary", "text", "both"}))
        ->capture_default_str();

    RunOptions train_opts;
    auto* train_cmd = app.add_subcommand("train", "leave-one-movie-out training; writes params, logs, traces, results");
    detail::add_run_options(*train_cmd, train_opts);

    RunOptions eval_opts;
    auto* eval_cmd = app.add_subcommand("eval", "train and evaluate, or evaluate stored fold parameters");
    detail::add_run_options(*eval_cmd, eval_opts);
    eval_cmd->add_option("--params-dir", eval_opts.params_dir, "evaluate fold_XX.params.json from here instead of training")
        ->envname("AAN_PARAMS_DIR");

    PredictOptions predict;
    auto* predict_cmd = app.add_subcommand("predict", "per-segment prediction trace for one movie");
    std::string predict_config;
    predict_cmd->add_option("--config", predict_config, "key=value config file")->envname("AAN_CONFIG");
    predict_cmd->add_option("--data", predict.data, "dataset directory")->envname("AAN_DATA");
    predict_cmd->add_option("--params", predict.params, "fold parameters file")->envname("AAN_PARAMS");
    predict_cmd->add_option("--movie", predict.movie, "movie id (default: the fold's held-out movie)")->envname("AAN_MOVIE");
    predict_cmd->add_option("--out", predict.out, "trace file (default: stdout)");

    std::uint64_t gc_seed = 7;
    bool inject_fault = false;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    gc_cmd->add_option("--seed", gc_seed, "random seed")->envname("AAN_SEED")->capture_default_str();
    gc_cmd->add_flag("--inject-fault", inject_fault, "add an operation with a wrong gradient (must fail)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*synth_cmd) detail::apply_config_file(*synth_cmd, synth_config);
        if (*train_cmd) detail::apply_config_file(*train_cmd, train_opts.config);
        if (*eval_cmd) detail::apply_config_file(*eval_cmd, eval_opts.config);
        if (*predict_cmd) detail::apply_config_file(*predict_cmd, predict_config);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*synth_cmd) return cmd_synth(synth, out);
        if (*train_cmd) return cmd_train(train_opts, out, err);
        if (*eval_cmd) return cmd_eval(eval_opts, out, err);
        if (*predict_cmd) return cmd_predict(predict, out);
        if (*gc_cmd) return cmd_gradcheck(gc_seed, inject_fault, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TrainingError& e) {
        err << "training failed: " << e.what() << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace aan
