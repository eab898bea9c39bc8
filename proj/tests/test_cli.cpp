#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "aan/cli.hpp"
#include "test_util.hpp"

using namespace aan;
using aan::testing::TempDir;

namespace {

struct CliResult {
    int code;
    std::string out, err;
};

CliResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) { return detail::read_file(p); }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class ScopedEnv {
   public:
    ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
    ~ScopedEnv() { ::unsetenv(name_); }

   private:
    const char* name_;
};

// Small dataset shared by the train/eval/predict tests.
const fs::path& small_data() {
    static TempDir dir("cli_data");
    static const bool done = [] {
        return run({"synth", "--out", dir.path().string(), "--movies", "3", "--segments", "14", "--seed", "3"}).code == 0;
    }();
    EXPECT_TRUE(done);
    return dir.path();
}

std::vector<std::string> quick_run(const std::string& cmd, const fs::path& out, const std::string& model = "feature") {
    return {cmd, "--data", small_data().string(), "--out", out.string(), "--model", model, "--epochs", "3", "--seed", "11"};
}

}  // namespace

TEST(CliSynth, WritesDatasetWithRequestedShape) {
    TempDir dir("synth_cli");
    auto r = run({"synth", "--out", dir.path().string(), "--movies", "2", "--segments", "10", "--format", "both"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = load_manifest(dir / "manifest.json");
    EXPECT_EQ(m.size(), 20u);
    for (std::size_t k = 0; k < kNumModalities; ++k) {
        EXPECT_TRUE(fs::exists(feature_path(dir.path(), static_cast<Modality>(k), FeatureFormat::binary)));
        EXPECT_TRUE(fs::exists(feature_path(dir.path(), static_cast<Modality>(k), FeatureFormat::text)));
    }
    EXPECT_EQ(load_dataset(dir.path()).records.size(), 20u);
}

TEST(CliSynth, DefaultsAndSeedDeterminism) {
    TempDir a("synth_a"), b("synth_b");
    ASSERT_EQ(run({"synth", "--out", a.path().string(), "--seed", "7"}).code, 0);
    ASSERT_EQ(run({"synth", "--out", b.path().string(), "--seed", "7"}).code, 0);
    EXPECT_EQ(load_manifest(a / "manifest.json").size(), 8u * 120u);
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    for (std::size_t k = 0; k < kNumModalities; ++k) {
        const auto m = static_cast<Modality>(k);
        EXPECT_EQ(slurp(feature_path(a.path(), m, FeatureFormat::binary)), slurp(feature_path(b.path(), m, FeatureFormat::binary)));
    }
}

TEST(CliUsage, BadInvocationsExitTwo) {
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--preset", "nonexistent", "--data", small_data().string()}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--model", "lstm", "--data", small_data().string()}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--data", "/nonexistent/dir"}).code, kExitUsage);
    EXPECT_EQ(run({"synth", "--format", "xml"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--data", small_data().string(), "--val-fraction", "1.5"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--data", small_data().string(), "--fold", "9"}).code, kExitUsage);
    EXPECT_EQ(run({"predict", "--data", small_data().string(), "--params", "/nonexistent.json"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--help"}).code, kExitOk);
}

TEST(CliTrain, WritesAllArtifacts) {
    TempDir out("train_out");
    auto r = run(quick_run("train", out.path()));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("pooled mse="), std::string::npos);
    for (int f = 0; f < 3; ++f) {
        const std::string stem = fold_file_stem(static_cast<std::size_t>(f));
        EXPECT_TRUE(fs::exists(out / (stem + ".params.json")));
        EXPECT_EQ(count_lines(slurp(out / (stem + "_log.csv"))), 4u);
        EXPECT_EQ(count_lines(slurp(out / (stem + "_predictions.csv"))), 15u);
    }
    const std::string results = slurp(out / "results.csv");
    EXPECT_NE(results.find("# model=feature"), std::string::npos);
    EXPECT_NE(results.find("# preset=cognimuse_feature"), std::string::npos);
    EXPECT_NE(results.find("fold,movie_id,segments,mse,pcc,best_epoch,epochs\n"), std::string::npos);
    EXPECT_NE(results.find("\npooled,all,42,"), std::string::npos) << results;
    EXPECT_EQ(count_lines(slurp(out / "predictions.csv")), 43u);
}

TEST(CliEval, SameSeedGivesByteIdenticalResults) {
    TempDir a("eval_a"), b("eval_b"), c("eval_c");
    ASSERT_EQ(run(quick_run("eval", a.path(), "temporal")).code, 0);
    ASSERT_EQ(run(quick_run("eval", b.path(), "temporal")).code, 0);
    auto parallel = quick_run("eval", c.path(), "temporal");
    parallel.insert(parallel.end(), {"--jobs", "3"});
    ASSERT_EQ(run(parallel).code, 0);
    const std::string ra = slurp(a / "results.csv");
    EXPECT_EQ(ra, slurp(b / "results.csv"));
    EXPECT_EQ(ra, slurp(c / "results.csv"));
    EXPECT_EQ(slurp(a / "predictions.csv"), slurp(b / "predictions.csv"));
}

TEST(CliEval, StoredParametersReproduceTrainingMetrics) {
    TempDir trained("eval_params_train"), again("eval_params_eval");
    ASSERT_EQ(run(quick_run("train", trained.path(), "feature_temporal")).code, 0);
    auto args = quick_run("eval", again.path(), "feature_temporal");
    args.insert(args.end(), {"--params-dir", trained.path().string()});
    auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(trained / "results.csv"), slurp(again / "results.csv"));
    EXPECT_EQ(slurp(trained / "predictions.csv"), slurp(again / "predictions.csv"));

    TempDir empty("eval_params_missing");
    args = quick_run("eval", again.path());
    args.insert(args.end(), {"--params-dir", empty.path().string()});
    EXPECT_EQ(run(args).code, kExitUsage);
}

TEST(CliPredict, TraceMatchesFoldPredictions) {
    TempDir out("predict_out");
    ASSERT_EQ(run(quick_run("train", out.path(), "temporal")).code, 0);
    auto r = run({"predict", "--data", small_data().string(), "--params", (out / "fold_01.params.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(out / "fold_01_predictions.csv"));
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "movie_id,segment_index,ground_truth,prediction");
    EXPECT_EQ(count_lines(r.out), 15u);

    const fs::path trace = out / "other.csv";
    r = run({"predict", "--data", small_data().string(), "--params", (out / "fold_01.params.json").string(), "--movie",
             "movie_00", "--out", trace.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(trace).substr(0, 17), "movie_id,segment_");
    EXPECT_NE(slurp(trace).find("\nmovie_00,13,"), std::string::npos);
    EXPECT_EQ(run({"predict", "--data", small_data().string(), "--params", (out / "fold_01.params.json").string(),
                   "--movie", "nope"})
                  .code,
              kExitUsage);
}

TEST(CliPredict, UnlabelledMovieOmitsGroundTruth) {
    TempDir out("predict_unlabelled"), data("predict_unlabelled_data");
    ASSERT_EQ(run(quick_run("train", out.path())).code, 0);
    auto ds = load_dataset(small_data());
    for (auto& e : ds.manifest) {
        e.arousal.reset();
        e.valence.reset();
    }
    save_manifest(data / "manifest.json", ds.manifest);
    save_features(data.path(), ds.records, FeatureFormat::binary);
    auto r = run({"predict", "--data", data.path().string(), "--params", (out / "fold_00.params.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "movie_id,segment_index,prediction");
    EXPECT_EQ(count_lines(r.out), 15u);
}

TEST(CliConfig, FlagsBeatEnvBeatConfigBeatPreset) {
    TempDir out("config_out");
    const fs::path cfg = out / "run.cfg";
    aan::write_text_file(cfg, "lr = 0.002\npatience=9\nepochs=2\nseq_len=3\nbatch=12\n");
    ScopedEnv patience("AAN_PATIENCE", "4");
    ScopedEnv batch("AAN_BATCH", "20");
    auto r = run({"train", "--data", small_data().string(), "--out", (out / "run").string(), "--model", "temporal",
                  "--config", cfg.string(), "--lr", "0.003", "--batch", "16", "--fold", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string results = slurp(out / "run" / "results.csv");
    EXPECT_NE(results.find("# learning_rate=0.003\n"), std::string::npos) << results;
    EXPECT_NE(results.find("# patience=4\n"), std::string::npos) << results;
    EXPECT_NE(results.find("# max_epochs=2\n"), std::string::npos) << results;
    EXPECT_NE(results.find("# seq_len=3\n"), std::string::npos) << results;
    EXPECT_NE(results.find("# batch_size=16\n"), std::string::npos) << results;
    EXPECT_NE(results.find("# dropout=0.5\n"), std::string::npos) << results;  // from the temporal preset
    EXPECT_EQ(count_lines(results), 15u + 1u + 1u + 1u);  // config comments, header, one fold, pooled
}

TEST(CliConfig, UnknownKeyOrMissingFileIsUsageError) {
    TempDir out("config_bad");
    aan::write_text_file(out / "bad.cfg", "learning_rat=0.1\n");
    EXPECT_EQ(run({"train", "--data", small_data().string(), "--config", (out / "bad.cfg").string()}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--data", small_data().string(), "--config", (out / "none.cfg").string()}).code, kExitUsage);
}

TEST(CliGradcheck, ExitCodes) {
    auto ok = run({"gradcheck"});
    EXPECT_EQ(ok.code, 0);
    EXPECT_NE(ok.out.find("gradcheck: all passed"), std::string::npos);
    EXPECT_NE(ok.out.find("feature_temporal_aan_model,"), std::string::npos);
    auto bad = run({"gradcheck", "--inject-fault"});
    EXPECT_EQ(bad.code, kExitFailure);
    EXPECT_NE(bad.out.find("injected_wrong_square,"), std::string::npos);
    EXPECT_NE(bad.out.find(",FAIL\n"), std::string::npos);
}
