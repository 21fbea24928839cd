#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "hiadv/config.hpp"
#include "hiadv/runner.hpp"
#include "testutil.hpp"

using namespace hiadv;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& child = "") const {
        return child.empty() ? path.string() : (path / child).string();
    }
};

// Writes a small synthetic dataset and returns a ready RunConfig.
RunConfig make_run(const TempDir& dir, std::uint64_t seed = 3) {
    SynthSpec spec;
    spec.depth = 2;
    spec.branching = 2;
    spec.train_docs = 40;
    spec.dev_docs = 16;
    spec.test_docs = 8;
    spec.seed = seed;
    const LabelHierarchy h = gen_taxonomy(spec);
    const SynthDataset ds = gen_dataset(spec, h);
    write_file(dir.str("taxonomy.json"), h.to_json());
    write_file(dir.str("train.jsonl"), to_jsonl(ds.train, h));
    write_file(dir.str("dev.jsonl"), to_jsonl(ds.dev, h));
    write_file(dir.str("test.jsonl"), to_jsonl(ds.test, h));

    RunConfig cfg;
    cfg.taxonomy = dir.str("taxonomy.json");
    cfg.train = dir.str("train.jsonl");
    cfg.dev = dir.str("dev.jsonl");
    cfg.test = dir.str("test.jsonl");
    cfg.out_dir = dir.str("out");
    cfg.model.d = 16;
    cfg.model.heads = 2;
    cfg.model.ffn_hidden = 24;
    cfg.training.max_epochs = 2;
    cfg.training.batch_size = 8;
    cfg.training.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("run_train emits config, curves, metrics and a loadable checkpoint") {
    TempDir dir("hiadv_runner_train");
    const RunConfig cfg = make_run(dir);
    const TrainOutcome outcome = run_train(cfg);
    CHECK(outcome.fit.epochs_run == 2);
    for (const char* name : {"config.json", "curves.csv", "metrics.csv", "metrics.json",
                             "model.json", "model.bin", "model.meta.json"})
        CHECK(fs::exists(dir.path / "out" / name));

    const std::string curves = read_file(dir.str("out/curves.csv"));
    CHECK(curves.rfind("epoch,warmup,l_c,l_c_hat,l_adv,l_dis,l_dis_hat,dev_micro_f1,"
                       "dev_macro_f1,dev_disc_accuracy\n", 0) == 0);
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 3); // header + 2 epochs

    SECTION("evaluation of the emitted checkpoint works and is repeatable") {
        const EvalOutcome e1 = run_eval(outcome.checkpoint_stem, cfg.taxonomy, cfg.dev,
                                        dir.str("eval1"));
        const EvalOutcome e2 = run_eval(outcome.checkpoint_stem, cfg.taxonomy, cfg.dev,
                                        dir.str("eval2"));
        CHECK(read_file(dir.str("eval1/metrics.json")) == read_file(dir.str("eval2/metrics.json")));
        CHECK(read_file(dir.str("eval1/per_label.csv")) == read_file(dir.str("eval2/per_label.csv")));
        CHECK(e1.report.micro_f1 == e2.report.micro_f1);
        CHECK(fs::exists(dir.path / "eval1" / "per_depth.csv"));
        CHECK(fs::exists(dir.path / "eval1" / "per_frequency.csv"));
    }

    SECTION("a different taxonomy is refused with a hash mismatch") {
        SynthSpec other;
        other.depth = 2;
        other.branching = 3;
        write_file(dir.str("other_taxonomy.json"), gen_taxonomy(other).to_json());
        CHECK_THROWS_MATCHES(run_eval(outcome.checkpoint_stem, dir.str("other_taxonomy.json"),
                                      cfg.dev, dir.str("eval3")),
                             ConfigError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("hash mismatch")));
    }
}

TEST_CASE("identical config and seed produce byte-identical artifacts") {
    TempDir dir("hiadv_runner_det");
    RunConfig cfg = make_run(dir);
    RunConfig cfg2 = cfg;
    cfg2.out_dir = dir.str("out2");
    run_train(cfg);
    run_train(cfg2);
    CHECK(read_file(dir.str("out/curves.csv")) == read_file(dir.str("out2/curves.csv")));
    CHECK(read_file(dir.str("out/metrics.json")) == read_file(dir.str("out2/metrics.json")));
    CHECK(read_file(dir.str("out/model.bin")) == read_file(dir.str("out2/model.bin")));
}

TEST_CASE("ablation produces one row per mode, trained under identical seeds") {
    TempDir dir("hiadv_runner_ablate");
    RunConfig cfg = make_run(dir);
    cfg.training.max_epochs = 1;
    const auto rows = run_ablate(cfg, {CorruptionMode::full, CorruptionMode::wrong});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].mode == CorruptionMode::full);
    CHECK(rows[1].mode == CorruptionMode::wrong);
    const std::string csv = read_file(dir.str("out/ablation.csv"));
    CHECK(csv.rfind("mode,dev_micro_f1,dev_macro_f1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("config parsing rejects unknown keys and honors the seed env override") {
    nlohmann::json doc;
    doc["training"] = {{"seed", 9}};
    CHECK(RunConfig::from_json(doc).training.seed == 9);

    SECTION("unknown top-level and nested keys") {
        nlohmann::json bad = doc;
        bad["surprise"] = 1;
        CHECK_THROWS_MATCHES(RunConfig::from_json(bad), ConfigError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("surprise")));
        nlohmann::json bad2 = doc;
        bad2["training"]["lr"] = 0.1;
        CHECK_THROWS_MATCHES(RunConfig::from_json(bad2), ConfigError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("training.lr")));
    }
    SECTION("HIADV_SEED wins over the config seed") {
        setenv("HIADV_SEED", "4242", 1);
        CHECK(RunConfig::from_json(doc).training.seed == 4242);
        unsetenv("HIADV_SEED");
    }
    SECTION("invalid enum values are config errors") {
        nlohmann::json bad = doc;
        bad["model"] = {{"backbone", "transformer"}};
        CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);
        nlohmann::json bad2 = doc;
        bad2["ablation"] = {{"mode", "half"}};
        CHECK_THROWS_AS(RunConfig::from_json(bad2), ConfigError);
    }
    SECTION("choosing a backbone picks its default mixture") {
        nlohmann::json g;
        g["model"] = {{"backbone", "gat_sum"}};
        CHECK(RunConfig::from_json(g).model.mixture == Mixture::sum);
        g["model"] = {{"backbone", "graphormer_root"}};
        CHECK(RunConfig::from_json(g).model.mixture == Mixture::root_replace);
    }
}

TEST_CASE("training validation demands the required paths") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.validate_for_training(), ConfigError);
}
