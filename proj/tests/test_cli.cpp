#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hiadv/runner.hpp"

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

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HIADV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("gen-data writes deterministic files and refuses silent overwrites") {
    TempDir dir("hiadv_cli_gen");
    const std::string flags = "gen-data --out " + dir.str("d1") +
                              " --depth 2 --branch 2 --train 20 --dev 8 --test 4 --seed 5";
    REQUIRE(run_cli(flags) == 0);
    for (const char* name : {"taxonomy.json", "train.jsonl", "dev.jsonl", "test.jsonl"})
        CHECK(fs::exists(dir.path / "d1" / name));

    SECTION("identical flags give identical bytes") {
        const std::string flags2 = "gen-data --out " + dir.str("d2") +
                                   " --depth 2 --branch 2 --train 20 --dev 8 --test 4 --seed 5";
        REQUIRE(run_cli(flags2) == 0);
        CHECK(hiadv::read_file(dir.str("d1/train.jsonl")) ==
              hiadv::read_file(dir.str("d2/train.jsonl")));
        CHECK(hiadv::read_file(dir.str("d1/taxonomy.json")) ==
              hiadv::read_file(dir.str("d2/taxonomy.json")));
    }
    SECTION("re-running without --force is a validation error, with --force succeeds") {
        CHECK(run_cli(flags) == 1);
        CHECK(run_cli(flags + " --force") == 0);
    }
    SECTION("depth zero is a validation error") {
        CHECK(run_cli("gen-data --out " + dir.str("d3") + " --depth 0") == 1);
    }
}

TEST_CASE("train, eval and ablate round-trip through the CLI") {
    TempDir dir("hiadv_cli_train");
    REQUIRE(run_cli("gen-data --out " + dir.str("data") +
                    " --depth 2 --branch 2 --train 32 --dev 12 --test 6 --seed 6") == 0);

    nlohmann::json cfg;
    cfg["paths"] = {{"taxonomy", dir.str("data/taxonomy.json")},
                    {"train", dir.str("data/train.jsonl")},
                    {"dev", dir.str("data/dev.jsonl")},
                    {"test", dir.str("data/test.jsonl")},
                    {"out_dir", dir.str("out")}};
    cfg["model"] = {{"d", 16}, {"heads", 2}, {"ffn_hidden", 24}};
    cfg["training"] = {{"max_epochs", 2}, {"batch_size", 8}, {"seed", 6}};
    hiadv::write_file(dir.str("config.json"), cfg.dump(2));

    REQUIRE(run_cli("train --config " + dir.str("config.json")) == 0);
    CHECK(fs::exists(dir.path / "out" / "model.bin"));
    CHECK(fs::exists(dir.path / "out" / "curves.csv"));

    SECTION("eval succeeds on the matching taxonomy and fails on another") {
        CHECK(run_cli("eval --checkpoint " + dir.str("out/model") + " --taxonomy " +
                      dir.str("data/taxonomy.json") + " --data " + dir.str("data/dev.jsonl") +
                      " --out " + dir.str("eval")) == 0);
        CHECK(fs::exists(dir.path / "eval" / "metrics.json"));

        REQUIRE(run_cli("gen-data --out " + dir.str("data2") +
                        " --depth 2 --branch 3 --train 10 --dev 5 --test 2 --seed 6") == 0);
        CHECK(run_cli("eval --checkpoint " + dir.str("out/model") + " --taxonomy " +
                      dir.str("data2/taxonomy.json") + " --data " + dir.str("data/dev.jsonl") +
                      " --out " + dir.str("eval2")) == 1);
    }
    SECTION("ablate emits one row per requested mode") {
        nlohmann::json acfg = cfg;
        acfg["paths"]["out_dir"] = dir.str("ablate_out");
        acfg["training"]["max_epochs"] = 1;
        hiadv::write_file(dir.str("ablate.json"), acfg.dump(2));
        REQUIRE(run_cli("ablate --config " + dir.str("ablate.json") + " --modes full,wrong") == 0);
        const std::string csv = hiadv::read_file(dir.str("ablate_out/ablation.csv"));
        CHECK(csv.find("full,") != std::string::npos);
        CHECK(csv.find("wrong,") != std::string::npos);
    }
    SECTION("a config with unknown keys exits with a validation error") {
        nlohmann::json bad = cfg;
        bad["training"]["momentum"] = 0.9;
        hiadv::write_file(dir.str("bad.json"), bad.dump(2));
        CHECK(run_cli("train --config " + dir.str("bad.json")) == 1);
    }
    SECTION("a missing data file is a runtime error") {
        nlohmann::json gone = cfg;
        gone["paths"]["train"] = dir.str("missing.jsonl");
        gone["paths"]["out_dir"] = dir.str("out_gone");
        hiadv::write_file(dir.str("gone.json"), gone.dump(2));
        const int rc = run_cli("train --config " + dir.str("gone.json"));
        CHECK(rc == 1); // DataError: validation of inputs
    }
}
