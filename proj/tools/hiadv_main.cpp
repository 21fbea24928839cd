// Command-line entry points: gen-data, train, eval, ablate.
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hiadv/config.hpp"
#include "hiadv/data.hpp"
#include "hiadv/runner.hpp"

namespace fs = std::filesystem;

namespace {

struct ValidationFailure : std::exception {};

void refuse_overwrite(const std::vector<std::string>& paths, bool force) {
    if (force) return;
    for (const auto& p : paths)
        if (fs::exists(p))
            throw hiadv::ConfigError("refusing to overwrite " + p + " (use --force)");
}

int cmd_gen_data(const hiadv::SynthSpec& spec_in, const std::string& out_dir, bool force) {
    hiadv::SynthSpec spec = spec_in;
    if (const char* env_seed = std::getenv("HIADV_SEED")) spec.seed = std::stoull(env_seed);
    spec.validate();
    fs::create_directories(out_dir);
    const std::string taxonomy_path = out_dir + "/taxonomy.json";
    const std::string train_path = out_dir + "/train.jsonl";
    const std::string dev_path = out_dir + "/dev.jsonl";
    const std::string test_path = out_dir + "/test.jsonl";
    refuse_overwrite({taxonomy_path, train_path, dev_path, test_path}, force);

    const hiadv::LabelHierarchy h = hiadv::gen_taxonomy(spec);
    const hiadv::SynthDataset ds = hiadv::gen_dataset(spec, h);
    hiadv::write_file(taxonomy_path, h.to_json());
    hiadv::write_file(train_path, hiadv::to_jsonl(ds.train, h));
    hiadv::write_file(dev_path, hiadv::to_jsonl(ds.dev, h));
    hiadv::write_file(test_path, hiadv::to_jsonl(ds.test, h));
    std::cout << "wrote " << out_dir << ": " << h.size() << " labels, " << ds.train.size()
              << "/" << ds.dev.size() << "/" << ds.test.size() << " train/dev/test docs\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"HiAdv: adversarial local-hierarchy training for hierarchical "
                 "multi-label text classification"};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic taxonomy and corpus");
    hiadv::SynthSpec spec;
    std::string gen_out = "data";
    bool gen_force = false;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--depth", spec.depth, "tree depth");
    gen->add_option("--branch", spec.branching, "branching factor");
    gen->add_option("--train", spec.train_docs, "training documents");
    gen->add_option("--dev", spec.dev_docs, "dev documents");
    gen->add_option("--test", spec.test_docs, "test documents");
    gen->add_option("--tokens-per-label", spec.tokens_per_label, "indicator tokens per label");
    gen->add_option("--noise-vocab", spec.noise_vocab, "noise vocabulary size");
    gen->add_option("--noise", spec.noise_fraction, "noise token fraction");
    gen->add_option("--min-paths", spec.min_paths, "min paths per document");
    gen->add_option("--max-paths", spec.max_paths, "max paths per document");
    gen->add_option("--seed", spec.seed, "generation seed");
    gen->add_flag("--force", gen_force, "overwrite existing files");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    std::string train_config;
    std::string train_out, train_backbone, train_loss, train_variant;
    std::optional<double> train_lambda;
    std::optional<std::uint64_t> train_seed;
    std::optional<int> train_epochs;
    train->add_option("--config", train_config, "config JSON path")->required();
    train->add_option("--out", train_out, "override paths.out_dir");
    train->add_option("--backbone", train_backbone, "override model.backbone");
    train->add_option("--loss", train_loss, "override training.loss");
    train->add_option("--variant", train_variant, "override training.variant");
    train->add_option("--lambda-adv", train_lambda, "override training.lambda_adv");
    train->add_option("--seed", train_seed, "override training.seed");
    train->add_option("--max-epochs", train_epochs, "override training.max_epochs");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a JSONL split");
    std::string eval_ckpt, eval_taxonomy, eval_data, eval_out;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint stem (without .json/.bin)")->required();
    eval->add_option("--taxonomy", eval_taxonomy, "taxonomy JSON path")->required();
    eval->add_option("--data", eval_data, "JSONL split to evaluate")->required();
    eval->add_option("--out", eval_out, "output directory")->required();

    // ---- ablate ----
    auto* ablate = app.add_subcommand("ablate", "train once per local-hierarchy mode");
    std::string ablate_config, ablate_modes = "full,partial,none,wrong", ablate_out;
    ablate->add_option("--config", ablate_config, "config JSON path")->required();
    ablate->add_option("--modes", ablate_modes, "comma-separated modes");
    ablate->add_option("--out", ablate_out, "override paths.out_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(spec, gen_out, gen_force);

        if (train->parsed()) {
            hiadv::RunConfig cfg = hiadv::RunConfig::load(train_config);
            if (!train_out.empty()) cfg.out_dir = train_out;
            if (!train_backbone.empty()) {
                cfg.model.backbone = hiadv::backbone_from(train_backbone);
                cfg.model.mixture = cfg.model.backbone == hiadv::Backbone::graphormer_root
                                        ? hiadv::Mixture::root_replace
                                        : hiadv::Mixture::sum;
            }
            if (!train_loss.empty()) cfg.training.loss = hiadv::loss_kind_from(train_loss);
            if (!train_variant.empty()) cfg.training.variant = hiadv::variant_from(train_variant);
            if (train_lambda) cfg.training.lambda_adv = *train_lambda;
            if (train_seed) cfg.training.seed = *train_seed;
            if (train_epochs) cfg.training.max_epochs = *train_epochs;
            if (cfg.out_dir.empty())
                throw hiadv::ConfigError("config: paths.out_dir is required for train");
            const auto outcome = hiadv::run_train(cfg);
            std::cout << "best epoch " << outcome.fit.best_epoch << ": dev micro_f1 "
                      << hiadv::format_double(outcome.dev_report.micro_f1) << ", macro_f1 "
                      << hiadv::format_double(outcome.dev_report.macro_f1) << "\n";
            return 0;
        }

        if (eval->parsed()) {
            const auto outcome = hiadv::run_eval(eval_ckpt, eval_taxonomy, eval_data, eval_out);
            std::cout << "micro_f1 " << hiadv::format_double(outcome.report.micro_f1)
                      << ", macro_f1 " << hiadv::format_double(outcome.report.macro_f1) << "\n";
            return 0;
        }

        if (ablate->parsed()) {
            hiadv::RunConfig cfg = hiadv::RunConfig::load(ablate_config);
            if (!ablate_out.empty()) cfg.out_dir = ablate_out;
            std::vector<hiadv::CorruptionMode> modes;
            std::string token;
            for (std::size_t i = 0; i <= ablate_modes.size(); ++i) {
                if (i == ablate_modes.size() || ablate_modes[i] == ',') {
                    if (!token.empty()) modes.push_back(hiadv::corruption_mode_from(token));
                    token.clear();
                } else {
                    token += ablate_modes[i];
                }
            }
            if (modes.empty()) throw hiadv::ConfigError("ablate: empty mode list");
            const auto rows = hiadv::run_ablate(cfg, modes);
            for (const auto& row : rows)
                std::cout << hiadv::to_string(row.mode) << ": dev micro_f1 "
                          << hiadv::format_double(row.dev_micro_f1) << ", macro_f1 "
                          << hiadv::format_double(row.dev_macro_f1) << "\n";
            return 0;
        }
    } catch (const hiadv::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const hiadv::TaxonomyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const hiadv::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
