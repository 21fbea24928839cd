#pragma once

// Batch entry points shared by the CLI and the test suites: full training
// runs with artifact emission, checkpoint-backed evaluation, and the
// local-hierarchy ablation sweep.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiadv/config.hpp"
#include "hiadv/data.hpp"
#include "hiadv/framework.hpp"
#include "hiadv/metrics.hpp"

namespace hiadv {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

inline std::string curves_csv(const std::vector<EpochRecord>& curve) {
    std::string out =
        "epoch,warmup,l_c,l_c_hat,l_adv,l_dis,l_dis_hat,"
        "dev_micro_f1,dev_macro_f1,dev_disc_accuracy\n";
    for (const auto& r : curve) {
        out += std::to_string(r.epoch) + "," + (r.warmup ? "1" : "0") + "," +
               format_double(r.losses.l_c) + "," + format_double(r.losses.l_c_hat) + "," +
               format_double(r.losses.l_adv) + "," + format_double(r.losses.l_dis) + "," +
               format_double(r.losses.l_dis_hat) + "," + format_double(r.dev_micro_f1) + "," +
               format_double(r.dev_macro_f1) + "," + format_double(r.dev_disc_accuracy) + "\n";
    }
    return out;
}

struct TrainOutcome {
    FitResult fit;
    MetricReport dev_report;     // at the best checkpoint
    std::string checkpoint_stem; // empty when no out_dir was written
};

struct LoadedData {
    LabelHierarchy hierarchy;
    Vocab vocab;
    std::vector<TokenSample> train, dev, test;
    std::string taxonomy_hash;
};

inline LoadedData load_run_data(const RunConfig& cfg) {
    const std::string taxonomy_text = read_file(cfg.taxonomy);
    LoadedData data{LabelHierarchy::parse_taxonomy(taxonomy_text), Vocab{}, {}, {}, {},
                    hash_hex(taxonomy_text)};
    const auto train_raw = load_jsonl(cfg.train, data.hierarchy, false);
    const auto dev_raw = load_jsonl(cfg.dev, data.hierarchy, false);
    std::vector<RawSample> test_raw;
    if (!cfg.test.empty()) test_raw = load_jsonl(cfg.test, data.hierarchy, true);
    data.vocab = Vocab::build({&train_raw, &dev_raw, &test_raw}, data.hierarchy);
    data.train = encode_samples(data.vocab, train_raw);
    data.dev = encode_samples(data.vocab, dev_raw);
    data.test = encode_samples(data.vocab, test_raw);
    return data;
}

// Trains per the config and, when cfg.out_dir is non-empty, writes
// config.json, curves.csv, metrics.csv, metrics.json and the checkpoint
// (model.json/model.bin/model.meta.json).
inline TrainOutcome run_train(const RunConfig& cfg) {
    cfg.validate_for_training();
    const LoadedData data = load_run_data(cfg);

    HiAdvModel model(cfg.model, data.hierarchy, data.vocab, cfg.training.seed);
    Trainer trainer(model, cfg.training);
    TrainOutcome outcome;
    outcome.fit = trainer.fit(data.train, data.dev);
    MetricReport dev_report = trainer.evaluate(data.dev);
    const auto counts = label_counts(data.train, data.hierarchy.size());
    cluster_report(dev_report, data.hierarchy, counts);
    outcome.dev_report = dev_report;

    if (!cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);
        write_file(cfg.out_dir + "/config.json", cfg.effective_json().dump(2) + "\n");
        write_file(cfg.out_dir + "/curves.csv", curves_csv(outcome.fit.curve));
        write_file(cfg.out_dir + "/metrics.csv", per_label_csv(dev_report, data.hierarchy));

        nlohmann::json summary = metric_summary_json(dev_report);
        summary["best_epoch"] = outcome.fit.best_epoch;
        summary["epochs_run"] = outcome.fit.epochs_run;
        summary["config_hash"] = cfg.config_hash();
        write_file(cfg.out_dir + "/metrics.json", summary.dump(2) + "\n");

        const std::string stem = cfg.out_dir + "/model";
        const ParameterGroup main_group = model.main_group();
        const ParameterGroup disc_group = model.discriminator_group();
        save_params(stem, {&main_group, &disc_group});

        nlohmann::json meta;
        meta["config_hash"] = cfg.config_hash();
        meta["taxonomy_hash"] = data.taxonomy_hash;
        meta["model"] = cfg.model_json();
        meta["loss"] = std::string(to_string(cfg.training.loss));
        meta["tau"] = cfg.training.tau;
        meta["seed"] = cfg.training.seed;
        meta["epoch"] = outcome.fit.best_epoch;
        meta["dev_macro_f1"] = outcome.fit.best_dev_macro_f1;
        nlohmann::json groups;
        groups["main"] = nlohmann::json::array();
        for (const auto& p : main_group.params()) groups["main"].push_back(p.name);
        groups["discriminator"] = nlohmann::json::array();
        for (const auto& p : disc_group.params()) groups["discriminator"].push_back(p.name);
        meta["groups"] = groups;
        meta["vocab"] = data.vocab.tokens();
        meta["train_label_counts"] = counts;
        write_file(stem + ".meta.json", meta.dump(2) + "\n");
        outcome.checkpoint_stem = stem;
    }
    return outcome;
}

struct EvalOutcome {
    MetricReport report;
};

// Rebuilds the model from the checkpoint sidecar, refuses taxonomy
// mismatches, evaluates with the generator alone and writes metrics.json,
// per_label.csv, per_depth.csv, per_frequency.csv.
inline EvalOutcome run_eval(const std::string& checkpoint_stem, const std::string& taxonomy_path,
                            const std::string& data_path, const std::string& out_dir) {
    const std::string meta_text = read_file(checkpoint_stem + ".meta.json");
    nlohmann::json meta = nlohmann::json::parse(meta_text);

    const std::string taxonomy_text = read_file(taxonomy_path);
    if (hash_hex(taxonomy_text) != meta.at("taxonomy_hash").get<std::string>())
        throw ConfigError("eval: taxonomy hash mismatch: checkpoint was trained on a different "
                          "taxonomy (" + meta.at("taxonomy_hash").get<std::string>() + ")");
    const LabelHierarchy h = LabelHierarchy::parse_taxonomy(taxonomy_text);
    const Vocab vocab = Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    const ModelConfig model_cfg = RunConfig::model_from_json(meta.at("model"));
    const double tau = meta.at("tau").get<double>();

    HiAdvModel model(model_cfg, h, vocab, meta.at("seed").get<std::uint64_t>());
    CheckpointReader reader(checkpoint_stem);
    ParameterGroup main_group = model.main_group();
    ParameterGroup disc_group = model.discriminator_group();
    reader.load_into(main_group);
    reader.load_into(disc_group);

    const auto raw = load_jsonl(data_path, h, true);
    const auto samples = encode_samples(vocab, raw);
    std::vector<LocalHierarchy> preds, truths;
    for (const auto& s : samples) {
        preds.push_back(model.predict(s.tokens, tau));
        truths.push_back(s.labels);
    }
    EvalOutcome out;
    out.report = micro_macro_f1(preds, truths, h);
    const auto counts = meta.at("train_label_counts").get<std::vector<long long>>();
    cluster_report(out.report, h, counts);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_file(out_dir + "/metrics.json", metric_summary_json(out.report).dump(2) + "\n");
        write_file(out_dir + "/per_label.csv", per_label_csv(out.report, h));
        write_file(out_dir + "/per_depth.csv", cluster_csv(out.report.per_depth));
        write_file(out_dir + "/per_frequency.csv", cluster_csv(out.report.per_frequency));
    }
    return out;
}

struct AblationRow {
    CorruptionMode mode;
    double dev_micro_f1 = 0.0;
    double dev_macro_f1 = 0.0;
};

// One full training run per mode under identical seeds; models are trained
// sequentially so every run sees identical RNG streams.
inline std::vector<AblationRow> run_ablate(const RunConfig& base,
                                           const std::vector<CorruptionMode>& modes) {
    std::vector<AblationRow> rows;
    for (CorruptionMode mode : modes) {
        RunConfig cfg = base;
        cfg.ablation_mode = mode;
        cfg.training.oracle_mode = mode;
        cfg.out_dir.clear(); // per-mode artifacts are not kept
        const TrainOutcome outcome = run_train(cfg);
        AblationRow row;
        row.mode = mode;
        row.dev_micro_f1 = outcome.dev_report.micro_f1;
        row.dev_macro_f1 = outcome.dev_report.macro_f1;
        rows.push_back(row);
    }
    if (!base.out_dir.empty()) {
        std::filesystem::create_directories(base.out_dir);
        std::string csv = "mode,dev_micro_f1,dev_macro_f1\n";
        for (const auto& row : rows)
            csv += std::string(to_string(row.mode)) + "," + format_double(row.dev_micro_f1) +
                   "," + format_double(row.dev_macro_f1) + "\n";
        write_file(base.out_dir + "/ablation.csv", csv);
        write_file(base.out_dir + "/config.json", base.effective_json().dump(2) + "\n");
    }
    return rows;
}

} // namespace hiadv
