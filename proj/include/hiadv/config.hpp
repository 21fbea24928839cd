#pragma once

// Run configuration: a single JSON document with optional flag overrides.
// Unknown keys are rejected; the merged effective config is echoed into the
// output directory for provenance.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiadv/common.hpp"
#include "hiadv/framework.hpp"

namespace hiadv {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

struct RunConfig {
    // paths
    std::string taxonomy;
    std::string train;
    std::string dev;
    std::string test;    // optional
    std::string out_dir;

    ModelConfig model;
    TrainConfig training;
    CorruptionMode ablation_mode = CorruptionMode::full;
    double ablation_fraction = 0.15;

    static RunConfig from_json(const nlohmann::json& doc) {
        RunConfig c;
        check_keys(doc, {"paths", "model", "training", "inference", "ablation"}, "");
        if (doc.contains("paths")) {
            const auto& p = doc["paths"];
            check_keys(p, {"taxonomy", "train", "dev", "test", "out_dir"}, "paths.");
            c.taxonomy = p.value("taxonomy", "");
            c.train = p.value("train", "");
            c.dev = p.value("dev", "");
            c.test = p.value("test", "");
            c.out_dir = p.value("out_dir", "");
        }
        if (doc.contains("model")) {
            const auto& m = doc["model"];
            check_keys(m, {"d", "heads", "layers", "ffn_hidden", "max_distance", "backbone",
                           "mixture"},
                       "model.");
            c.model.d = m.value("d", c.model.d);
            c.model.heads = m.value("heads", c.model.heads);
            c.model.layers = m.value("layers", c.model.layers);
            c.model.ffn_hidden = m.value("ffn_hidden", c.model.ffn_hidden);
            c.model.max_distance = m.value("max_distance", c.model.max_distance);
            if (m.contains("backbone")) {
                c.model.backbone = backbone_from(m["backbone"].get<std::string>());
                c.model.mixture = c.model.backbone == Backbone::graphormer_root
                                      ? Mixture::root_replace
                                      : Mixture::sum;
            }
            if (m.contains("mixture"))
                c.model.mixture = mixture_from(m["mixture"].get<std::string>());
        }
        if (doc.contains("training")) {
            const auto& t = doc["training"];
            check_keys(t, {"batch_size", "max_epochs", "patience", "warmup_epochs",
                           "lambda_adv", "loss", "learning_rate", "disc_learning_rate",
                           "beta1", "beta2", "epsilon", "seed", "variant"},
                       "training.");
            c.training.batch_size = t.value("batch_size", c.training.batch_size);
            c.training.max_epochs = t.value("max_epochs", c.training.max_epochs);
            c.training.patience = t.value("patience", c.training.patience);
            c.training.warmup_epochs = t.value("warmup_epochs", c.training.warmup_epochs);
            c.training.lambda_adv = t.value("lambda_adv", c.training.lambda_adv);
            c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
            c.training.disc_learning_rate =
                t.value("disc_learning_rate", c.training.disc_learning_rate);
            c.training.beta1 = t.value("beta1", c.training.beta1);
            c.training.beta2 = t.value("beta2", c.training.beta2);
            c.training.epsilon = t.value("epsilon", c.training.epsilon);
            c.training.seed = t.value("seed", c.training.seed);
            if (t.contains("loss")) c.training.loss = loss_kind_from(t["loss"].get<std::string>());
            if (t.contains("variant"))
                c.training.variant = variant_from(t["variant"].get<std::string>());
        }
        if (doc.contains("inference")) {
            const auto& i = doc["inference"];
            check_keys(i, {"tau"}, "inference.");
            c.training.tau = i.value("tau", c.training.tau);
        }
        if (doc.contains("ablation")) {
            const auto& a = doc["ablation"];
            check_keys(a, {"mode", "fraction"}, "ablation.");
            if (a.contains("mode"))
                c.ablation_mode = corruption_mode_from(a["mode"].get<std::string>());
            c.ablation_fraction = a.value("fraction", c.ablation_fraction);
        }
        if (const char* env_seed = std::getenv("HIADV_SEED")) {
            try {
                c.training.seed = std::stoull(env_seed);
            } catch (const std::exception&) {
                throw ConfigError("HIADV_SEED is not an integer: " + std::string(env_seed));
            }
        }
        c.training.oracle_mode = c.ablation_mode;
        c.training.corrupt_fraction = c.ablation_fraction;
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
        }
        return from_json(doc);
    }

    void validate_for_training() const {
        if (taxonomy.empty()) throw ConfigError("config: paths.taxonomy is required");
        if (train.empty()) throw ConfigError("config: paths.train is required");
        if (dev.empty()) throw ConfigError("config: paths.dev is required");
        model.validate();
        training.validate();
    }

    nlohmann::json effective_json() const {
        nlohmann::json doc;
        doc["paths"] = {{"taxonomy", taxonomy}, {"train", train}, {"dev", dev},
                        {"test", test},         {"out_dir", out_dir}};
        doc["model"] = model_json();
        doc["training"] = {{"batch_size", training.batch_size},
                           {"max_epochs", training.max_epochs},
                           {"patience", training.patience},
                           {"warmup_epochs", training.warmup_epochs},
                           {"lambda_adv", training.lambda_adv},
                           {"loss", std::string(to_string(training.loss))},
                           {"learning_rate", training.learning_rate},
                           {"disc_learning_rate", training.disc_learning_rate},
                           {"beta1", training.beta1},
                           {"beta2", training.beta2},
                           {"epsilon", training.epsilon},
                           {"seed", training.seed},
                           {"variant", std::string(to_string(training.variant))}};
        doc["inference"] = {{"tau", training.tau}};
        doc["ablation"] = {{"mode", std::string(to_string(ablation_mode))},
                           {"fraction", ablation_fraction}};
        return doc;
    }

    nlohmann::json model_json() const {
        return {{"d", model.d},
                {"heads", model.heads},
                {"layers", model.layers},
                {"ffn_hidden", model.ffn_hidden},
                {"max_distance", model.max_distance},
                {"backbone", std::string(to_string(model.backbone))},
                {"mixture", std::string(to_string(model.mixture))}};
    }

    // Semantic hash: paths are provenance, not behavior, so they are excluded.
    std::string config_hash() const {
        nlohmann::json doc = effective_json();
        doc.erase("paths");
        return hash_hex(doc.dump());
    }

    static ModelConfig model_from_json(const nlohmann::json& m) {
        ModelConfig cfg;
        cfg.d = m.at("d").get<int>();
        cfg.heads = m.at("heads").get<int>();
        cfg.layers = m.at("layers").get<int>();
        cfg.ffn_hidden = m.at("ffn_hidden").get<int>();
        cfg.max_distance = m.at("max_distance").get<int>();
        cfg.backbone = backbone_from(m.at("backbone").get<std::string>());
        cfg.mixture = mixture_from(m.at("mixture").get<std::string>());
        return cfg;
    }

private:
    static void check_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                           const std::string& prefix) {
        if (!obj.is_object()) throw ConfigError("config: " + prefix + " section must be an object");
        for (const auto& [key, value] : obj.items()) {
            bool ok = false;
            for (const auto& a : allowed) ok = ok || a == key;
            if (!ok) throw ConfigError("config: unknown key '" + prefix + key + "'");
        }
    }
};

} // namespace hiadv
