#pragma once

// The adversarial triad: a generator (text encoder + structure encoder +
// classifier), an oracle encoder that sees the ground-truth local hierarchy
// through membership offsets on the label embeddings, and a discriminator
// trained to tell the two representations apart. Training alternates a
// discriminator update on detached representations with an update of all
// other parameters on classification plus adversarial loss.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiadv/common.hpp"
#include "hiadv/data.hpp"
#include "hiadv/encoders.hpp"
#include "hiadv/hierarchy.hpp"
#include "hiadv/losses.hpp"
#include "hiadv/metrics.hpp"
#include "hiadv/optim.hpp"
#include "hiadv/tensor.hpp"

namespace hiadv {

enum class Backbone { graphormer_root, gat_sum };

inline Backbone backbone_from(const std::string& s) {
    if (s == "graphormer_root") return Backbone::graphormer_root;
    if (s == "gat_sum") return Backbone::gat_sum;
    throw ConfigError("unknown backbone '" + s + "'");
}

inline const char* to_string(Backbone b) {
    return b == Backbone::graphormer_root ? "graphormer_root" : "gat_sum";
}

struct ModelConfig {
    int d = 64;
    int heads = 4;
    int layers = 1;
    int ffn_hidden = 64;
    int max_distance = 16;
    Backbone backbone = Backbone::graphormer_root;
    Mixture mixture = Mixture::root_replace;

    void validate() const {
        if (d < 1) throw ConfigError("model: d must be >= 1");
        if (heads < 1 || d % heads != 0) throw ConfigError("model: heads must divide d");
        if (layers < 1) throw ConfigError("model: layers must be >= 1");
        if (ffn_hidden < 1) throw ConfigError("model: ffn_hidden must be >= 1");
        if (max_distance < 1) throw ConfigError("model: max_distance must be >= 1");
    }
};

// A structure encoder instance: Graphormer pools via the root slot (whose
// input row is replaced by the text representation), GAT pools via the mean
// of all label rows.
class StructureEncoder {
public:
    StructureEncoder(const ModelConfig& cfg, Rng& rng) : backbone_(cfg.backbone) {
        if (backbone_ == Backbone::graphormer_root)
            graphormer_.emplace(cfg.d, cfg.heads, cfg.layers, cfg.ffn_hidden,
                                cfg.max_distance, rng);
        else
            gat_.emplace(cfg.d, cfg.layers, rng);
    }

    Tensor encode(const Tensor& label_table, const Tensor& h_text,
                  const LabelHierarchy& h) const {
        if (backbone_ == Backbone::graphormer_root) {
            const Tensor nodes = replace_row(label_table, h.root(), h_text);
            return take_row(graphormer_->forward(nodes, h), h.root());
        }
        return mean(gat_->forward(label_table, h), 0);
    }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        if (graphormer_) graphormer_->collect(g, prefix);
        else gat_->collect(g, prefix);
    }

    GraphormerEncoder* graphormer() { return graphormer_ ? &*graphormer_ : nullptr; }
    GATEncoder* gat() { return gat_ ? &*gat_ : nullptr; }

private:
    Backbone backbone_;
    std::optional<GraphormerEncoder> graphormer_;
    std::optional<GATEncoder> gat_;
};

// Two-layer discriminator: p = sigmoid(W2 ReLU(W1 h + b1) + b2).
class Discriminator {
public:
    Discriminator(int d, Rng& rng) {
        w1_ = Tensor::randn(d, d, rng, 0.02);
        b1_ = Tensor::zeros(1, d, true);
        w2_ = Tensor::randn(d, 1, rng, 0.02);
        b2_ = Tensor::zeros(1, 1, true);
    }

    Tensor prob(const Tensor& h) const {
        return sigmoid(add(matmul(relu(add(matmul(h, w1_), b1_)), w2_), b2_));
    }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        g.add(prefix + ".w1", w1_);
        g.add(prefix + ".b1", b1_);
        g.add(prefix + ".w2", w2_);
        g.add(prefix + ".b2", b2_);
    }

    Tensor w1_, b1_, w2_, b2_;
};

// Binary cross-entropy pieces of Eq. the discriminator trains on:
// L_dis = -log(1-p) for the generated representation (indicator 0) and
// L_dis_hat = -log(p_hat) for the oracle one (indicator 1). Probabilities
// are clamped to [eps, 1-eps]; `clamped` flags that the clamp fired.
struct DiscriminatorLosses {
    Tensor l_dis;
    Tensor l_dis_hat;
    bool clamped = false;
};

inline DiscriminatorLosses loss_dis(const Tensor& p, const Tensor& p_hat,
                                    double eps = 1e-12) {
    DiscriminatorLosses out;
    for (double v : p.values()) out.clamped = out.clamped || v <= eps || v >= 1.0 - eps;
    for (double v : p_hat.values()) out.clamped = out.clamped || v <= eps || v >= 1.0 - eps;
    const Tensor one = Tensor::constant(p.rows(), p.cols(), 1.0);
    out.l_dis = scale(log(clamp(sub(one, p), eps, 1.0)), -1.0);
    out.l_dis_hat = scale(log(clamp(p_hat, eps, 1.0)), -1.0);
    return out;
}

// Adversarial loss for the generated representation only (indicator 0):
// L_adv = -log p.
inline Tensor loss_adv(const Tensor& p, double eps = 1e-12) {
    return scale(log(clamp(p, eps, 1.0)), -1.0);
}

// Temporarily drops requires_grad on a parameter group, blocking gradient
// flow into it for ops recorded inside the scope.
class FreezeScope {
public:
    explicit FreezeScope(const ParameterGroup& g) {
        for (const auto& p : g.params()) {
            Tensor t = p.tensor;
            if (t.requires_grad()) {
                frozen_.push_back(t);
                t.set_requires_grad(false);
            }
        }
    }
    ~FreezeScope() {
        for (auto& t : frozen_) t.set_requires_grad(true);
    }
    FreezeScope(const FreezeScope&) = delete;
    FreezeScope& operator=(const FreezeScope&) = delete;

private:
    std::vector<Tensor> frozen_;
};

class HiAdvModel {
public:
    HiAdvModel(const ModelConfig& cfg, const LabelHierarchy& h, const Vocab& vocab,
               std::uint64_t seed)
        : cfg_(cfg), hierarchy_(&h) {
        cfg.validate();
        Rng init(seed, 7);
        text_.emplace(vocab.size(), cfg.d, cfg.ffn_hidden, init);
        labels_.emplace(h, vocab, text_->token_table());
        structure_.emplace(cfg, init);
        oracle_structure_.emplace(cfg, init);
        // Oracle membership offsets. Zero init would null the oracle signal
        // at step 0, so they start from a small Gaussian.
        e0_ = Tensor::randn(1, cfg.d, init, 0.02);
        e1_ = Tensor::randn(1, cfg.d, init, 0.02);
        classifier_.emplace(h.size(), cfg.d, init);
        if (cfg.mixture == Mixture::concat_project)
            mix_proj_ = Tensor::randn(2 * cfg.d, cfg.d, init, 0.02);
        discriminator_.emplace(cfg.d, init);
    }

    const ModelConfig& config() const { return cfg_; }
    const LabelHierarchy& hierarchy() const { return *hierarchy_; }

    Tensor encode_text(std::span<const int> tokens) const { return text_->forward(tokens); }

    // h_mix from the cached text representation; no access to Y.
    Tensor generator_from_text(const Tensor& h_text) const {
        const Tensor h_label = structure_->encode(labels_->table(), h_text, *hierarchy_);
        return mix(h_text, h_label, cfg_.mixture, &mix_proj_);
    }

    Tensor generator_forward(std::span<const int> tokens) const {
        return generator_from_text(encode_text(tokens));
    }

    // h_mix_hat: label embeddings are offset by e1 (member of Y) or e0
    // (non-member) before the independent oracle structure encoder runs.
    Tensor oracle_from_text(const Tensor& h_text, const std::vector<LabelId>& members) const {
        const int n = hierarchy_->size();
        for (LabelId id : members)
            if (!hierarchy_->valid_id(id))
                throw ValueError("oracle encoder: label id " + std::to_string(id) +
                                 " outside hierarchy");
        Tensor in_y = Tensor::zeros(n, 1);
        Tensor not_in_y = Tensor::constant(n, 1, 1.0);
        for (LabelId id : members) {
            in_y.values()[static_cast<std::size_t>(id)] = 1.0;
            not_in_y.values()[static_cast<std::size_t>(id)] = 0.0;
        }
        const Tensor offsets = add(matmul(in_y, e1_), matmul(not_in_y, e0_));
        const Tensor oracle_table = add(labels_->table(), offsets);
        const Tensor h_label = oracle_structure_->encode(oracle_table, h_text, *hierarchy_);
        return mix(h_text, h_label, cfg_.mixture, &mix_proj_);
    }

    Tensor classify(const Tensor& h_mix) const { return classifier_->scores(h_mix); }

    Tensor discriminate(const Tensor& h) const { return discriminator_->prob(h); }

    // Inference uses the generator alone: Y_hat = { i : sigmoid(s_i) > tau },
    // root excluded, no path-consistency repair.
    LocalHierarchy predict(std::span<const int> tokens, double tau) const {
        const Tensor s = classify(generator_forward(tokens));
        std::vector<LabelId> out;
        for (int i = 0; i < hierarchy_->size(); ++i) {
            if (i == hierarchy_->root()) continue;
            if (sigmoid_scalar(s.values()[static_cast<std::size_t>(i)]) > tau)
                out.push_back(i);
        }
        return LocalHierarchy::of(std::move(out));
    }

    // Everything the phase-2 update trains: generator, oracle structure
    // encoder, oracle offsets, shared classifier, mixture projection.
    ParameterGroup main_group() const {
        ParameterGroup g;
        text_->collect(g, "text");
        labels_->collect(g, "labels");
        structure_->collect(g, "gen.structure");
        oracle_structure_->collect(g, "oracle.structure");
        g.add("oracle.e0", e0_);
        g.add("oracle.e1", e1_);
        classifier_->collect(g, "classifier");
        if (mix_proj_.defined()) g.add("mix.proj", mix_proj_);
        return g;
    }

    // Generator-only subset: sufficient for inference.
    ParameterGroup generator_group() const {
        ParameterGroup g;
        text_->collect(g, "text");
        labels_->collect(g, "labels");
        structure_->collect(g, "gen.structure");
        classifier_->collect(g, "classifier");
        if (mix_proj_.defined()) g.add("mix.proj", mix_proj_);
        return g;
    }

    ParameterGroup discriminator_group() const {
        ParameterGroup g;
        discriminator_->collect(g, "discriminator");
        return g;
    }

    TextEncoder& text_encoder() { return *text_; }
    LabelEmbeddingTable& label_table() { return *labels_; }
    StructureEncoder& structure_encoder() { return *structure_; }
    StructureEncoder& oracle_structure_encoder() { return *oracle_structure_; }
    Classifier& classifier() { return *classifier_; }
    Discriminator& discriminator() { return *discriminator_; }
    Tensor& e0() { return e0_; }
    Tensor& e1() { return e1_; }

private:
    ModelConfig cfg_;
    const LabelHierarchy* hierarchy_;
    std::optional<TextEncoder> text_;
    std::optional<LabelEmbeddingTable> labels_;
    std::optional<StructureEncoder> structure_;
    std::optional<StructureEncoder> oracle_structure_;
    Tensor e0_, e1_, mix_proj_;
    std::optional<Classifier> classifier_;
    std::optional<Discriminator> discriminator_;
};

enum class Variant { hiadv, plain };

inline Variant variant_from(const std::string& s) {
    if (s == "hiadv") return Variant::hiadv;
    if (s == "plain") return Variant::plain;
    throw ConfigError("unknown training variant '" + s + "'");
}

inline const char* to_string(Variant v) { return v == Variant::hiadv ? "hiadv" : "plain"; }

struct TrainConfig {
    int batch_size = 8;
    int max_epochs = 30;
    int patience = 5;
    int warmup_epochs = 1;      // adversarial loss disabled through this epoch
    double lambda_adv = 1.0;    // 0 reproduces the data-augmentation variant
    double learning_rate = 1e-3;
    double disc_learning_rate = 0.0; // 0: follow learning_rate
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double tau = 0.5;
    LossKind loss = LossKind::zlpr;
    std::uint64_t seed = 1;
    CorruptionMode oracle_mode = CorruptionMode::full;
    double corrupt_fraction = 0.15;
    Variant variant = Variant::hiadv;

    void validate() const {
        if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
        if (patience < 1) throw ConfigError("training: patience must be >= 1");
        if (warmup_epochs < 0) throw ConfigError("training: warmup_epochs must be >= 0");
        if (lambda_adv < 0.0) throw ConfigError("training: lambda_adv must be >= 0");
        if (learning_rate < 0.0) throw ConfigError("training: learning_rate must be >= 0");
        if (disc_learning_rate < 0.0)
            throw ConfigError("training: disc_learning_rate must be >= 0");
        if (tau <= 0.0 || tau > 1.0) throw ConfigError("training: tau must be in (0,1]");
        if (corrupt_fraction < 0.0 || corrupt_fraction > 1.0)
            throw ConfigError("training: fraction must be in [0,1]");
    }
};

struct StepLosses {
    double l_c = 0.0, l_c_hat = 0.0, l_adv = 0.0, l_dis = 0.0, l_dis_hat = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    bool warmup = false;
    StepLosses losses;
    double dev_micro_f1 = 0.0;
    double dev_macro_f1 = 0.0;
    double dev_disc_accuracy = 0.0;
};

struct FitResult {
    std::vector<EpochRecord> curve;
    int best_epoch = 0;
    double best_dev_macro_f1 = -1.0;
    int epochs_run = 0;
};

// Patience-based early stopping keyed on dev Macro-F1: the counter resets on
// improvement and training stops once it reaches `patience`.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when this epoch is a new best.
    bool observe(double dev_macro_f1) {
        if (dev_macro_f1 > best_) {
            best_ = dev_macro_f1;
            counter_ = 0;
            return true;
        }
        ++counter_;
        return false;
    }

    bool should_stop() const { return counter_ >= patience_; }
    double best() const { return best_; }
    int counter() const { return counter_; }

private:
    int patience_;
    double best_ = -1.0;
    int counter_ = 0;
};

class Trainer {
public:
    Trainer(HiAdvModel& model, const TrainConfig& cfg)
        : model_(&model), cfg_(cfg),
          adam_main_(cfg.variant == Variant::plain ? model.generator_group()
                                                   : model.main_group(),
                     {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon}),
          adam_disc_(model.discriminator_group(),
                     {cfg.disc_learning_rate > 0.0 ? cfg.disc_learning_rate : cfg.learning_rate,
                      cfg.beta1, cfg.beta2, cfg.epsilon}),
          corrupt_rng_(cfg.seed, 0xc0440000ULL) {
        cfg.validate();
    }

    // Oracle encoder input for one sample under the configured ablation mode.
    std::vector<LabelId> oracle_members(const LocalHierarchy& y, Rng& rng) const {
        if (cfg_.oracle_mode == CorruptionMode::full) return y.members;
        return corrupt(model_->hierarchy(), y, cfg_.oracle_mode, cfg_.corrupt_fraction, rng)
            .members;
    }

    // Both representations for every sample of the batch, computed once per
    // step on a live tape (the Table-5 single-backprop optimization: phase 2
    // backpropagates through this same graph, so the shared text encoder runs
    // once). h_mix_hat stays empty for the plain variant.
    struct StepComputation {
        Tape tape;
        std::vector<Tensor> h_mix;
        std::vector<Tensor> h_mix_hat;
    };

    StepComputation compute_representations(const Batch& batch) {
        StepComputation sc;
        TapeScope scope(sc.tape);
        for (int i = 0; i < batch.size; ++i) {
            const Tensor h_text = model_->encode_text(batch.tokens(i));
            sc.h_mix.push_back(model_->generator_from_text(h_text));
            if (cfg_.variant == Variant::hiadv)
                sc.h_mix_hat.push_back(model_->oracle_from_text(
                    h_text, oracle_members(batch.labels[static_cast<std::size_t>(i)],
                                           corrupt_rng_)));
        }
        return sc;
    }

    // Phase 1 of Algorithm 1: the discriminator trains on detached copies of
    // the representations; nothing else moves.
    void discriminator_phase(const StepComputation& sc, StepLosses& losses) {
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor dis_sum, dis_hat_sum;
            for (std::size_t i = 0; i < sc.h_mix.size(); ++i) {
                const auto dl = loss_dis(model_->discriminate(sc.h_mix[i].detach()),
                                         model_->discriminate(sc.h_mix_hat[i].detach()));
                dis_sum = dis_sum.defined() ? add(dis_sum, dl.l_dis) : dl.l_dis;
                dis_hat_sum = dis_hat_sum.defined() ? add(dis_hat_sum, dl.l_dis_hat) : dl.l_dis_hat;
            }
            const double inv = 1.0 / static_cast<double>(sc.h_mix.size());
            const Tensor l_dis = scale(dis_sum, inv);
            const Tensor l_dis_hat = scale(dis_hat_sum, inv);
            losses.l_dis = l_dis.item();
            losses.l_dis_hat = l_dis_hat.item();
            tape.backward(add(l_dis, l_dis_hat));
        }
        adam_disc_.step();
        adam_disc_.zero_grad();
    }

    // Phase 2 of Algorithm 1: update everything except the discriminator on
    // L_C + L_C_hat + lambda * L_adv, backpropagating through the live
    // representation graph. The adversarial probability is taken from the
    // just-updated discriminator, whose parameters are frozen for this pass.
    // With lambda 0 the adversarial term is reported but not part of the loss
    // graph, so its gradient contribution is exactly zero.
    void main_phase(StepComputation& sc, const Batch& batch, bool adversarial_enabled,
                    StepLosses& losses) {
        const double lambda = adversarial_enabled ? cfg_.lambda_adv : 0.0;
        const LabelHierarchy& h = model_->hierarchy();
        {
            TapeScope scope(sc.tape);
            FreezeScope freeze_disc(model_->discriminator_group());
            Tensor c_sum, c_hat_sum, adv_sum;
            for (int i = 0; i < batch.size; ++i) {
                const auto& y = batch.labels[static_cast<std::size_t>(i)];
                const std::size_t s = static_cast<std::size_t>(i);
                const Tensor l_c = classification_loss(
                    cfg_.loss, model_->classify(sc.h_mix[s]), h, y, true);
                c_sum = c_sum.defined() ? add(c_sum, l_c) : l_c;
                if (cfg_.variant == Variant::plain) continue;
                const Tensor l_c_hat = classification_loss(
                    cfg_.loss, model_->classify(sc.h_mix_hat[s]), h, y, true);
                c_hat_sum = c_hat_sum.defined() ? add(c_hat_sum, l_c_hat) : l_c_hat;
                const Tensor l_adv = loss_adv(model_->discriminate(sc.h_mix[s]));
                adv_sum = adv_sum.defined() ? add(adv_sum, l_adv) : l_adv;
            }
            const double inv = 1.0 / batch.size;
            Tensor total = scale(c_sum, inv);
            losses.l_c = total.item();
            if (cfg_.variant == Variant::hiadv) {
                const Tensor l_c_hat = scale(c_hat_sum, inv);
                const Tensor l_adv = scale(adv_sum, inv);
                losses.l_c_hat = l_c_hat.item();
                losses.l_adv = l_adv.item();
                total = add(total, l_c_hat);
                if (lambda > 0.0) total = add(total, scale(l_adv, lambda));
            }
            sc.tape.backward(total);
        }
        adam_main_.step();
        adam_main_.zero_grad();
    }

    StepLosses train_step(const Batch& batch, bool adversarial_enabled) {
        StepLosses losses;
        StepComputation sc = compute_representations(batch);
        if (cfg_.variant == Variant::hiadv) discriminator_phase(sc, losses);
        main_phase(sc, batch, adversarial_enabled, losses);
        return losses;
    }

    // Fraction of dev pairs the discriminator classifies correctly
    // (p < 0.5 for generated, p_hat > 0.5 for oracle representations).
    double discriminator_accuracy(const std::vector<TokenSample>& samples, Rng& rng) const {
        if (samples.empty()) return 0.0;
        long correct = 0;
        for (const auto& s : samples) {
            const Tensor h_text = model_->encode_text(s.tokens);
            const double p =
                model_->discriminate(model_->generator_from_text(h_text)).item();
            const double p_hat =
                model_->discriminate(model_->oracle_from_text(h_text, oracle_members(s.labels, rng)))
                    .item();
            if (p < 0.5) ++correct;
            if (p_hat > 0.5) ++correct;
        }
        return static_cast<double>(correct) / (2.0 * static_cast<double>(samples.size()));
    }

    MetricReport evaluate(const std::vector<TokenSample>& samples) const {
        std::vector<LocalHierarchy> preds, truths;
        preds.reserve(samples.size());
        truths.reserve(samples.size());
        for (const auto& s : samples) {
            preds.push_back(model_->predict(s.tokens, cfg_.tau));
            truths.push_back(s.labels);
        }
        return micro_macro_f1(preds, truths, model_->hierarchy());
    }

    // Full training loop: per-epoch shuffled batches, dev evaluation,
    // best-Macro-F1 checkpoint tracking, patience early stopping. The model
    // is left holding the best parameters.
    FitResult fit(const std::vector<TokenSample>& train, const std::vector<TokenSample>& dev) {
        if (train.empty() || dev.empty())
            throw ValueError("fit: train and dev splits must be non-empty");
        Batcher batcher(train, cfg_.batch_size, cfg_.seed);
        EarlyStopper stopper(cfg_.patience);
        FitResult result;
        std::vector<std::vector<double>> best_main, best_disc;
        for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
            const bool warmup = epoch <= cfg_.warmup_epochs;
            StepLosses sums;
            long n_batches = 0;
            for (const auto& batch : batcher.epoch(epoch)) {
                const StepLosses sl = train_step(batch, !warmup);
                sums.l_c += sl.l_c;
                sums.l_c_hat += sl.l_c_hat;
                sums.l_adv += sl.l_adv;
                sums.l_dis += sl.l_dis;
                sums.l_dis_hat += sl.l_dis_hat;
                ++n_batches;
            }
            EpochRecord rec;
            rec.epoch = epoch;
            rec.warmup = warmup;
            rec.losses = {sums.l_c / n_batches, sums.l_c_hat / n_batches,
                          sums.l_adv / n_batches, sums.l_dis / n_batches,
                          sums.l_dis_hat / n_batches};
            const MetricReport dev_report = evaluate(dev);
            rec.dev_micro_f1 = dev_report.micro_f1;
            rec.dev_macro_f1 = dev_report.macro_f1;
            if (cfg_.variant == Variant::hiadv) {
                Rng dev_rng(cfg_.seed, 0xdd000000ULL + static_cast<std::uint64_t>(epoch));
                rec.dev_disc_accuracy = discriminator_accuracy(dev, dev_rng);
            } else {
                rec.dev_disc_accuracy = 0.5;
            }
            result.curve.push_back(rec);
            result.epochs_run = epoch;
            if (stopper.observe(rec.dev_macro_f1)) {
                result.best_epoch = epoch;
                result.best_dev_macro_f1 = rec.dev_macro_f1;
                best_main = adam_main_.group().snapshot();
                best_disc = adam_disc_.group().snapshot();
            }
            if (stopper.should_stop()) break;
        }
        if (!best_main.empty()) {
            adam_main_.group().restore(best_main);
            adam_disc_.group().restore(best_disc);
        }
        return result;
    }

    Adam& adam_main() { return adam_main_; }
    Adam& adam_disc() { return adam_disc_; }
    const TrainConfig& config() const { return cfg_; }

private:
    HiAdvModel* model_;
    TrainConfig cfg_;
    Adam adam_main_;
    Adam adam_disc_;
    Rng corrupt_rng_;
};

} // namespace hiadv
