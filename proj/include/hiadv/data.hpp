#pragma once

// Synthetic HTC corpus generation, JSONL loading, vocabulary, batching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiadv/common.hpp"
#include "hiadv/hierarchy.hpp"
#include "hiadv/rng.hpp"

namespace hiadv {

struct SynthSpec {
    int depth = 4;
    int branching = 3;
    int min_paths = 1;
    int max_paths = 2;
    int tokens_per_label = 2;   // disjoint indicator tokens owned by each label
    int noise_vocab = 200;
    double noise_fraction = 0.3;
    int train_docs = 2000;
    int dev_docs = 500;
    int test_docs = 500;
    std::uint64_t seed = 1;

    void validate() const {
        if (depth < 1) throw ConfigError("synth: depth must be >= 1");
        if (branching < 2) throw ConfigError("synth: branching must be >= 2");
        if (min_paths < 1 || max_paths < min_paths)
            throw ConfigError("synth: paths_per_doc range invalid");
        if (tokens_per_label < 1) throw ConfigError("synth: tokens_per_label must be >= 1");
        if (noise_vocab < 1) throw ConfigError("synth: noise_vocab must be >= 1");
        if (noise_fraction < 0.0 || noise_fraction >= 1.0)
            throw ConfigError("synth: noise_fraction must be in [0,1)");
        if (train_docs < 1 || dev_docs < 1 || test_docs < 1)
            throw ConfigError("synth: split sizes must be >= 1");
    }
};

// Uniform B-ary tree of the requested depth; level d holds labels
// "n{d}_{index}" with index counted across the whole level.
inline LabelHierarchy gen_taxonomy(const SynthSpec& spec) {
    spec.validate();
    std::vector<std::string> names{"root"};
    std::vector<std::string> parents{""};
    std::vector<std::string> prev{"root"};
    for (int d = 1; d <= spec.depth; ++d) {
        std::vector<std::string> level;
        int index = 0;
        for (const auto& parent : prev) {
            for (int b = 0; b < spec.branching; ++b) {
                std::string name = "n" + std::to_string(d) + "_" + std::to_string(index++);
                names.push_back(name);
                parents.push_back(parent);
                level.push_back(std::move(name));
            }
        }
        prev = std::move(level);
    }
    return LabelHierarchy::build(names, parents);
}

inline std::string indicator_token(const std::string& label, int j) {
    return "w_" + label + "_" + std::to_string(j);
}

inline std::string noise_token(int i) { return "z" + std::to_string(i); }

struct RawSample {
    std::vector<std::string> tokens;
    LocalHierarchy labels;
};

// One split. Each document samples 1..2 root-to-leaf paths; every label on
// those paths emits a random non-empty subset of its indicator tokens; noise
// tokens are then interleaved at random positions.
inline std::vector<RawSample> gen_split(const SynthSpec& spec, const LabelHierarchy& h,
                                        int docs, Rng& rng) {
    std::vector<LabelId> leaves;
    for (int id = 0; id < h.size(); ++id)
        if (h.depth(id) == spec.depth) leaves.push_back(id);

    std::vector<RawSample> out;
    out.reserve(static_cast<std::size_t>(docs));
    for (int doc = 0; doc < docs; ++doc) {
        const int span = spec.max_paths - spec.min_paths + 1;
        int npaths = spec.min_paths + rng.uniform_int(span);
        npaths = std::min<int>(npaths, static_cast<int>(leaves.size()));
        std::vector<LabelId> ends;
        for (int idx : rng.sample_without_replacement(static_cast<int>(leaves.size()), npaths))
            ends.push_back(leaves[static_cast<std::size_t>(idx)]);
        RawSample sample;
        sample.labels = ancestor_closure(h, ends);
        for (LabelId id : sample.labels.members) {
            const int emit = 1 + rng.uniform_int(spec.tokens_per_label);
            for (int j : rng.sample_without_replacement(spec.tokens_per_label, emit))
                sample.tokens.push_back(indicator_token(h.name(id), j));
        }
        const int noise = static_cast<int>(
            std::ceil(spec.noise_fraction * static_cast<double>(sample.tokens.size())));
        for (int i = 0; i < noise; ++i) {
            const int pos = rng.uniform_int(static_cast<int>(sample.tokens.size()) + 1);
            sample.tokens.insert(sample.tokens.begin() + pos,
                                 noise_token(rng.uniform_int(spec.noise_vocab)));
        }
        out.push_back(std::move(sample));
    }
    return out;
}

struct SynthDataset {
    std::vector<RawSample> train, dev, test;
};

inline SynthDataset gen_dataset(const SynthSpec& spec, const LabelHierarchy& h) {
    spec.validate();
    SynthDataset ds;
    Rng train_rng(spec.seed, 101), dev_rng(spec.seed, 102), test_rng(spec.seed, 103);
    ds.train = gen_split(spec, h, spec.train_docs, train_rng);
    ds.dev = gen_split(spec, h, spec.dev_docs, dev_rng);
    ds.test = gen_split(spec, h, spec.test_docs, test_rng);
    return ds;
}

// ---- JSONL corpus files ----
// One object per line: {"tokens": [string,...], "labels": [string,...]}

inline std::string to_jsonl(const std::vector<RawSample>& samples, const LabelHierarchy& h) {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::json line;
        line["tokens"] = s.tokens;
        auto labels = nlohmann::json::array();
        for (LabelId id : s.labels.members) labels.push_back(h.name(id));
        line["labels"] = std::move(labels);
        out += line.dump();
        out += "\n";
    }
    return out;
}

// Labels are resolved to ids and ancestor-closed (leaves-only and already
// closed encodings both load to the same set). Empty label arrays are an
// error unless `allow_empty_labels` (test-split mode).
inline std::vector<RawSample> load_jsonl(const std::string& path, const LabelHierarchy& h,
                                         bool allow_empty_labels = false) {
    std::ifstream in(path);
    if (!in) throw DataError("corpus: cannot open " + path);
    std::vector<RawSample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!doc.is_object() || !doc.contains("tokens") || !doc.contains("labels"))
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected object with 'tokens' and 'labels'");
        RawSample s;
        for (const auto& t : doc["tokens"]) s.tokens.push_back(t.get<std::string>());
        if (s.tokens.empty())
            throw DataError(path + ":" + std::to_string(line_no) + ": empty token list");
        std::vector<LabelId> ids;
        for (const auto& l : doc["labels"]) {
            const LabelId id = h.id_of(l.get<std::string>());
            if (id < 0)
                throw DataError(path + ":" + std::to_string(line_no) + ": unknown label '" +
                                l.get<std::string>() + "'");
            if (id != h.root()) ids.push_back(id);
        }
        if (ids.empty() && !allow_empty_labels)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": empty label set in training mode");
        s.labels = ids.empty() ? LocalHierarchy{} : ancestor_closure(h, ids);
        out.push_back(std::move(s));
    }
    return out;
}

// ---- vocabulary ----

class Vocab {
public:
    // Tokens from all given corpora plus every label name, sorted.
    static Vocab build(const std::vector<const std::vector<RawSample>*>& corpora,
                       const LabelHierarchy& h) {
        std::set<std::string> set;
        for (const auto* samples : corpora)
            for (const auto& s : *samples)
                set.insert(s.tokens.begin(), s.tokens.end());
        for (int id = 0; id < h.size(); ++id) set.insert(h.name(id));
        Vocab v;
        v.tokens_.assign(set.begin(), set.end());
        for (std::size_t i = 0; i < v.tokens_.size(); ++i)
            v.index_[v.tokens_[i]] = static_cast<int>(i);
        return v;
    }

    static Vocab from_tokens(std::vector<std::string> tokens) {
        Vocab v;
        v.tokens_ = std::move(tokens);
        for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
            if (v.index_.count(v.tokens_[i]))
                throw DataError("vocab: duplicate token '" + v.tokens_[i] + "'");
            v.index_[v.tokens_[i]] = static_cast<int>(i);
        }
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int id_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? -1 : it->second;
    }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

struct TokenSample {
    std::vector<int> tokens;
    LocalHierarchy labels;
};

inline std::vector<TokenSample> encode_samples(const Vocab& vocab,
                                               const std::vector<RawSample>& raw) {
    std::vector<TokenSample> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        TokenSample t;
        t.tokens.reserve(r.tokens.size());
        for (const auto& tok : r.tokens) {
            const int id = vocab.id_of(tok);
            if (id < 0) throw DataError("vocab: unknown token '" + tok + "'");
            t.tokens.push_back(id);
        }
        t.labels = r.labels;
        out.push_back(std::move(t));
    }
    return out;
}

// Per-label occurrence counts over a split (for frequency clustering).
inline std::vector<long long> label_counts(const std::vector<TokenSample>& samples, int n_labels) {
    std::vector<long long> counts(static_cast<std::size_t>(n_labels), 0);
    for (const auto& s : samples)
        for (LabelId id : s.labels.members) counts[static_cast<std::size_t>(id)]++;
    return counts;
}

// ---- batching ----

constexpr int kPadToken = -1;

struct Batch {
    int size = 0;
    int max_len = 0;
    std::vector<int> ids;     // size x max_len, row-major, padded with kPadToken
    std::vector<int> lengths;
    std::vector<LocalHierarchy> labels;

    std::span<const int> tokens(int i) const {
        return {ids.data() + static_cast<std::size_t>(i) * max_len,
                static_cast<std::size_t>(lengths[static_cast<std::size_t>(i)])};
    }
};

// Deterministic per-epoch shuffling; the final partial batch is kept.
class Batcher {
public:
    Batcher(const std::vector<TokenSample>& samples, int batch_size, std::uint64_t seed)
        : samples_(&samples), batch_size_(batch_size), seed_(seed) {
        if (batch_size < 1) throw ConfigError("batcher: batch_size must be >= 1");
    }

    std::vector<Batch> epoch(int epoch_index) const {
        std::vector<int> order(samples_->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng rng(seed_, 0x9a7c0000ULL + static_cast<std::uint64_t>(epoch_index));
        rng.shuffle(order);
        std::vector<Batch> out;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size_)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
            Batch b;
            b.size = static_cast<int>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = (*samples_)[static_cast<std::size_t>(order[i])];
                b.max_len = std::max(b.max_len, static_cast<int>(s.tokens.size()));
            }
            b.ids.assign(static_cast<std::size_t>(b.size) * b.max_len, kPadToken);
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = (*samples_)[static_cast<std::size_t>(order[i])];
                const std::size_t row = i - start;
                std::copy(s.tokens.begin(), s.tokens.end(),
                          b.ids.begin() + static_cast<std::ptrdiff_t>(row * b.max_len));
                b.lengths.push_back(static_cast<int>(s.tokens.size()));
                b.labels.push_back(s.labels);
            }
            out.push_back(std::move(b));
        }
        return out;
    }

private:
    const std::vector<TokenSample>* samples_;
    int batch_size_;
    std::uint64_t seed_;
};

} // namespace hiadv
