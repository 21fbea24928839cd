#pragma once

// Concrete encoders behind the abstract two-encoder model: a toy text
// encoder standing in for BERT, a Graphormer-style structure encoder with
// spatial-distance attention bias, a masked-attention GAT, label embeddings,
// mixture mechanisms and the shared linear classifier.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiadv/common.hpp"
#include "hiadv/data.hpp"
#include "hiadv/hierarchy.hpp"
#include "hiadv/optim.hpp"
#include "hiadv/tensor.hpp"

namespace hiadv {

// One self-attention block (single head, d x d projections) followed by a
// two-layer ReLU feed-forward, with residual connections; mean pooling over
// token positions. No positional embeddings: token order only matters
// through attention.
class TextEncoder {
public:
    TextEncoder(int vocab_size, int d, int ffn_hidden, Rng& rng)
        : vocab_size_(vocab_size), d_(d) {
        tok_emb_ = Tensor::randn(vocab_size, d, rng, 0.02);
        wq_ = Tensor::randn(d, d, rng, 0.02);
        wk_ = Tensor::randn(d, d, rng, 0.02);
        wv_ = Tensor::randn(d, d, rng, 0.02);
        wo_ = Tensor::randn(d, d, rng, 0.02);
        w1_ = Tensor::randn(d, ffn_hidden, rng, 0.02);
        b1_ = Tensor::zeros(1, ffn_hidden, true);
        w2_ = Tensor::randn(ffn_hidden, d, rng, 0.02);
        b2_ = Tensor::zeros(1, d, true);
    }

    Tensor forward(std::span<const int> tokens) const {
        if (tokens.empty()) throw ValueError("encode_text: empty token sequence");
        std::vector<int> ids(tokens.begin(), tokens.end());
        for (int id : ids)
            if (id < 0 || id >= vocab_size_)
                throw ValueError("encode_text: token id " + std::to_string(id) +
                                 " outside vocabulary of " + std::to_string(vocab_size_));
        const Tensor e = embedding_lookup(tok_emb_, ids);
        const Tensor q = matmul(e, wq_);
        const Tensor k = matmul(e, wk_);
        const Tensor v = matmul(e, wv_);
        const Tensor att = softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d_)), 1);
        const Tensor h1 = add(e, matmul(matmul(att, v), wo_));
        const Tensor f = add_rowvec(
            matmul(relu(add_rowvec(matmul(h1, w1_), b1_)), w2_), b2_);
        return mean(add(h1, f), 0);
    }

    const Tensor& token_table() const { return tok_emb_; }
    int dim() const { return d_; }
    int vocab_size() const { return vocab_size_; }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        g.add(prefix + ".tok_emb", tok_emb_);
        g.add(prefix + ".wq", wq_);
        g.add(prefix + ".wk", wk_);
        g.add(prefix + ".wv", wv_);
        g.add(prefix + ".wo", wo_);
        g.add(prefix + ".ffn_w1", w1_);
        g.add(prefix + ".ffn_b1", b1_);
        g.add(prefix + ".ffn_w2", w2_);
        g.add(prefix + ".ffn_b2", b2_);
    }

    Tensor tok_emb_, wq_, wk_, wv_, wo_, w1_, b1_, w2_, b2_;

private:
    int vocab_size_, d_;
};

// Per-label trainable d-vectors. Rows start as the token embedding of the
// label's name (label names are vocabulary entries) and train freely
// afterwards. The root row is a placeholder: the Graphormer path overwrites
// it with the text representation at run time.
class LabelEmbeddingTable {
public:
    LabelEmbeddingTable(const LabelHierarchy& h, const Vocab& vocab, const Tensor& tok_emb) {
        const int d = tok_emb.cols();
        table_ = Tensor::zeros(h.size(), d, true);
        for (int id = 0; id < h.size(); ++id) {
            const int tok = vocab.id_of(h.name(id));
            if (tok < 0) continue; // stays zero, trains from there
            for (int j = 0; j < d; ++j)
                table_.values()[static_cast<std::size_t>(id) * d + j] =
                    tok_emb.values()[static_cast<std::size_t>(tok) * d + j];
        }
    }

    const Tensor& table() const { return table_; }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        g.add(prefix + ".table", table_);
    }

private:
    Tensor table_;
};

// Multi-head self-attention over all label slots with a learnable per-head
// additive bias indexed by clipped shortest-path distance.
class GraphormerEncoder {
public:
    GraphormerEncoder(int d, int heads, int layers, int ffn_hidden, int max_distance, Rng& rng)
        : d_(d), heads_(heads), max_distance_(max_distance) {
        if (heads < 1 || d % heads != 0)
            throw ConfigError("graphormer: head count must divide d");
        head_dim_ = d / heads;
        layers_.resize(static_cast<std::size_t>(layers));
        for (auto& layer : layers_) {
            for (int hd = 0; hd < heads; ++hd) {
                layer.wq.push_back(Tensor::randn(d, head_dim_, rng, 0.02));
                layer.wk.push_back(Tensor::randn(d, head_dim_, rng, 0.02));
                layer.wv.push_back(Tensor::randn(d, head_dim_, rng, 0.02));
                layer.bias.push_back(Tensor::zeros(max_distance + 1, 1, true));
            }
            layer.wo = Tensor::randn(d, d, rng, 0.02);
            layer.w1 = Tensor::randn(d, ffn_hidden, rng, 0.02);
            layer.b1 = Tensor::zeros(1, ffn_hidden, true);
            layer.w2 = Tensor::randn(ffn_hidden, d, rng, 0.02);
            layer.b2 = Tensor::zeros(1, d, true);
        }
    }

    // nodes: (|Y|, d), one row per label slot. Returns the full (|Y|, d)
    // output matrix.
    Tensor forward(const Tensor& nodes, const LabelHierarchy& h) const {
        const int n = h.size();
        if (nodes.rows() != n || nodes.cols() != d_)
            throw ShapeError("graphormer: nodes " + nodes.shape().str() + ", expected (" +
                             std::to_string(n) + "," + std::to_string(d_) + ")");
        std::vector<int> spd_idx(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                spd_idx[static_cast<std::size_t>(i) * n + j] = std::min(h.spd(i, j), max_distance_);

        Tensor x = nodes;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
        for (const auto& layer : layers_) {
            std::vector<Tensor> head_out;
            head_out.reserve(static_cast<std::size_t>(heads_));
            for (int hd = 0; hd < heads_; ++hd) {
                const Tensor q = matmul(x, layer.wq[static_cast<std::size_t>(hd)]);
                const Tensor k = matmul(x, layer.wk[static_cast<std::size_t>(hd)]);
                const Tensor v = matmul(x, layer.wv[static_cast<std::size_t>(hd)]);
                Tensor s = scale(matmul(q, transpose(k)), inv_sqrt);
                const Tensor b =
                    reshape(embedding_lookup(layer.bias[static_cast<std::size_t>(hd)], spd_idx), n, n);
                const Tensor p = softmax(add(s, b), 1);
                head_out.push_back(matmul(p, v));
            }
            const Tensor attn = matmul(concat(head_out, 1), layer.wo);
            const Tensor h1 = add(x, attn);
            const Tensor f = add_rowvec(
                matmul(relu(add_rowvec(matmul(h1, layer.w1), layer.b1)), layer.w2), layer.b2);
            x = add(h1, f);
        }
        return x;
    }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const std::string lp = prefix + ".layer" + std::to_string(l);
            for (int hd = 0; hd < heads_; ++hd) {
                const std::string hp = lp + ".head" + std::to_string(hd);
                g.add(hp + ".wq", layers_[l].wq[static_cast<std::size_t>(hd)]);
                g.add(hp + ".wk", layers_[l].wk[static_cast<std::size_t>(hd)]);
                g.add(hp + ".wv", layers_[l].wv[static_cast<std::size_t>(hd)]);
                g.add(hp + ".spatial_bias", layers_[l].bias[static_cast<std::size_t>(hd)]);
            }
            g.add(lp + ".wo", layers_[l].wo);
            g.add(lp + ".ffn_w1", layers_[l].w1);
            g.add(lp + ".ffn_b1", layers_[l].b1);
            g.add(lp + ".ffn_w2", layers_[l].w2);
            g.add(lp + ".ffn_b2", layers_[l].b2);
        }
    }

    struct Layer {
        std::vector<Tensor> wq, wk, wv, bias;
        Tensor wo, w1, b1, w2, b2;
    };
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    int heads() const { return heads_; }

private:
    int d_, heads_, head_dim_, max_distance_;
    std::vector<Layer> layers_;
};

// Additive-attention graph layers masked to tree edges (both directions)
// plus self-loops.
class GATEncoder {
public:
    GATEncoder(int d, int layers, Rng& rng, double slope = 0.2) : d_(d), slope_(slope) {
        layers_.resize(static_cast<std::size_t>(layers));
        for (auto& layer : layers_) {
            layer.w = Tensor::randn(d, d, rng, 0.02);
            layer.a_src = Tensor::randn(d, 1, rng, 0.02);
            layer.a_dst = Tensor::randn(d, 1, rng, 0.02);
        }
    }

    Tensor forward(const Tensor& nodes, const LabelHierarchy& h) const {
        const int n = h.size();
        if (nodes.rows() != n || nodes.cols() != d_)
            throw ShapeError("gat: nodes " + nodes.shape().str() + ", expected (" +
                             std::to_string(n) + "," + std::to_string(d_) + ")");
        Tensor mask = Tensor::constant(n, n, -1e30);
        for (int i = 0; i < n; ++i) {
            mask.values()[static_cast<std::size_t>(i) * n + i] = 0.0;
            const int p = h.parent(i);
            if (p >= 0) {
                mask.values()[static_cast<std::size_t>(i) * n + p] = 0.0;
                mask.values()[static_cast<std::size_t>(p) * n + i] = 0.0;
            }
        }
        const Tensor ones_row = Tensor::constant(1, n, 1.0);
        const Tensor ones_col = Tensor::constant(n, 1, 1.0);
        Tensor x = nodes;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            const Tensor z = matmul(x, layer.w);
            const Tensor u = matmul(z, layer.a_src);
            const Tensor v = matmul(z, layer.a_dst);
            Tensor e = add(matmul(u, ones_row), matmul(ones_col, transpose(v)));
            e = add(leaky_relu(e, slope_), mask);
            const Tensor p = softmax(e, 1);
            x = matmul(p, z);
            if (l + 1 < layers_.size()) x = relu(x);
        }
        return x;
    }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const std::string lp = prefix + ".layer" + std::to_string(l);
            g.add(lp + ".w", layers_[l].w);
            g.add(lp + ".a_src", layers_[l].a_src);
            g.add(lp + ".a_dst", layers_[l].a_dst);
        }
    }

    struct Layer {
        Tensor w, a_src, a_dst;
    };
    std::vector<Layer>& layers() { return layers_; }

private:
    int d_;
    double slope_;
    std::vector<Layer> layers_;
};

// Linear classifier over the full label set, shared verbatim between the
// generator and the oracle encoder.
class Classifier {
public:
    Classifier(int n_labels, int d, Rng& rng) {
        w_ = Tensor::randn(n_labels, d, rng, 0.02);
        b_ = Tensor::zeros(1, n_labels, true);
    }

    // s = W_c h + b_c, shape (1, |Y|). Probabilities are sigmoid(s) downstream.
    Tensor scores(const Tensor& h_mix) const {
        return add(matmul(h_mix, transpose(w_)), b_);
    }

    void collect(ParameterGroup& g, const std::string& prefix) const {
        g.add(prefix + ".w", w_);
        g.add(prefix + ".b", b_);
    }

    Tensor w_, b_;
};

enum class Mixture { root_replace, sum, concat_project };

inline Mixture mixture_from(const std::string& s) {
    if (s == "root_replace") return Mixture::root_replace;
    if (s == "sum") return Mixture::sum;
    if (s == "concat_project") return Mixture::concat_project;
    throw ConfigError("unknown mixture mechanism '" + s + "'");
}

inline const char* to_string(Mixture m) {
    switch (m) {
        case Mixture::root_replace: return "root_replace";
        case Mixture::sum: return "sum";
        case Mixture::concat_project: return "concat_project";
    }
    return "?";
}

// Coalesces the text and label representations. root_replace passes
// h_label through unchanged (the Graphormer root output already mixes the
// two); concat_project applies a learned (2d x d) projection.
inline Tensor mix(const Tensor& h_text, const Tensor& h_label, Mixture mechanism,
                  const Tensor* projection = nullptr) {
    switch (mechanism) {
        case Mixture::root_replace:
            return h_label;
        case Mixture::sum:
            return add(h_text, h_label);
        case Mixture::concat_project:
            if (!projection || !projection->defined())
                throw ValueError("mix: concat_project needs a projection matrix");
            return matmul(concat({h_text, h_label}, 1), *projection);
    }
    throw ValueError("mix: unknown mechanism");
}

} // namespace hiadv
