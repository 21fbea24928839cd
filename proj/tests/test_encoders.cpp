#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "hiadv/encoders.hpp"
#include "hiadv/framework.hpp"
#include "hiadv/losses.hpp"
#include "testutil.hpp"

using namespace hiadv;

namespace {

void zero_all(std::initializer_list<Tensor> ts) {
    for (auto t : ts) std::fill(t.values().begin(), t.values().end(), 0.0);
}

LabelHierarchy small_tree() {
    return LabelHierarchy::build({"root", "A", "B", "A1", "A2"},
                                 {"", "root", "root", "A", "A"});
}

LabelHierarchy root_only() { return LabelHierarchy::build({"root"}, {""}); }

} // namespace

TEST_CASE("text encoder with all weights zero returns the zero vector") {
    Rng rng(1);
    TextEncoder enc(10, 8, 16, rng);
    zero_all({enc.tok_emb_, enc.wq_, enc.wk_, enc.wv_, enc.wo_, enc.w1_, enc.b1_, enc.w2_,
              enc.b2_});
    const std::vector<int> tokens{3};
    const Tensor out = enc.forward(tokens);
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("text encoder pooling is idempotent over duplicated tokens") {
    Rng rng(2);
    TextEncoder enc(10, 8, 16, rng);
    const std::vector<int> once{4};
    const std::vector<int> twice{4, 4};
    CHECK(enc.forward(once).values() == enc.forward(twice).values());
}

TEST_CASE("text encoder is order-invariant when attention projections are zeroed") {
    Rng rng(3);
    TextEncoder enc(10, 8, 16, rng);
    zero_all({enc.wq_, enc.wk_, enc.wv_, enc.wo_});
    const std::vector<int> fwd{1, 5, 2, 7};
    const std::vector<int> rev{7, 2, 5, 1};
    const Tensor a = enc.forward(fwd);
    const Tensor b = enc.forward(rev);
    for (std::size_t i = 0; i < a.values().size(); ++i)
        CHECK(a.values()[i] == Catch::Approx(b.values()[i]).margin(1e-15));
}

TEST_CASE("text encoder rejects empty and out-of-vocabulary input") {
    Rng rng(4);
    TextEncoder enc(10, 8, 16, rng);
    CHECK_THROWS_AS(enc.forward(std::vector<int>{}), ValueError);
    CHECK_THROWS_AS(enc.forward(std::vector<int>{10}), ValueError);
}

TEST_CASE("label embeddings initialize from the name's token embedding row") {
    const auto h = small_tree();
    std::vector<RawSample> empty_corpus;
    const Vocab vocab = Vocab::build({&empty_corpus}, h);
    Rng rng(5);
    TextEncoder enc(vocab.size(), 4, 8, rng);
    LabelEmbeddingTable table(h, vocab, enc.token_table());
    for (int id = 0; id < h.size(); ++id) {
        const int tok = vocab.id_of(h.name(id));
        REQUIRE(tok >= 0);
        for (int j = 0; j < 4; ++j)
            CHECK(table.table().values()[static_cast<std::size_t>(id) * 4 + j] ==
                  enc.token_table().values()[static_cast<std::size_t>(tok) * 4 + j]);
    }
}

TEST_CASE("graphormer on a root-only hierarchy is the value-projection pipeline") {
    const auto h = root_only();
    Rng rng(6);
    GraphormerEncoder enc(8, 2, 1, 16, 4, rng);
    const Tensor h_text = testutil::random_tensor(rng, 1, 8, -1, 1, false);
    const Tensor out = take_row(enc.forward(h_text, h), 0);

    // Hand-built reference: single-node attention passes the value through.
    const auto& layer = enc.layers()[0];
    std::vector<Tensor> heads;
    for (int hd = 0; hd < 2; ++hd)
        heads.push_back(matmul(h_text, layer.wv[static_cast<std::size_t>(hd)]));
    const Tensor h1 = add(h_text, matmul(concat(heads, 1), layer.wo));
    const Tensor f =
        add_rowvec(matmul(relu(add_rowvec(matmul(h1, layer.w1), layer.b1)), layer.w2), layer.b2);
    const Tensor expected = add(h1, f);
    CHECK(out.values() == expected.values());
}

TEST_CASE("huge negative spatial bias isolates the root from the labels") {
    const auto h = small_tree();
    Rng rng(7);
    GraphormerEncoder enc(8, 2, 1, 16, 4, rng);
    for (auto& layer : enc.layers())
        for (auto& bias : layer.bias)
            for (std::size_t d = 1; d < bias.values().size(); ++d) bias.values()[d] = -1e9;

    const Tensor h_text = testutil::random_tensor(rng, 1, 8, -1, 1, false);
    Tensor nodes = testutil::random_tensor(rng, h.size(), 8, -1, 1, false);
    nodes = replace_row(nodes, h.root(), h_text);
    const Tensor multi = take_row(enc.forward(nodes, h), h.root());

    const auto solo = root_only();
    const Tensor single = take_row(enc.forward(h_text, solo), 0);
    CHECK(multi.values() == single.values());

    // And the label rows genuinely stop mattering.
    Tensor nodes2 = testutil::random_tensor(rng, h.size(), 8, -1, 1, false);
    nodes2 = replace_row(nodes2, h.root(), h_text);
    const Tensor multi2 = take_row(enc.forward(nodes2, h), h.root());
    CHECK(multi.values() == multi2.values());
}

TEST_CASE("consistently permuting non-root nodes leaves the root output unchanged") {
    const auto h = small_tree();
    // Same tree with A and B blocks listed in a different order.
    const auto h_perm = LabelHierarchy::build({"root", "B", "A", "A2", "A1"},
                                              {"", "root", "root", "A", "A"});
    Rng rng(8);
    GraphormerEncoder enc(8, 2, 1, 16, 4, rng);
    for (auto& layer : enc.layers())
        for (auto& bias : layer.bias)
            for (auto& v : bias.values()) v = rng.uniform(-0.5, 0.5);

    const Tensor h_text = testutil::random_tensor(rng, 1, 8, -1, 1, false);
    Tensor table = testutil::random_tensor(rng, h.size(), 8, -1, 1, false);

    Tensor table_perm = Tensor::zeros(h.size(), 8);
    for (int id = 0; id < h.size(); ++id) {
        const int pid = h_perm.id_of(h.name(id));
        for (int j = 0; j < 8; ++j)
            table_perm.values()[static_cast<std::size_t>(pid) * 8 + j] =
                table.values()[static_cast<std::size_t>(id) * 8 + j];
    }
    const Tensor out =
        take_row(enc.forward(replace_row(table, h.root(), h_text), h), h.root());
    const Tensor out_perm =
        take_row(enc.forward(replace_row(table_perm, h_perm.root(), h_text), h_perm),
                 h_perm.root());
    for (std::size_t i = 0; i < out.values().size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(out_perm.values()[i]).margin(1e-12));
}

TEST_CASE("gat on an isolated root depends only on the root embedding") {
    const auto h = root_only();
    Rng rng(9);
    GATEncoder enc(6, 1, rng);
    const Tensor l_root = testutil::random_tensor(rng, 1, 6, -1, 1, false);
    const Tensor out = enc.forward(l_root, h);
    const Tensor expected = matmul(l_root, enc.layers()[0].w);
    for (std::size_t i = 0; i < out.values().size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(expected.values()[i]).margin(1e-15));
}

TEST_CASE("isomorphic subtrees with identical embeddings map to identical rows") {
    const auto h = LabelHierarchy::build({"root", "A", "B", "A1", "A2", "B1", "B2"},
                                         {"", "root", "root", "A", "A", "B", "B"});
    Rng rng(10);
    GATEncoder enc(6, 1, rng);
    Tensor table = Tensor::zeros(h.size(), 6);
    auto fill_row = [&](int id, double base) {
        for (int j = 0; j < 6; ++j)
            table.values()[static_cast<std::size_t>(id) * 6 + j] = base + 0.1 * j;
    };
    fill_row(h.id_of("root"), 0.5);
    fill_row(h.id_of("A"), 1.0);
    fill_row(h.id_of("B"), 1.0);
    fill_row(h.id_of("A1"), -0.7);
    fill_row(h.id_of("B1"), -0.7);
    fill_row(h.id_of("A2"), 0.3);
    fill_row(h.id_of("B2"), 0.3);
    const Tensor out = enc.forward(table, h);
    auto row = [&](const std::string& name) {
        std::vector<double> r;
        for (int j = 0; j < 6; ++j)
            r.push_back(out.values()[static_cast<std::size_t>(h.id_of(name)) * 6 + j]);
        return r;
    };
    CHECK(row("A") == row("B"));
    CHECK(row("A1") == row("B1"));
    CHECK(row("A2") == row("B2"));
}

TEST_CASE("gat gradients do not cross non-adjacent label pairs") {
    const auto h = small_tree();
    Rng rng(11);
    GATEncoder enc(5, 1, rng);
    Tensor table = testutil::random_tensor(rng, h.size(), 5, -1, 1, true);

    const int b = h.id_of("B"), a1 = h.id_of("A1");
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(take_row(enc.forward(table, h), b)));
    }
    // B's only neighbors are itself and root; A1 is two hops away.
    for (int j = 0; j < 5; ++j)
        CHECK(table.grad()[static_cast<std::size_t>(a1) * 5 + j] == 0.0);
    bool root_touched = false;
    for (int j = 0; j < 5; ++j)
        root_touched = root_touched ||
                       table.grad()[static_cast<std::size_t>(h.root()) * 5 + j] != 0.0;
    CHECK(root_touched);

    // Finite-difference probe of one masked entry confirms the dead path.
    const double base = sum(take_row(enc.forward(table, h), b)).item();
    table.values()[static_cast<std::size_t>(a1) * 5] += 1e-3;
    const double bumped = sum(take_row(enc.forward(table, h), b)).item();
    CHECK(bumped == base);
}

TEST_CASE("mixture mechanisms") {
    Rng rng(12);
    const Tensor h_text = testutil::random_tensor(rng, 1, 4, -1, 1, false);
    const Tensor h_label = testutil::random_tensor(rng, 1, 4, -1, 1, false);

    SECTION("sum with a zero label representation returns the text side") {
        const Tensor zero = Tensor::zeros(1, 4);
        CHECK(mix(h_text, zero, Mixture::sum).values() == h_text.values());
    }
    SECTION("root_replace returns the label representation unchanged") {
        CHECK(mix(h_text, h_label, Mixture::root_replace).same_data(h_label));
    }
    SECTION("concat_project with [I; 0] recovers the text side") {
        Tensor proj = Tensor::zeros(8, 4);
        for (int i = 0; i < 4; ++i) proj.values()[static_cast<std::size_t>(i) * 4 + i] = 1.0;
        const Tensor out = mix(h_text, h_label, Mixture::concat_project, &proj);
        for (int i = 0; i < 4; ++i)
            CHECK(out.values()[static_cast<std::size_t>(i)] ==
                  Catch::Approx(h_text.values()[static_cast<std::size_t>(i)]).margin(1e-15));
    }
    SECTION("concat_project without a projection is an error") {
        CHECK_THROWS_AS(mix(h_text, h_label, Mixture::concat_project, nullptr), ValueError);
    }
}

TEST_CASE("classifier score arithmetic") {
    Rng rng(13);
    Classifier clf(3, 2, rng);

    SECTION("zero weights and bias score zero everywhere, sigmoid one half") {
        zero_all({clf.w_, clf.b_});
        const Tensor s = clf.scores(Tensor::from(1, 2, {0.4, -0.2}));
        for (double v : s.values()) CHECK(sigmoid_scalar(v) == 0.5);
    }
    SECTION("zero input returns the bias") {
        clf.b_.values() = {0.3, -0.1, 2.0};
        const Tensor s = clf.scores(Tensor::zeros(1, 2));
        CHECK(s.values() == clf.b_.values());
    }
    SECTION("two-label hand example") {
        Classifier c2(2, 2, rng);
        c2.w_.values() = {1, 0, 0, 1};
        c2.b_.values() = {0, 0};
        const Tensor s = c2.scores(Tensor::from(1, 2, {3.0, -1.0}));
        CHECK(s.values() == std::vector<double>{3.0, -1.0});
    }
}

TEST_CASE("full backbones pass sparse finite-difference checks") {
    SynthSpec spec;
    spec.depth = 2;
    spec.branching = 2;
    const auto h = gen_taxonomy(spec);
    std::vector<RawSample> corpus{{{"alpha", "beta", "gamma"},
                                   ancestor_closure(h, {h.id_of("n2_0")})}};
    const Vocab vocab = Vocab::build({&corpus}, h);
    const auto samples = encode_samples(vocab, corpus);
    const auto& sample = samples[0];

    for (Backbone backbone : {Backbone::graphormer_root, Backbone::gat_sum}) {
        ModelConfig cfg;
        cfg.d = 8;
        cfg.heads = 2;
        cfg.ffn_hidden = 12;
        cfg.backbone = backbone;
        cfg.mixture = backbone == Backbone::graphormer_root ? Mixture::root_replace
                                                            : Mixture::sum;
        HiAdvModel model(cfg, h, vocab, 99);
        std::vector<Tensor> params;
        for (const auto& p : model.main_group().params()) params.push_back(p.tensor);
        auto forward = [&] {
            const Tensor h_text = model.encode_text(sample.tokens);
            const Tensor h_mix = model.generator_from_text(h_text);
            const Tensor h_mix_hat = model.oracle_from_text(h_text, sample.labels.members);
            const Tensor l = classification_loss(LossKind::zlpr, model.classify(h_mix), h,
                                                 sample.labels, true);
            const Tensor l_hat = classification_loss(LossKind::zlpr, model.classify(h_mix_hat),
                                                     h, sample.labels, true);
            return add(l, l_hat);
        };
        Rng probe_rng(55);
        const auto report = testutil::fd_check_sparse(params, forward, probe_rng, 5);
        INFO(to_string(backbone) << ": " << report.worst);
        CHECK(report.pass);
    }
}

TEST_CASE("spatial bias tables receive gradient and move under training") {
    SynthSpec spec;
    spec.depth = 2;
    spec.branching = 2;
    const auto h = gen_taxonomy(spec);
    Rng rng(14);
    GraphormerEncoder enc(8, 2, 1, 16, 4, rng);
    const Tensor h_text = testutil::random_tensor(rng, 1, 8, -1, 1, true);
    Tensor table = testutil::random_tensor(rng, h.size(), 8, -1, 1, true);

    ParameterGroup g;
    enc.collect(g, "g");
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(sum(take_row(enc.forward(replace_row(table, h.root(), h_text), h),
                                   h.root())));
    }
    bool bias_live = false;
    std::vector<double> bias_before;
    for (const auto& p : g.params())
        if (p.name.find("spatial_bias") != std::string::npos) {
            bias_before.insert(bias_before.end(), p.tensor.values().begin(),
                               p.tensor.values().end());
            if (p.tensor.has_grad())
                for (double v : p.tensor.grad()) bias_live = bias_live || v != 0.0;
        }
    CHECK(bias_live);

    Adam adam(g);
    adam.step();
    std::vector<double> bias_after;
    for (const auto& p : g.params())
        if (p.name.find("spatial_bias") != std::string::npos)
            bias_after.insert(bias_after.end(), p.tensor.values().begin(),
                              p.tensor.values().end());
    CHECK(bias_before != bias_after);
}
