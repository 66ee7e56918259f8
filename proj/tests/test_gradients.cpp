#include <doctest.h>

#include "kgje/ops.hpp"
#include "support/gradcheck.hpp"

// Finite-difference gradient suite over the double tape instantiation
// (checks accumulate in 64-bit; the float build shares the same code).

using namespace kgje;
using namespace kgje::test;

namespace {

// Weighted sum turning any output tensor into a scalar with O(1) entries.
DVar weighted(DTape& tape, DVar out, Rng& rng) {
    DTensor w(tape.value(out).shape);
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    return sum_all(tape, mul(tape, out, tape.constant(std::move(w))));
}

constexpr double kLayerTol = 1e-4;
constexpr int kTrials = 100;

}  // namespace

TEST_CASE("grad: matmul") {
    Rng rng(1001);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t k = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(4));
        DParams params;
        fill_uniform(params.create("a", Shape{m, k}), rng);
        fill_uniform(params.create("b", Shape{k, n}), rng);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            return weighted(b.tape, matmul(b.tape, b.use("a"), b.use("b")), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: conv2d_valid") {
    Rng rng(1002);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t cin = 1 + static_cast<int64_t>(rng.below(2));
        const int64_t H = 2 + static_cast<int64_t>(rng.below(5));
        const int64_t W = 2 + static_cast<int64_t>(rng.below(5));
        const int64_t kh = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(H)));
        const int64_t kw = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(W)));
        const int64_t cout = 1 + static_cast<int64_t>(rng.below(3));
        DParams params;
        fill_uniform(params.create("x", Shape{cin, H, W}), rng);
        fill_uniform(params.create("f", Shape{cout, cin, kh, kw}), rng);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            return weighted(b.tape, conv2d_valid(b.tape, b.use("x"), b.use("f")), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: softmax") {
    Rng rng(1003);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.below(5));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(7));
        const int axis = rng.coin() ? 1 : 0;
        DParams params;
        fill_uniform(params.create("x", Shape{m, n}), rng, -3, 3);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            return weighted(b.tape, softmax(b.tape, b.use("x"), axis), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: elementwise and reductions") {
    Rng rng(1004);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t n = 1 + static_cast<int64_t>(rng.below(4));
        DParams params;
        // keep away from the relu/abs kinks at 0 so the two-sided difference is valid
        fill_uniform(params.create("a", Shape{m, n}), rng, 0.15, 1.25);
        fill_uniform(params.create("b", Shape{m, n}), rng, 0.15, 1.25);
        fill_uniform(params.create("v", Shape{n}), rng);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            DTape& t = b.tape;
            DVar a = b.use("a"), bb = b.use("b"), v = b.use("v");
            DVar x = add(t, mul(t, sigmoid(t, a), kgje::tanh(t, bb)), relu(t, sub(t, a, scale(t, bb, 0.5))));
            x = add_rowvec(t, x, v);
            x = mul(t, x, kgje::abs(t, a));
            DVar pooled = mean_pool(t, x);
            DVar persum = row_sum(t, kgje::sqrt(t, add_scalar(t, mul(t, x, x), 0.1)));
            return add(t, weighted(t, pooled, w), weighted(t, persum, w));
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: concat slice reshape transpose gather scatter") {
    Rng rng(1005);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t m = 2 + static_cast<int64_t>(rng.below(3));
        const int64_t n = 2 + static_cast<int64_t>(rng.below(3));
        DParams params;
        fill_uniform(params.create("a", Shape{m, n}), rng);
        fill_uniform(params.create("b", Shape{m, n}), rng);
        std::vector<int> ids;
        for (int i = 0; i < 4; ++i) ids.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(m))));
        std::vector<int> targets;
        for (int i = 0; i < 4; ++i) targets.push_back(static_cast<int>(rng.below(3)));
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&, ids, targets](GradBuild& bd) {
            Rng w = wseed;
            DTape& t = bd.tape;
            DVar a = bd.use("a"), b = bd.use("b");
            DVar cat = concat(t, {a, b}, 1);
            DVar s = slice_cols(t, cat, 1, n);
            DVar tr = transpose(t, s);
            DVar rs = reshape(t, tr, Shape{n * m});
            DVar g = gather_rows(t, concat(t, {a, b}, 0), ids);
            DVar sc = scatter_add_rows(t, g, targets, 3);
            return add(t, weighted(t, rs, w), weighted(t, sc, w));
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: layer_norm") {
    Rng rng(1006);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t n = 2 + static_cast<int64_t>(rng.below(6));
        DParams params;
        fill_uniform(params.create("x", Shape{m, n}), rng, -2, 2);
        fill_uniform(params.create("g", Shape{n}), rng, 0.5, 1.5);
        fill_uniform(params.create("b", Shape{n}), rng, -0.5, 0.5);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& bd) {
            Rng w = wseed;
            return weighted(bd.tape, layer_norm(bd.tape, bd.use("x"), bd.use("g"), bd.use("b")), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: bce_with_logits_mean") {
    Rng rng(1007);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t n = 2 + static_cast<int64_t>(rng.below(7));
        DParams params;
        fill_uniform(params.create("s", Shape{n}), rng, -3, 3);
        std::vector<double> targets(static_cast<size_t>(n));
        for (auto& v : targets) v = rng.uniform();
        auto report = grad_check_robust(params, kLayerTol, [&, targets](GradBuild& b) {
            return bce_with_logits_mean(b.tape, b.use("s"), targets);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: softmax composed with masking additions") {
    Rng rng(1008);
    for (int trial = 0; trial < 40; ++trial) {
        const int64_t l = 2 + static_cast<int64_t>(rng.below(4));
        DParams params;
        fill_uniform(params.create("x", Shape{l, l}), rng, -2, 2);
        DTensor mask(Shape{l, l});
        for (int64_t i = 0; i < l; ++i) mask.at2(i, l - 1) = -1e30;
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&, mask](GradBuild& b) {
            Rng w = wseed;
            DTape& t = b.tape;
            DVar masked = add(t, b.use("x"), t.constant(mask));
            return weighted(t, softmax(t, masked, 1), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

#include "kgje/literal.hpp"

TEST_CASE("grad: attention (absolute, scaled)") {
    Rng rng(1101);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t heads = rng.coin() ? 1 : 2;
        const int64_t d = heads * (2 + 2 * static_cast<int64_t>(rng.below(2)));  // d_k in {2,4}
        const int64_t l = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t valid = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(l)));
        DParams params;
        fill_uniform(params.create("h", Shape{l, d}), rng);
        for (const char* n : {"wq", "wk", "wv", "wm"}) fill_uniform(params.create(n, Shape{d, d}), rng, -0.7, 0.7);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            AttentionVars<double> av{b.use("wq"), b.use("wk"), b.use("wv"), b.use("wm")};
            return weighted(b.tape, attention_scaled(b.tape, b.use("h"), av, heads, valid), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: attention (relative)") {
    Rng rng(1102);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t heads = rng.coin() ? 1 : 2;
        const int64_t d = heads * (2 + 2 * static_cast<int64_t>(rng.below(2)));
        const int64_t dk = d / heads;
        const int64_t l = 1 + static_cast<int64_t>(rng.below(4));
        const int64_t valid = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(l)));
        DParams params;
        fill_uniform(params.create("h", Shape{l, d}), rng);
        for (const char* n : {"wq", "wv", "wm"}) fill_uniform(params.create(n, Shape{d, d}), rng, -0.7, 0.7);
        fill_uniform(params.create("u", Shape{heads, dk}), rng, -0.5, 0.5);
        fill_uniform(params.create("v", Shape{heads, dk}), rng, -0.5, 0.5);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            RelAttentionVars<double> av{b.use("wq"), b.use("wv"), b.use("wm"), b.use("u"), b.use("v")};
            return weighted(b.tape, attention_relative(b.tape, b.use("h"), av, heads, valid), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: bilstm") {
    Rng rng(1103);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t d = 2 + static_cast<int64_t>(rng.below(3));
        const int64_t H = 1 + static_cast<int64_t>(rng.below(3));
        const int64_t l = 1 + static_cast<int64_t>(rng.below(4));
        DParams params;
        fill_uniform(params.create("x", Shape{l, d}), rng);
        for (const char* dir : {"f", "b"}) {
            fill_uniform(params.create(std::string(dir) + ".wx", Shape{d, 4 * H}), rng, -0.7, 0.7);
            fill_uniform(params.create(std::string(dir) + ".wh", Shape{H, 4 * H}), rng, -0.7, 0.7);
            fill_uniform(params.create(std::string(dir) + ".b", Shape{4 * H}), rng, -0.3, 0.3);
        }
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            LstmVars<double> fw{b.use("f.wx"), b.use("f.wh"), b.use("f.b")};
            LstmVars<double> bw{b.use("b.wx"), b.use("b.wh"), b.use("b.b")};
            return weighted(b.tape, bilstm(b.tape, b.use("x"), fw, bw, H), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: gated fusion") {
    Rng rng(1104);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t d = 2 + static_cast<int64_t>(rng.below(4));
        const int64_t l = 1 + static_cast<int64_t>(rng.below(4));
        DParams params;
        fill_uniform(params.create("xt", Shape{l, d}), rng);
        fill_uniform(params.create("xb", Shape{l, d}), rng);
        for (const char* n : {"w1", "w2", "w3"}) fill_uniform(params.create(n, Shape{d, d}), rng, -0.7, 0.7);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            FusionVars<double> fv{b.use("w1"), b.use("w2"), b.use("w3")};
            return weighted(b.tape, gated_fuse(b.tape, b.use("xt"), b.use("xb"), fv), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: encode_literal end to end") {
    LiteralVocab vocab = LiteralVocab::build({"alpha beta", "gamma delta eps"});
    EncoderConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    cfg.lstm_hidden = 4;
    cfg.unit_dim = 4;
    cfg.bigram_dim = 4;
    cfg.literal_dim = 5;
    cfg.max_len = 8;
    for (EncoderVariant variant : {EncoderVariant::Relative, EncoderVariant::Absolute}) {
        cfg.variant = variant;
        Rng rng(1105);
        DParams params;
        register_encoder_params(params, vocab, cfg, rng);
        TokenSequence ts = vocab.encode("gamma delta eps");
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, 1e-3, [&](GradBuild& b) {
            Rng w = wseed;
            // wire the encoder onto the checker-owned leaves
            enc::Handles<double> handles;
            for (auto& [name, p] : b.params) {
                (void)p;
                handles.vars.emplace(name, b.use(name));
            }
            return weighted(b.tape, enc::encode_literal(b.tape, b.params, handles, cfg, ts, "enc."), w);
        });
        CHECK(report.max_rel_error < 1e-3);
    }
}

#include "kgje/crf.hpp"

TEST_CASE("grad: crf_nll") {
    Rng rng(1106);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t T = 1 + static_cast<int64_t>(rng.below(5));
        const int64_t L = 2 + static_cast<int64_t>(rng.below(3));
        DParams params;
        fill_uniform(params.create("emis", Shape{T, L}), rng, -1.5, 1.5);
        fill_uniform(params.create("trans", Shape{L, L}), rng, -1, 1);
        fill_uniform(params.create("begin", Shape{L}), rng, -1, 1);
        fill_uniform(params.create("end", Shape{L}), rng, -1, 1);
        std::vector<int> gold;
        for (int64_t t = 0; t < T; ++t) gold.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(L))));
        auto report = grad_check_robust(params, kLayerTol, [&, gold](GradBuild& b) {
            CrfVars<double> cv{b.use("trans"), b.use("begin"), b.use("end")};
            return crf_nll(b.tape, b.use("emis"), gold, cv);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

#include "kgje/model.hpp"

namespace {

kgje::KnowledgeGraph tiny_chain_graph() {
    kgje::KnowledgeGraph g = kgje::KnowledgeGraph::from_labels(
        {{"a", "r1", "b"}, {"b", "r2", "c"}, {"c", "r1", "d"}, {"d", "r2", "a"}, {"a", "r2", "c"}});
    g.augment();
    return g;
}

std::vector<std::vector<double>> random_alphas(const kgje::KnowledgeGraph& g, Rng& rng) {
    std::vector<std::vector<double>> alphas(static_cast<size_t>(g.entity_count()));
    for (int e = 0; e < g.entity_count(); ++e) {
        auto& row = alphas[static_cast<size_t>(e)];
        row.resize(g.neighbors(e).size());
        double total = 0;
        for (auto& a : row) {
            a = rng.uniform(0.1, 1.0);
            total += a;
        }
        for (auto& a : row) a /= total;
    }
    return alphas;
}

}  // namespace

TEST_CASE("grad: gcn layer") {
    kgje::KnowledgeGraph g = tiny_chain_graph();
    Rng rng(1107);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t d = 2 + static_cast<int64_t>(rng.below(3));
        const int64_t dp = 2 + static_cast<int64_t>(rng.below(3));
        const Composition comp = rng.coin() ? Composition::Multiply : Composition::Subtract;
        DParams params;
        fill_uniform(params.create("ent", Shape{g.entity_count(), d}), rng);
        fill_uniform(params.create("rel", Shape{g.relation_count(), d}), rng);
        for (const char* n : {"w_out", "w_in", "w_self", "w_rel"}) fill_uniform(params.create(n, Shape{d, dp}), rng, -0.7, 0.7);
        const auto alphas = random_alphas(g, rng);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&, alphas](GradBuild& b) {
            Rng w = wseed;
            GcnVars<double> gw{b.use("w_out"), b.use("w_in"), b.use("w_self"), b.use("w_rel")};
            auto out = gcn_encode(b.tape, b.use("ent"), b.use("rel"), g, alphas, gw, comp);
            return add(b.tape, weighted(b.tape, out.entity_states, w), weighted(b.tape, out.relation_states, w));
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: conve decoder") {
    Rng rng(1108);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int64_t rh = 2, rw = 3, dp = rh * rw;
        const int64_t F = 1 + static_cast<int64_t>(rng.below(3));
        const int64_t k = 2 + static_cast<int64_t>(rng.below(2));  // 2 or 3 <= min(2rh, rw)
        const int64_t E = 2 + static_cast<int64_t>(rng.below(5));
        const int64_t flat = F * (2 * rh - k + 1) * (rw - k + 1);
        DParams params;
        fill_uniform(params.create("h", Shape{dp}), rng);
        fill_uniform(params.create("r", Shape{dp}), rng);
        fill_uniform(params.create("ents", Shape{E, dp}), rng);
        fill_uniform(params.create("filters", Shape{F, 1, k, k}), rng, -0.7, 0.7);
        fill_uniform(params.create("proj", Shape{flat, dp}), rng, -0.7, 0.7);
        fill_uniform(params.create("bias", Shape{E}), rng, -0.5, 0.5);
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, kLayerTol, [&](GradBuild& b) {
            Rng w = wseed;
            ConvEVars<double> dw{b.use("filters"), b.use("proj"), b.use("bias")};
            return weighted(b.tape, conve_scores(b.tape, b.use("h"), b.use("r"), b.use("ents"), dw, rh, rw), w);
        });
        CHECK(report.max_rel_error < kLayerTol);
    }
}

TEST_CASE("grad: full gcn -> fuse -> conve stack") {
    kgje::KnowledgeGraph g = tiny_chain_graph();  // |E| <= 10
    Rng rng(1109);
    for (int trial = 0; trial < 20; ++trial) {
        const int64_t d = 3, rh = 2, rw = 3, dp = rh * rw, F = 2, k = 2;
        const int64_t flat = F * (2 * rh - k + 1) * (rw - k + 1);
        const int64_t litd = 4;
        DParams params;
        fill_uniform(params.create("ent", Shape{g.entity_count(), d}), rng);
        fill_uniform(params.create("rel", Shape{g.relation_count(), d}), rng);
        for (const char* n : {"w_out", "w_in", "w_self", "w_rel"}) fill_uniform(params.create(n, Shape{d, dp}), rng, -0.7, 0.7);
        fill_uniform(params.create("lit_rows", Shape{g.entity_count(), litd}), rng);
        fill_uniform(params.create("lit_proj", Shape{litd, dp}), rng, -0.7, 0.7);
        for (const char* n : {"f1", "f2", "f3"}) fill_uniform(params.create(n, Shape{dp, dp}), rng, -0.7, 0.7);
        fill_uniform(params.create("filters", Shape{F, 1, k, k}), rng, -0.7, 0.7);
        fill_uniform(params.create("proj", Shape{flat, dp}), rng, -0.7, 0.7);
        fill_uniform(params.create("bias", Shape{g.entity_count()}), rng, -0.5, 0.5);
        const auto alphas = random_alphas(g, rng);
        const int head = static_cast<int>(rng.below(static_cast<uint64_t>(g.entity_count())));
        const int rel = static_cast<int>(rng.below(static_cast<uint64_t>(g.relation_count())));
        const size_t gold = static_cast<size_t>(rng.below(static_cast<uint64_t>(g.entity_count())));
        Rng wseed(rng.next());
        auto report = grad_check_robust(params, 1e-3, [&, alphas, head, rel, gold](GradBuild& b) {
            Rng w = wseed;
            DTape& t = b.tape;
            GcnVars<double> gw{b.use("w_out"), b.use("w_in"), b.use("w_self"), b.use("w_rel")};
            auto gcn = gcn_encode(t, b.use("ent"), b.use("rel"), g, alphas, gw, Composition::Multiply);
            FusionVars<double> fw{b.use("f1"), b.use("f2"), b.use("f3")};
            DVar lit = matmul(t, b.use("lit_rows"), b.use("lit_proj"));
            DVar fused = fuse_with_literals(t, gcn.entity_states, lit, fw);
            DVar hrow = reshape(t, gather_rows(t, fused, {head}), Shape{dp});
            DVar rrow = reshape(t, gather_rows(t, gcn.relation_states, {rel}), Shape{dp});
            ConvEVars<double> dw{b.use("filters"), b.use("proj"), b.use("bias")};
            DVar scores = conve_scores(t, hrow, rrow, fused, dw, rh, rw);
            std::vector<double> targets(static_cast<size_t>(g.entity_count()), 0.01);
            targets[gold] = 0.95;
            return bce_with_logits_mean(t, scores, targets);
        });
        CHECK(report.max_rel_error < 1e-3);
    }
}
