#include "kgje/model.hpp"

#include <cmath>

namespace kgje {

std::vector<ContextWeight> context_weights(const KnowledgeGraph& g, int entity, const RuleSet& rules,
                                           const LiteralTable& lits, double theta_base) {
    const auto& edges = g.neighbors(entity);
    std::vector<ContextWeight> out(edges.size());
    double total = 0.0;
    for (size_t i = 0; i < edges.size(); ++i) {
        out[i].confidence = triple_confidence(g, rules, entity, edges[i].rel, edges[i].neighbor, theta_base);
        out[i].relatedness = relatedness(lits, entity, edges[i], g);
        total += out[i].confidence * out[i].relatedness;
    }
    for (auto& w : out) w.alpha = w.confidence * w.relatedness / total;
    return out;
}

std::vector<std::vector<double>> all_context_alphas(const KnowledgeGraph& g, const RuleSet& rules,
                                                    const LiteralTable& lits, double theta_base) {
    std::vector<std::vector<double>> out(static_cast<size_t>(g.entity_count()));
    for (int e = 0; e < g.entity_count(); ++e) {
        const auto weights = context_weights(g, e, rules, lits, theta_base);
        auto& row = out[static_cast<size_t>(e)];
        row.reserve(weights.size());
        for (const ContextWeight& w : weights) row.push_back(w.alpha);
    }
    return out;
}

double transe_score(const std::vector<float>& h, const std::vector<float>& r, const std::vector<float>& t, Norm norm) {
    double acc = 0.0;
    for (size_t i = 0; i < h.size(); ++i) {
        const double d = static_cast<double>(h[i]) + static_cast<double>(r[i]) - static_cast<double>(t[i]);
        acc += norm == Norm::L1 ? std::fabs(d) : d * d;
    }
    return norm == Norm::L1 ? -acc : -std::sqrt(acc);
}

double distmult_score(const std::vector<float>& h, const std::vector<float>& r, const std::vector<float>& t) {
    double acc = 0.0;
    for (size_t i = 0; i < h.size(); ++i)
        acc += static_cast<double>(h[i]) * static_cast<double>(r[i]) * static_cast<double>(t[i]);
    return acc;
}

void register_joint_params(ParamStore& store, const KnowledgeGraph& g, const LiteralTable& lits,
                           const JointModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const int64_t d = cfg.embed_dim, dp = cfg.gcn_dim;
    store.create_uniform("ent.table", Shape{g.entity_count(), d}, rng, std::sqrt(6.0 / static_cast<double>(d)));
    store.create_uniform("rel.table", Shape{g.relation_count(), d}, rng, std::sqrt(6.0 / static_cast<double>(d)));
    store.flag_row_sparse("ent.table");
    store.flag_row_sparse("rel.table");
    store.create_xavier("gcn.w_out", Shape{d, dp}, rng);
    store.create_xavier("gcn.w_in", Shape{d, dp}, rng);
    store.create_xavier("gcn.w_self", Shape{d, dp}, rng);
    store.create_xavier("gcn.w_rel", Shape{d, dp}, rng);
    store.create("lit.proj", identity_topleft(lits.dim, dp));
    store.create("lit.default", Shape{lits.dim});
    store.create_xavier("fuse.w1", Shape{dp, dp}, rng);
    store.create_xavier("fuse.w2", Shape{dp, dp}, rng);
    store.create_xavier("fuse.w3", Shape{dp, dp}, rng);
    const int64_t oh = 2 * cfg.reshape_h - cfg.decoder_kernel + 1;
    const int64_t ow = cfg.reshape_w - cfg.decoder_kernel + 1;
    store.create_uniform("dec.filters", Shape{cfg.decoder_filters, 1, cfg.decoder_kernel, cfg.decoder_kernel}, rng,
                         std::sqrt(6.0 / static_cast<double>(cfg.decoder_kernel * cfg.decoder_kernel * (1 + cfg.decoder_filters))));
    store.create_xavier("dec.proj", Shape{cfg.decoder_filters * oh * ow, dp}, rng);
    store.create("dec.ent_bias", Shape{g.entity_count()});
}

namespace {

// Literal matrix rows: the table vector when present, the shared learned
// default row for missing items. Built as constant + mask * default so the
// default row trains through the fusion path.
Var literal_input_rows(Tape& tape, const ParamStore& store, enc::Handles<float>& h, const KnowledgeGraph& g,
                       const LiteralTable& lits) {
    const int64_t E = g.entity_count();
    Tensor present(Shape{E, lits.dim});
    std::vector<double> missing(static_cast<size_t>(E), 0.0);
    for (int e = 0; e < E; ++e) {
        if (lits.entity_prov[static_cast<size_t>(e)] == LiteralProvenance::Default) {
            missing[static_cast<size_t>(e)] = 1.0;
        } else {
            const auto& v = lits.entity_vecs[static_cast<size_t>(e)];
            std::copy(v.begin(), v.end(), present.data.begin() + static_cast<int64_t>(e) * lits.dim);
        }
    }
    Var defaults = scale_rows(tape, tile_rows(tape, enc::leaf(tape, store, h, "lit.default"), E), missing);
    return add(tape, tape.constant(std::move(present)), defaults);
}

}  // namespace

JointForward joint_encode(Tape& tape, const ParamStore& store, enc::Handles<float>& h, const KnowledgeGraph& g,
                          const std::vector<std::vector<double>>& alphas, const LiteralTable& lits,
                          const JointModelConfig& cfg) {
    GcnVars<float> gw{enc::leaf(tape, store, h, "gcn.w_out"), enc::leaf(tape, store, h, "gcn.w_in"),
                      enc::leaf(tape, store, h, "gcn.w_self"), enc::leaf(tape, store, h, "gcn.w_rel")};
    auto gcn = gcn_encode(tape, enc::leaf(tape, store, h, "ent.table"), enc::leaf(tape, store, h, "rel.table"), g,
                          alphas, gw, cfg.composition);
    Var lit_rows = literal_input_rows(tape, store, h, g, lits);
    Var lit_proj = matmul(tape, lit_rows, enc::leaf(tape, store, h, "lit.proj"));
    FusionVars<float> fw{enc::leaf(tape, store, h, "fuse.w1"), enc::leaf(tape, store, h, "fuse.w2"),
                         enc::leaf(tape, store, h, "fuse.w3")};
    JointForward out;
    out.fused_entities = fuse_with_literals(tape, gcn.entity_states, lit_proj, fw);
    out.relation_states = gcn.relation_states;
    return out;
}

Var joint_query_scores(Tape& tape, const ParamStore& store, enc::Handles<float>& h, const JointForward& fwd,
                       int head, int rel, const JointModelConfig& cfg) {
    Var hrow = reshape(tape, gather_rows(tape, fwd.fused_entities, {head}), Shape{cfg.gcn_dim});
    Var rrow = reshape(tape, gather_rows(tape, fwd.relation_states, {rel}), Shape{cfg.gcn_dim});
    ConvEVars<float> dw{enc::leaf(tape, store, h, "dec.filters"), enc::leaf(tape, store, h, "dec.proj"),
                        enc::leaf(tape, store, h, "dec.ent_bias")};
    return conve_scores(tape, hrow, rrow, fwd.fused_entities, dw, cfg.reshape_h, cfg.reshape_w);
}

}  // namespace kgje
