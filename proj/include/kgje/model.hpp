#pragma once

#include <string>
#include <vector>

#include "kgje/adam.hpp"
#include "kgje/encoder.hpp"
#include "kgje/kg.hpp"
#include "kgje/literal.hpp"
#include "kgje/rules.hpp"

// The joint embedding model: per-entity context weights from rule confidence
// and literal relatedness, a weighted multi-relational graph-convolution
// encoder, gated fusion with projected literal vectors, and a 2-D
// convolutional decoder scoring every entity. TransE and DistMult baselines
// share the evaluation surface.

namespace kgje {

enum class Composition { Multiply, Subtract };

struct ContextWeight {
    double confidence = 0.0;
    double relatedness = 0.0;
    double alpha = 0.0;  // normalized within the entity's context
};

// alpha(t) = c(t)*rho(t) / sum over the entity's context, aligned with
// g.neighbors(e) order.
std::vector<ContextWeight> context_weights(const KnowledgeGraph& g, int entity, const RuleSet& rules,
                                           const LiteralTable& lits, double theta_base = 0.5);

// Per-edge alpha for the whole graph (cached per epoch by the trainer).
std::vector<std::vector<double>> all_context_alphas(const KnowledgeGraph& g, const RuleSet& rules,
                                                    const LiteralTable& lits, double theta_base = 0.5);

template <class T>
struct GcnVars {
    VarT<T> w_out, w_in, w_self;  // [d x d']
    VarT<T> w_rel;                // [d x d']
};

struct GcnOutputs {
    template <class T>
    struct Of {
        VarT<T> entity_states;    // [|E| x d']
        VarT<T> relation_states;  // [|R| x d']
    };
};

// h_e = tanh( sum_{t=(e,r,e') in N(e)} alpha(t) * phi(x_e', x_r) W_dir(t) ),
// h_r = x_r W_rel. One layer; phi is elementwise product or subtraction.
template <class T>
typename GcnOutputs::template Of<T> gcn_encode(TapeT<T>& tape, VarT<T> ent_table, VarT<T> rel_table,
                                               const KnowledgeGraph& g, const std::vector<std::vector<double>>& alphas,
                                               const GcnVars<T>& w, Composition comp) {
    const int64_t E = g.entity_count();
    struct Group {
        std::vector<int> nbr, rel, target;
        std::vector<double> alpha;
    };
    Group groups[3];
    for (int e = 0; e < E; ++e) {
        const auto& edges = g.neighbors(e);
        const auto& a = alphas[static_cast<size_t>(e)];
        for (size_t i = 0; i < edges.size(); ++i) {
            Group& grp = groups[static_cast<size_t>(edges[i].dir)];
            grp.nbr.push_back(edges[i].neighbor);
            grp.rel.push_back(edges[i].rel);
            grp.target.push_back(e);
            grp.alpha.push_back(a[i]);
        }
    }
    VarT<T> acc{};
    const VarT<T> dir_w[3] = {w.w_out, w.w_in, w.w_self};
    for (int d = 0; d < 3; ++d) {
        Group& grp = groups[static_cast<size_t>(d)];
        if (grp.nbr.empty()) continue;
        VarT<T> nbr_rows = gather_rows(tape, ent_table, grp.nbr);
        VarT<T> rel_rows = gather_rows(tape, rel_table, grp.rel);
        VarT<T> phi = comp == Composition::Multiply ? mul(tape, nbr_rows, rel_rows) : sub(tape, nbr_rows, rel_rows);
        VarT<T> msgs = matmul(tape, scale_rows(tape, phi, grp.alpha), dir_w[static_cast<size_t>(d)]);
        VarT<T> pooled = scatter_add_rows(tape, msgs, grp.target, E);
        acc = acc.valid() ? add(tape, acc, pooled) : pooled;
    }
    typename GcnOutputs::template Of<T> out;
    out.entity_states = kgje::tanh(tape, acc);
    out.relation_states = matmul(tape, rel_table, w.w_rel);
    return out;
}

// Gated fusion of GCN states with projected literal rows (weights distinct
// from the literal encoder's internal gate).
template <class T>
VarT<T> fuse_with_literals(TapeT<T>& tape, VarT<T> gcn_states, VarT<T> lit_proj_rows, const FusionVars<T>& w) {
    return gated_fuse(tape, gcn_states, lit_proj_rows, w);
}

template <class T>
struct ConvEVars {
    VarT<T> filters;   // [F x 1 x kh x kw]
    VarT<T> proj;      // [F*oh*ow x d']
    VarT<T> ent_bias;  // [|E|]
};

// Stack the reshaped head and relation states into a 1 x 2rh x rw image,
// convolve, project back to d', then score every entity by dot product plus
// its bias. Raw scores; the loss applies the sigmoid.
template <class T>
VarT<T> conve_scores(TapeT<T>& tape, VarT<T> head_state, VarT<T> rel_state, VarT<T> all_entities, const ConvEVars<T>& w,
                     int64_t reshape_h, int64_t reshape_w) {
    const int64_t dprime = tape.value(all_entities).shape[1];
    if (reshape_h * reshape_w != dprime)
        throw ConfigError("decoder reshape " + std::to_string(reshape_h) + "x" + std::to_string(reshape_w) +
                          " does not cover d'=" + std::to_string(dprime));
    VarT<T> himg = reshape(tape, head_state, Shape{reshape_h, reshape_w});
    VarT<T> rimg = reshape(tape, rel_state, Shape{reshape_h, reshape_w});
    VarT<T> stacked = reshape(tape, concat(tape, {himg, rimg}, 0), Shape{1, 2 * reshape_h, reshape_w});
    VarT<T> conv = relu(tape, conv2d_valid(tape, stacked, w.filters));
    const int64_t flat = numel(tape.value(conv).shape);
    VarT<T> vec = relu(tape, matmul(tape, reshape(tape, conv, Shape{1, flat}), w.proj));  // [1 x d']
    VarT<T> scores = reshape(tape, matmul(tape, all_entities, transpose(tape, vec)), Shape{tape.value(all_entities).shape[0]});
    return add(tape, scores, w.ent_bias);
}

enum class Norm { L1, L2 };

// -||h + r - t|| (higher is better).
template <class T>
VarT<T> transe_scores(TapeT<T>& tape, VarT<T> heads, VarT<T> rels, VarT<T> tails, Norm norm) {
    VarT<T> diff = sub(tape, add(tape, heads, rels), tails);
    if (norm == Norm::L1) return scale(tape, row_sum(tape, kgje::abs(tape, diff)), -1.0);
    return scale(tape, kgje::sqrt(tape, row_sum(tape, mul(tape, diff, diff))), -1.0);
}

template <class T>
VarT<T> distmult_scores(TapeT<T>& tape, VarT<T> heads, VarT<T> rels, VarT<T> tails) {
    return row_sum(tape, mul(tape, mul(tape, heads, rels), tails));
}

// Plain (tape-free) scorers for evaluation loops.
double transe_score(const std::vector<float>& h, const std::vector<float>& r, const std::vector<float>& t, Norm norm);
double distmult_score(const std::vector<float>& h, const std::vector<float>& r, const std::vector<float>& t);

// ---------------------------------------------------------------------------
// Concrete float models around a ParamStore.

struct JointModelConfig {
    int64_t embed_dim = 100;        // d
    int64_t gcn_dim = 200;          // d'
    int64_t decoder_filters = 200;  // F
    int64_t decoder_kernel = 7;     // kh = kw
    int64_t reshape_h = 10, reshape_w = 20;
    Composition composition = Composition::Multiply;
    double theta_base = 0.5;
    void validate() const {
        if (reshape_h * reshape_w != gcn_dim) throw ConfigError("decoder reshape must cover the GCN dimension");
        if (2 * reshape_h < decoder_kernel || reshape_w < decoder_kernel)
            throw ConfigError("decoder filter larger than the stacked reshape");
        if (embed_dim <= 0 || gcn_dim <= 0 || decoder_filters <= 0) throw ConfigError("decoder dims must be positive");
    }
};

// Registers embeddings, GCN transforms, literal projection + fusion gate and
// decoder weights. The literal projection starts as the identity block so
// loaded vectors pass through unchanged at step 0.
void register_joint_params(ParamStore& store, const KnowledgeGraph& g, const LiteralTable& lits,
                           const JointModelConfig& cfg, Rng& rng);

struct JointForward {
    Var fused_entities;    // [|E| x d']
    Var relation_states;   // [|R| x d']
};

// Shared forward trunk: GCN over the whole graph, literal fusion.
JointForward joint_encode(Tape& tape, const ParamStore& store, enc::Handles<float>& h, const KnowledgeGraph& g,
                          const std::vector<std::vector<double>>& alphas, const LiteralTable& lits,
                          const JointModelConfig& cfg);

// Scores of (head, rel, *) against every entity through the ConvE decoder.
Var joint_query_scores(Tape& tape, const ParamStore& store, enc::Handles<float>& h, const JointForward& fwd,
                       int head, int rel, const JointModelConfig& cfg);

}  // namespace kgje
