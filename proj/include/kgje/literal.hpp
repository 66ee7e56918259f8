#pragma once

#include <string>
#include <vector>

#include "kgje/adam.hpp"
#include "kgje/encoder.hpp"
#include "kgje/kg.hpp"
#include "kgje/tokenizer.hpp"

namespace kgje {

enum class EncoderVariant { Absolute, Relative };

struct EncoderConfig {
    int64_t model_dim = 64;  // d = unit_dim + bigram_dim = heads * d_k
    int64_t heads = 4;
    int64_t ffn_dim = 128;
    int64_t lstm_hidden = 32;  // BiLSTM output 2H must equal d for the fusion gate
    int64_t max_len = 32;
    int64_t unit_dim = 32;
    int64_t bigram_dim = 32;
    int64_t literal_dim = 200;
    int layers = 1;
    EncoderVariant variant = EncoderVariant::Relative;
    double dropout = 0.0;

    int64_t head_dim() const { return model_dim / heads; }
    void validate() const;
};

// Registers every encoder parameter under `prefix` with seeded init.
void register_encoder_params(ParamStoreT<float>& store, const LiteralVocab& vocab, const EncoderConfig& cfg, Rng& rng,
                             const std::string& prefix = "enc.");
void register_encoder_params(ParamStoreT<double>& store, const LiteralVocab& vocab, const EncoderConfig& cfg, Rng& rng,
                             const std::string& prefix = "enc.");

// Templated forward builders shared between the float artifact and the
// double gradient-check instantiation.
namespace enc {

template <class T>
struct Handles {
    // filled lazily by `leaf` below
    std::map<std::string, VarT<T>> vars;
};

template <class T>
VarT<T> leaf(TapeT<T>& tape, const ParamStoreT<T>& store, Handles<T>& h, const std::string& name) {
    auto it = h.vars.find(name);
    if (it != h.vars.end()) return it->second;
    VarT<T> v = tape.leaf(store.get(name));
    h.vars.emplace(name, v);
    return v;
}

// Embedding layer: per position, concat(unit embedding, bigram embedding).
template <class T>
VarT<T> embed_sequence(TapeT<T>& tape, const ParamStoreT<T>& store, Handles<T>& h, const EncoderConfig& cfg,
                       const TokenSequence& ts, const std::string& prefix) {
    if (ts.unit_ids.empty() || ts.unit_ids.size() != ts.bigram_ids.size())
        throw UsageError("embed_sequence needs equal-length, non-empty id sequences");
    (void)cfg;
    VarT<T> units = gather_rows(tape, leaf(tape, store, h, prefix + "unit_emb"), ts.unit_ids);
    VarT<T> bigrams = gather_rows(tape, leaf(tape, store, h, prefix + "bigram_emb"), ts.bigram_ids);
    return concat(tape, {units, bigrams}, 1);
}

// Transformer track -> BiLSTM track -> gated fusion; returns [l x d].
template <class T>
VarT<T> encode_sequence(TapeT<T>& tape, const ParamStoreT<T>& store, Handles<T>& h, const EncoderConfig& cfg,
                        const TokenSequence& ts, const std::string& prefix, Rng* dropout_rng = nullptr) {
    VarT<T> emb = embed_sequence(tape, store, h, cfg, ts, prefix);
    const int64_t l = tape.value(emb).shape[0];

    VarT<T> x = emb;
    if (cfg.variant == EncoderVariant::Absolute)
        x = add(tape, x, tape.constant(absolute_pe_matrix<T>(l, cfg.model_dim)));
    for (int layer = 0; layer < cfg.layers; ++layer) {
        const std::string lp = prefix + "l" + std::to_string(layer) + ".";
        VarT<T> attn;
        if (cfg.variant == EncoderVariant::Relative) {
            RelAttentionVars<T> w{leaf(tape, store, h, lp + "attn.wq"), leaf(tape, store, h, lp + "attn.wv"),
                                  leaf(tape, store, h, lp + "attn.wm"), leaf(tape, store, h, lp + "attn.u"),
                                  leaf(tape, store, h, lp + "attn.v")};
            attn = attention_relative(tape, x, w, cfg.heads, l);
        } else {
            AttentionVars<T> w{leaf(tape, store, h, lp + "attn.wq"), leaf(tape, store, h, lp + "attn.wk"),
                               leaf(tape, store, h, lp + "attn.wv"), leaf(tape, store, h, lp + "attn.wm")};
            attn = attention_scaled(tape, x, w, cfg.heads, l);
        }
        if (dropout_rng && cfg.dropout > 0) attn = dropout(tape, attn, cfg.dropout, *dropout_rng);
        x = layer_norm(tape, add(tape, x, attn), leaf(tape, store, h, lp + "ln1.g"), leaf(tape, store, h, lp + "ln1.b"));
        FfnVars<T> fw{leaf(tape, store, h, lp + "ffn.w1"), leaf(tape, store, h, lp + "ffn.b1"),
                      leaf(tape, store, h, lp + "ffn.w2"), leaf(tape, store, h, lp + "ffn.b2")};
        VarT<T> f = ffn(tape, x, fw);
        if (dropout_rng && cfg.dropout > 0) f = dropout(tape, f, cfg.dropout, *dropout_rng);
        x = layer_norm(tape, add(tape, x, f), leaf(tape, store, h, lp + "ln2.g"), leaf(tape, store, h, lp + "ln2.b"));
    }

    LstmVars<T> fwd{leaf(tape, store, h, prefix + "lstm.fwd.wx"), leaf(tape, store, h, prefix + "lstm.fwd.wh"),
                    leaf(tape, store, h, prefix + "lstm.fwd.b")};
    LstmVars<T> bwd{leaf(tape, store, h, prefix + "lstm.bwd.wx"), leaf(tape, store, h, prefix + "lstm.bwd.wh"),
                    leaf(tape, store, h, prefix + "lstm.bwd.b")};
    VarT<T> lstm_out = bilstm(tape, emb, fwd, bwd, cfg.lstm_hidden);

    FusionVars<T> fuse{leaf(tape, store, h, prefix + "fuse.w1"), leaf(tape, store, h, prefix + "fuse.w2"),
                       leaf(tape, store, h, prefix + "fuse.w3")};
    return gated_fuse(tape, x, lstm_out, fuse);
}

// Mean-pool over positions then project to the literal dimension.
template <class T>
VarT<T> encode_literal(TapeT<T>& tape, const ParamStoreT<T>& store, Handles<T>& h, const EncoderConfig& cfg,
                       const TokenSequence& ts, const std::string& prefix) {
    VarT<T> seq = encode_sequence(tape, store, h, cfg, ts, prefix);
    VarT<T> pooled = reshape(tape, mean_pool(tape, seq), Shape{1, cfg.model_dim});
    VarT<T> proj = matmul(tape, pooled, leaf(tape, store, h, prefix + "out_proj"));
    return reshape(tape, proj, Shape{cfg.literal_dim});
}

}  // namespace enc

// ---------------------------------------------------------------------------
// Literal vectors per entity/relation.

enum class LiteralProvenance : uint8_t { Default = 0, Encoded = 1, Loaded = 2 };

struct LiteralTable {
    int64_t dim = 0;
    std::vector<std::vector<float>> entity_vecs, relation_vecs;  // relation index: augmented id
    std::vector<LiteralProvenance> entity_prov, relation_prov;

    static LiteralTable with_defaults(const KnowledgeGraph& g, int64_t dim);
};

// Encodes every entity/relation label with frozen, seed-initialized encoder
// parameters. Inverse relations share the base relation's vector; the
// self-loop relation and empty labels stay on the default vector.
LiteralTable encode_literal_table(const KnowledgeGraph& g, const EncoderConfig& cfg, uint64_t seed);

// Loads "label<TAB>f1 f2 ..." vectors at expected_dim; labels absent from
// the file keep the default vector.
LiteralTable load_literal_vectors(const std::string& path, int64_t expected_dim, const KnowledgeGraph& g);

void save_literal_table(const LiteralTable& table, const KnowledgeGraph& g, const std::string& path);
LiteralTable load_literal_table(const std::string& path, const KnowledgeGraph& g);

// Learned projection initializer: identity in the top-left block so the
// first min(in,out) dims pass through unchanged at step 0.
TensorT<float> identity_topleft(int64_t in_dim, int64_t out_dim);

// rho = (1 + cos(l_e, (l_r + l_e') / 2)) / 2 in [0,1]; 0.5 when either side
// is a default vector or degenerate (zero norm); 1.0 for self-loops.
double relatedness(const LiteralTable& table, int entity, const ContextEdge& edge, const KnowledgeGraph& g,
                   int* degenerate_count = nullptr);

}  // namespace kgje
