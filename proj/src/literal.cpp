#include "kgje/literal.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kgje {

void EncoderConfig::validate() const {
    if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0)
        throw ConfigError("encoder model_dim must be a positive multiple of heads");
    if (head_dim() % 2 != 0) throw ConfigError("encoder head dim must be even for sinusoidal position codes");
    if (model_dim % 2 != 0) throw ConfigError("encoder model_dim must be even");
    if (unit_dim + bigram_dim != model_dim) throw ConfigError("unit_dim + bigram_dim must equal model_dim");
    if (2 * lstm_hidden != model_dim) throw ConfigError("BiLSTM output (2*hidden) must equal model_dim");
    if (ffn_dim <= 0 || max_len <= 0 || literal_dim <= 0 || layers < 1) throw ConfigError("encoder dims must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

namespace {

template <class T>
void register_encoder_params_impl(ParamStoreT<T>& store, const LiteralVocab& vocab, const EncoderConfig& cfg, Rng& rng,
                                  const std::string& prefix) {
    cfg.validate();
    const int64_t d = cfg.model_dim, dk = cfg.head_dim(), dff = cfg.ffn_dim, H = cfg.lstm_hidden;
    store.create_uniform(prefix + "unit_emb", Shape{vocab.unit_count(), cfg.unit_dim}, rng,
                         std::sqrt(1.0 / static_cast<double>(cfg.unit_dim)));
    store.create_uniform(prefix + "bigram_emb", Shape{vocab.bigram_count(), cfg.bigram_dim}, rng,
                         std::sqrt(1.0 / static_cast<double>(cfg.bigram_dim)));
    for (int layer = 0; layer < cfg.layers; ++layer) {
        const std::string lp = prefix + "l" + std::to_string(layer) + ".";
        store.create_xavier(lp + "attn.wq", Shape{d, d}, rng);
        if (cfg.variant == EncoderVariant::Absolute) store.create_xavier(lp + "attn.wk", Shape{d, d}, rng);
        store.create_xavier(lp + "attn.wv", Shape{d, d}, rng);
        store.create_xavier(lp + "attn.wm", Shape{d, d}, rng);
        if (cfg.variant == EncoderVariant::Relative) {
            store.create_uniform(lp + "attn.u", Shape{cfg.heads, dk}, rng, 0.1);
            store.create_uniform(lp + "attn.v", Shape{cfg.heads, dk}, rng, 0.1);
        }
        store.create(lp + "ln1.g", TensorT<T>(Shape{d}, T(1)));
        store.create(lp + "ln1.b", Shape{d});
        store.create_xavier(lp + "ffn.w1", Shape{d, dff}, rng);
        store.create(lp + "ffn.b1", Shape{dff});
        store.create_xavier(lp + "ffn.w2", Shape{dff, d}, rng);
        store.create(lp + "ffn.b2", Shape{d});
        store.create(lp + "ln2.g", TensorT<T>(Shape{d}, T(1)));
        store.create(lp + "ln2.b", Shape{d});
    }
    for (const char* dir : {"fwd", "bwd"}) {
        const std::string dp = prefix + "lstm." + dir + ".";
        store.create_xavier(dp + "wx", Shape{d, 4 * H}, rng);
        store.create_xavier(dp + "wh", Shape{H, 4 * H}, rng);
        TensorT<T>& b = store.create(dp + "b", Shape{4 * H});
        for (int64_t j = H; j < 2 * H; ++j) b.data[static_cast<size_t>(j)] = T(1);  // forget-gate bias
    }
    store.create_xavier(prefix + "fuse.w1", Shape{d, d}, rng);
    store.create_xavier(prefix + "fuse.w2", Shape{d, d}, rng);
    store.create_xavier(prefix + "fuse.w3", Shape{d, d}, rng);
    store.create_xavier(prefix + "out_proj", Shape{d, cfg.literal_dim}, rng);
}

}  // namespace

void register_encoder_params(ParamStoreT<float>& store, const LiteralVocab& vocab, const EncoderConfig& cfg, Rng& rng,
                             const std::string& prefix) {
    register_encoder_params_impl(store, vocab, cfg, rng, prefix);
}
void register_encoder_params(ParamStoreT<double>& store, const LiteralVocab& vocab, const EncoderConfig& cfg, Rng& rng,
                             const std::string& prefix) {
    register_encoder_params_impl(store, vocab, cfg, rng, prefix);
}

LiteralTable LiteralTable::with_defaults(const KnowledgeGraph& g, int64_t dim) {
    LiteralTable t;
    t.dim = dim;
    t.entity_vecs.assign(static_cast<size_t>(g.entity_count()), std::vector<float>(static_cast<size_t>(dim), 0.0f));
    t.relation_vecs.assign(static_cast<size_t>(g.relation_count()), std::vector<float>(static_cast<size_t>(dim), 0.0f));
    t.entity_prov.assign(static_cast<size_t>(g.entity_count()), LiteralProvenance::Default);
    t.relation_prov.assign(static_cast<size_t>(g.relation_count()), LiteralProvenance::Default);
    return t;
}

LiteralTable encode_literal_table(const KnowledgeGraph& g, const EncoderConfig& cfg, uint64_t seed) {
    // vocabulary from training-split labels only
    std::vector<std::string> labels;
    std::vector<char> ent_in_train(static_cast<size_t>(g.entity_count()), 0);
    std::vector<char> rel_in_train(static_cast<size_t>(g.original_relation_count()), 0);
    for (const Triple& t : g.train()) {
        ent_in_train[static_cast<size_t>(t.head)] = 1;
        ent_in_train[static_cast<size_t>(t.tail)] = 1;
        rel_in_train[static_cast<size_t>(t.rel)] = 1;
    }
    for (int e = 0; e < g.entity_count(); ++e)
        if (ent_in_train[static_cast<size_t>(e)]) labels.push_back(g.entity_name(e));
    for (int r = 0; r < g.original_relation_count(); ++r)
        if (rel_in_train[static_cast<size_t>(r)]) labels.push_back(g.relation_name(r));
    LiteralVocab vocab = LiteralVocab::build(labels);

    Rng rng(seed);
    ParamStoreT<float> store;
    register_encoder_params(store, vocab, cfg, rng);

    LiteralTable table = LiteralTable::with_defaults(g, cfg.literal_dim);
    auto encode_one = [&](const std::string& label) -> std::vector<float> {
        TokenSequence ts = vocab.encode(label);
        if (ts.unit_ids.empty()) return {};
        if (static_cast<int64_t>(ts.unit_ids.size()) > cfg.max_len) {
            ts.unit_ids.resize(static_cast<size_t>(cfg.max_len));
            ts.bigram_ids.resize(static_cast<size_t>(cfg.max_len));
        }
        TapeT<float> tape;
        enc::Handles<float> h;
        VarT<float> out = enc::encode_literal(tape, store, h, cfg, ts, "enc.");
        return tape.value(out).data;
    };

    for (int e = 0; e < g.entity_count(); ++e) {
        std::vector<float> v = encode_one(g.entity_name(e));
        if (v.empty()) continue;
        table.entity_vecs[static_cast<size_t>(e)] = std::move(v);
        table.entity_prov[static_cast<size_t>(e)] = LiteralProvenance::Encoded;
    }
    for (int r = 0; r < g.original_relation_count(); ++r) {
        std::vector<float> v = encode_one(g.relation_name(r));
        if (v.empty()) continue;
        table.relation_vecs[static_cast<size_t>(r)] = std::move(v);
        table.relation_prov[static_cast<size_t>(r)] = LiteralProvenance::Encoded;
        if (g.augmented()) {
            // inverse relations describe the same text
            const size_t inv = static_cast<size_t>(r + g.original_relation_count());
            table.relation_vecs[inv] = table.relation_vecs[static_cast<size_t>(r)];
            table.relation_prov[inv] = LiteralProvenance::Encoded;
        }
    }
    return table;
}

namespace {

std::vector<float> parse_vector_line(const std::string& path, long lineno, const std::string& field, int64_t expected_dim) {
    std::vector<float> vec;
    vec.reserve(static_cast<size_t>(expected_dim));
    const char* p = field.c_str();
    char* end = nullptr;
    while (*p) {
        while (*p == ' ') ++p;
        if (!*p) break;
        const float v = std::strtof(p, &end);
        if (end == p) throw ParseError(path, lineno, "bad float near '" + std::string(p).substr(0, 12) + "'");
        vec.push_back(v);
        p = end;
    }
    if (static_cast<int64_t>(vec.size()) != expected_dim)
        throw ParseError(path, lineno,
                         "expected " + std::to_string(expected_dim) + " floats, got " + std::to_string(vec.size()));
    return vec;
}

void assign_label_vector(LiteralTable& table, const KnowledgeGraph& g, const std::string& label, std::vector<float> vec,
                         LiteralProvenance prov) {
    if (auto e = g.find_entity(label)) {
        table.entity_vecs[static_cast<size_t>(*e)] = vec;
        table.entity_prov[static_cast<size_t>(*e)] = prov;
    }
    if (auto r = g.find_relation(label)) {
        table.relation_vecs[static_cast<size_t>(*r)] = vec;
        table.relation_prov[static_cast<size_t>(*r)] = prov;
        if (g.augmented() && *r < g.original_relation_count()) {
            const size_t inv = static_cast<size_t>(*r + g.original_relation_count());
            table.relation_vecs[inv] = std::move(vec);
            table.relation_prov[inv] = prov;
        }
    }
}

}  // namespace

LiteralTable load_literal_vectors(const std::string& path, int64_t expected_dim, const KnowledgeGraph& g) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open literal vector file");
    LiteralTable table = LiteralTable::with_defaults(g, expected_dim);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path, lineno, "expected 'label<TAB>floats'");
        assign_label_vector(table, g, line.substr(0, tab), parse_vector_line(path, lineno, line.substr(tab + 1), expected_dim),
                            LiteralProvenance::Loaded);
    }
    return table;
}

void save_literal_table(const LiteralTable& table, const KnowledgeGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write literal table " + path);
    char buf[32];
    auto write_vec = [&](const std::string& label, const std::vector<float>& v) {
        out << label << '\t';
        for (size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v[i]));
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    };
    for (int e = 0; e < g.entity_count(); ++e)
        if (table.entity_prov[static_cast<size_t>(e)] != LiteralProvenance::Default)
            write_vec(g.entity_name(e), table.entity_vecs[static_cast<size_t>(e)]);
    const int64_t rel_limit = g.augmented() ? g.original_relation_count() : g.relation_count();
    for (int r = 0; r < rel_limit; ++r)
        if (table.relation_prov[static_cast<size_t>(r)] != LiteralProvenance::Default)
            write_vec(g.relation_name(r), table.relation_vecs[static_cast<size_t>(r)]);
}

LiteralTable load_literal_table(const std::string& path, const KnowledgeGraph& g) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open literal table");
    std::string first;
    if (!std::getline(in, first) || first.empty()) throw ParseError(path, 1, "empty literal table");
    const size_t tab = first.find('\t');
    if (tab == std::string::npos) throw ParseError(path, 1, "expected 'label<TAB>floats'");
    int64_t dim = 0;
    {
        std::istringstream ss(first.substr(tab + 1));
        std::string tok;
        while (ss >> tok) ++dim;
    }
    return load_literal_vectors(path, dim, g);
}

TensorT<float> identity_topleft(int64_t in_dim, int64_t out_dim) {
    TensorT<float> w(Shape{in_dim, out_dim});
    for (int64_t i = 0; i < std::min(in_dim, out_dim); ++i) w.at2(i, i) = 1.0f;
    return w;
}

double relatedness(const LiteralTable& table, int entity, const ContextEdge& edge, const KnowledgeGraph& g,
                   int* degenerate_count) {
    if (edge.dir == Direction::Self || (g.augmented() && g.is_self_rel(edge.rel))) return 1.0;
    const auto& le = table.entity_vecs[static_cast<size_t>(entity)];
    const auto& lr = table.relation_vecs[static_cast<size_t>(edge.rel)];
    const auto& ln = table.entity_vecs[static_cast<size_t>(edge.neighbor)];
    if (table.entity_prov[static_cast<size_t>(entity)] == LiteralProvenance::Default ||
        table.relation_prov[static_cast<size_t>(edge.rel)] == LiteralProvenance::Default ||
        table.entity_prov[static_cast<size_t>(edge.neighbor)] == LiteralProvenance::Default)
        return 0.5;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < le.size(); ++i) {
        const double a = static_cast<double>(le[i]);
        const double b = 0.5 * (static_cast<double>(lr[i]) + static_cast<double>(ln[i]));
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na <= 0.0 || nb <= 0.0) {
        if (degenerate_count) ++*degenerate_count;
        return 0.5;
    }
    const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    return (1.0 + std::max(-1.0, std::min(1.0, cosine))) / 2.0;
}

}  // namespace kgje
