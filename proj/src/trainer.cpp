#include "kgje/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace kgje {

CorruptionBatch negative_sample(const std::vector<Triple>& batch, const KnowledgeGraph& g, int k, Rng& rng) {
    if (k < 1) throw UsageError("need at least one negative per positive");
    CorruptionBatch out;
    out.triples.reserve(batch.size() * static_cast<size_t>(k));
    const uint64_t E = static_cast<uint64_t>(g.entity_count());
    for (const Triple& pos : batch) {
        for (int i = 0; i < k; ++i) {
            Triple neg = pos;
            for (int attempt = 0;; ++attempt) {
                const bool corrupt_head = rng.coin();
                const int candidate = static_cast<int>(rng.below(E));
                neg = pos;
                if (corrupt_head)
                    neg.head = candidate;
                else
                    neg.tail = candidate;
                if (!g.has_train_triple_aug(neg.head, neg.rel, neg.tail) && !(neg == pos)) break;
                if (attempt >= 99) {
                    ++out.saturated;
                    break;
                }
            }
            out.triples.push_back(neg);
        }
    }
    return out;
}

Var loss_margin(Tape& tape, Var pos_scores, Var neg_scores, double margin) {
    return mean_all(tape, relu(tape, add_scalar(tape, sub(tape, neg_scores, pos_scores), margin)));
}

Var loss_bce_all(Tape& tape, Var scores, int gold, double smoothing) {
    const int64_t n = tape.value(scores).size();
    if (gold < 0 || gold >= n) throw UsageError("gold entity outside the score vector");
    std::vector<double> targets(static_cast<size_t>(n), smoothing / static_cast<double>(n));
    targets[static_cast<size_t>(gold)] = 1.0 - smoothing;
    return bce_with_logits_mean(tape, scores, targets);
}

// ---------------------------------------------------------------------------

std::vector<float> EmbeddingScorer::score_tail_all(int e_known, int rel) const {
    const int64_t E = ents_.shape[0], d = ents_.shape[1];
    std::vector<float> scores(static_cast<size_t>(E));
    const float* e = &ents_.data[static_cast<size_t>(e_known) * static_cast<size_t>(d)];
    const float* r = &rels_.data[static_cast<size_t>(rel) * static_cast<size_t>(d)];
    for (int64_t t = 0; t < E; ++t) {
        const float* tail = &ents_.data[static_cast<size_t>(t) * static_cast<size_t>(d)];
        double acc = 0.0;
        if (kind_ == ModelKind::DistMult) {
            for (int64_t j = 0; j < d; ++j)
                acc += static_cast<double>(e[j]) * static_cast<double>(r[j]) * static_cast<double>(tail[j]);
        } else {
            for (int64_t j = 0; j < d; ++j) {
                const double diff = static_cast<double>(e[j]) + static_cast<double>(r[j]) - static_cast<double>(tail[j]);
                acc += norm_ == Norm::L1 ? std::fabs(diff) : diff * diff;
            }
            acc = norm_ == Norm::L1 ? -acc : -std::sqrt(acc);
        }
        scores[static_cast<size_t>(t)] = static_cast<float>(acc);
    }
    return scores;
}

JointScorer::JointScorer(const ParamStore& store, const KnowledgeGraph& g,
                         const std::vector<std::vector<double>>& alphas, const LiteralTable& lits,
                         const JointModelConfig& cfg)
    : cfg_(cfg), filters_(store.get("dec.filters")), proj_(store.get("dec.proj")), bias_(store.get("dec.ent_bias")) {
    Tape tape;
    enc::Handles<float> h;
    JointForward fwd = joint_encode(tape, store, h, g, alphas, lits, cfg);
    fused_ = tape.value(fwd.fused_entities);
    rel_states_ = tape.value(fwd.relation_states);
}

std::vector<float> JointScorer::score_tail_all(int e_known, int rel) const {
    const int64_t dp = cfg_.gcn_dim, rh = cfg_.reshape_h, rw = cfg_.reshape_w, k = cfg_.decoder_kernel;
    const int64_t H = 2 * rh, W = rw, oh = H - k + 1, ow = W - k + 1, F = cfg_.decoder_filters;
    // stacked 1 x (2rh) x rw image of the reshaped head and relation states
    std::vector<double> img(static_cast<size_t>(H * W));
    for (int64_t i = 0; i < dp; ++i) {
        img[static_cast<size_t>(i)] = fused_.at2(e_known, i);
        img[static_cast<size_t>(dp + i)] = rel_states_.at2(rel, i);
    }
    // conv + ReLU, flattened in the same [F x oh x ow] order as the tape op
    std::vector<float> flat(static_cast<size_t>(F * oh * ow));
    for (int64_t f = 0; f < F; ++f)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx)
                        acc += img[static_cast<size_t>((y + ky) * W + x + kx)] *
                               static_cast<double>(filters_.data[static_cast<size_t>(((f * 1 + 0) * k + ky) * k + kx)]);
                flat[static_cast<size_t>((f * oh + y) * ow + x)] = acc > 0.0 ? static_cast<float>(acc) : 0.0f;
            }
    // projection to d' + ReLU
    std::vector<float> vec(static_cast<size_t>(dp));
    for (int64_t j = 0; j < dp; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < static_cast<int64_t>(flat.size()); ++i)
            acc += static_cast<double>(flat[static_cast<size_t>(i)]) * static_cast<double>(proj_.at2(i, j));
        vec[static_cast<size_t>(j)] = acc > 0.0 ? static_cast<float>(acc) : 0.0f;
    }
    // dot with every fused entity plus its bias
    const int64_t E = fused_.shape[0];
    std::vector<float> scores(static_cast<size_t>(E));
    for (int64_t t = 0; t < E; ++t) {
        double acc = 0.0;
        for (int64_t j = 0; j < dp; ++j) acc += static_cast<double>(fused_.at2(t, j)) * static_cast<double>(vec[static_cast<size_t>(j)]);
        scores[static_cast<size_t>(t)] = static_cast<float>(acc + static_cast<double>(bias_.data[static_cast<size_t>(t)]));
    }
    return scores;
}

// ---------------------------------------------------------------------------

namespace {

// TransE/DistMult train on the original triples plus their inverses so that
// inverse-relation embeddings exist for head queries; self-loop triples are
// excluded (they would only pin the self relation to zero).
std::vector<Triple> baseline_training_triples(const KnowledgeGraph& g) {
    std::vector<Triple> out;
    const int self = g.self_rel();
    for (const Triple& t : g.augmented_train())
        if (t.rel != self) out.push_back(t);
    return out;
}

void export_grads(ParamStore& store, Tape& tape, const std::map<std::string, Var>& handles) {
    store.zero_grads();
    for (const auto& [name, var] : handles) {
        const auto& grad = tape.grad(var);
        if (!grad.empty()) store.get(name).grad = grad;
    }
}

void renorm_rows(Tensor& table, const std::vector<int>& rows) {
    const int64_t d = table.shape[1];
    for (int row : rows) {
        double norm = 0.0;
        float* p = &table.data[static_cast<size_t>(row) * static_cast<size_t>(d)];
        for (int64_t j = 0; j < d; ++j) norm += static_cast<double>(p[j]) * static_cast<double>(p[j]);
        norm = std::sqrt(norm);
        if (norm <= 0.0) continue;
        for (int64_t j = 0; j < d; ++j) p[j] = static_cast<float>(static_cast<double>(p[j]) / norm);
    }
}

struct EvalHook {
    const KnowledgeGraph& g;
    const TrainConfig& cfg;
    const RuleSet* rules;
    const LiteralTable* lits;
    const std::vector<std::vector<double>>* alphas;

    double valid_mrr(const ParamStore& store) const {
        if (g.valid().empty()) return -1.0;
        std::unique_ptr<Scorer> scorer;
        if (cfg.model == ModelKind::Joint)
            scorer = std::make_unique<JointScorer>(store, g, *alphas, *lits, cfg.joint);
        else
            scorer = std::make_unique<EmbeddingScorer>(store, cfg.model, cfg.norm);
        return evaluate_split(g, *scorer, g.valid(), EvalSetting::Filtered, cfg.workers).mrr;
    }
};

void log_epoch(std::ostream* log, int epoch, double loss, std::optional<double> mrr) {
    if (!log) return;
    char buf[64];
    if (mrr)
        std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f", epoch, loss, *mrr);
    else
        std::snprintf(buf, sizeof(buf), "%d\t%.6f\t-", epoch, loss);
    (*log) << buf << '\n';
    log->flush();
}

}  // namespace

Checkpoint train_model(const KnowledgeGraph& g, const TrainConfig& cfg, const RuleSet* rules, const LiteralTable* lits,
                       std::ostream* log) {
    cfg.validate();
    if (!g.augmented()) throw UsageError("training requires an augmented graph");
    if (cfg.model == ModelKind::Joint && (!rules || !lits)) throw UsageError("the joint model needs rules and literals");

    Rng rng(cfg.seed);
    Rng init = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);
    Rng negative_rng = rng.fork(3);

    ParamStore store;
    std::vector<std::vector<double>> alphas;
    if (cfg.model == ModelKind::Joint) {
        JointModelConfig jc = cfg.joint;
        register_joint_params(store, g, *lits, jc, init);
        alphas = all_context_alphas(g, *rules, *lits, jc.theta_base);
    } else {
        const double span = 6.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
        store.create_uniform("ent.table", Shape{g.entity_count(), cfg.embed_dim}, init,
                             cfg.ent_init_span > 0 ? cfg.ent_init_span : span);
        store.create_uniform("rel.table", Shape{g.relation_count(), cfg.embed_dim}, init,
                             cfg.rel_init_span > 0 ? cfg.rel_init_span : span);
        store.flag_row_sparse("ent.table");
        store.flag_row_sparse("rel.table");
    }

    const std::vector<Triple> train =
        cfg.model == ModelKind::Joint ? g.augmented_train() : baseline_training_triples(g);
    if (train.empty()) throw UsageError("no training triples");

    AdamT<float> opt(cfg.lr);
    EvalHook eval{g, cfg, rules, lits, &alphas};

    Checkpoint best;
    double best_mrr = -2.0;
    int best_epoch = 0;
    int evals_without_improvement = 0;
    bool stopped = false;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs && !stopped; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        double epoch_loss = 0.0;
        int64_t steps = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<Triple> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);

            Tape tape;
            std::map<std::string, Var> handles;
            double loss_value = 0.0;

            if (cfg.model == ModelKind::Joint) {
                enc::Handles<float> h;
                JointForward fwd = joint_encode(tape, store, h, g, alphas, *lits, cfg.joint);
                Var total{};
                for (const Triple& q : batch) {
                    Var l = loss_bce_all(tape, joint_query_scores(tape, store, h, fwd, q.head, q.rel, cfg.joint),
                                         q.tail, cfg.label_smoothing);
                    total = total.valid() ? add(tape, total, l) : l;
                }
                Var loss = scale(tape, total, 1.0 / static_cast<double>(batch.size()));
                loss_value = tape.value(loss).data[0];
                if (!std::isfinite(loss_value))
                    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(steps) + ": loss is not finite");
                tape.backward(loss);
                handles = h.vars;
                export_grads(store, tape, handles);
                opt.step(store);
            } else {
                CorruptionBatch negatives = negative_sample(batch, g, cfg.negatives, negative_rng);
                std::vector<int> ph, pr, pt, nh, nr, nt;
                for (const Triple& t : batch)
                    for (int rep = 0; rep < cfg.negatives; ++rep) {
                        ph.push_back(t.head);
                        pr.push_back(t.rel);
                        pt.push_back(t.tail);
                    }
                for (const Triple& t : negatives.triples) {
                    nh.push_back(t.head);
                    nr.push_back(t.rel);
                    nt.push_back(t.tail);
                }
                enc::Handles<float> h;
                Var ents = enc::leaf(tape, store, h, "ent.table");
                Var rels = enc::leaf(tape, store, h, "rel.table");
                auto score = [&](const std::vector<int>& hh, const std::vector<int>& rr, const std::vector<int>& tt) {
                    Var hrow = gather_rows(tape, ents, hh);
                    Var rrow = gather_rows(tape, rels, rr);
                    Var trow = gather_rows(tape, ents, tt);
                    return cfg.model == ModelKind::DistMult ? distmult_scores(tape, hrow, rrow, trow)
                                                            : transe_scores(tape, hrow, rrow, trow, cfg.norm);
                };
                Var loss = loss_margin(tape, score(ph, pr, pt), score(nh, nr, nt), cfg.margin);
                loss_value = tape.value(loss).data[0];
                if (!std::isfinite(loss_value))
                    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(steps) + ": loss is not finite");
                tape.backward(loss);
                handles = h.vars;
                export_grads(store, tape, handles);
                opt.step(store);

                if (cfg.renorm && cfg.model == ModelKind::TransE) {
                    std::vector<int> touched;
                    touched.insert(touched.end(), ph.begin(), ph.end());
                    touched.insert(touched.end(), pt.begin(), pt.end());
                    touched.insert(touched.end(), nh.begin(), nh.end());
                    touched.insert(touched.end(), nt.begin(), nt.end());
                    std::sort(touched.begin(), touched.end());
                    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
                    renorm_rows(store.get("ent.table"), touched);
                }
            }
            epoch_loss += loss_value;
            ++steps;
        }
        epoch_loss /= static_cast<double>(std::max<int64_t>(1, steps));

        std::optional<double> mrr;
        const bool eval_now = !g.valid().empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if (eval_now) {
            const double m = eval.valid_mrr(store);
            mrr = m;
            if (m > best_mrr) {
                best_mrr = m;
                best_epoch = epoch;
                best.params = store;
                evals_without_improvement = 0;
            } else {
                ++evals_without_improvement;
            }
            if (evals_without_improvement >= cfg.patience) stopped = true;
        }
        log_epoch(log, epoch, epoch_loss, mrr);
    }

    if (best_mrr <= -2.0) {  // no evaluation ever ran: final parameters win
        best.params = store;
        best_epoch = cfg.epochs;
    }
    best.config = cfg.snapshot;
    best.set_meta("model", to_string(cfg.model));
    best.set_meta("epoch", std::to_string(best_epoch));
    best.set_meta("best_valid_mrr", best_mrr > -2.0 ? std::to_string(best_mrr) : "-");
    return best;
}

std::unique_ptr<Scorer> scorer_from_checkpoint(const Checkpoint& ckpt, const KnowledgeGraph& g, const RuleSet* rules,
                                               const LiteralTable* lits) {
    const ModelKind kind = model_kind_from_string(ckpt.meta("model", "transe"));
    if (kind == ModelKind::Joint) {
        if (!rules || !lits) throw UsageError("evaluating a joint checkpoint needs rules and literals");
        JointModelConfig jc;
        jc.embed_dim = ckpt.params.get("ent.table").shape[1];
        jc.gcn_dim = ckpt.params.get("gcn.w_out").shape[1];
        jc.decoder_filters = ckpt.params.get("dec.filters").shape[0];
        jc.decoder_kernel = ckpt.params.get("dec.filters").shape[2];
        jc.reshape_h = std::stoll(ckpt.meta("reshape_h", "10"));
        jc.reshape_w = std::stoll(ckpt.meta("reshape_w", "20"));
        const auto alphas = all_context_alphas(g, *rules, *lits, std::stod(ckpt.meta("theta_base", "0.5")));
        return std::make_unique<JointScorer>(ckpt.params, g, alphas, *lits, jc);
    }
    const Norm norm = ckpt.meta("norm", "l1") == "l2" ? Norm::L2 : Norm::L1;
    return std::make_unique<EmbeddingScorer>(ckpt.params, kind, norm);
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "transe") return ModelKind::TransE;
    if (s == "distmult") return ModelKind::DistMult;
    if (s == "joint") return ModelKind::Joint;
    throw ConfigError("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::TransE: return "transe";
        case ModelKind::DistMult: return "distmult";
        case ModelKind::Joint: return "joint";
    }
    return "transe";
}

}  // namespace kgje
