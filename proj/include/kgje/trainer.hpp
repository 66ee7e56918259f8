#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgje/checkpoint.hpp"
#include "kgje/evaluator.hpp"
#include "kgje/model.hpp"

namespace kgje {

enum class ModelKind { TransE, DistMult, Joint };

struct TrainConfig {
    ModelKind model = ModelKind::TransE;
    int64_t batch_size = 256;
    double lr = 0.001;
    int epochs = 100;
    double margin = 1.0;        // TransE margin gamma
    int negatives = 1;          // negatives per positive
    double label_smoothing = 0.1;
    int eval_every = 5;
    int patience = 5;
    uint64_t seed = 42;
    Norm norm = Norm::L1;
    bool renorm = true;  // unit-L2 renormalization of touched entity rows
    int64_t embed_dim = 100;
    double ent_init_span = 0.0;  // 0: the 6/sqrt(d) default
    double rel_init_span = 0.0;
    JointModelConfig joint;
    EvalSetting setting = EvalSetting::Filtered;
    int workers = 1;
    std::map<std::string, std::string> snapshot;  // echoed config for the checkpoint

    void validate() const {
        if (batch_size <= 0 || lr <= 0 || epochs < 0 || negatives < 1 || eval_every <= 0 || patience < 0 ||
            margin <= 0 || label_smoothing < 0 || label_smoothing >= 1 || embed_dim <= 0)
            throw ConfigError("train settings must be positive (label smoothing in [0,1))");
    }
};

struct CorruptionBatch {
    std::vector<Triple> triples;  // negatives.size() == positives * k
    int64_t saturated = 0;        // corruptions accepted after 100 known-true draws
};

// For each positive, k corruptions replacing head or tail (fair coin) with a
// uniform entity; a corruption that reproduces a known train triple is
// resampled up to 100 times, then accepted and counted as saturated.
CorruptionBatch negative_sample(const std::vector<Triple>& batch, const KnowledgeGraph& g, int k, Rng& rng);

// mean over pairs of max(0, margin - s_pos + s_neg); scores are
// higher-is-better.
Var loss_margin(Tape& tape, Var pos_scores, Var neg_scores, double margin);

// Binary cross-entropy of sigmoid(scores) against the one-hot gold smoothed
// to 1-eps (gold) and eps/|E| (rest).
Var loss_bce_all(Tape& tape, Var scores, int gold, double smoothing);

// ---------------------------------------------------------------------------
// Evaluation scorers.

class EmbeddingScorer : public Scorer {
  public:
    EmbeddingScorer(const ParamStore& store, ModelKind kind, Norm norm)
        : ents_(store.get("ent.table")), rels_(store.get("rel.table")), kind_(kind), norm_(norm) {}
    std::vector<float> score_tail_all(int e_known, int rel) const override;

  private:
    const Tensor& ents_;
    const Tensor& rels_;
    ModelKind kind_;
    Norm norm_;
};

// Runs the GCN + fusion trunk once, then decodes queries against the cached
// entity states with plain forward loops (re-entrant across eval workers).
// A unit test pins the loop decode against the tape decode.
class JointScorer : public Scorer {
  public:
    JointScorer(const ParamStore& store, const KnowledgeGraph& g, const std::vector<std::vector<double>>& alphas,
                const LiteralTable& lits, const JointModelConfig& cfg);
    std::vector<float> score_tail_all(int e_known, int rel) const override;

    const Tensor& fused_entities() const { return fused_; }
    const Tensor& relation_states() const { return rel_states_; }

  private:
    JointModelConfig cfg_;
    Tensor fused_;       // [|E| x d']
    Tensor rel_states_;  // [|R| x d']
    Tensor filters_, proj_, bias_;
};

// ---------------------------------------------------------------------------
// Training loops. `log` (when non-null) receives one line per epoch:
// "epoch<TAB>loss<TAB>valid_mrr" with "-" for epochs without an evaluation.
Checkpoint train_model(const KnowledgeGraph& g, const TrainConfig& cfg, const RuleSet* rules, const LiteralTable* lits,
                       std::ostream* log = nullptr);

// Rebuilds a scorer from a checkpoint (kind read from ckpt.model).
std::unique_ptr<Scorer> scorer_from_checkpoint(const Checkpoint& ckpt, const KnowledgeGraph& g, const RuleSet* rules,
                                               const LiteralTable* lits);

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind kind);

}  // namespace kgje
