#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgje/errors.hpp"

namespace kgje {

struct Triple {
    int head = -1;
    int rel = -1;
    int tail = -1;
    bool operator==(const Triple&) const = default;
};

enum class Direction { Out = 0, In = 1, Self = 2 };

// One piece of context of an entity e: the triple (e, rel, neighbor), where
// rel may be an inverse or the self-loop relation.
struct ContextEdge {
    int rel = -1;
    int neighbor = -1;
    Direction dir = Direction::Out;
};

// Which slot of a query triple is being completed.
enum class QuerySlot { Tail = 0, Head = 1 };

struct LoadReport {
    std::string dataset_name;
    int64_t entities = 0;
    int64_t relations = 0;
    int64_t train = 0, valid = 0, test = 0;
    std::vector<int> eval_only_entities;   // in vocabulary but absent from train
    std::vector<int> eval_only_relations;
    // Deltas against the published statistics when the directory names a
    // known benchmark (actual minus expected); empty otherwise.
    std::optional<std::vector<std::pair<std::string, int64_t>>> known_dataset_delta;
};

// Integer-id triple store with vocabularies, relation-set extension
// (inverse + self-loop), adjacency and filtered-candidate indexes.
// Immutable after augment(); safe for concurrent readers.
class KnowledgeGraph {
  public:
    // --- construction -----------------------------------------------------
    static KnowledgeGraph load_dataset(const std::string& dir);

    // Builds a graph from in-memory label triples (tests, synthetic data).
    static KnowledgeGraph from_labels(const std::vector<std::array<std::string, 3>>& train,
                                      const std::vector<std::array<std::string, 3>>& valid = {},
                                      const std::vector<std::array<std::string, 3>>& test = {});

    // Adds (t, r^-1, h) for every train triple and (e, r_self, e) for every
    // entity; extends the relation vocabulary to 2*|R|+1.
    void augment();
    bool augmented() const { return augmented_; }

    void write_dataset(const std::string& dir) const;

    // --- vocabulary --------------------------------------------------------
    int64_t entity_count() const { return static_cast<int64_t>(entity_names_.size()); }
    int64_t relation_count() const { return static_cast<int64_t>(relation_names_.size()); }
    int64_t original_relation_count() const { return original_relations_; }
    const std::string& entity_name(int id) const { return entity_names_.at(static_cast<size_t>(id)); }
    const std::string& relation_name(int id) const { return relation_names_.at(static_cast<size_t>(id)); }
    int entity_id(const std::string& name) const;
    int relation_id(const std::string& name) const;
    std::optional<int> find_entity(const std::string& name) const;
    std::optional<int> find_relation(const std::string& name) const;

    bool is_inverse_rel(int rel) const { return augmented_ && rel >= original_relations_ && rel < 2 * original_relations_; }
    bool is_self_rel(int rel) const { return augmented_ && rel == 2 * original_relations_; }
    int self_rel() const;
    int inverse_of(int rel) const;  // maps r -> r^-1 and r^-1 -> r

    // --- triples -----------------------------------------------------------
    const std::vector<Triple>& train() const { return train_; }
    const std::vector<Triple>& valid() const { return valid_; }
    const std::vector<Triple>& test() const { return test_; }
    const std::vector<Triple>& augmented_train() const;

    // Membership in the original (non-augmented) train split.
    bool has_train_triple(int h, int r, int t) const;
    // Same check with inverse and self-loop relation ids unfolded.
    bool has_train_triple_aug(int h, int r, int t) const;
    // Membership in train v valid v test (original relations).
    bool has_any_triple(int h, int r, int t) const;

    // --- context -----------------------------------------------------------
    const std::vector<ContextEdge>& neighbors(int entity) const;

    // Entities whose substitution into the open slot yields a triple present
    // in any split, excluding `gold` (the gold completion is always ranked).
    // `rel` may be an inverse id; the slot is interpreted after unfolding it.
    std::vector<int> filtered_candidates(int e_known, int rel, QuerySlot slot, int gold) const;

    const LoadReport& report() const { return report_; }

  private:
    KnowledgeGraph() = default;
    int intern_entity(const std::string& name);
    int intern_relation(const std::string& name);
    void index_all_splits();
    void finish_load(const std::string& dataset_name);

    std::vector<std::string> entity_names_, relation_names_;
    std::unordered_map<std::string, int> entity_ids_, relation_ids_;
    std::vector<Triple> train_, valid_, test_;
    int64_t original_relations_ = 0;
    bool augmented_ = false;
    std::vector<Triple> augmented_train_;
    std::vector<std::vector<ContextEdge>> adjacency_;
    // (entity, original rel, slot) -> sorted ids of true completions
    std::unordered_map<uint64_t, std::vector<int>> completions_;
    std::unordered_map<uint64_t, int> train_index_;  // packed (h,r,t) -> 1
    LoadReport report_;
};

}  // namespace kgje
