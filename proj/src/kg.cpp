#include "kgje/kg.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>

namespace kgje {

namespace {

constexpr const char* kSelfRelName = "__self__";

uint64_t pack_completion(int e, int rel, QuerySlot slot) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(e)) << 32) |
           (static_cast<uint64_t>(static_cast<uint32_t>(rel)) << 1) | static_cast<uint64_t>(slot);
}

uint64_t pack_triple(int h, int r, int t) {
    // 21 bits per field is plenty for the benchmark vocabularies.
    return (static_cast<uint64_t>(static_cast<uint32_t>(h)) << 42) |
           (static_cast<uint64_t>(static_cast<uint32_t>(r)) << 21) | static_cast<uint64_t>(static_cast<uint32_t>(t));
}

struct RawTriple {
    std::string h, r, t;
};

std::vector<RawTriple> read_triple_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::vector<RawTriple> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw ParseError(path, lineno, "blank line");
        const size_t t1 = line.find('\t');
        if (t1 == std::string::npos) throw ParseError(path, lineno, "expected 3 tab-separated fields");
        const size_t t2 = line.find('\t', t1 + 1);
        if (t2 == std::string::npos) throw ParseError(path, lineno, "expected 3 tab-separated fields");
        if (line.find('\t', t2 + 1) != std::string::npos) throw ParseError(path, lineno, "more than 3 fields");
        RawTriple rt{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)};
        if (rt.h.empty() || rt.r.empty() || rt.t.empty()) throw ParseError(path, lineno, "empty field");
        out.push_back(std::move(rt));
    }
    return out;
}

// Published statistics the loader compares against when the directory names
// a known benchmark.
struct KnownCounts {
    int64_t entities, relations, train, valid, test;
};

std::optional<KnownCounts> known_dataset(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "fb15k-237" || lower == "fb15k237") return KnownCounts{14541, 237, 271115, 17535, 20466};
    if (lower == "wn18") return KnownCounts{40943, 18, 141442, 2500, 2500};
    return std::nullopt;
}

}  // namespace

int KnowledgeGraph::intern_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    const int id = static_cast<int>(entity_names_.size());
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
}

int KnowledgeGraph::intern_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const int id = static_cast<int>(relation_names_.size());
    relation_names_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

KnowledgeGraph KnowledgeGraph::load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    KnowledgeGraph g;
    const std::array<std::pair<const char*, std::vector<Triple>*>, 3> files = {
        std::make_pair("train.txt", &g.train_), std::make_pair("valid.txt", &g.valid_), std::make_pair("test.txt", &g.test_)};
    for (auto& [fname, split] : files) {
        const std::string path = (fs::path(dir) / fname).string();
        for (const RawTriple& rt : read_triple_file(path))
            split->push_back(Triple{g.intern_entity(rt.h), g.intern_relation(rt.r), g.intern_entity(rt.t)});
    }
    if (g.train_.empty() && g.valid_.empty() && g.test_.empty()) throw UsageError("empty graph: no triples in " + dir);
    g.finish_load(fs::path(dir).filename().string());
    return g;
}

KnowledgeGraph KnowledgeGraph::from_labels(const std::vector<std::array<std::string, 3>>& train,
                                           const std::vector<std::array<std::string, 3>>& valid,
                                           const std::vector<std::array<std::string, 3>>& test) {
    KnowledgeGraph g;
    for (const auto& [raw, split] : std::initializer_list<std::pair<const std::vector<std::array<std::string, 3>>*,
                                                                    std::vector<Triple>*>>{
             {&train, &g.train_}, {&valid, &g.valid_}, {&test, &g.test_}}) {
        for (const auto& a : *raw)
            split->push_back(Triple{g.intern_entity(a[0]), g.intern_relation(a[1]), g.intern_entity(a[2])});
    }
    if (g.train_.empty() && g.valid_.empty() && g.test_.empty()) throw UsageError("empty graph: no triples given");
    g.finish_load("");
    return g;
}

void KnowledgeGraph::finish_load(const std::string& dataset_name) {
    original_relations_ = static_cast<int64_t>(relation_names_.size());
    index_all_splits();

    report_.dataset_name = dataset_name;
    report_.entities = entity_count();
    report_.relations = original_relations_;
    report_.train = static_cast<int64_t>(train_.size());
    report_.valid = static_cast<int64_t>(valid_.size());
    report_.test = static_cast<int64_t>(test_.size());

    std::vector<char> ent_in_train(entity_names_.size(), 0), rel_in_train(relation_names_.size(), 0);
    for (const Triple& t : train_) {
        ent_in_train[static_cast<size_t>(t.head)] = 1;
        ent_in_train[static_cast<size_t>(t.tail)] = 1;
        rel_in_train[static_cast<size_t>(t.rel)] = 1;
    }
    for (size_t i = 0; i < ent_in_train.size(); ++i)
        if (!ent_in_train[i]) report_.eval_only_entities.push_back(static_cast<int>(i));
    for (size_t i = 0; i < rel_in_train.size(); ++i)
        if (!rel_in_train[i]) report_.eval_only_relations.push_back(static_cast<int>(i));

    if (auto expected = known_dataset(dataset_name)) {
        std::vector<std::pair<std::string, int64_t>> delta;
        delta.emplace_back("entities", report_.entities - expected->entities);
        delta.emplace_back("relations", report_.relations - expected->relations);
        delta.emplace_back("train", report_.train - expected->train);
        delta.emplace_back("valid", report_.valid - expected->valid);
        delta.emplace_back("test", report_.test - expected->test);
        report_.known_dataset_delta = std::move(delta);
    }
}

void KnowledgeGraph::index_all_splits() {
    completions_.clear();
    train_index_.clear();
    for (const std::vector<Triple>* split : {&train_, &valid_, &test_}) {
        for (const Triple& t : *split) {
            completions_[pack_completion(t.head, t.rel, QuerySlot::Tail)].push_back(t.tail);
            completions_[pack_completion(t.tail, t.rel, QuerySlot::Head)].push_back(t.head);
        }
    }
    for (auto& [key, ids] : completions_) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
    for (const Triple& t : train_) train_index_.emplace(pack_triple(t.head, t.rel, t.tail), 1);
}

void KnowledgeGraph::augment() {
    if (augmented_) throw UsageError("graph is already augmented");
    augmented_ = true;
    // Inverse relations take ids [R, 2R); the single self-loop relation is 2R.
    for (int64_t r = 0; r < original_relations_; ++r) intern_relation(relation_names_[static_cast<size_t>(r)] + "^-1");
    intern_relation(kSelfRelName);

    augmented_train_ = train_;
    augmented_train_.reserve(train_.size() * 2 + entity_names_.size());
    for (const Triple& t : train_)
        augmented_train_.push_back(Triple{t.tail, static_cast<int>(t.rel + original_relations_), t.head});
    const int self_id = static_cast<int>(2 * original_relations_);
    for (int e = 0; e < static_cast<int>(entity_names_.size()); ++e) augmented_train_.push_back(Triple{e, self_id, e});

    adjacency_.assign(entity_names_.size(), {});
    for (const Triple& t : augmented_train_) {
        Direction dir = Direction::Out;
        if (t.rel >= original_relations_) dir = t.rel == self_id ? Direction::Self : Direction::In;
        adjacency_[static_cast<size_t>(t.head)].push_back(ContextEdge{t.rel, t.tail, dir});
    }
}

const std::vector<Triple>& KnowledgeGraph::augmented_train() const {
    if (!augmented_) throw UsageError("graph is not augmented");
    return augmented_train_;
}

int KnowledgeGraph::self_rel() const {
    if (!augmented_) throw UsageError("graph is not augmented");
    return static_cast<int>(2 * original_relations_);
}

int KnowledgeGraph::inverse_of(int rel) const {
    if (!augmented_) throw UsageError("graph is not augmented");
    if (rel < 0 || rel >= 2 * original_relations_) throw LookupError("relation " + std::to_string(rel) + " has no inverse");
    return rel < original_relations_ ? static_cast<int>(rel + original_relations_) : static_cast<int>(rel - original_relations_);
}

int KnowledgeGraph::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) throw LookupError("unknown entity '" + name + "'");
    return it->second;
}

int KnowledgeGraph::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) throw LookupError("unknown relation '" + name + "'");
    return it->second;
}

std::optional<int> KnowledgeGraph::find_entity(const std::string& name) const {
    auto it = entity_ids_.find(name);
    return it == entity_ids_.end() ? std::nullopt : std::optional<int>(it->second);
}

std::optional<int> KnowledgeGraph::find_relation(const std::string& name) const {
    auto it = relation_ids_.find(name);
    return it == relation_ids_.end() ? std::nullopt : std::optional<int>(it->second);
}

bool KnowledgeGraph::has_train_triple(int h, int r, int t) const {
    return train_index_.count(pack_triple(h, r, t)) != 0;
}

bool KnowledgeGraph::has_train_triple_aug(int h, int r, int t) const {
    if (!augmented_ || r < original_relations_) return has_train_triple(h, r, t);
    if (r == 2 * original_relations_) return h == t;  // every entity has its self-loop
    return has_train_triple(t, static_cast<int>(r - original_relations_), h);
}

bool KnowledgeGraph::has_any_triple(int h, int r, int t) const {
    auto it = completions_.find(pack_completion(h, r, QuerySlot::Tail));
    if (it == completions_.end()) return false;
    return std::binary_search(it->second.begin(), it->second.end(), t);
}

const std::vector<ContextEdge>& KnowledgeGraph::neighbors(int entity) const {
    if (!augmented_) throw UsageError("neighbors() requires an augmented graph");
    if (entity < 0 || entity >= static_cast<int>(adjacency_.size()))
        throw LookupError("unknown entity id " + std::to_string(entity));
    return adjacency_[static_cast<size_t>(entity)];
}

std::vector<int> KnowledgeGraph::filtered_candidates(int e_known, int rel, QuerySlot slot, int gold) const {
    int base_rel = rel;
    QuerySlot base_slot = slot;
    if (augmented_ && rel >= original_relations_) {
        if (rel == 2 * original_relations_) return {};  // self-loop relation: nothing to filter
        base_rel = static_cast<int>(rel - original_relations_);
        base_slot = slot == QuerySlot::Tail ? QuerySlot::Head : QuerySlot::Tail;
    }
    auto it = completions_.find(pack_completion(e_known, base_rel, base_slot));
    if (it == completions_.end()) return {};
    std::vector<int> out;
    out.reserve(it->second.size());
    for (int id : it->second)
        if (id != gold) out.push_back(id);
    return out;
}

void KnowledgeGraph::write_dataset(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::array<std::pair<const char*, const std::vector<Triple>*>, 3> files = {
        std::make_pair("train.txt", &train_), std::make_pair("valid.txt", &valid_), std::make_pair("test.txt", &test_)};
    for (auto& [fname, split] : files) {
        std::ofstream out((fs::path(dir) / fname).string());
        for (const Triple& t : *split)
            out << entity_names_[static_cast<size_t>(t.head)] << '\t' << relation_names_[static_cast<size_t>(t.rel)] << '\t'
                << entity_names_[static_cast<size_t>(t.tail)] << '\n';
    }
}

}  // namespace kgje
