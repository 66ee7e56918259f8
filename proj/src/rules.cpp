#include "kgje/rules.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace kgje {

namespace {

uint64_t pack_pair(int x, int y) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(x)) << 32) | static_cast<uint32_t>(y);
}

std::vector<Triple> mining_edges(const KnowledgeGraph& g) {
    if (!g.augmented()) throw UsageError("rule mining requires an augmented graph");
    const int self_rel = g.self_rel();
    std::set<std::tuple<int, int, int>> dedup;
    for (const Triple& t : g.augmented_train())
        if (t.rel != self_rel) dedup.insert({t.head, t.rel, t.tail});
    std::vector<Triple> out;
    out.reserve(dedup.size());
    for (auto& [h, r, t] : dedup) out.push_back(Triple{h, r, t});
    return out;
}

bool has_edge(const KnowledgeGraph& g, int h, int rel, int t) {
    for (const ContextEdge& e : g.neighbors(h))
        if (e.rel == rel && e.neighbor == t && e.dir != Direction::Self) return true;
    return false;
}

}  // namespace

void RuleSet::add_rule(HornRule r) {
    by_head_[r.head_rel].push_back(static_cast<int>(rules_.size()));
    rules_.push_back(std::move(r));
}

const std::vector<int>& RuleSet::rules_for_head(int rel) const {
    static const std::vector<int> kEmpty;
    auto it = by_head_.find(rel);
    return it == by_head_.end() ? kEmpty : it->second;
}

RuleSet mine_rules(const KnowledgeGraph& g, int min_support, double min_confidence) {
    if (min_support < 1) throw UsageError("min_support must be >= 1");
    if (min_confidence <= 0.0 || min_confidence > 1.0) throw UsageError("min_confidence must be in (0, 1]");

    const std::vector<Triple> edges = mining_edges(g);

    // distinct (x,y) -> sorted relations connecting the pair
    std::unordered_map<uint64_t, std::vector<int>> pair_rels;
    for (const Triple& e : edges) pair_rels[pack_pair(e.head, e.tail)].push_back(e.rel);
    for (auto& [key, rels] : pair_rels) {
        std::sort(rels.begin(), rels.end());
        rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
    }

    std::map<int, int64_t> pairs_per_rel;
    for (auto& [key, rels] : pair_rels)
        for (int r : rels) ++pairs_per_rel[r];

    RuleSet out(min_support, min_confidence);

    // r1(x,y) => r2(x,y)
    std::map<std::pair<int, int>, int64_t> single_support;
    for (auto& [key, rels] : pair_rels)
        for (int r1 : rels)
            for (int r2 : rels)
                if (r1 != r2) ++single_support[{r1, r2}];
    for (auto& [pr, support] : single_support) {
        const auto [r1, r2] = pr;
        const int64_t body = pairs_per_rel[r1];
        const double conf = static_cast<double>(support) / static_cast<double>(body);
        if (support >= min_support && conf >= min_confidence)
            out.add_rule(HornRule{r2, {r1}, support, body, conf});
    }

    // r1(x,z) ^ r2(z,y) => r3(x,y)
    std::vector<std::vector<std::pair<int, int>>> out_edges(static_cast<size_t>(g.entity_count()));
    std::vector<std::vector<std::pair<int, int>>> in_edges(static_cast<size_t>(g.entity_count()));
    for (const Triple& e : edges) {
        out_edges[static_cast<size_t>(e.head)].emplace_back(e.rel, e.tail);
        in_edges[static_cast<size_t>(e.tail)].emplace_back(e.rel, e.head);
    }
    std::map<std::pair<int, int>, std::unordered_set<uint64_t>> chain_pairs;
    for (int64_t z = 0; z < g.entity_count(); ++z) {
        for (const auto& [r1, x] : in_edges[static_cast<size_t>(z)])
            for (const auto& [r2, y] : out_edges[static_cast<size_t>(z)])
                chain_pairs[{r1, r2}].insert(pack_pair(x, y));
    }
    for (auto& [body_rels, pairs] : chain_pairs) {
        const int64_t body = static_cast<int64_t>(pairs.size());
        std::map<int, int64_t> support_by_head;
        for (uint64_t p : pairs) {
            auto it = pair_rels.find(p);
            if (it == pair_rels.end()) continue;
            for (int r3 : it->second) ++support_by_head[r3];
        }
        for (auto& [r3, support] : support_by_head) {
            const double conf = static_cast<double>(support) / static_cast<double>(body);
            if (support >= min_support && conf >= min_confidence)
                out.add_rule(HornRule{r3, {body_rels.first, body_rels.second}, support, body, conf});
        }
    }
    return out;
}

double triple_confidence(const KnowledgeGraph& g, const RuleSet& rules, int head, int rel, int tail,
                         double theta_base) {
    if (g.augmented() && g.is_self_rel(rel)) return 1.0;
    double best = theta_base;
    for (int idx : rules.rules_for_head(rel)) {
        const HornRule& rule = rules.rules()[static_cast<size_t>(idx)];
        if (rule.confidence <= best) continue;
        bool grounded = false;
        if (rule.body.size() == 1) {
            grounded = has_edge(g, head, rule.body[0], tail);
        } else {
            for (const ContextEdge& e : g.neighbors(head)) {
                if (e.rel != rule.body[0] || e.dir == Direction::Self) continue;
                if (has_edge(g, e.neighbor, rule.body[1], tail)) {
                    grounded = true;
                    break;
                }
            }
        }
        if (grounded) best = rule.confidence;
    }
    return best;
}

void RuleSet::save(const std::string& path, const KnowledgeGraph& g) const {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write rule file " + path);
    for (const HornRule& r : rules_) {
        out << g.relation_name(r.head_rel) << '\t' << g.relation_name(r.body[0]);
        if (r.body.size() == 2) out << ',' << g.relation_name(r.body[1]);
        out << '\t' << r.support << '\t' << r.body_count << '\n';
    }
}

RuleSet RuleSet::load(const std::string& path, const KnowledgeGraph& g, int min_support, double min_confidence) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open rule file");
    RuleSet out(min_support, min_confidence);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string head, body, support_s, body_count_s;
        if (!std::getline(ss, head, '\t') || !std::getline(ss, body, '\t') || !std::getline(ss, support_s, '\t') ||
            !std::getline(ss, body_count_s))
            throw ParseError(path, lineno, "expected 4 tab-separated fields");
        HornRule r;
        try {
            r.head_rel = g.relation_id(head);
            const size_t comma = body.find(',');
            if (comma == std::string::npos) {
                r.body = {g.relation_id(body)};
            } else {
                r.body = {g.relation_id(body.substr(0, comma)), g.relation_id(body.substr(comma + 1))};
            }
            r.support = std::stoll(support_s);
            r.body_count = std::stoll(body_count_s);
        } catch (const LookupError& e) {
            throw ParseError(path, lineno, e.what());
        } catch (const std::exception&) {
            throw ParseError(path, lineno, "bad counts");
        }
        if (r.body_count <= 0 || r.support <= 0 || r.support > r.body_count)
            throw ParseError(path, lineno, "inconsistent support/bodyCount");
        r.confidence = static_cast<double>(r.support) / static_cast<double>(r.body_count);
        out.add_rule(std::move(r));
    }
    return out;
}

}  // namespace kgje
