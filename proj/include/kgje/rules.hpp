#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgje/kg.hpp"

namespace kgje {

// Closed Horn rule over relation atoms: body(x,y) => head(x,y), where the
// body is either r1(x,y) or the chain r1(x,z) ^ r2(z,y). Grounding counts
// are over distinct (x,y) pairs, not path multiplicity.
struct HornRule {
    int head_rel = -1;
    std::vector<int> body;  // 1 or 2 relation ids
    int64_t support = 0;
    int64_t body_count = 0;
    double confidence = 0.0;
};

class RuleSet {
  public:
    RuleSet() = default;
    RuleSet(int min_support, double min_confidence) : min_support_(min_support), min_confidence_(min_confidence) {}

    void add_rule(HornRule r);
    const std::vector<HornRule>& rules() const { return rules_; }
    const std::vector<int>& rules_for_head(int rel) const;
    int min_support() const { return min_support_; }
    double min_confidence() const { return min_confidence_; }

    // "head_rel <TAB> body1[,body2] <TAB> support <TAB> bodyCount" per line,
    // relations spelled by label (inverses as "rel^-1").
    void save(const std::string& path, const KnowledgeGraph& g) const;
    static RuleSet load(const std::string& path, const KnowledgeGraph& g, int min_support, double min_confidence);

  private:
    std::vector<HornRule> rules_;
    std::unordered_map<int, std::vector<int>> by_head_;
    int min_support_ = 5;
    double min_confidence_ = 0.1;
};

// Mines all rules of shapes r1(x,y) => r2(x,y) and r1(x,z) ^ r2(z,y) => r3(x,y)
// meeting both thresholds, with exact grounding counts. Runs over the
// augmented train edges (inverse relations participate as distinct
// relations; self-loop triples are excluded).
RuleSet mine_rules(const KnowledgeGraph& g, int min_support, double min_confidence);

// Confidence of one context triple (head, rel, tail):
//   c = max(theta_base, max{conf(rule) : head matches and body grounded}),
// with self-loop triples pinned at 1.0.
double triple_confidence(const KnowledgeGraph& g, const RuleSet& rules, int head, int rel, int tail,
                         double theta_base = 0.5);

}  // namespace kgje
