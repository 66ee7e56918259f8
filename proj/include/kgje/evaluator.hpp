#pragma once

#include <string>
#include <vector>

#include "kgje/kg.hpp"

namespace kgje {

// Anything that can score (e_known, rel, candidate) for every candidate at
// once. Head queries are executed as tail queries under the inverse
// relation, so one method serves both directions. Implementations must be
// safe for concurrent readers (evaluation shards queries across workers).
struct Scorer {
    virtual ~Scorer() = default;
    virtual std::vector<float> score_tail_all(int e_known, int rel) const = 0;
};

enum class EvalSetting { Raw, Filtered };

struct RankingReport {
    double mr = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0, hits3 = 0.0, hits10 = 0.0;
    int64_t queries = 0;
    int64_t skipped = 0;
    EvalSetting setting = EvalSetting::Filtered;
};

// Mean-tie rank of gold among non-excluded candidates:
//   rank = 1 + #{strictly higher} + #{equal, excluding gold} / 2.
// `excluded` must be sorted and must not contain gold.
double rank_of_gold(const std::vector<float>& scores, int gold, const std::vector<int>& excluded);

RankingReport aggregate(const std::vector<double>& ranks, EvalSetting setting);

// Both directions per triple (2 * |split| queries). Optional output paths
// write the metric report ("metric<TAB>value") and per-query ranks
// ("head<TAB>rel<TAB>tail<TAB>direction<TAB>rank").
RankingReport evaluate_split(const KnowledgeGraph& g, const Scorer& model, const std::vector<Triple>& split,
                             EvalSetting setting, int workers = 1, const std::string& report_path = "",
                             const std::string& ranks_path = "");

void write_report(const RankingReport& r, const std::string& path);

}  // namespace kgje
