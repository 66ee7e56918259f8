#include "kgje/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

namespace kgje {

double rank_of_gold(const std::vector<float>& scores, int gold, const std::vector<int>& excluded) {
    const float gold_score = scores[static_cast<size_t>(gold)];
    int64_t higher = 0, equal = 0;
    for (int64_t i = 0; i < static_cast<int64_t>(scores.size()); ++i) {
        if (i == gold) continue;
        if (std::binary_search(excluded.begin(), excluded.end(), static_cast<int>(i))) continue;
        if (scores[static_cast<size_t>(i)] > gold_score)
            ++higher;
        else if (scores[static_cast<size_t>(i)] == gold_score)
            ++equal;
    }
    return 1.0 + static_cast<double>(higher) + static_cast<double>(equal) / 2.0;
}

RankingReport aggregate(const std::vector<double>& ranks, EvalSetting setting) {
    if (ranks.empty()) throw UsageError("aggregate over an empty rank list");
    RankingReport r;
    r.setting = setting;
    r.queries = static_cast<int64_t>(ranks.size());
    for (double rank : ranks) {
        r.mr += rank;
        r.mrr += 1.0 / rank;
        r.hits1 += rank <= 1.0 ? 1 : 0;
        r.hits3 += rank <= 3.0 ? 1 : 0;
        r.hits10 += rank <= 10.0 ? 1 : 0;
    }
    const double n = static_cast<double>(r.queries);
    r.mr /= n;
    r.mrr /= n;
    r.hits1 /= n;
    r.hits3 /= n;
    r.hits10 /= n;
    return r;
}

namespace {

struct QueryRow {
    Triple triple;
    QuerySlot slot;
    double rank = 0.0;
    bool ok = false;
};

}  // namespace

RankingReport evaluate_split(const KnowledgeGraph& g, const Scorer& model, const std::vector<Triple>& split,
                             EvalSetting setting, int workers, const std::string& report_path,
                             const std::string& ranks_path) {
    if (!g.augmented()) throw UsageError("evaluation requires an augmented graph");
    std::vector<QueryRow> rows;
    rows.reserve(split.size() * 2);
    for (const Triple& t : split) {
        rows.push_back(QueryRow{t, QuerySlot::Tail, 0.0, false});
        rows.push_back(QueryRow{t, QuerySlot::Head, 0.0, false});
    }

    const int64_t E = g.entity_count();
    auto run_query = [&](QueryRow& row) {
        const Triple& t = row.triple;
        if (t.head < 0 || t.head >= E || t.tail < 0 || t.tail >= E || t.rel < 0 || t.rel >= g.original_relation_count())
            return;  // skipped, counted below
        const int e_known = row.slot == QuerySlot::Tail ? t.head : t.tail;
        const int rel = row.slot == QuerySlot::Tail ? t.rel : g.inverse_of(t.rel);
        const int gold = row.slot == QuerySlot::Tail ? t.tail : t.head;
        const std::vector<float> scores = model.score_tail_all(e_known, rel);
        std::vector<int> excluded;
        if (setting == EvalSetting::Filtered) excluded = g.filtered_candidates(e_known, rel, QuerySlot::Tail, gold);
        row.rank = rank_of_gold(scores, gold, excluded);
        row.ok = true;
    };

    if (workers <= 1) {
        for (auto& row : rows) run_query(row);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < rows.size(); i = next.fetch_add(1)) run_query(rows[i]);
            });
        for (auto& th : pool) th.join();
    }

    std::vector<double> ranks;
    ranks.reserve(rows.size());
    int64_t skipped = 0;
    for (const auto& row : rows) {
        if (row.ok)
            ranks.push_back(row.rank);
        else
            ++skipped;
    }
    RankingReport report = aggregate(ranks, setting);
    report.skipped = skipped;

    if (!report_path.empty()) write_report(report, report_path);
    if (!ranks_path.empty()) {
        std::ofstream out(ranks_path);
        if (!out) throw UsageError("cannot write rank file " + ranks_path);
        char buf[32];
        for (const auto& row : rows) {
            if (!row.ok) continue;
            std::snprintf(buf, sizeof(buf), "%g", row.rank);
            out << g.entity_name(row.triple.head) << '\t' << g.relation_name(row.triple.rel) << '\t'
                << g.entity_name(row.triple.tail) << '\t' << (row.slot == QuerySlot::Tail ? "tail" : "head") << '\t'
                << buf << '\n';
        }
    }
    return report;
}

void write_report(const RankingReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write report " + path);
    char buf[32];
    auto emit = [&](const char* name, double v) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out << name << '\t' << buf << '\n';
    };
    emit("MR", r.mr);
    emit("MRR", r.mrr);
    emit("Hits@1", r.hits1);
    emit("Hits@3", r.hits3);
    emit("Hits@10", r.hits10);
    out << "queries\t" << r.queries << '\n';
    out << "setting\t" << (r.setting == EvalSetting::Filtered ? "filtered" : "raw") << '\n';
}

}  // namespace kgje
