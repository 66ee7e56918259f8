#include <doctest.h>

#include <algorithm>
#include <set>

#include "kgje/kg.hpp"
#include "kgje/rng.hpp"
#include "support/fixtures.hpp"

using namespace kgje;
using kgje::test::TempDir;
using kgje::test::write_file;

namespace {

KnowledgeGraph tiny_graph() {
    return KnowledgeGraph::from_labels(
        {{"china", "capital", "beijing"}, {"beijing", "located_in", "north_china"}, {"china", "part_of", "asia"}});
}

}  // namespace

TEST_CASE("load_dataset parses tab-separated splits") {
    TempDir dir("load");
    write_file(dir.file("train.txt"), "a\tr1\tb\nb\tr2\tc\n");
    write_file(dir.file("valid.txt"), "a\tr1\tc\n");
    write_file(dir.file("test.txt"), "c\tr2\ta\n");
    KnowledgeGraph g = KnowledgeGraph::load_dataset(dir.str());
    CHECK(g.entity_count() == 3);
    CHECK(g.relation_count() == 2);
    CHECK(g.train().size() == 2);
    CHECK(g.valid().size() == 1);
    CHECK(g.test().size() == 1);
    // first-appearance id order: a, b, c
    CHECK(g.entity_id("a") == 0);
    CHECK(g.entity_id("b") == 1);
    CHECK(g.entity_id("c") == 2);
}

TEST_CASE("load_dataset flags malformed lines with line numbers") {
    TempDir dir("malformed");
    write_file(dir.file("train.txt"), "a\tr1\tb\na r1 b\n");
    write_file(dir.file("valid.txt"), "");
    write_file(dir.file("test.txt"), "");
    try {
        KnowledgeGraph::load_dataset(dir.str());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
}

TEST_CASE("load_dataset rejects an empty file set") {
    TempDir dir("empty");
    write_file(dir.file("train.txt"), "");
    write_file(dir.file("valid.txt"), "");
    write_file(dir.file("test.txt"), "");
    CHECK_THROWS_AS(KnowledgeGraph::load_dataset(dir.str()), UsageError);
}

TEST_CASE("eval-only entities are kept but flagged") {
    TempDir dir("evalonly");
    write_file(dir.file("train.txt"), "a\tr1\tb\n");
    write_file(dir.file("valid.txt"), "a\tr1\tzzz\n");
    write_file(dir.file("test.txt"), "a\tr1\tb\n");
    KnowledgeGraph g = KnowledgeGraph::load_dataset(dir.str());
    CHECK(g.entity_count() == 3);
    REQUIRE(g.report().eval_only_entities.size() == 1);
    CHECK(g.entity_name(g.report().eval_only_entities[0]) == "zzz");
}

TEST_CASE("augment adds inverses and self-loops") {
    KnowledgeGraph g = tiny_graph();
    const int64_t rel_before = g.relation_count();
    g.augment();
    CHECK(g.augmented_train().size() == 2 * 3 + 4);  // 2|G| + |E|
    CHECK(g.relation_count() == 2 * rel_before + 1);
    // (china, capital, beijing) present => (beijing, capital^-1, china) present
    const int inv = g.inverse_of(g.relation_id("capital"));
    CHECK(g.relation_name(inv) == "capital^-1");
    const Triple want{g.entity_id("beijing"), inv, g.entity_id("china")};
    CHECK(std::count(g.augmented_train().begin(), g.augmented_train().end(), want) == 1);
    CHECK_THROWS_AS(g.augment(), UsageError);
}

TEST_CASE("relation count identity matches the benchmark arithmetic") {
    // 237 original relations extend to 2*237+1 = 475.
    CHECK(2 * 237 + 1 == 475);
}

TEST_CASE("neighbors covers out, in and self context") {
    KnowledgeGraph g = tiny_graph();
    g.augment();
    const int beijing = g.entity_id("beijing");
    const auto& ctx = g.neighbors(beijing);
    std::set<std::string> neighbor_entities;
    for (const ContextEdge& e : ctx) neighbor_entities.insert(g.entity_name(e.neighbor));
    CHECK(neighbor_entities == std::set<std::string>{"china", "north_china", "beijing"});
    // |N(e)| == out-degree + in-degree + 1
    CHECK(ctx.size() == 1 + 1 + 1);

    // an entity with no edges at all still has its self-loop
    KnowledgeGraph iso = KnowledgeGraph::from_labels({{"a", "r", "b"}}, {}, {{"c", "r", "c"}});
    iso.augment();
    const auto& cctx = iso.neighbors(iso.entity_id("c"));
    REQUIRE(cctx.size() == 1);
    CHECK(cctx[0].dir == Direction::Self);
    CHECK(cctx[0].neighbor == iso.entity_id("c"));

    CHECK_THROWS_AS(iso.neighbors(99), LookupError);
}

TEST_CASE("neighbor degree identity on random graphs") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const int ents = 2 + static_cast<int>(rng.below(6));
        const int rels = 1 + static_cast<int>(rng.below(3));
        std::vector<std::array<std::string, 3>> train;
        std::vector<std::vector<int>> degree(static_cast<size_t>(ents), std::vector<int>(2, 0));
        for (int i = 0; i < 12; ++i) {
            const int h = static_cast<int>(rng.below(static_cast<uint64_t>(ents)));
            const int t = static_cast<int>(rng.below(static_cast<uint64_t>(ents)));
            const int r = static_cast<int>(rng.below(static_cast<uint64_t>(rels)));
            train.push_back({"e" + std::to_string(h), "r" + std::to_string(r), "e" + std::to_string(t)});
            degree[static_cast<size_t>(h)][0]++;
            degree[static_cast<size_t>(t)][1]++;
        }
        KnowledgeGraph g = KnowledgeGraph::from_labels(train);
        g.augment();
        for (int e = 0; e < ents; ++e) {
            const int id = g.find_entity("e" + std::to_string(e)) ? g.entity_id("e" + std::to_string(e)) : -1;
            if (id < 0) continue;
            CHECK(static_cast<int>(g.neighbors(id).size()) == degree[static_cast<size_t>(e)][0] + degree[static_cast<size_t>(e)][1] + 1);
        }
    }
}

TEST_CASE("filtered candidates exclude known completions but never the gold") {
    KnowledgeGraph g = KnowledgeGraph::from_labels({{"A", "r", "B"}, {"A", "r", "C"}, {"D", "q", "A"}});
    g.augment();
    const int a = g.entity_id("A"), bb = g.entity_id("B"), c = g.entity_id("C");
    const int r = g.relation_id("r");
    // ranking B as the gold tail excludes C
    auto excl = g.filtered_candidates(a, r, QuerySlot::Tail, bb);
    CHECK(excl == std::vector<int>{c});
    // exclusion set never contains the gold
    for (int gold : {bb, c}) {
        auto ex = g.filtered_candidates(a, r, QuerySlot::Tail, gold);
        CHECK(std::find(ex.begin(), ex.end(), gold) == ex.end());
    }
    // relation unseen with this entity -> empty set
    CHECK(g.filtered_candidates(bb, g.relation_id("q"), QuerySlot::Tail, a).empty());
    // head-slot query through the inverse relation matches the direct head slot
    auto via_inverse = g.filtered_candidates(a, g.inverse_of(r), QuerySlot::Tail, -1);
    auto direct = g.filtered_candidates(a, r, QuerySlot::Head, -1);
    CHECK(via_inverse == direct);
}

TEST_CASE("filter index agrees with a brute-force scan on small graphs") {
    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const int ents = 2 + static_cast<int>(rng.below(18));
        const int rels = 1 + static_cast<int>(rng.below(4));
        auto mk = [&](int n) {
            std::vector<std::array<std::string, 3>> v;
            for (int i = 0; i < n; ++i)
                v.push_back({"e" + std::to_string(rng.below(static_cast<uint64_t>(ents))),
                             "r" + std::to_string(rng.below(static_cast<uint64_t>(rels))),
                             "e" + std::to_string(rng.below(static_cast<uint64_t>(ents)))});
            return v;
        };
        KnowledgeGraph g = KnowledgeGraph::from_labels(mk(10), mk(3), mk(3));
        std::vector<Triple> all;
        for (const auto* split : {&g.train(), &g.valid(), &g.test()}) all.insert(all.end(), split->begin(), split->end());
        g.augment();
        for (int e = 0; e < g.entity_count(); ++e)
            for (int r = 0; r < g.original_relation_count(); ++r)
                for (QuerySlot slot : {QuerySlot::Tail, QuerySlot::Head}) {
                    const int gold = static_cast<int>(rng.below(static_cast<uint64_t>(g.entity_count())));
                    std::set<int> expect;
                    for (const Triple& t : all) {
                        if (slot == QuerySlot::Tail && t.head == e && t.rel == r && t.tail != gold) expect.insert(t.tail);
                        if (slot == QuerySlot::Head && t.tail == e && t.rel == r && t.head != gold) expect.insert(t.head);
                    }
                    auto got = g.filtered_candidates(e, r, slot, gold);
                    CHECK(std::set<int>(got.begin(), got.end()) == expect);
                }
    }
}

TEST_CASE("augmentation identities hold on random graphs") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int ents = 1 + static_cast<int>(rng.below(10));
        const int rels = 1 + static_cast<int>(rng.below(5));
        const int n = 1 + static_cast<int>(rng.below(30));
        std::vector<std::array<std::string, 3>> train;
        for (int i = 0; i < n; ++i)
            train.push_back({"e" + std::to_string(rng.below(static_cast<uint64_t>(ents))),
                             "r" + std::to_string(rng.below(static_cast<uint64_t>(rels))),
                             "e" + std::to_string(rng.below(static_cast<uint64_t>(ents)))});
        KnowledgeGraph g = KnowledgeGraph::from_labels(train);
        const int64_t E = g.entity_count(), R = g.relation_count(), G = static_cast<int64_t>(g.train().size());
        g.augment();
        CHECK(static_cast<int64_t>(g.augmented_train().size()) == 2 * G + E);
        CHECK(g.relation_count() == 2 * R + 1);
    }
}

TEST_CASE("write + reload round-trips ids and counts") {
    TempDir dir("roundtrip");
    KnowledgeGraph g = tiny_graph();
    g.write_dataset(dir.str());
    KnowledgeGraph g2 = KnowledgeGraph::load_dataset(dir.str());
    CHECK(g2.entity_count() == g.entity_count());
    CHECK(g2.relation_count() == g.relation_count());
    REQUIRE(g2.train().size() == g.train().size());
    for (size_t i = 0; i < g.train().size(); ++i) CHECK(g.train()[i] == g2.train()[i]);
    for (int e = 0; e < g.entity_count(); ++e) CHECK(g.entity_name(e) == g2.entity_name(e));
}
