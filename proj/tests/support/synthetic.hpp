#pragma once

// Seeded synthetic graphs shared by the trainer tests and the acceptance
// suite.

#include <array>
#include <string>
#include <vector>

#include "kgje/kg.hpp"
#include "kgje/rng.hpp"

namespace kgje::test {

// N entities on a ring with "next"/"prev" edges in both directions; a
// holdout fraction of the edges is split evenly into valid and test.
inline kgje::KnowledgeGraph ring_kg(int entities, double holdout_fraction, uint64_t seed) {
    using Row = std::array<std::string, 3>;
    std::vector<Row> edges;
    auto name = [](int i) { return "n" + std::to_string(i); };
    for (int i = 0; i < entities; ++i) {
        edges.push_back({name(i), "next", name((i + 1) % entities)});
        edges.push_back({name(i), "prev", name((i + entities - 1) % entities)});
    }
    kgje::Rng rng(seed);
    for (size_t i = edges.size(); i > 1; --i) std::swap(edges[i - 1], edges[rng.below(i)]);
    const size_t holdout = static_cast<size_t>(static_cast<double>(edges.size()) * holdout_fraction);
    const size_t n_valid = holdout / 2;
    std::vector<Row> valid(edges.begin(), edges.begin() + static_cast<int64_t>(n_valid));
    std::vector<Row> test(edges.begin() + static_cast<int64_t>(n_valid), edges.begin() + static_cast<int64_t>(holdout));
    std::vector<Row> train(edges.begin() + static_cast<int64_t>(holdout), edges.end());
    kgje::KnowledgeGraph g = kgje::KnowledgeGraph::from_labels(train, valid, test);
    g.augment();
    return g;
}

}  // namespace kgje::test
