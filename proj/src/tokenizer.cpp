#include "kgje/tokenizer.hpp"

#include <cctype>

namespace kgje {

namespace {
constexpr const char* kJoiner = "▁";  // a visible low block between bigram halves
constexpr const char* kBoundary = "</s>";
}  // namespace

std::vector<std::string> tokenize_units(const std::string& label) {
    std::vector<std::string> units;
    std::string current;
    for (char c : label) {
        const bool sep = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '_' || c == '/';
        if (sep) {
            if (!current.empty()) units.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) units.push_back(std::move(current));
    return units;
}

TokenSequence tokenize(const std::string& label) {
    TokenSequence ts;
    ts.units = tokenize_units(label);
    ts.bigrams.reserve(ts.units.size());
    for (size_t i = 0; i < ts.units.size(); ++i) {
        const std::string& next = i + 1 < ts.units.size() ? ts.units[i + 1] : kBoundary;
        ts.bigrams.push_back(ts.units[i] + kJoiner + next);
    }
    return ts;
}

LiteralVocab LiteralVocab::build(const std::vector<std::string>& labels) {
    LiteralVocab v;
    v.unit_tokens_.push_back("<unk>");
    v.bigram_tokens_.push_back("<unk>");
    v.unit_ids_.emplace("<unk>", 0);
    v.bigram_ids_.emplace("<unk>", 0);
    for (const std::string& label : labels) {
        TokenSequence ts = tokenize(label);
        for (const std::string& u : ts.units)
            if (v.unit_ids_.emplace(u, static_cast<int>(v.unit_tokens_.size())).second) v.unit_tokens_.push_back(u);
        for (const std::string& b : ts.bigrams)
            if (v.bigram_ids_.emplace(b, static_cast<int>(v.bigram_tokens_.size())).second) v.bigram_tokens_.push_back(b);
    }
    return v;
}

TokenSequence LiteralVocab::encode(const std::string& label) const {
    TokenSequence ts = tokenize(label);
    ts.unit_ids.reserve(ts.units.size());
    ts.bigram_ids.reserve(ts.bigrams.size());
    for (const std::string& u : ts.units) {
        auto it = unit_ids_.find(u);
        ts.unit_ids.push_back(it == unit_ids_.end() ? 0 : it->second);
    }
    for (const std::string& b : ts.bigrams) {
        auto it = bigram_ids_.find(b);
        ts.bigram_ids.push_back(it == bigram_ids_.end() ? 0 : it->second);
    }
    return ts;
}

}  // namespace kgje
