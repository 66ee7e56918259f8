#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace kgje {

// Unit tokens plus bigram tokens of equal length; bigram i joins units i and
// i+1 (the last one pads with the boundary marker "</s>").
struct TokenSequence {
    std::vector<std::string> units, bigrams;
    std::vector<int> unit_ids, bigram_ids;  // empty until a vocabulary assigns them
    size_t length() const { return units.size(); }
};

// Lowercases and splits on whitespace, underscores and slashes.
std::vector<std::string> tokenize_units(const std::string& label);

// Tokenizes and forms bigrams; an empty/whitespace-only label yields an
// empty sequence (callers route that to the shared default vector).
TokenSequence tokenize(const std::string& label);

// Token-id assignment built from training-split labels; id 0 is <unk> in
// both tables.
class LiteralVocab {
  public:
    static LiteralVocab build(const std::vector<std::string>& labels);

    // Tokenize + assign ids; out-of-vocabulary tokens map to <unk>.
    TokenSequence encode(const std::string& label) const;

    int64_t unit_count() const { return static_cast<int64_t>(unit_tokens_.size()); }
    int64_t bigram_count() const { return static_cast<int64_t>(bigram_tokens_.size()); }

  private:
    std::vector<std::string> unit_tokens_, bigram_tokens_;
    std::unordered_map<std::string, int> unit_ids_, bigram_ids_;
};

}  // namespace kgje
