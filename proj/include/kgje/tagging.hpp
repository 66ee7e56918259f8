#pragma once

#include <string>
#include <vector>

#include "kgje/crf.hpp"
#include "kgje/literal.hpp"

// Sequence-tagging harness: trains the sequence encoder with a CRF head on
// synthetic BIO corpora, giving the encoder an independently verifiable
// supervised task.

namespace kgje {

struct LabeledSequence {
    std::vector<std::string> tokens;
    std::vector<int> labels;
};

struct TagCorpus {
    std::vector<LabeledSequence> sequences;
    std::vector<std::string> label_names;
    int64_t num_labels() const { return static_cast<int64_t>(label_names.size()); }
};

// "token<TAB>label" per line, blank line between sequences.
TagCorpus load_tag_corpus(const std::string& path);
void save_tag_corpus(const TagCorpus& corpus, const std::string& path);

// Seeded O/B/I corpus: every sequence is segments of (filler:O, trigger:B,
// filler:I), so labels are exactly balanced and the I/O decision for filler
// tokens requires left context.
TagCorpus synthetic_tag_corpus(int sequences, uint64_t seed);

struct TagReport {
    double token_accuracy = 0.0;
    double exact_match = 0.0;
    int64_t tokens = 0;
    int64_t sequences = 0;
};

class Tagger {
  public:
    Tagger(const TagCorpus& corpus, EncoderConfig cfg, uint64_t seed);

    // One pass of per-sequence Adam steps over a seeded shuffle; returns the
    // mean NLL.
    double train_epoch(const TagCorpus& corpus);
    void train(const TagCorpus& corpus, int epochs);

    std::vector<int> predict(const std::vector<std::string>& tokens) const;
    TagReport evaluate(const TagCorpus& corpus) const;

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const EncoderConfig& config() const { return cfg_; }

  private:
    TokenSequence to_token_sequence(const std::vector<std::string>& tokens) const;

    EncoderConfig cfg_;
    LiteralVocab vocab_;
    ParamStore store_;
    AdamT<float> opt_;
    Rng rng_;
    int64_t num_labels_ = 0;
};

}  // namespace kgje
