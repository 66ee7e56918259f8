#include "kgje/tagging.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

namespace kgje {

TagCorpus load_tag_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open corpus");
    TagCorpus corpus;
    std::unordered_map<std::string, int> label_ids;
    LabeledSequence current;
    std::string line;
    long lineno = 0;
    auto flush = [&]() {
        if (!current.tokens.empty()) corpus.sequences.push_back(std::move(current));
        current = LabeledSequence{};
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        const size_t tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw ParseError(path, lineno, "expected 'token<TAB>label'");
        const std::string token = line.substr(0, tab), label = line.substr(tab + 1);
        if (token.empty() || label.empty()) throw ParseError(path, lineno, "empty token or label");
        auto [it, inserted] = label_ids.emplace(label, static_cast<int>(corpus.label_names.size()));
        if (inserted) corpus.label_names.push_back(label);
        current.tokens.push_back(token);
        current.labels.push_back(it->second);
    }
    flush();
    if (corpus.sequences.empty()) throw UsageError("empty tagging corpus: " + path);
    return corpus;
}

void save_tag_corpus(const TagCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write corpus " + path);
    for (size_t s = 0; s < corpus.sequences.size(); ++s) {
        const LabeledSequence& seq = corpus.sequences[s];
        for (size_t i = 0; i < seq.tokens.size(); ++i)
            out << seq.tokens[i] << '\t' << corpus.label_names[static_cast<size_t>(seq.labels[i])] << '\n';
        if (s + 1 < corpus.sequences.size()) out << '\n';
    }
}

TagCorpus synthetic_tag_corpus(int sequences, uint64_t seed) {
    if (sequences < 1) throw UsageError("corpus needs at least one sequence");
    Rng rng(seed);
    TagCorpus corpus;
    corpus.label_names = {"O", "B", "I"};
    for (int s = 0; s < sequences; ++s) {
        LabeledSequence seq;
        const int segments = 2 + static_cast<int>(rng.below(3));  // 6..12 tokens
        for (int k = 0; k < segments; ++k) {
            seq.tokens.push_back("w" + std::to_string(rng.below(10)));
            seq.labels.push_back(0);  // O
            seq.tokens.push_back("trig" + std::to_string(rng.below(4)));
            seq.labels.push_back(1);  // B
            seq.tokens.push_back("w" + std::to_string(rng.below(10)));
            seq.labels.push_back(2);  // I: same surface pool as the O filler
        }
        corpus.sequences.push_back(std::move(seq));
    }
    return corpus;
}

namespace {

std::vector<std::string> corpus_labels_for_vocab(const TagCorpus& corpus) {
    std::vector<std::string> out;
    out.reserve(corpus.sequences.size());
    for (const LabeledSequence& seq : corpus.sequences) {
        std::string joined;
        for (size_t i = 0; i < seq.tokens.size(); ++i) {
            if (i) joined.push_back(' ');
            joined += seq.tokens[i];
        }
        out.push_back(std::move(joined));
    }
    return out;
}

}  // namespace

Tagger::Tagger(const TagCorpus& corpus, EncoderConfig cfg, uint64_t seed)
    : cfg_(cfg), vocab_(LiteralVocab::build(corpus_labels_for_vocab(corpus))), opt_(0.005), rng_(seed),
      num_labels_(corpus.num_labels()) {
    if (corpus.sequences.empty()) throw UsageError("empty tagging corpus");
    if (num_labels_ < 2) throw UsageError("CRF needs at least 2 labels");
    cfg_.validate();
    Rng init = rng_.fork(1);
    register_encoder_params(store_, vocab_, cfg_, init);
    store_.create_xavier("crf.emit_w", Shape{cfg_.model_dim, num_labels_}, init);
    store_.create("crf.emit_b", Shape{num_labels_});
    store_.create_uniform("crf.trans", Shape{num_labels_, num_labels_}, init, 0.1);
    store_.create_uniform("crf.begin", Shape{num_labels_}, init, 0.1);
    store_.create_uniform("crf.end", Shape{num_labels_}, init, 0.1);
}

TokenSequence Tagger::to_token_sequence(const std::vector<std::string>& tokens) const {
    std::string joined;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += tokens[i];
    }
    TokenSequence ts = vocab_.encode(joined);
    if (static_cast<int64_t>(ts.unit_ids.size()) > cfg_.max_len)
        throw UsageError("sequence longer than encoder max_len");
    return ts;
}

double Tagger::train_epoch(const TagCorpus& corpus) {
    std::vector<size_t> order(corpus.sequences.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);

    double total = 0.0;
    for (size_t idx : order) {
        const LabeledSequence& seq = corpus.sequences[idx];
        Tape tape;
        enc::Handles<float> h;
        Var feats = enc::encode_sequence(tape, store_, h, cfg_, to_token_sequence(seq.tokens), "enc.");
        Var emissions = add_rowvec(tape, matmul(tape, feats, enc::leaf(tape, store_, h, "crf.emit_w")),
                                   enc::leaf(tape, store_, h, "crf.emit_b"));
        CrfVars<float> cv{enc::leaf(tape, store_, h, "crf.trans"), enc::leaf(tape, store_, h, "crf.begin"),
                          enc::leaf(tape, store_, h, "crf.end")};
        Var loss = crf_nll(tape, emissions, seq.labels, cv);
        total += tape.value(loss).data[0];
        tape.backward(loss);
        store_.zero_grads();
        for (auto& [name, var] : h.vars) {
            const auto& g = tape.grad(var);
            if (!g.empty()) store_.get(name).grad = g;
        }
        opt_.step(store_);
    }
    return total / static_cast<double>(corpus.sequences.size());
}

void Tagger::train(const TagCorpus& corpus, int epochs) {
    for (int e = 0; e < epochs; ++e) train_epoch(corpus);
}

std::vector<int> Tagger::predict(const std::vector<std::string>& tokens) const {
    Tape tape;
    enc::Handles<float> h;
    Var feats = enc::encode_sequence(tape, store_, h, cfg_, to_token_sequence(tokens), "enc.");
    Var emissions = add_rowvec(tape, matmul(tape, feats, enc::leaf(tape, store_, h, "crf.emit_w")),
                               enc::leaf(tape, store_, h, "crf.emit_b"));
    return viterbi(tape.value(emissions), store_.get("crf.trans"), store_.get("crf.begin"), store_.get("crf.end"));
}

TagReport Tagger::evaluate(const TagCorpus& corpus) const {
    TagReport report;
    for (const LabeledSequence& seq : corpus.sequences) {
        const std::vector<int> pred = predict(seq.tokens);
        bool exact = true;
        for (size_t i = 0; i < seq.labels.size(); ++i) {
            report.tokens += 1;
            if (pred[i] == seq.labels[i])
                report.token_accuracy += 1;
            else
                exact = false;
        }
        report.exact_match += exact ? 1 : 0;
        report.sequences += 1;
    }
    if (report.tokens > 0) report.token_accuracy /= static_cast<double>(report.tokens);
    if (report.sequences > 0) report.exact_match /= static_cast<double>(report.sequences);
    return report;
}

}  // namespace kgje
