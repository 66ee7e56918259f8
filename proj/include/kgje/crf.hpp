#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "kgje/ops.hpp"

// Linear-chain CRF with begin/end scores. The path score is
//   begin[y_0] + sum_t emis[t][y_t] + sum_{t>0} trans[y_{t-1}][y_t] + end[y_{T-1}]
// and P(y|s) normalizes exp(score) over all label sequences. All chain
// arithmetic runs in log space.

namespace kgje {

namespace crf_detail {

inline double logsumexp(const std::vector<double>& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

struct Chain {
    int64_t T = 0, L = 0;
    std::vector<double> emis;              // T x L
    std::vector<double> trans;             // L x L
    std::vector<double> begin, end;        // L
    double at_emis(int64_t t, int64_t y) const { return emis[static_cast<size_t>(t * L + y)]; }
    double at_trans(int64_t a, int64_t b) const { return trans[static_cast<size_t>(a * L + b)]; }
};

template <class T>
Chain make_chain(const TensorT<T>& emissions, const TensorT<T>& trans, const TensorT<T>& begin, const TensorT<T>& end) {
    if (emissions.rank() != 2) throw DimError("CRF emissions must be [T x L], got " + shape_str(emissions.shape));
    Chain c;
    c.T = emissions.shape[0];
    c.L = emissions.shape[1];
    if (trans.shape != Shape{c.L, c.L} || begin.size() != c.L || end.size() != c.L)
        throw DimError("CRF parameter shapes disagree with L=" + std::to_string(c.L));
    c.emis.assign(emissions.data.begin(), emissions.data.end());
    c.trans.assign(trans.data.begin(), trans.data.end());
    c.begin.assign(begin.data.begin(), begin.data.end());
    c.end.assign(end.data.begin(), end.data.end());
    return c;
}

// log alpha[t][y]: forward recursion including begin scores.
inline std::vector<double> forward_table(const Chain& c) {
    std::vector<double> alpha(static_cast<size_t>(c.T * c.L));
    for (int64_t y = 0; y < c.L; ++y) alpha[static_cast<size_t>(y)] = c.begin[static_cast<size_t>(y)] + c.at_emis(0, y);
    std::vector<double> buf(static_cast<size_t>(c.L));
    for (int64_t t = 1; t < c.T; ++t)
        for (int64_t y = 0; y < c.L; ++y) {
            for (int64_t p = 0; p < c.L; ++p) buf[static_cast<size_t>(p)] = alpha[static_cast<size_t>((t - 1) * c.L + p)] + c.at_trans(p, y);
            alpha[static_cast<size_t>(t * c.L + y)] = c.at_emis(t, y) + logsumexp(buf);
        }
    return alpha;
}

// log beta[t][y]: backward recursion including end scores.
inline std::vector<double> backward_table(const Chain& c) {
    std::vector<double> beta(static_cast<size_t>(c.T * c.L));
    for (int64_t y = 0; y < c.L; ++y) beta[static_cast<size_t>((c.T - 1) * c.L + y)] = c.end[static_cast<size_t>(y)];
    std::vector<double> buf(static_cast<size_t>(c.L));
    for (int64_t t = c.T - 2; t >= 0; --t)
        for (int64_t y = 0; y < c.L; ++y) {
            for (int64_t n = 0; n < c.L; ++n)
                buf[static_cast<size_t>(n)] = c.at_trans(y, n) + c.at_emis(t + 1, n) + beta[static_cast<size_t>((t + 1) * c.L + n)];
            beta[static_cast<size_t>(t * c.L + y)] = logsumexp(buf);
        }
    return beta;
}

inline double log_partition(const Chain& c) {
    std::vector<double> alpha = forward_table(c);
    std::vector<double> last(static_cast<size_t>(c.L));
    for (int64_t y = 0; y < c.L; ++y)
        last[static_cast<size_t>(y)] = alpha[static_cast<size_t>((c.T - 1) * c.L + y)] + c.end[static_cast<size_t>(y)];
    return logsumexp(last);
}

inline double path_score(const Chain& c, const std::vector<int>& y) {
    double s = c.begin[static_cast<size_t>(y[0])] + c.at_emis(0, y[0]);
    for (int64_t t = 1; t < c.T; ++t) s += c.at_trans(y[static_cast<size_t>(t - 1)], y[static_cast<size_t>(t)]) + c.at_emis(t, y[static_cast<size_t>(t)]);
    return s + c.end[static_cast<size_t>(y.back())];
}

}  // namespace crf_detail

template <class T>
struct CrfVars {
    VarT<T> trans;  // [L x L]
    VarT<T> begin;  // [L]
    VarT<T> end;    // [L]
};

// -log P(gold | s). Backward distributes the exact marginals:
//   d logZ / d emis[t][y]  = P(y_t = y)
//   d logZ / d trans[a][b] = sum_t P(y_{t-1}=a, y_t=b)
// minus the gold indicators.
template <class T>
VarT<T> crf_nll(TapeT<T>& tape, VarT<T> emissions, const std::vector<int>& gold, const CrfVars<T>& p) {
    using namespace crf_detail;
    const Chain c = make_chain(tape.value(emissions), tape.value(p.trans), tape.value(p.begin), tape.value(p.end));
    if (c.T < 1) throw UsageError("CRF needs at least one position");
    if (static_cast<int64_t>(gold.size()) != c.T) throw UsageError("gold label count does not match sequence length");
    for (int y : gold)
        if (y < 0 || y >= c.L) throw UsageError("gold label " + std::to_string(y) + " outside [0," + std::to_string(c.L) + ")");

    const double logz = log_partition(c);
    const double gold_score = path_score(c, gold);
    TensorT<T> out(Shape{1});
    out.data[0] = static_cast<T>(logz - gold_score);

    return tape.emplace(std::move(out), {emissions.id, p.trans.id, p.begin.id, p.end.id},
                        [gold](TapeT<T>& t, int id) {
                            auto& node = t.node(id);
                            const double g = static_cast<double>(node.grad[0]);
                            const Chain ch = make_chain(t.node(node.inputs[0]).value, t.node(node.inputs[1]).value,
                                                        t.node(node.inputs[2]).value, t.node(node.inputs[3]).value);
                            const std::vector<double> alpha = forward_table(ch);
                            const std::vector<double> beta = backward_table(ch);
                            const double logz2 = log_partition(ch);

                            std::vector<T>* d_emis = t.node(node.inputs[0]).requires_grad ? &t.grad_buffer(node.inputs[0]) : nullptr;
                            std::vector<T>* d_trans = t.node(node.inputs[1]).requires_grad ? &t.grad_buffer(node.inputs[1]) : nullptr;
                            std::vector<T>* d_begin = t.node(node.inputs[2]).requires_grad ? &t.grad_buffer(node.inputs[2]) : nullptr;
                            std::vector<T>* d_end = t.node(node.inputs[3]).requires_grad ? &t.grad_buffer(node.inputs[3]) : nullptr;

                            for (int64_t tt = 0; tt < ch.T; ++tt)
                                for (int64_t y = 0; y < ch.L; ++y) {
                                    const double marginal =
                                        std::exp(alpha[static_cast<size_t>(tt * ch.L + y)] + beta[static_cast<size_t>(tt * ch.L + y)] - logz2);
                                    const double indicator = gold[static_cast<size_t>(tt)] == y ? 1.0 : 0.0;
                                    if (d_emis) (*d_emis)[static_cast<size_t>(tt * ch.L + y)] += static_cast<T>(g * (marginal - indicator));
                                    if (tt == 0 && d_begin) (*d_begin)[static_cast<size_t>(y)] += static_cast<T>(g * (marginal - indicator));
                                    if (tt == ch.T - 1 && d_end) (*d_end)[static_cast<size_t>(y)] += static_cast<T>(g * (marginal - indicator));
                                }
                            if (d_trans) {
                                for (int64_t tt = 1; tt < ch.T; ++tt)
                                    for (int64_t a = 0; a < ch.L; ++a)
                                        for (int64_t b = 0; b < ch.L; ++b) {
                                            const double pair = std::exp(alpha[static_cast<size_t>((tt - 1) * ch.L + a)] + ch.at_trans(a, b) +
                                                                         ch.at_emis(tt, b) + beta[static_cast<size_t>(tt * ch.L + b)] - logz2);
                                            const double indicator =
                                                (gold[static_cast<size_t>(tt - 1)] == a && gold[static_cast<size_t>(tt)] == b) ? 1.0 : 0.0;
                                            (*d_trans)[static_cast<size_t>(a * ch.L + b)] += static_cast<T>(g * (pair - indicator));
                                        }
                            }
                        });
}

// Globally optimal label sequence; ties resolved to the lexicographically
// smallest sequence (lowest label index at the earliest differing position).
template <class T>
std::vector<int> viterbi(const TensorT<T>& emissions, const TensorT<T>& trans, const TensorT<T>& begin,
                         const TensorT<T>& end) {
    using namespace crf_detail;
    const Chain c = make_chain(emissions, trans, begin, end);
    if (c.T < 1) throw UsageError("CRF needs at least one position");
    // best achievable suffix score from (t, y) onward
    std::vector<double> suffix(static_cast<size_t>(c.T * c.L));
    for (int64_t y = 0; y < c.L; ++y)
        suffix[static_cast<size_t>((c.T - 1) * c.L + y)] = c.at_emis(c.T - 1, y) + c.end[static_cast<size_t>(y)];
    for (int64_t t = c.T - 2; t >= 0; --t)
        for (int64_t y = 0; y < c.L; ++y) {
            double best = -std::numeric_limits<double>::infinity();
            for (int64_t n = 0; n < c.L; ++n)
                best = std::max(best, c.at_trans(y, n) + suffix[static_cast<size_t>((t + 1) * c.L + n)]);
            suffix[static_cast<size_t>(t * c.L + y)] = c.at_emis(t, y) + best;
        }
    std::vector<int> path(static_cast<size_t>(c.T));
    double best0 = -std::numeric_limits<double>::infinity();
    for (int64_t y = 0; y < c.L; ++y) best0 = std::max(best0, c.begin[static_cast<size_t>(y)] + suffix[static_cast<size_t>(y)]);
    for (int64_t y = 0; y < c.L; ++y)
        if (c.begin[static_cast<size_t>(y)] + suffix[static_cast<size_t>(y)] == best0) {
            path[0] = static_cast<int>(y);
            break;
        }
    for (int64_t t = 1; t < c.T; ++t) {
        const int prev = path[static_cast<size_t>(t - 1)];
        double best = -std::numeric_limits<double>::infinity();
        for (int64_t n = 0; n < c.L; ++n)
            best = std::max(best, c.at_trans(prev, n) + suffix[static_cast<size_t>(t * c.L + n)]);
        for (int64_t n = 0; n < c.L; ++n)
            if (c.at_trans(prev, n) + suffix[static_cast<size_t>(t * c.L + n)] == best) {
                path[static_cast<size_t>(t)] = static_cast<int>(n);
                break;
            }
    }
    return path;
}

}  // namespace kgje
