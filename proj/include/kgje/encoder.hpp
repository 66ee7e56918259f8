#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kgje/ops.hpp"

// Sequence-encoder layers: sinusoidal position codes, multi-head attention
// in the scaled absolute-position form and the relative-position form with
// distance/direction bias terms, position-wise FFN, BiLSTM, and the gated
// fusion that blends the two encoder tracks.

namespace kgje {

// PE[2i] = sin(t / 10000^(2i/d)), PE[2i+1] = cos(t / 10000^(2i/d))
template <class T>
TensorT<T> absolute_pe(int64_t t, int64_t d) {
    if (t < 0) throw UsageError("position must be nonnegative");
    if (d <= 0 || d % 2 != 0) throw UsageError("positional encoding dimension must be positive and even");
    TensorT<T> out(Shape{d});
    for (int64_t i = 0; 2 * i < d; ++i) {
        const double freq = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
        out.data[static_cast<size_t>(2 * i)] = static_cast<T>(std::sin(static_cast<double>(t) / freq));
        out.data[static_cast<size_t>(2 * i + 1)] = static_cast<T>(std::cos(static_cast<double>(t) / freq));
    }
    return out;
}

template <class T>
TensorT<T> absolute_pe_matrix(int64_t l, int64_t d) {
    TensorT<T> out(Shape{l, d});
    for (int64_t t = 0; t < l; ++t) {
        TensorT<T> row = absolute_pe<T>(t, d);
        std::copy(row.data.begin(), row.data.end(), out.data.begin() + t * d);
    }
    return out;
}

// Signed-distance table for the relative variant: row (l-1)+delta encodes
// delta = t - j in [-(l-1), l-1] with the interleaved sin/cos pattern over
// the per-head dimension.
template <class T>
TensorT<T> relative_encoding_table(int64_t l, int64_t d_k) {
    if (d_k <= 0 || d_k % 2 != 0) throw UsageError("relative encoding head dimension must be positive and even");
    TensorT<T> out(Shape{2 * l - 1, d_k});
    for (int64_t delta = -(l - 1); delta <= l - 1; ++delta) {
        const int64_t row = l - 1 + delta;
        for (int64_t i = 0; 2 * i < d_k; ++i) {
            const double freq = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_k));
            out.at2(row, 2 * i) = static_cast<T>(std::sin(static_cast<double>(delta) / freq));
            out.at2(row, 2 * i + 1) = static_cast<T>(std::cos(static_cast<double>(delta) / freq));
        }
    }
    return out;
}

namespace detail {
// -inf additive mask for key positions >= valid_len, applied to all rows.
template <class T>
TensorT<T> padding_mask(int64_t l, int64_t valid_len) {
    TensorT<T> mask(Shape{l, l});
    for (int64_t i = 0; i < l; ++i)
        for (int64_t j = valid_len; j < l; ++j) mask.at2(i, j) = static_cast<T>(-1e30);
    return mask;
}
}  // namespace detail

template <class T>
struct AttentionVars {
    VarT<T> wq, wk, wv, wm;  // each [d x d]
};

// softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated then projected.
// `scaled` / `project_k` exist so the relative variant's reduction test can
// compare against the unscaled, unprojected-K baseline. `attn_out`, when
// given, receives the per-head attention weight matrices.
template <class T>
VarT<T> attention_scaled(TapeT<T>& tape, VarT<T> h, const AttentionVars<T>& w, int64_t heads, int64_t valid_len,
                         bool scaled = true, bool project_k = true, std::vector<TensorT<T>>* attn_out = nullptr) {
    const TensorT<T>& H = tape.value(h);
    detail::require(H.rank() == 2, "attention input must be [l x d], got " + shape_str(H.shape));
    const int64_t l = H.shape[0], d = H.shape[1];
    detail::require(heads > 0 && d % heads == 0, "model dim " + std::to_string(d) + " not divisible by heads");
    if (valid_len <= 0) throw UsageError("attention over an all-padding sequence");
    const int64_t d_k = d / heads;

    VarT<T> q = matmul(tape, h, w.wq);
    VarT<T> k = project_k ? matmul(tape, h, w.wk) : h;
    VarT<T> v = matmul(tape, h, w.wv);
    VarT<T> mask = valid_len < l ? tape.constant(detail::padding_mask<T>(l, valid_len)) : VarT<T>{};

    std::vector<VarT<T>> outs;
    for (int64_t head = 0; head < heads; ++head) {
        VarT<T> qk = slice_cols(tape, q, head * d_k, d_k);
        VarT<T> kk = slice_cols(tape, k, head * d_k, d_k);
        VarT<T> vk = slice_cols(tape, v, head * d_k, d_k);
        VarT<T> scores = matmul(tape, qk, transpose(tape, kk));
        if (scaled) scores = scale(tape, scores, 1.0 / std::sqrt(static_cast<double>(d_k)));
        if (mask.valid()) scores = add(tape, scores, mask);
        VarT<T> attn = softmax(tape, scores, 1);
        if (attn_out) attn_out->push_back(tape.value(attn));
        outs.push_back(matmul(tape, attn, vk));
    }
    VarT<T> cat = outs.size() == 1 ? outs[0] : concat(tape, outs, 1);
    return matmul(tape, cat, w.wm);
}

template <class T>
struct RelAttentionVars {
    VarT<T> wq, wv, wm;  // wq, wv [d x d]; wm [d x d]
    VarT<T> u, v;        // [heads x d_k] content/position bias vectors
};

// Relative-position attention: K is the raw per-head slice of the input (no
// projection), scores are
//   A[t,j] = Q_t K_j^T + Q_t R_{t-j}^T + u K_j^T + v R_{t-j}^T
// and the softmax is applied without 1/sqrt(d_k) scaling.
template <class T>
VarT<T> attention_relative(TapeT<T>& tape, VarT<T> h, const RelAttentionVars<T>& w, int64_t heads, int64_t valid_len,
                           const TensorT<T>* rel_table_override = nullptr, std::vector<TensorT<T>>* attn_out = nullptr) {
    const TensorT<T>& H = tape.value(h);
    detail::require(H.rank() == 2, "attention input must be [l x d], got " + shape_str(H.shape));
    const int64_t l = H.shape[0], d = H.shape[1];
    detail::require(heads > 0 && d % heads == 0, "model dim " + std::to_string(d) + " not divisible by heads");
    if (valid_len <= 0) throw UsageError("attention over an all-padding sequence");
    const int64_t d_k = d / heads;

    VarT<T> q = matmul(tape, h, w.wq);
    VarT<T> v = matmul(tape, h, w.wv);
    VarT<T> rel = tape.constant(rel_table_override ? *rel_table_override : relative_encoding_table<T>(l, d_k));
    VarT<T> rel_t = transpose(tape, rel);  // [d_k x (2l-1)]
    VarT<T> mask = valid_len < l ? tape.constant(detail::padding_mask<T>(l, valid_len)) : VarT<T>{};

    std::vector<VarT<T>> outs;
    for (int64_t head = 0; head < heads; ++head) {
        VarT<T> qk = slice_cols(tape, q, head * d_k, d_k);
        VarT<T> kk = slice_cols(tape, h, head * d_k, d_k);  // un-projected key slice
        VarT<T> vk = slice_cols(tape, v, head * d_k, d_k);
        VarT<T> uk = slice_rows(tape, w.u, head, 1);
        VarT<T> vb = slice_rows(tape, w.v, head, 1);

        VarT<T> content = matmul(tape, qk, transpose(tape, kk));            // Q K^T
        VarT<T> position = rel_select(tape, matmul(tape, qk, rel_t));       // Q R^T gathered per offset
        VarT<T> key_bias = tile_rows(tape, matmul(tape, uk, transpose(tape, kk)), l);   // u K^T
        VarT<T> pos_bias = rel_select(tape, tile_rows(tape, matmul(tape, vb, rel_t), l));  // v R^T
        VarT<T> scores = add(tape, add(tape, content, position), add(tape, key_bias, pos_bias));
        if (mask.valid()) scores = add(tape, scores, mask);
        VarT<T> attn = softmax(tape, scores, 1);  // no dot-product scaling
        if (attn_out) attn_out->push_back(tape.value(attn));
        outs.push_back(matmul(tape, attn, vk));
    }
    VarT<T> cat = outs.size() == 1 ? outs[0] : concat(tape, outs, 1);
    return matmul(tape, cat, w.wm);
}

template <class T>
struct FfnVars {
    VarT<T> w1, b1, w2, b2;  // [d x d_ff], [d_ff], [d_ff x d], [d]
};

// max(0, x W1 + b1) W2 + b2, applied position-wise.
template <class T>
VarT<T> ffn(TapeT<T>& tape, VarT<T> x, const FfnVars<T>& w) {
    VarT<T> hidden = relu(tape, add_rowvec(tape, matmul(tape, x, w.w1), w.b1));
    return add_rowvec(tape, matmul(tape, hidden, w.w2), w.b2);
}

template <class T>
struct LayerNormVars {
    VarT<T> gain, bias;  // [d]
};

template <class T>
struct LstmVars {
    VarT<T> wx, wh, b;  // [d_in x 4H], [H x 4H], [4H]; gate order i, f, g, o
};

template <class T>
VarT<T> lstm_direction(TapeT<T>& tape, VarT<T> x, const LstmVars<T>& w, int64_t hidden, bool backward) {
    const TensorT<T>& X = tape.value(x);
    detail::require(X.rank() == 2, "lstm input must be [l x d], got " + shape_str(X.shape));
    const int64_t l = X.shape[0];
    VarT<T> h_prev = tape.constant(TensorT<T>(Shape{1, hidden}));
    VarT<T> c_prev = tape.constant(TensorT<T>(Shape{1, hidden}));
    std::vector<VarT<T>> outs(static_cast<size_t>(l));
    for (int64_t step = 0; step < l; ++step) {
        const int64_t t = backward ? l - 1 - step : step;
        VarT<T> xt = slice_rows(tape, x, t, 1);
        VarT<T> gates = add_rowvec(tape, add(tape, matmul(tape, xt, w.wx), matmul(tape, h_prev, w.wh)), w.b);
        VarT<T> ig = sigmoid(tape, slice_cols(tape, gates, 0, hidden));
        VarT<T> fg = sigmoid(tape, slice_cols(tape, gates, hidden, hidden));
        VarT<T> gg = kgje::tanh(tape, slice_cols(tape, gates, 2 * hidden, hidden));
        VarT<T> og = sigmoid(tape, slice_cols(tape, gates, 3 * hidden, hidden));
        VarT<T> c = add(tape, mul(tape, fg, c_prev), mul(tape, ig, gg));
        VarT<T> hh = mul(tape, og, kgje::tanh(tape, c));
        outs[static_cast<size_t>(t)] = hh;
        h_prev = hh;
        c_prev = c;
    }
    return outs.size() == 1 ? outs[0] : concat(tape, outs, 0);
}

// Forward and backward passes with independent weights; per-position outputs
// concatenated to [l x 2H].
template <class T>
VarT<T> bilstm(TapeT<T>& tape, VarT<T> x, const LstmVars<T>& fwd, const LstmVars<T>& bwd, int64_t hidden) {
    VarT<T> f = lstm_direction(tape, x, fwd, hidden, false);
    VarT<T> b = lstm_direction(tape, x, bwd, hidden, true);
    return concat(tape, {f, b}, 1);
}

template <class T>
struct FusionVars {
    VarT<T> w1, w2, w3;  // each [d x d]
};

// z = sigmoid(W3 tanh(W1 x_t + W2 x_b)) elementwise over [l x d].
template <class T>
VarT<T> fusion_gate(TapeT<T>& tape, VarT<T> x_t, VarT<T> x_b, const FusionVars<T>& w) {
    const TensorT<T>& A = tape.value(x_t);
    const TensorT<T>& B = tape.value(x_b);
    detail::require(A.shape == B.shape, "gated fusion operands " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    VarT<T> pre = kgje::tanh(tape, add(tape, matmul(tape, x_t, w.w1), matmul(tape, x_b, w.w2)));
    return sigmoid(tape, matmul(tape, pre, w.w3));
}

// z*x_t + (1-z)*x_b for an explicit gate (exposed so tests can force z).
template <class T>
VarT<T> gated_blend(TapeT<T>& tape, VarT<T> z, VarT<T> x_t, VarT<T> x_b) {
    VarT<T> ones = tape.constant(TensorT<T>(tape.value(z).shape, T(1)));
    return add(tape, mul(tape, z, x_t), mul(tape, sub(tape, ones, z), x_b));
}

template <class T>
VarT<T> gated_fuse(TapeT<T>& tape, VarT<T> x_t, VarT<T> x_b, const FusionVars<T>& w) {
    return gated_blend(tape, fusion_gate(tape, x_t, x_b, w), x_t, x_b);
}

}  // namespace kgje
