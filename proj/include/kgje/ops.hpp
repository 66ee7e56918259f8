#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kgje/rng.hpp"
#include "kgje/tape.hpp"

// Differentiable operations over tape nodes. Forward reductions accumulate
// in double regardless of the storage scalar T.

namespace kgje {

namespace detail {
inline void require(bool ok, const std::string& msg) {
    if (!ok) throw DimError(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: [m x k] * [k x n] -> [m x n]
// backward: dA += dC * B^T, dB += A^T * dC
template <class T>
VarT<T> matmul(TapeT<T>& tape, VarT<T> a, VarT<T> b) {
    const TensorT<T>& A = tape.value(a);
    const TensorT<T>& B = tape.value(b);
    detail::require(A.rank() == 2 && B.rank() == 2 && A.shape[1] == B.shape[0],
                    "matmul " + shape_str(A.shape) + " x " + shape_str(B.shape));
    const int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    TensorT<T> C(Shape{m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += static_cast<double>(A.at2(i, p)) * static_cast<double>(B.at2(p, j));
            C.at2(i, j) = static_cast<T>(acc);
        }
    return tape.emplace(std::move(C), {a.id, b.id}, [m, k, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const std::vector<T>& dC = node.grad;
        const TensorT<T>& Av = t.node(node.inputs[0]).value;
        const TensorT<T>& Bv = t.node(node.inputs[1]).value;
        if (t.node(node.inputs[0]).requires_grad) {
            std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int64_t j = 0; j < n; ++j)
                        acc += static_cast<double>(dC[static_cast<size_t>(i * n + j)]) * static_cast<double>(Bv.at2(p, j));
                    dA[static_cast<size_t>(i * k + p)] += static_cast<T>(acc);
                }
        }
        if (t.node(node.inputs[1]).requires_grad) {
            std::vector<T>& dB = t.grad_buffer(node.inputs[1]);
            for (int64_t p = 0; p < k; ++p)
                for (int64_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < m; ++i)
                        acc += static_cast<double>(Av.at2(i, p)) * static_cast<double>(dC[static_cast<size_t>(i * n + j)]);
                    dB[static_cast<size_t>(p * n + j)] += static_cast<T>(acc);
                }
        }
    });
}

template <class T>
VarT<T> transpose(TapeT<T>& tape, VarT<T> a) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2, "transpose expects a matrix, got " + shape_str(A.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    TensorT<T> C(Shape{n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) C.at2(j, i) = A.at2(i, j);
    return tape.emplace(std::move(C), {a.id}, [m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        const std::vector<T>& dC = node.grad;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) dA[static_cast<size_t>(i * n + j)] += dC[static_cast<size_t>(j * m + i)];
    });
}

// ---------------------------------------------------------------------------
// Same-shape elementwise binary ops.
namespace detail {
template <class T, class FwdFn, class BwdFn>
VarT<T> binary_same_shape(TapeT<T>& tape, VarT<T> a, VarT<T> b, const char* name, FwdFn fwd, BwdFn bwd) {
    const TensorT<T>& A = tape.value(a);
    const TensorT<T>& B = tape.value(b);
    require(A.shape == B.shape, std::string(name) + " " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    TensorT<T> C(A.shape);
    for (size_t i = 0; i < A.data.size(); ++i) C.data[i] = fwd(A.data[i], B.data[i]);
    return tape.emplace(std::move(C), {a.id, b.id}, [bwd](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Av = t.node(node.inputs[0]).value;
        const TensorT<T>& Bv = t.node(node.inputs[1]).value;
        const bool ga = t.node(node.inputs[0]).requires_grad;
        const bool gb = t.node(node.inputs[1]).requires_grad;
        std::vector<T>* dA = ga ? &t.grad_buffer(node.inputs[0]) : nullptr;
        std::vector<T>* dB = gb ? &t.grad_buffer(node.inputs[1]) : nullptr;
        for (size_t i = 0; i < node.grad.size(); ++i) bwd(node.grad[i], Av.data[i], Bv.data[i], dA ? &(*dA)[i] : nullptr, dB ? &(*dB)[i] : nullptr);
    });
}
}  // namespace detail

template <class T>
VarT<T> add(TapeT<T>& tape, VarT<T> a, VarT<T> b) {
    return detail::binary_same_shape(
        tape, a, b, "add", [](T x, T y) { return static_cast<T>(x + y); },
        [](T g, T, T, T* da, T* db) {
            if (da) *da += g;
            if (db) *db += g;
        });
}

template <class T>
VarT<T> sub(TapeT<T>& tape, VarT<T> a, VarT<T> b) {
    return detail::binary_same_shape(
        tape, a, b, "sub", [](T x, T y) { return static_cast<T>(x - y); },
        [](T g, T, T, T* da, T* db) {
            if (da) *da += g;
            if (db) *db -= g;
        });
}

template <class T>
VarT<T> mul(TapeT<T>& tape, VarT<T> a, VarT<T> b) {
    return detail::binary_same_shape(
        tape, a, b, "mul", [](T x, T y) { return static_cast<T>(x * y); },
        [](T g, T x, T y, T* da, T* db) {
            if (da) *da += g * y;
            if (db) *db += g * x;
        });
}

// a: [m x n], v: [n] or [1 x n] broadcast-added to every row.
template <class T>
VarT<T> add_rowvec(TapeT<T>& tape, VarT<T> a, VarT<T> v) {
    const TensorT<T>& A = tape.value(a);
    const TensorT<T>& V = tape.value(v);
    detail::require(A.rank() == 2 && V.size() == A.shape[1],
                    "add_rowvec " + shape_str(A.shape) + " vs " + shape_str(V.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    TensorT<T> C(A.shape);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) C.at2(i, j) = static_cast<T>(A.at2(i, j) + V.data[static_cast<size_t>(j)]);
    return tape.emplace(std::move(C), {a.id, v.id}, [m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        if (t.node(node.inputs[0]).requires_grad) {
            std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
            for (size_t i = 0; i < node.grad.size(); ++i) dA[i] += node.grad[i];
        }
        if (t.node(node.inputs[1]).requires_grad) {
            std::vector<T>& dV = t.grad_buffer(node.inputs[1]);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) dV[static_cast<size_t>(j)] += node.grad[static_cast<size_t>(i * n + j)];
        }
    });
}

// v: [n] or [1 x n] replicated into [m x n]; backward sums over rows.
template <class T>
VarT<T> tile_rows(TapeT<T>& tape, VarT<T> v, int64_t m) {
    const TensorT<T>& V = tape.value(v);
    detail::require(V.rank() == 1 || (V.rank() == 2 && V.shape[0] == 1),
                    "tile_rows expects a row vector, got " + shape_str(V.shape));
    const int64_t n = V.size();
    TensorT<T> C(Shape{m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) C.at2(i, j) = V.data[static_cast<size_t>(j)];
    return tape.emplace(std::move(C), {v.id}, [m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dV = t.grad_buffer(node.inputs[0]);
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < m; ++i) acc += static_cast<double>(node.grad[static_cast<size_t>(i * n + j)]);
            dV[static_cast<size_t>(j)] += static_cast<T>(acc);
        }
    });
}

template <class T>
VarT<T> scale(TapeT<T>& tape, VarT<T> a, double c) {
    const TensorT<T>& A = tape.value(a);
    TensorT<T> C(A.shape);
    for (size_t i = 0; i < A.data.size(); ++i) C.data[i] = static_cast<T>(static_cast<double>(A.data[i]) * c);
    return tape.emplace(std::move(C), {a.id}, [c](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < node.grad.size(); ++i) dA[i] += static_cast<T>(static_cast<double>(node.grad[i]) * c);
    });
}

template <class T>
VarT<T> add_scalar(TapeT<T>& tape, VarT<T> a, double c) {
    const TensorT<T>& A = tape.value(a);
    TensorT<T> C(A.shape);
    for (size_t i = 0; i < A.data.size(); ++i) C.data[i] = static_cast<T>(static_cast<double>(A.data[i]) + c);
    return tape.emplace(std::move(C), {a.id}, [](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < node.grad.size(); ++i) dA[i] += node.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Elementwise activations.
namespace detail {
template <class T, class FwdFn, class BwdFn>
VarT<T> unary(TapeT<T>& tape, VarT<T> a, FwdFn fwd, BwdFn bwd) {
    const TensorT<T>& A = tape.value(a);
    TensorT<T> C(A.shape);
    for (size_t i = 0; i < A.data.size(); ++i) C.data[i] = fwd(A.data[i]);
    return tape.emplace(std::move(C), {a.id}, [bwd](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Av = t.node(node.inputs[0]).value;
        const TensorT<T>& Cv = node.value;
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < node.grad.size(); ++i) dA[i] += bwd(node.grad[i], Av.data[i], Cv.data[i]);
    });
}
}  // namespace detail

template <class T>
VarT<T> sigmoid(TapeT<T>& tape, VarT<T> a) {
    return detail::unary(
        tape, a, [](T x) { return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); },
        [](T g, T, T y) { return static_cast<T>(g * y * (T(1) - y)); });
}

template <class T>
VarT<T> tanh(TapeT<T>& tape, VarT<T> a) {
    return detail::unary(
        tape, a, [](T x) { return static_cast<T>(std::tanh(static_cast<double>(x))); },
        [](T g, T, T y) { return static_cast<T>(g * (T(1) - y * y)); });
}

template <class T>
VarT<T> relu(TapeT<T>& tape, VarT<T> a) {
    return detail::unary(
        tape, a, [](T x) { return x > T(0) ? x : T(0); },
        [](T g, T x, T) { return x > T(0) ? g : T(0); });
}

template <class T>
VarT<T> abs(TapeT<T>& tape, VarT<T> a) {
    return detail::unary(
        tape, a, [](T x) { return x < T(0) ? static_cast<T>(-x) : x; },
        [](T g, T x, T) { return x > T(0) ? g : (x < T(0) ? static_cast<T>(-g) : T(0)); });
}

// Requires nonnegative input; derivative guarded at 0.
template <class T>
VarT<T> sqrt(TapeT<T>& tape, VarT<T> a) {
    return detail::unary(
        tape, a, [](T x) { return static_cast<T>(std::sqrt(std::max(0.0, static_cast<double>(x)))); },
        [](T g, T, T y) { return static_cast<T>(static_cast<double>(g) / (2.0 * std::max(static_cast<double>(y), 1e-12))); });
}

// ---------------------------------------------------------------------------
// concat along axis 0 or 1 (vectors are treated as single rows for axis 0
// only when all operands are vectors of equal rank).
template <class T>
VarT<T> concat(TapeT<T>& tape, const std::vector<VarT<T>>& parts, int axis) {
    detail::require(!parts.empty(), "concat of zero tensors");
    const TensorT<T>& first = tape.value(parts[0]);
    if (first.rank() == 1) {
        detail::require(axis == 0, "concat of vectors supports axis 0 only");
        int64_t total = 0;
        for (auto p : parts) {
            detail::require(tape.value(p).rank() == 1, "concat rank mismatch");
            total += tape.value(p).size();
        }
        TensorT<T> C(Shape{total});
        std::vector<int> in;
        std::vector<int64_t> offsets;
        int64_t off = 0;
        for (auto p : parts) {
            const TensorT<T>& P = tape.value(p);
            std::copy(P.data.begin(), P.data.end(), C.data.begin() + off);
            offsets.push_back(off);
            off += P.size();
            in.push_back(p.id);
        }
        return tape.emplace(std::move(C), std::move(in), [offsets](TapeT<T>& t, int id) {
            auto& node = t.node(id);
            for (size_t k = 0; k < node.inputs.size(); ++k) {
                if (!t.node(node.inputs[k]).requires_grad) continue;
                std::vector<T>& dP = t.grad_buffer(node.inputs[k]);
                const int64_t off2 = offsets[k];
                for (size_t i = 0; i < dP.size(); ++i) dP[i] += node.grad[static_cast<size_t>(off2) + i];
            }
        });
    }
    detail::require(first.rank() == 2 && (axis == 0 || axis == 1), "concat supports rank-2 on axis 0/1");
    if (axis == 0) {
        const int64_t n = first.shape[1];
        int64_t rows = 0;
        for (auto p : parts) {
            detail::require(tape.value(p).rank() == 2 && tape.value(p).shape[1] == n,
                            "concat axis 0 column mismatch " + shape_str(tape.value(p).shape));
            rows += tape.value(p).shape[0];
        }
        TensorT<T> C(Shape{rows, n});
        std::vector<int> in;
        std::vector<int64_t> offsets;
        int64_t off = 0;
        for (auto p : parts) {
            const TensorT<T>& P = tape.value(p);
            std::copy(P.data.begin(), P.data.end(), C.data.begin() + off * n);
            offsets.push_back(off);
            off += P.shape[0];
            in.push_back(p.id);
        }
        return tape.emplace(std::move(C), std::move(in), [offsets, n](TapeT<T>& t, int id) {
            auto& node = t.node(id);
            for (size_t k = 0; k < node.inputs.size(); ++k) {
                if (!t.node(node.inputs[k]).requires_grad) continue;
                std::vector<T>& dP = t.grad_buffer(node.inputs[k]);
                const size_t base = static_cast<size_t>(offsets[k] * n);
                for (size_t i = 0; i < dP.size(); ++i) dP[i] += node.grad[base + i];
            }
        });
    }
    // axis == 1
    const int64_t m = first.shape[0];
    int64_t cols = 0;
    for (auto p : parts) {
        detail::require(tape.value(p).rank() == 2 && tape.value(p).shape[0] == m,
                        "concat axis 1 row mismatch " + shape_str(tape.value(p).shape));
        cols += tape.value(p).shape[1];
    }
    TensorT<T> C(Shape{m, cols});
    std::vector<int> in;
    std::vector<int64_t> offsets;
    std::vector<int64_t> widths;
    int64_t off = 0;
    for (auto p : parts) {
        const TensorT<T>& P = tape.value(p);
        const int64_t w = P.shape[1];
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) C.at2(i, off + j) = P.at2(i, j);
        offsets.push_back(off);
        widths.push_back(w);
        off += w;
        in.push_back(p.id);
    }
    return tape.emplace(std::move(C), std::move(in), [offsets, widths, m, cols](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        for (size_t k = 0; k < node.inputs.size(); ++k) {
            if (!t.node(node.inputs[k]).requires_grad) continue;
            std::vector<T>& dP = t.grad_buffer(node.inputs[k]);
            const int64_t w = widths[k], o = offsets[k];
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < w; ++j) dP[static_cast<size_t>(i * w + j)] += node.grad[static_cast<size_t>(i * cols + o + j)];
        }
    });
}

template <class T>
VarT<T> slice_cols(TapeT<T>& tape, VarT<T> a, int64_t start, int64_t len) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2 && start >= 0 && len > 0 && start + len <= A.shape[1],
                    "slice_cols [" + std::to_string(start) + "," + std::to_string(start + len) + ") of " + shape_str(A.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    TensorT<T> C(Shape{m, len});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < len; ++j) C.at2(i, j) = A.at2(i, start + j);
    return tape.emplace(std::move(C), {a.id}, [start, len, m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < len; ++j) dA[static_cast<size_t>(i * n + start + j)] += node.grad[static_cast<size_t>(i * len + j)];
    });
}

template <class T>
VarT<T> slice_rows(TapeT<T>& tape, VarT<T> a, int64_t start, int64_t len) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2 && start >= 0 && len > 0 && start + len <= A.shape[0],
                    "slice_rows [" + std::to_string(start) + "," + std::to_string(start + len) + ") of " + shape_str(A.shape));
    const int64_t n = A.shape[1];
    TensorT<T> C(Shape{len, n});
    std::copy(A.data.begin() + start * n, A.data.begin() + (start + len) * n, C.data.begin());
    return tape.emplace(std::move(C), {a.id}, [start, len, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < len * n; ++i) dA[static_cast<size_t>(start * n + i)] += node.grad[static_cast<size_t>(i)];
    });
}

template <class T>
VarT<T> reshape(TapeT<T>& tape, VarT<T> a, Shape s) {
    const TensorT<T>& A = tape.value(a);
    detail::require(numel(s) == A.size(), "reshape " + shape_str(A.shape) + " -> " + shape_str(s));
    TensorT<T> C(std::move(s), A.data);
    return tape.emplace(std::move(C), {a.id}, [](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < node.grad.size(); ++i) dA[i] += node.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Embedding-table access.
template <class T>
VarT<T> gather_rows(TapeT<T>& tape, VarT<T> table, std::vector<int> ids) {
    const TensorT<T>& A = tape.value(table);
    detail::require(A.rank() == 2, "gather_rows expects a matrix table");
    const int64_t d = A.shape[1];
    for (int idx : ids)
        if (idx < 0 || idx >= A.shape[0]) throw LookupError("row " + std::to_string(idx) + " outside table " + shape_str(A.shape));
    TensorT<T> C(Shape{static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(A.data.begin() + static_cast<int64_t>(ids[i]) * d, A.data.begin() + (static_cast<int64_t>(ids[i]) + 1) * d,
                  C.data.begin() + static_cast<int64_t>(i) * d);
    return tape.emplace(std::move(C), {table.id}, [ids = std::move(ids), d](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int64_t j = 0; j < d; ++j)
                dA[static_cast<size_t>(static_cast<int64_t>(ids[i]) * d + j)] += node.grad[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
    });
}

// Rows of src added into an accumulator of out_rows rows; backward gathers.
template <class T>
VarT<T> scatter_add_rows(TapeT<T>& tape, VarT<T> src, std::vector<int> targets, int64_t out_rows) {
    const TensorT<T>& A = tape.value(src);
    detail::require(A.rank() == 2 && static_cast<int64_t>(targets.size()) == A.shape[0],
                    "scatter_add_rows targets " + std::to_string(targets.size()) + " vs " + shape_str(A.shape));
    const int64_t d = A.shape[1];
    for (int tgt : targets)
        if (tgt < 0 || tgt >= out_rows) throw LookupError("scatter target " + std::to_string(tgt) + " outside " + std::to_string(out_rows));
    TensorT<T> C(Shape{out_rows, d});
    for (size_t i = 0; i < targets.size(); ++i)
        for (int64_t j = 0; j < d; ++j) C.at2(targets[i], j) += A.data[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
    return tape.emplace(std::move(C), {src.id}, [targets = std::move(targets), d](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < targets.size(); ++i)
            for (int64_t j = 0; j < d; ++j)
                dA[i * static_cast<size_t>(d) + static_cast<size_t>(j)] += node.grad[static_cast<size_t>(static_cast<int64_t>(targets[i]) * d + j)];
    });
}

// Row i scaled by the fixed (non-differentiable) weight w[i].
template <class T>
VarT<T> scale_rows(TapeT<T>& tape, VarT<T> a, std::vector<double> w) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2 && static_cast<int64_t>(w.size()) == A.shape[0],
                    "scale_rows weights " + std::to_string(w.size()) + " vs " + shape_str(A.shape));
    const int64_t n = A.shape[1];
    TensorT<T> C(A.shape);
    for (int64_t i = 0; i < A.shape[0]; ++i)
        for (int64_t j = 0; j < n; ++j) C.at2(i, j) = static_cast<T>(static_cast<double>(A.at2(i, j)) * w[static_cast<size_t>(i)]);
    return tape.emplace(std::move(C), {a.id}, [w = std::move(w), n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < w.size(); ++i)
            for (int64_t j = 0; j < n; ++j)
                dA[i * static_cast<size_t>(n) + static_cast<size_t>(j)] +=
                    static_cast<T>(static_cast<double>(node.grad[i * static_cast<size_t>(n) + static_cast<size_t>(j)]) * w[i]);
    });
}

// ---------------------------------------------------------------------------
// softmax with max-subtraction. Vectors reduce over their only axis;
// matrices reduce along `axis` (0 = down columns, 1 = along rows).
template <class T>
VarT<T> softmax(TapeT<T>& tape, VarT<T> a, int axis = -1) {
    const TensorT<T>& A = tape.value(a);
    for (T v : A.data)
        if (!std::isfinite(static_cast<double>(v))) throw NumericError("softmax input contains NaN/Inf");
    int64_t groups, len, gstride, estride;
    if (A.rank() == 1) {
        groups = 1;
        len = A.shape[0];
        gstride = 0;
        estride = 1;
    } else if (A.rank() == 2) {
        const int ax = axis < 0 ? 1 : axis;
        detail::require(ax == 0 || ax == 1, "softmax axis for a matrix must be 0 or 1");
        if (ax == 1) {
            groups = A.shape[0];
            len = A.shape[1];
            gstride = A.shape[1];
            estride = 1;
        } else {
            groups = A.shape[1];
            len = A.shape[0];
            gstride = 1;
            estride = A.shape[1];
        }
    } else {
        throw DimError("softmax supports rank 1 or 2, got " + shape_str(A.shape));
    }
    TensorT<T> C(A.shape);
    for (int64_t g = 0; g < groups; ++g) {
        double mx = -1e300;
        for (int64_t i = 0; i < len; ++i) mx = std::max(mx, static_cast<double>(A.data[static_cast<size_t>(g * gstride + i * estride)]));
        double z = 0.0;
        for (int64_t i = 0; i < len; ++i) z += std::exp(static_cast<double>(A.data[static_cast<size_t>(g * gstride + i * estride)]) - mx);
        for (int64_t i = 0; i < len; ++i) {
            const size_t k = static_cast<size_t>(g * gstride + i * estride);
            C.data[k] = static_cast<T>(std::exp(static_cast<double>(A.data[k]) - mx) / z);
        }
    }
    return tape.emplace(std::move(C), {a.id}, [groups, len, gstride, estride](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Y = node.value;
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (int64_t g = 0; g < groups; ++g) {
            double dot = 0.0;
            for (int64_t i = 0; i < len; ++i) {
                const size_t k = static_cast<size_t>(g * gstride + i * estride);
                dot += static_cast<double>(node.grad[k]) * static_cast<double>(Y.data[k]);
            }
            for (int64_t i = 0; i < len; ++i) {
                const size_t k = static_cast<size_t>(g * gstride + i * estride);
                dA[k] += static_cast<T>((static_cast<double>(node.grad[k]) - dot) * static_cast<double>(Y.data[k]));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Valid (no padding, stride 1) cross-correlation.
// input [Cin x H x W], filters [Cout x Cin x kh x kw] -> [Cout x H-kh+1 x W-kw+1]
template <class T>
VarT<T> conv2d_valid(TapeT<T>& tape, VarT<T> input, VarT<T> filters) {
    const TensorT<T>& X = tape.value(input);
    const TensorT<T>& F = tape.value(filters);
    detail::require(X.rank() == 3 && F.rank() == 4, "conv2d_valid expects input [C,H,W] and filters [F,C,kh,kw], got " +
                                                        shape_str(X.shape) + " and " + shape_str(F.shape));
    const int64_t cin = X.shape[0], H = X.shape[1], W = X.shape[2];
    const int64_t cout = F.shape[0], kh = F.shape[2], kw = F.shape[3];
    detail::require(F.shape[1] == cin, "conv2d_valid channel mismatch " + shape_str(X.shape) + " vs " + shape_str(F.shape));
    detail::require(kh <= H && kw <= W, "conv2d_valid filter " + shape_str(F.shape) + " larger than input " + shape_str(X.shape));
    const int64_t oh = H - kh + 1, ow = W - kw + 1;
    TensorT<T> C(Shape{cout, oh, ow});
    for (int64_t f = 0; f < cout; ++f)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int64_t c = 0; c < cin; ++c)
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            acc += static_cast<double>(X.data[static_cast<size_t>((c * H + y + ky) * W + x + kx)]) *
                                   static_cast<double>(F.data[static_cast<size_t>(((f * cin + c) * kh + ky) * kw + kx)]);
                C.data[static_cast<size_t>((f * oh + y) * ow + x)] = static_cast<T>(acc);
            }
    return tape.emplace(std::move(C), {input.id, filters.id}, [cin, H, W, cout, kh, kw, oh, ow](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Xv = t.node(node.inputs[0]).value;
        const TensorT<T>& Fv = t.node(node.inputs[1]).value;
        const bool gx = t.node(node.inputs[0]).requires_grad;
        const bool gf = t.node(node.inputs[1]).requires_grad;
        std::vector<T>* dX = gx ? &t.grad_buffer(node.inputs[0]) : nullptr;
        std::vector<T>* dF = gf ? &t.grad_buffer(node.inputs[1]) : nullptr;
        for (int64_t f = 0; f < cout; ++f)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x) {
                    const T g = node.grad[static_cast<size_t>((f * oh + y) * ow + x)];
                    if (g == T(0)) continue;
                    for (int64_t c = 0; c < cin; ++c)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const size_t xi = static_cast<size_t>((c * H + y + ky) * W + x + kx);
                                const size_t fi = static_cast<size_t>(((f * cin + c) * kh + ky) * kw + kx);
                                if (dX) (*dX)[xi] += g * Fv.data[fi];
                                if (dF) (*dF)[fi] += g * Xv.data[xi];
                            }
                }
    });
}

// ---------------------------------------------------------------------------
// Relative-offset diagonal gather: p is [l x (2l-1)] with column c = l-1+t-j
// holding the score of offset t-j; output [l x l] has out[t][j] = p[t][l-1+t-j].
template <class T>
VarT<T> rel_select(TapeT<T>& tape, VarT<T> p) {
    const TensorT<T>& P = tape.value(p);
    detail::require(P.rank() == 2 && P.shape[1] == 2 * P.shape[0] - 1,
                    "rel_select expects [l x (2l-1)], got " + shape_str(P.shape));
    const int64_t l = P.shape[0];
    TensorT<T> C(Shape{l, l});
    for (int64_t t = 0; t < l; ++t)
        for (int64_t j = 0; j < l; ++j) C.at2(t, j) = P.at2(t, l - 1 + t - j);
    return tape.emplace(std::move(C), {p.id}, [l](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dP = t.grad_buffer(node.inputs[0]);
        const int64_t w = 2 * l - 1;
        for (int64_t ti = 0; ti < l; ++ti)
            for (int64_t j = 0; j < l; ++j)
                dP[static_cast<size_t>(ti * w + l - 1 + ti - j)] += node.grad[static_cast<size_t>(ti * l + j)];
    });
}

// ---------------------------------------------------------------------------
// Reductions.
template <class T>
VarT<T> row_sum(TapeT<T>& tape, VarT<T> a) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2, "row_sum expects a matrix, got " + shape_str(A.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    TensorT<T> C(Shape{m});
    for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += static_cast<double>(A.at2(i, j));
        C.data[static_cast<size_t>(i)] = static_cast<T>(acc);
    }
    return tape.emplace(std::move(C), {a.id}, [m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) dA[static_cast<size_t>(i * n + j)] += node.grad[static_cast<size_t>(i)];
    });
}

// Mean over rows: [m x n] -> [n].
template <class T>
VarT<T> mean_pool(TapeT<T>& tape, VarT<T> a) {
    const TensorT<T>& A = tape.value(a);
    detail::require(A.rank() == 2, "mean_pool expects a matrix, got " + shape_str(A.shape));
    const int64_t m = A.shape[0], n = A.shape[1];
    TensorT<T> C(Shape{n});
    for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < m; ++i) acc += static_cast<double>(A.at2(i, j));
        C.data[static_cast<size_t>(j)] = static_cast<T>(acc / static_cast<double>(m));
    }
    return tape.emplace(std::move(C), {a.id}, [m, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                dA[static_cast<size_t>(i * n + j)] += static_cast<T>(static_cast<double>(node.grad[static_cast<size_t>(j)]) / static_cast<double>(m));
    });
}

template <class T>
VarT<T> sum_all(TapeT<T>& tape, VarT<T> a) {
    const TensorT<T>& A = tape.value(a);
    double acc = 0.0;
    for (T v : A.data) acc += static_cast<double>(v);
    TensorT<T> C(Shape{1});
    C.data[0] = static_cast<T>(acc);
    return tape.emplace(std::move(C), {a.id}, [](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < dA.size(); ++i) dA[i] += node.grad[0];
    });
}

template <class T>
VarT<T> mean_all(TapeT<T>& tape, VarT<T> a) {
    const TensorT<T>& A = tape.value(a);
    const double inv = 1.0 / static_cast<double>(A.size());
    double acc = 0.0;
    for (T v : A.data) acc += static_cast<double>(v);
    TensorT<T> C(Shape{1});
    C.data[0] = static_cast<T>(acc * inv);
    return tape.emplace(std::move(C), {a.id}, [inv](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        std::vector<T>& dA = t.grad_buffer(node.inputs[0]);
        for (size_t i = 0; i < dA.size(); ++i) dA[i] += static_cast<T>(static_cast<double>(node.grad[0]) * inv);
    });
}

// ---------------------------------------------------------------------------
// Mean binary cross-entropy of sigmoid(scores) against fixed targets,
// computed in the numerically stable log1p form.
template <class T>
VarT<T> bce_with_logits_mean(TapeT<T>& tape, VarT<T> scores, const std::vector<double>& targets) {
    const TensorT<T>& S = tape.value(scores);
    detail::require(static_cast<size_t>(S.size()) == targets.size(),
                    "bce targets " + std::to_string(targets.size()) + " vs scores " + shape_str(S.shape));
    const size_t n = targets.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(S.data[i]);
        acc += std::max(s, 0.0) - s * targets[i] + std::log1p(std::exp(-std::fabs(s)));
    }
    TensorT<T> C(Shape{1});
    C.data[0] = static_cast<T>(acc / static_cast<double>(n));
    return tape.emplace(std::move(C), {scores.id}, [targets, n](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Sv = t.node(node.inputs[0]).value;
        std::vector<T>& dS = t.grad_buffer(node.inputs[0]);
        const double g = static_cast<double>(node.grad[0]) / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            const double s = static_cast<double>(Sv.data[i]);
            const double sig = 1.0 / (1.0 + std::exp(-s));
            dS[i] += static_cast<T>(g * (sig - targets[i]));
        }
    });
}

// ---------------------------------------------------------------------------
// Row-wise layer normalization with learned gain/offset.
template <class T>
VarT<T> layer_norm(TapeT<T>& tape, VarT<T> x, VarT<T> gamma, VarT<T> beta, double eps = 1e-5) {
    const TensorT<T>& X = tape.value(x);
    const TensorT<T>& G = tape.value(gamma);
    const TensorT<T>& B = tape.value(beta);
    detail::require(X.rank() == 2 && G.size() == X.shape[1] && B.size() == X.shape[1],
                    "layer_norm shapes " + shape_str(X.shape) + ", " + shape_str(G.shape) + ", " + shape_str(B.shape));
    const int64_t m = X.shape[0], n = X.shape[1];
    TensorT<T> C(X.shape);
    for (int64_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += static_cast<double>(X.at2(i, j));
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double d = static_cast<double>(X.at2(i, j)) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < n; ++j) {
            const double xh = (static_cast<double>(X.at2(i, j)) - mean) * inv;
            C.at2(i, j) = static_cast<T>(xh * static_cast<double>(G.data[static_cast<size_t>(j)]) + static_cast<double>(B.data[static_cast<size_t>(j)]));
        }
    }
    return tape.emplace(std::move(C), {x.id, gamma.id, beta.id}, [m, n, eps](TapeT<T>& t, int id) {
        auto& node = t.node(id);
        const TensorT<T>& Xv = t.node(node.inputs[0]).value;
        const TensorT<T>& Gv = t.node(node.inputs[1]).value;
        const bool gx = t.node(node.inputs[0]).requires_grad;
        const bool gg = t.node(node.inputs[1]).requires_grad;
        const bool gb = t.node(node.inputs[2]).requires_grad;
        std::vector<T>* dX = gx ? &t.grad_buffer(node.inputs[0]) : nullptr;
        std::vector<T>* dG = gg ? &t.grad_buffer(node.inputs[1]) : nullptr;
        std::vector<T>* dB = gb ? &t.grad_buffer(node.inputs[2]) : nullptr;
        std::vector<double> xh(static_cast<size_t>(n));
        for (int64_t i = 0; i < m; ++i) {
            double mean = 0.0;
            for (int64_t j = 0; j < n; ++j) mean += static_cast<double>(Xv.at2(i, j));
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                const double d = static_cast<double>(Xv.at2(i, j)) - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            const double inv = 1.0 / std::sqrt(var + eps);
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                xh[static_cast<size_t>(j)] = (static_cast<double>(Xv.at2(i, j)) - mean) * inv;
                const double dy = static_cast<double>(node.grad[static_cast<size_t>(i * n + j)]);
                if (dB) (*dB)[static_cast<size_t>(j)] += static_cast<T>(dy);
                if (dG) (*dG)[static_cast<size_t>(j)] += static_cast<T>(dy * xh[static_cast<size_t>(j)]);
                const double dxh = dy * static_cast<double>(Gv.data[static_cast<size_t>(j)]);
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh[static_cast<size_t>(j)];
            }
            if (dX) {
                for (int64_t j = 0; j < n; ++j) {
                    const double dy = static_cast<double>(node.grad[static_cast<size_t>(i * n + j)]);
                    const double dxh = dy * static_cast<double>(Gv.data[static_cast<size_t>(j)]);
                    const double v = (dxh - sum_dxh / static_cast<double>(n) - xh[static_cast<size_t>(j)] * sum_dxh_xh / static_cast<double>(n)) * inv;
                    (*dX)[static_cast<size_t>(i * n + j)] += static_cast<T>(v);
                }
            }
        }
    });
}

// Inverted dropout with a caller-supplied deterministic RNG; identity when
// rate is zero.
template <class T>
VarT<T> dropout(TapeT<T>& tape, VarT<T> a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    const TensorT<T>& A = tape.value(a);
    TensorT<T> mask(A.shape);
    const double keep = 1.0 - rate;
    for (auto& v : mask.data) v = rng.uniform() < keep ? static_cast<T>(1.0 / keep) : T(0);
    return mul(tape, a, tape.constant(std::move(mask)));
}

}  // namespace kgje
