#pragma once

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "kgje/errors.hpp"

namespace kgje {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. `grad` is empty until gradient flow touches it.
template <class T>
struct TensorT {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;

    TensorT() = default;
    explicit TensorT(Shape s, T fill = T(0)) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), fill) {
        for (int64_t d : shape)
            if (d <= 0) throw DimError("nonpositive dimension in shape " + shape_str(shape));
    }
    TensorT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<int64_t>(data.size()) != numel(shape))
            throw DimError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int64_t rank() const { return static_cast<int64_t>(shape.size()); }

    int64_t rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : -1); }
    int64_t cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : -1); }

    T& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    const T& at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void clear_grad() { grad.clear(); }
    bool has_grad() const { return grad.size() == data.size() && !data.empty(); }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }
    static TensorT full(Shape s, T v) { return TensorT(std::move(s), v); }

    // Convenience for literal test fixtures: row-major 2-D initializer.
    static TensorT from_rows(std::initializer_list<std::initializer_list<T>> rows_init) {
        int64_t r = static_cast<int64_t>(rows_init.size());
        int64_t c = r ? static_cast<int64_t>(rows_init.begin()->size()) : 0;
        std::vector<T> d;
        d.reserve(static_cast<size_t>(r * c));
        for (const auto& row : rows_init) {
            if (static_cast<int64_t>(row.size()) != c) throw DimError("ragged initializer rows");
            for (T v : row) d.push_back(v);
        }
        return TensorT(Shape{r, c}, std::move(d));
    }
    static TensorT from_vec(std::vector<T> v) {
        Shape s{static_cast<int64_t>(v.size())};
        return TensorT(std::move(s), std::move(v));
    }
};

using Tensor = TensorT<float>;

}  // namespace kgje
