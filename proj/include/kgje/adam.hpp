#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgje/errors.hpp"
#include "kgje/rng.hpp"
#include "kgje/tensor.hpp"

namespace kgje {

// Named trainable tensors with deterministic (lexicographic) iteration.
template <class T>
class ParamStoreT {
  public:
    TensorT<T>& create(const std::string& name, Shape shape) {
        if (params_.count(name)) throw UsageError("parameter '" + name + "' already exists");
        return params_[name] = TensorT<T>(std::move(shape));
    }
    TensorT<T>& create(const std::string& name, TensorT<T> init) {
        if (params_.count(name)) throw UsageError("parameter '" + name + "' already exists");
        return params_[name] = std::move(init);
    }
    TensorT<T>& create_uniform(const std::string& name, Shape shape, Rng& rng, double scale) {
        TensorT<T>& p = create(name, std::move(shape));
        for (auto& v : p.data) v = static_cast<T>(rng.uniform(-scale, scale));
        return p;
    }
    // Xavier/Glorot range for a [fan_in x fan_out] matrix.
    TensorT<T>& create_xavier(const std::string& name, Shape shape, Rng& rng) {
        double fan_in = static_cast<double>(shape[0]);
        double fan_out = shape.size() > 1 ? static_cast<double>(shape[1]) : fan_in;
        return create_uniform(name, std::move(shape), rng, std::sqrt(6.0 / (fan_in + fan_out)));
    }

    TensorT<T>& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw LookupError("unknown parameter '" + name + "'");
        return it->second;
    }
    const TensorT<T>& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw LookupError("unknown parameter '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    // Embedding-style tables where an optimizer step must leave rows that
    // carried zero gradient untouched.
    void flag_row_sparse(const std::string& name) { row_sparse_.insert(name); }
    bool is_row_sparse(const std::string& name) const { return row_sparse_.count(name) != 0; }

    void zero_grads() {
        for (auto& [name, p] : params_) {
            (void)name;
            p.grad.assign(p.data.size(), T(0));
        }
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    size_t size() const { return params_.size(); }

  private:
    std::map<std::string, TensorT<T>> params_;
    std::set<std::string> row_sparse_;
};

// Adam with bias correction. A parameter (or, for row-sparse tables, a row)
// whose gradient is entirely zero is skipped: its value and moments do not
// move, so entities absent from a batch stay untouched.
template <class T>
class AdamT {
  public:
    explicit AdamT(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        if (lr <= 0.0) throw UsageError("Adam learning rate must be positive");
    }

    int64_t steps() const { return t_; }

    void step(ParamStoreT<T>& store) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, p] : store) {
            if (!p.has_grad()) throw UsageError("parameter '" + name + "' has no gradient");
            Slot& slot = slots_[name];
            if (slot.m.size() != p.data.size()) {
                slot.m.assign(p.data.size(), 0.0);
                slot.v.assign(p.data.size(), 0.0);
            }
            const bool row_sparse = store.is_row_sparse(name) && p.rank() == 2;
            const int64_t row_len = row_sparse ? p.shape[1] : static_cast<int64_t>(p.data.size());
            const int64_t rows = static_cast<int64_t>(p.data.size()) / row_len;
            for (int64_t r = 0; r < rows; ++r) {
                const size_t base = static_cast<size_t>(r * row_len);
                bool all_zero = true;
                for (int64_t j = 0; j < row_len && all_zero; ++j) all_zero = p.grad[base + static_cast<size_t>(j)] == T(0);
                if (all_zero) continue;
                for (int64_t j = 0; j < row_len; ++j) {
                    const size_t k = base + static_cast<size_t>(j);
                    const double g = static_cast<double>(p.grad[k]);
                    slot.m[k] = beta1_ * slot.m[k] + (1.0 - beta1_) * g;
                    slot.v[k] = beta2_ * slot.v[k] + (1.0 - beta2_) * g * g;
                    const double mhat = slot.m[k] / bc1;
                    const double vhat = slot.v[k] / bc2;
                    p.data[k] = static_cast<T>(static_cast<double>(p.data[k]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
                }
            }
        }
        store.zero_grads();
    }

  private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::map<std::string, Slot> slots_;
    int64_t t_ = 0;
    double lr_, beta1_, beta2_, eps_;
};

using ParamStore = ParamStoreT<float>;
using Adam = AdamT<float>;

}  // namespace kgje
