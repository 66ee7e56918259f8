#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "kgje/errors.hpp"
#include "kgje/tensor.hpp"

namespace kgje {

// Handle to a node on a tape. Cheap to copy; only valid for the tape that
// produced it.
template <class T>
struct VarT {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Recorded computation tape for reverse-mode differentiation.
//
// Nodes are appended in execution order, so node index order is already a
// topological order: backward() walks indices from the loss down to zero.
// A tape and its tensors are confined to one thread; independent tapes may
// run in parallel.
template <class T>
class TapeT {
  public:
    using Var = VarT<T>;
    // backward(tape, node_id): propagate nodes_[node_id].grad into the
    // grads of its inputs.
    using BackwardFn = std::function<void(TapeT&, int)>;

    struct Node {
        TensorT<T> value;
        std::vector<T> grad;  // empty until reached by backward
        std::vector<int> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    // Non-differentiable constant.
    Var constant(TensorT<T> v) {
        Node n;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    // Differentiable leaf (a parameter copied onto the tape).
    Var leaf(const TensorT<T>& v) {
        Node n;
        n.value = v;
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var emplace(TensorT<T> value, std::vector<int> inputs, BackwardFn backward) {
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        for (int i : n.inputs)
            if (node(i).requires_grad) n.requires_grad = true;
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const TensorT<T>& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    TensorT<T>& value(Var v) { return nodes_[static_cast<size_t>(v.id)].value; }

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    size_t size() const { return nodes_.size(); }

    // Grad of a node after backward(); empty vector if the node was not
    // reached (treated as all-zero by callers).
    const std::vector<T>& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

    std::vector<T>& grad_buffer(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.size() != n.value.data.size()) n.grad.assign(n.value.data.size(), T(0));
        return n.grad;
    }

    // Reverse-mode sweep from a scalar loss node. Populates grads of every
    // node that (transitively) requires grad and contributes to the loss.
    void backward(Var loss) {
        if (!loss.valid() || static_cast<size_t>(loss.id) >= nodes_.size())
            throw UsageError("backward on an invalid node");
        Node& top = node(loss.id);
        if (top.value.size() != 1)
            throw UsageError("backward requires a scalar loss, got shape " + shape_str(top.value.shape));
        grad_buffer(loss.id)[0] = T(1);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = node(id);
            if (n.grad.empty() || !n.requires_grad || !n.backward) continue;
            n.backward(*this, id);
        }
    }

    void clear() { nodes_.clear(); }

  private:
    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;
using Var = VarT<float>;

}  // namespace kgje
