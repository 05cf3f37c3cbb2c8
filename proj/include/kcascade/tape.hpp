#pragma once

#include <functional>
#include <utility>

#include "kcascade/tensor.hpp"

namespace kcascade {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Append-only record of forward operations and their adjoint rules.
/// Nodes are stored in topological order by construction; backward()
/// walks them in reverse. A Tape is single-threaded.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int node_id)>;

    Var leaf(Tensor value) {
        bool rg = value.requires_grad;
        return record(std::move(value), {}, nullptr, rg);
    }

    Var record(Tensor value, std::vector<int> inputs, BackwardFn backward,
               bool force_needs_grad = false) {
        bool needs = force_needs_grad;
        for (int in : inputs) {
            if (in < 0 || in >= static_cast<int>(nodes_.size()))
                throw std::logic_error("Tape: input node not on this tape");
            needs = needs || nodes_[static_cast<std::size_t>(in)].needs_grad;
        }
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs),
                              std::move(backward), needs});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(Var v) const { return node(v.id).value; }

    bool needs_grad(Var v) const { return node(v.id).needs_grad; }

    bool has_grad(Var v) const { return node(v.id).grad.size() > 0; }

    const Tensor& grad(Var v) const {
        const Node& n = node(v.id);
        if (n.grad.size() == 0) throw std::logic_error("Tape: no gradient at node");
        return n.grad;
    }

    Tensor grad_or_zero(Var v) const {
        const Node& n = node(v.id);
        if (n.grad.size() == 0) return Tensor(n.value.shape());
        return n.grad;
    }

    /// Add g into the gradient accumulator of node id.
    void accumulate(int id, const Tensor& g) {
        Node& n = node(id);
        check_same_shape(n.value, g, "Tape::accumulate");
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            for (std::int64_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
        }
    }

    /// Reverse pass from a scalar loss node.
    void backward(Var loss) {
        Node& ln = node(loss.id);
        if (ln.value.size() != 1)
            throw std::invalid_argument("backward: loss must be a scalar");
        ln.grad = Tensor(ln.value.shape(), 1.0);
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.size() == 0 || !n.backward) continue;
            bool any_input_needs = false;
            for (int in : n.inputs)
                any_input_needs |= nodes_[static_cast<std::size_t>(in)].needs_grad;
            if (any_input_needs) n.backward(*this, id);
        }
    }

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    const std::vector<int>& inputs_of(int id) const { return node(id).inputs; }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until backward touches it
        std::vector<int> inputs;
        BackwardFn backward;
        bool needs_grad = false;
    };

    Node& node(int id) {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("Tape: bad node id");
        return nodes_[static_cast<std::size_t>(id)];
    }
    const Node& node(int id) const {
        return const_cast<Tape*>(this)->node(id);
    }

    std::vector<Node> nodes_;
};

}  // namespace kcascade
