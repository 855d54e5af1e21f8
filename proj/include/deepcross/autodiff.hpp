#pragma once

#include "deepcross/tensor.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

namespace deepcross {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    Shape shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/**
 * Ordered record of primitive operations.
 *
 * Every op appends one node holding its output value and a closure that
 * propagates the output gradient to its inputs. backward() walks the nodes in
 * reverse recording order, accumulates into the gradients of every Param that
 * was bound with param(), and clears the tape.
 */
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);

    /// Binds a parameter; repeated calls for the same Param return the same node.
    Var param(Param& p);

    /// Binds a tensor by reference without gradient tracking. The tensor must outlive the tape.
    Var frozen(const Tensor& value);

    /// Records an op output. `inputs` decide whether the node needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

    const Tensor& value(std::size_t id) const
    {
        const Node& n = nodes_[id];
        return n.ref ? *n.ref : n.value;
    }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

    /// Gradient buffer of a node, zero-initialised on first access.
    Tensor& grad(std::size_t id);

    /// Reverse sweep from a single-element loss. Clears the tape afterwards.
    void backward(const Var& loss);

    void clear();
    std::size_t size() const { return nodes_.size(); }

    /// When enabled, backward() stores the ids of the nodes it visited, in visit order.
    void set_trace(bool on) { trace_ = on; }
    const std::vector<std::size_t>& last_backward_order() const { return visited_; }

private:
    struct Node {
        Tensor value;
        const Tensor* ref = nullptr;
        std::optional<Tensor> grad;
        Param* param = nullptr;
        bool needs_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_; // stable references across record()
    std::unordered_map<const Param*, std::size_t> bound_;
    bool trace_ = false;
    std::vector<std::size_t> visited_;
};

inline const Tensor& Var::value() const
{
    return tape_->value(id_);
}

} // namespace deepcross
