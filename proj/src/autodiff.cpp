#include "deepcross/autodiff.hpp"

#include <sstream>

namespace deepcross {

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void zero_grads(std::span<Param* const> params)
{
    for (Param* p : params)
        p->zero_grad();
}

void sgd_step(std::span<Param* const> params, double lr)
{
    for (Param* p : params) {
        if (!p->trainable)
            continue;
        p->value.flat() -= lr * p->grad.flat();
    }
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::param(Param& p)
{
    if (auto it = bound_.find(&p); it != bound_.end())
        return {this, it->second};
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.needs_grad = p.trainable;
    nodes_.push_back(std::move(n));
    bound_.emplace(&p, nodes_.size() - 1);
    return {this, nodes_.size() - 1};
}

Var Tape::frozen(const Tensor& value)
{
    Node n;
    n.ref = &value;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn)
{
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn)
{
    Node n;
    n.value = std::move(value);
    for (const Var& v : inputs)
        n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
    if (n.needs_grad)
        n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id)
{
    Node& n = nodes_[id];
    if (!n.grad)
        n.grad.emplace(value(id).shape());
    return *n.grad;
}

void Tape::backward(const Var& loss)
{
    if (&loss.tape() != this)
        throw std::logic_error("backward: loss belongs to a different tape");
    if (loss.size() != 1)
        throw std::logic_error("backward: loss must be a single element, got shape " +
                               shape_string(loss.shape()));
    visited_.clear();
    if (nodes_[loss.id()].needs_grad) {
        grad(loss.id())[0] += 1.0;
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.grad)
                continue;
            if (n.param) {
                n.param->grad.flat() += n.grad->flat();
            } else if (n.backward) {
                if (trace_)
                    visited_.push_back(i);
                n.backward(*this, i);
            }
        }
    }
    clear();
}

void Tape::clear()
{
    nodes_.clear();
    bound_.clear();
}

} // namespace deepcross
