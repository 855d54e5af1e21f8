#include "deepcross/head.hpp"

#include "deepcross/ops.hpp"

#include <cmath>

namespace deepcross {
namespace {

Param gate(const std::string& name, std::size_t hidden, std::size_t width, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(double(hidden));
    Tensor w(Shape{hidden, width});
    for (double& v : w.values())
        v = rng.uniform(-bound, bound);
    return Param(name, std::move(w));
}

} // namespace

Gru::Gru(std::size_t hidden, std::size_t input, Rng& rng) : hidden_(hidden)
{
    if (hidden == 0 || input == 0)
        throw std::invalid_argument("gru: sizes must be positive");
    reset_ = gate("gru.reset", hidden, hidden + input, rng);
    update_ = gate("gru.update", hidden, hidden + input, rng);
    candidate_ = gate("gru.candidate", hidden, hidden + input, rng);
}

GruWeights Gru::bind(Tape& tape)
{
    return {tape.param(reset_), tape.param(update_), tape.param(candidate_)};
}

GruWeights Gru::bind_frozen(Tape& tape) const
{
    return {tape.frozen(reset_.value), tape.frozen(update_.value), tape.frozen(candidate_.value)};
}

std::vector<Var> time_concat(Var x)
{
    const Shape& s = x.shape();
    if (s.size() != 3)
        throw DimensionError("time_concat: expected [T x N x d], got " + shape_string(s));
    std::vector<Var> out;
    out.reserve(s[0]);
    for (std::size_t t = 0; t < s[0]; ++t)
        out.push_back(reshape(slice0(x, t, t + 1), Shape{s[1] * s[2]}));
    return out;
}

Var gru_forward(std::span<const Var> inputs, const GruWeights& w, Var h0)
{
    Var h = h0;
    for (const Var& e : inputs) {
        const Var joint[] = {h, e};
        const Var hx = concat(joint, 0);
        const Var u = sigmoid(matvec(w.reset, hx));
        const Var z = sigmoid(matvec(w.update, hx));
        const Var gated[] = {hadamard(u, h), e};
        const Var candidate = tanh(matvec(w.candidate, concat(gated, 0)));
        // z * h~ + (1 - z) * h == h + z * (h~ - h)
        h = add(h, hadamard(z, sub(candidate, h)));
    }
    return h;
}

Prediction predict(Var hidden, Var projection)
{
    const Var scores = sigmoid(matvec(projection, hidden));
    return {scores, div(scores, sum(scores))};
}

void validate_q(double q)
{
    if (!(q > 0.0 && q <= 1.0))
        throw std::invalid_argument("q must lie in (0, 1], got " + std::to_string(q));
}

Var lq_loss(Var normalized, std::size_t label, double q)
{
    validate_q(q);
    const Var p = clamp(pick(normalized, label), 1e-12, 1.0 - 1e-12);
    return scale(add_scalar(scale(pow(p, q), -1.0), 1.0), 1.0 / q);
}

} // namespace deepcross
