#include "deepcross/crossing.hpp"

#include "deepcross/ops.hpp"

#include <cmath>

namespace deepcross {

CrossingBlock::CrossingBlock(std::size_t rank, std::size_t n1, std::size_t n_prev, std::size_t width,
                             std::size_t time_span, Rng& rng)
    : rank_(rank), n1_(n1), n_prev_(n_prev), width_(width)
{
    if (n1 == 0 || n_prev == 0 || width == 0 || time_span == 0)
        throw std::invalid_argument("crossing block: all extents must be positive");
    const std::string prefix = "crossing." + std::to_string(rank) + ".";
    query_ = Param(prefix + "query", Tensor(Shape{time_span}, 1.0 / double(time_span)));
    key_ = Param(prefix + "key", Tensor(Shape{time_span}, 1.0 / double(time_span)));
    const std::size_t c_in = n1 * n_prev;
    const double bound = 1.0 / std::sqrt(double(c_in));
    Tensor w(Shape{c_in, width});
    for (double& v : w.values())
        v = rng.uniform(-bound, bound);
    pca_ = Param(prefix + "selection", std::move(w));
}

std::vector<ChannelOrigin> CrossingBlock::origins() const
{
    std::vector<ChannelOrigin> out;
    for (std::size_t c = 0; c < channels_in(); ++c)
        out.push_back(origin(c));
    return out;
}

CrossingWeights CrossingBlock::bind(Tape& tape)
{
    return {tape.param(query_), tape.param(key_), tape.param(pca_)};
}

CrossingWeights CrossingBlock::bind_frozen(Tape& tape) const
{
    return {tape.frozen(query_.value), tape.frozen(key_.value), tape.frozen(pca_.value)};
}

Var temporal_aggregate(Var x, Var w)
{
    const Shape& s = x.shape();
    if (s.size() != 3 || w.size() != s[0])
        throw DimensionError("temporal_aggregate: " + shape_string(s) + " with weights " + shape_string(w.shape()));
    const Var flat = reshape(x, Shape{s[0], s[1] * s[2]});
    return reshape(matmul(reshape(w, Shape{1, s[0]}), flat), Shape{s[1], s[2]});
}

Var cross_product(Var raw_t, Var prev_t)
{
    const std::size_t n1 = raw_t.shape().at(0), np = prev_t.shape().at(0);
    if (raw_t.shape().at(1) != prev_t.shape().at(1))
        throw DimensionError("cross_product: embedding widths differ");
    std::vector<std::size_t> prev_rows, raw_rows;
    prev_rows.reserve(n1 * np);
    raw_rows.reserve(n1 * np);
    for (std::size_t m = 0; m < np; ++m)
        for (std::size_t k = 0; k < n1; ++k) {
            prev_rows.push_back(m);
            raw_rows.push_back(k);
        }
    return hadamard(gather_rows(prev_t, std::move(prev_rows)), gather_rows(raw_t, std::move(raw_rows)));
}

Var cross_attention(Var raw, Var prev, const CrossingWeights& w)
{
    const Var queries = temporal_aggregate(prev, w.query); // [n_prev x d]
    const Var keys = temporal_aggregate(raw, w.key);       // [n1 x d]
    return softmax(matmul(queries, transpose(keys)), 0);
}

Var residual_scale(Var crossed_t, Var attention)
{
    const Var factor = add_scalar(reshape(attention, Shape{attention.size()}), 1.0);
    return leaky_relu(scale_axis(crossed_t, factor, 0));
}

Var pca_select(Var crossed, Var selection)
{
    const Shape& s = crossed.shape();
    if (s.size() != 3 || selection.shape().size() != 2 || selection.shape()[0] != s[1])
        throw DimensionError("pca_select: " + shape_string(s) + " with selection " +
                             shape_string(selection.shape()));
    const std::size_t T = s[0], c_in = s[1], d = s[2], c_out = selection.shape()[1];
    const Var channels = reshape(swap_axes01(crossed), Shape{c_in, T * d});
    const Var mixed = matmul(transpose(selection), channels);
    return swap_axes01(reshape(mixed, Shape{c_out, T, d}));
}

Var lasso_penalty(std::span<const CrossingWeights> blocks)
{
    if (blocks.empty())
        throw std::invalid_argument("lasso_penalty: no blocks");
    Var total = abs_sum(blocks[0].pca);
    for (std::size_t i = 1; i < blocks.size(); ++i)
        total = add(total, abs_sum(blocks[i].pca));
    return total;
}

Var lasso_penalty(Tape& tape, std::span<CrossingBlock> blocks)
{
    if (blocks.empty())
        return tape.constant(Tensor::scalar(0.0));
    std::vector<CrossingWeights> w;
    for (CrossingBlock& b : blocks)
        w.push_back(b.bind(tape));
    return lasso_penalty(w);
}

RankStack run_stack(Var raw, std::span<const CrossingWeights> blocks)
{
    if (raw.shape().size() != 3)
        throw DimensionError("run_stack: raw features must be [T x n1 x d], got " + shape_string(raw.shape()));
    const std::size_t T = raw.shape()[0];
    RankStack st;
    st.ranks.push_back(raw);
    std::vector<Var> raw_steps;
    for (std::size_t t = 0; t < T && !blocks.empty(); ++t)
        raw_steps.push_back(index0(raw, t));

    for (const CrossingWeights& w : blocks) {
        const Var prev = st.ranks.back();
        const std::size_t c_in = prev.shape()[1] * raw.shape()[1];
        if (w.pca.shape().size() != 2 || w.pca.shape()[0] != c_in || w.query.size() != T || w.key.size() != T)
            throw DimensionError("run_stack: block weights do not match " + std::to_string(c_in) +
                                 " crossed channels over " + std::to_string(T) + " steps");
        const Var a = cross_attention(raw, prev, w);
        std::vector<Var> crossed;
        crossed.reserve(T);
        for (std::size_t t = 0; t < T; ++t)
            crossed.push_back(residual_scale(cross_product(raw_steps[t], index0(prev, t)), a));
        st.attentions.push_back(a);
        st.ranks.push_back(pca_select(stack(crossed), w.pca));
    }
    st.concatenated = st.ranks.size() == 1 ? raw : concat(st.ranks, 1);
    return st;
}

} // namespace deepcross
