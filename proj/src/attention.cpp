#include "deepcross/attention.hpp"

#include "deepcross/ops.hpp"

namespace deepcross {

FeatureAttention::FeatureAttention(std::size_t channels, std::size_t time_span, std::size_t dim)
    : weight_("attention.feature", Tensor(Shape{channels, time_span, dim}))
{
}

void validate_window(std::size_t window, std::size_t time_span)
{
    if (window % 2 == 0)
        throw std::invalid_argument("temporal attention window must be odd, got " + std::to_string(window));
    if (window > time_span)
        throw std::invalid_argument("temporal attention window " + std::to_string(window) +
                                    " exceeds time span " + std::to_string(time_span));
}

TemporalAttention::TemporalAttention(std::size_t window, std::size_t channels, std::size_t dim,
                                     std::size_t time_span)
    : window_(window)
{
    validate_window(window, time_span);
    weight_ = Param("attention.temporal", Tensor(Shape{window, channels, dim}));
}

AttentionOutput feature_attention(Var x, Var weight)
{
    const Shape& s = x.shape();
    if (s.size() != 3 || weight.shape() != Shape{s[1], s[0], s[2]})
        throw DimensionError("feature_attention: input " + shape_string(s) + " with weight " +
                             shape_string(weight.shape()));
    const std::size_t T = s[0], N = s[1], d = s[2];
    const Var per_channel = reshape(swap_axes01(x), Shape{N, T * d});
    const Var logits = sum_rows(hadamard(per_channel, reshape(weight, Shape{N, T * d})));
    const Var p = softmax(logits);
    return {relu(scale_axis(x, add_scalar(p, 1.0), 1)), p};
}

AttentionOutput temporal_attention(Var x, Var weight)
{
    const Shape& s = x.shape();
    if (s.size() != 3 || weight.shape().size() != 3 || weight.shape()[1] != s[1] || weight.shape()[2] != s[2])
        throw DimensionError("temporal_attention: input " + shape_string(s) + " with weight " +
                             shape_string(weight.shape()));
    const std::size_t T = s[0], window = weight.shape()[0];
    validate_window(window, T);
    const std::size_t half = (window - 1) / 2;
    const Var padded = half ? pad0(x, half, half) : x;
    std::vector<Var> logits;
    logits.reserve(T);
    for (std::size_t t = 0; t < T; ++t)
        logits.push_back(sum(hadamard(slice0(padded, t, t + window), weight)));
    const Var q = softmax(T == 1 ? logits.front() : concat(logits, 0));
    return {relu(scale_axis(x, add_scalar(q, 1.0), 0)), q};
}

} // namespace deepcross
