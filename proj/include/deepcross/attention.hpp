#pragma once

#include "deepcross/autodiff.hpp"

namespace deepcross {

struct AttentionOutput {
    Var output; // same shape as the input
    Var scores; // probability vector retained for explanations
};

/// One T x d weight matrix per feature channel, zero-initialised.
class FeatureAttention {
public:
    FeatureAttention() = default;
    FeatureAttention(std::size_t channels, std::size_t time_span, std::size_t dim);

    Var bind(Tape& tape) { return tape.param(weight_); }
    Var bind_frozen(Tape& tape) const { return tape.frozen(weight_.value); }
    Param& weight() { return weight_; }

private:
    Param weight_;
};

/// Sliding window of odd width s over time, weight [s x N x d], zero-initialised.
class TemporalAttention {
public:
    TemporalAttention() = default;
    TemporalAttention(std::size_t window, std::size_t channels, std::size_t dim, std::size_t time_span);

    std::size_t window() const { return window_; }
    Var bind(Tape& tape) { return tape.param(weight_); }
    Var bind_frozen(Tape& tape) const { return tape.frozen(weight_.value); }
    Param& weight() { return weight_; }

private:
    std::size_t window_ = 1;
    Param weight_;
};

/// Throws std::invalid_argument unless s is odd and 1 <= s <= T.
void validate_window(std::size_t window, std::size_t time_span);

/**
 * p_i = softmax_i(<X[:, i, :], W_i>); output[:, i, :] = relu((1 + p_i) X[:, i, :]).
 * `weight` is [N x T x d].
 */
AttentionOutput feature_attention(Var x, Var weight);

/**
 * q_t = softmax_t(<window_t(X), W_s>) where window_t covers steps t-(s-1)/2 .. t+(s-1)/2,
 * zero-padded at the ends; output[t] = relu((1 + q_t) X[t]). `weight` is [s x N x d].
 */
AttentionOutput temporal_attention(Var x, Var weight);

} // namespace deepcross
