#pragma once

#include "deepcross/autodiff.hpp"
#include "deepcross/rng.hpp"

#include <span>
#include <vector>

namespace deepcross {

/// Parent pair of a crossed channel c = prev * n1 + raw.
struct ChannelOrigin {
    std::size_t prev; // channel of the previous rank
    std::size_t raw;  // rank-1 field
    bool operator==(const ChannelOrigin&) const = default;
};

struct CrossingWeights {
    Var query; // [T]
    Var key;   // [T]
    Var pca;   // [c_in x c_out]
};

/**
 * One feature-crossing block producing rank `rank` features from the raw
 * features (n1 channels) and the previous rank (n_prev channels).
 *
 * The channel-selection matrix carries the lasso penalty; its non-zero
 * entries identify the retained combinations.
 */
class CrossingBlock {
public:
    CrossingBlock() = default;
    CrossingBlock(std::size_t rank, std::size_t n1, std::size_t n_prev, std::size_t width, std::size_t time_span,
                  Rng& rng);

    std::size_t rank() const { return rank_; }
    std::size_t raw_channels() const { return n1_; }
    std::size_t prev_channels() const { return n_prev_; }
    std::size_t channels_in() const { return n1_ * n_prev_; }
    std::size_t channels_out() const { return width_; }

    ChannelOrigin origin(std::size_t channel) const { return {channel / n1_, channel % n1_}; }
    std::vector<ChannelOrigin> origins() const;

    CrossingWeights bind(Tape& tape);
    CrossingWeights bind_frozen(Tape& tape) const;

    Param& query() { return query_; }
    Param& key() { return key_; }
    Param& selection() { return pca_; }
    const Param& selection() const { return pca_; }
    std::vector<Param*> params() { return {&query_, &key_, &pca_}; }

private:
    std::size_t rank_ = 2, n1_ = 0, n_prev_ = 0, width_ = 0;
    Param query_, key_, pca_;
};

/// out[m, :] = sum_t w[t] * X[t, m, :]
Var temporal_aggregate(Var x, Var w);

/// Channel m * n1 + k holds prev_t[m, :] (.) raw_t[k, :].
Var cross_product(Var raw_t, Var prev_t);

/// a[m, k] = softmax over m of <Q[m], K[k]>, Q and K aggregated over time. Returns [n_prev x n1].
Var cross_attention(Var raw, Var prev, const CrossingWeights& w);

/// leaky_relu((1 + a[m, k]) * x) for channel (m, k).
Var residual_scale(Var crossed_t, Var attention);

/// out[t, o, :] = sum_c W[c, o] * crossed[t, c, :]
Var pca_select(Var crossed, Var selection);

/// Sum over blocks of the entrywise absolute value of each selection matrix.
Var lasso_penalty(std::span<const CrossingWeights> blocks);
Var lasso_penalty(Tape& tape, std::span<CrossingBlock> blocks);

struct RankStack {
    std::vector<Var> ranks;      // X^(1) .. X^(l), each [T x n_i x d]
    std::vector<Var> attentions; // one [n_{i-1} x n1] per block
    Var concatenated;            // [T x N x d]
};

RankStack run_stack(Var raw, std::span<const CrossingWeights> blocks);

} // namespace deepcross
