#pragma once

#include "deepcross/autodiff.hpp"
#include "deepcross/rng.hpp"

#include <span>
#include <vector>

namespace deepcross {

struct GruWeights {
    Var reset;     // [h x (h + input)]
    Var update;    // [h x (h + input)]
    Var candidate; // [h x (h + input)]
};

/// Gated recurrent unit without bias terms.
class Gru {
public:
    Gru() = default;
    Gru(std::size_t hidden, std::size_t input, Rng& rng);

    std::size_t hidden() const { return hidden_; }
    GruWeights bind(Tape& tape);
    GruWeights bind_frozen(Tape& tape) const;
    std::vector<Param*> params() { return {&reset_, &update_, &candidate_}; }

private:
    std::size_t hidden_ = 0;
    Param reset_, update_, candidate_;
};

/// Per-step flattening of [T x N x d] into T vectors of length N * d, channel-major.
std::vector<Var> time_concat(Var x);

/**
 * u = sigmoid(W_r [h, e]); z = sigmoid(W_z [h, e]);
 * h~ = tanh(W_h [u * h, e]); h' = z * h~ + (1 - z) * h. Returns the last state.
 */
Var gru_forward(std::span<const Var> inputs, const GruWeights& w, Var h0);

struct Prediction {
    Var scores;     // per-class sigmoid, [k]
    Var normalized; // scores / sum(scores), [k]
};

Prediction predict(Var hidden, Var projection);

/// (1 - p^q) / q with p = normalized[label] clamped to [1e-12, 1 - 1e-12].
Var lq_loss(Var normalized, std::size_t label, double q);

/// Throws std::invalid_argument unless 0 < q <= 1.
void validate_q(double q);

} // namespace deepcross
