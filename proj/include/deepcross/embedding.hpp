#pragma once

#include "deepcross/autodiff.hpp"
#include "deepcross/data.hpp"
#include "deepcross/rng.hpp"

#include <optional>
#include <vector>

namespace deepcross {

struct EmbeddingWeights {
    std::vector<Var> tables; // one per non-numerical schema field, schema order
    Var basis;               // [k_num x d], invalid when there are no numerical fields
};

/**
 * Lookup tables for categorical fields ((c_j + 1) x d, the last row is the
 * out-of-vocabulary slot) and one basis row per numerical field.
 */
class EmbeddingLayer {
public:
    EmbeddingLayer() = default;
    EmbeddingLayer(const Schema& schema, std::size_t dim, Rng& rng);

    std::size_t dim() const { return dim_; }
    std::size_t field_count() const { return slot_.size(); }

    EmbeddingWeights bind(Tape& tape);
    EmbeddingWeights bind_frozen(Tape& tape) const;

    std::vector<Param*> params();
    std::vector<Param>& tables() { return tables_; }
    std::optional<Param>& basis() { return basis_; }

    /// Embeds every field of every step: [T x n1 x d], fields in schema order.
    Var embed(const EmbeddingWeights& w, const EncodedSample& sample) const;

private:
    std::size_t dim_ = 0;
    std::vector<bool> numerical_;
    std::vector<std::size_t> slot_; // row of the basis or index of the table
    std::vector<Param> tables_;
    std::optional<Param> basis_;
    std::vector<std::size_t> to_schema_order_; // empty when numerical fields already come first
};

/// e = a . L: row lookup for an index, probability-weighted row sum for a distribution. Returns [d].
Var embed_categorical(const EncodedValue& value, Var table);

/// e = x . b. Returns [d].
Var embed_numerical(double x, Var basis_row);

} // namespace deepcross
