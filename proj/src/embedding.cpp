#include "deepcross/embedding.hpp"

#include "deepcross/ops.hpp"

#include <cmath>

namespace deepcross {
namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng)
{
    Tensor t(std::move(shape));
    for (double& v : t.values())
        v = rng.uniform(-bound, bound);
    return t;
}

} // namespace

EmbeddingLayer::EmbeddingLayer(const Schema& schema, std::size_t dim, Rng& rng) : dim_(dim)
{
    if (dim == 0)
        throw std::invalid_argument("embedding: dimension must be positive");
    if (schema.size() == 0)
        throw std::invalid_argument("embedding: schema has no fields");
    const double bound = 1.0 / std::sqrt(double(dim));
    std::size_t n_num = 0;
    std::vector<std::size_t> num_fields, cat_fields;
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const FeatureField& f = schema.fields[j];
        numerical_.push_back(f.is_numerical());
        if (f.is_numerical()) {
            slot_.push_back(n_num++);
            num_fields.push_back(j);
        } else {
            slot_.push_back(tables_.size());
            cat_fields.push_back(j);
            tables_.emplace_back("embedding." + f.name, uniform_init({f.vocab.size() + 1, dim}, bound, rng));
        }
    }
    if (n_num > 0)
        basis_.emplace("embedding.basis", uniform_init({n_num, dim}, bound, rng));

    // embed() produces numerical rows first, then categorical rows.
    std::vector<std::size_t> produced = num_fields;
    produced.insert(produced.end(), cat_fields.begin(), cat_fields.end());
    bool identity = true;
    std::vector<std::size_t> position(produced.size());
    for (std::size_t r = 0; r < produced.size(); ++r) {
        position[produced[r]] = r;
        identity = identity && produced[r] == r;
    }
    if (!identity)
        to_schema_order_ = position;
}

EmbeddingWeights EmbeddingLayer::bind(Tape& tape)
{
    EmbeddingWeights w;
    for (Param& p : tables_)
        w.tables.push_back(tape.param(p));
    if (basis_)
        w.basis = tape.param(*basis_);
    return w;
}

EmbeddingWeights EmbeddingLayer::bind_frozen(Tape& tape) const
{
    EmbeddingWeights w;
    for (const Param& p : tables_)
        w.tables.push_back(tape.frozen(p.value));
    if (basis_)
        w.basis = tape.frozen(basis_->value);
    return w;
}

std::vector<Param*> EmbeddingLayer::params()
{
    std::vector<Param*> out;
    for (Param& p : tables_)
        out.push_back(&p);
    if (basis_)
        out.push_back(&*basis_);
    return out;
}

Var EmbeddingLayer::embed(const EmbeddingWeights& w, const EncodedSample& sample) const
{
    if (sample.steps.empty())
        throw std::invalid_argument("embed: sample has no steps");
    Tape& tape = w.tables.empty() ? w.basis.tape() : w.tables.front().tape();
    const std::size_t n_num = basis_ ? basis_->value.extent(0) : 0;
    std::vector<Var> steps;
    steps.reserve(sample.steps.size());
    for (const auto& step : sample.steps) {
        if (step.size() != slot_.size())
            throw DimensionError("embed: sample step has " + std::to_string(step.size()) + " fields, schema has " +
                                 std::to_string(slot_.size()));
        std::vector<Var> rows;
        if (n_num > 0) {
            Tensor x(Shape{n_num});
            for (std::size_t j = 0; j < step.size(); ++j)
                if (numerical_[j])
                    x[slot_[j]] = std::get<double>(step[j]);
            rows.push_back(scale_axis(w.basis, tape.constant(std::move(x)), 0));
        }
        for (std::size_t j = 0; j < step.size(); ++j)
            if (!numerical_[j])
                rows.push_back(reshape(embed_categorical(step[j], w.tables[slot_[j]]), Shape{1, dim_}));
        Var block = rows.size() == 1 ? rows.front() : concat(rows, 0);
        if (!to_schema_order_.empty())
            block = gather_rows(block, to_schema_order_);
        steps.push_back(block);
    }
    return stack(steps);
}

Var embed_categorical(const EncodedValue& value, Var table)
{
    const std::size_t rows = table.shape().at(0), dim = table.shape().at(1);
    if (const std::size_t* idx = std::get_if<std::size_t>(&value)) {
        if (*idx >= rows)
            throw std::out_of_range("embed_categorical: index " + std::to_string(*idx) + " outside table of " +
                                    std::to_string(rows) + " rows");
        return reshape(gather_rows(table, {*idx}), Shape{dim});
    }
    if (const auto* dist = std::get_if<std::vector<double>>(&value)) {
        if (dist->size() != rows && dist->size() + 1 != rows)
            throw std::out_of_range("embed_categorical: distribution of length " + std::to_string(dist->size()) +
                                    " for a table of " + std::to_string(rows) + " rows");
        Tensor a(Shape{1, rows});
        std::copy(dist->begin(), dist->end(), a.data());
        return reshape(matmul(table.tape().constant(std::move(a)), table), Shape{dim});
    }
    throw std::invalid_argument("embed_categorical: numerical value given to a categorical field");
}

Var embed_numerical(double x, Var basis_row)
{
    return scale(basis_row, x);
}

} // namespace deepcross
