#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace deepcross {

enum class FieldKind { numerical, categorical, multi_valued };

std::string_view to_string(FieldKind kind);
FieldKind parse_field_kind(std::string_view s);

struct FieldSpec {
    std::string name;
    FieldKind kind = FieldKind::numerical;
    bool operator==(const FieldSpec&) const = default;
};

/// Which columns of a long-format CSV to read and how many steps each sample carries.
struct SchemaConfig {
    std::vector<FieldSpec> fields;
    std::string label_column = "label";
    std::size_t time_span = 5;
};

/// Category weights of a multi-valued field, e.g. "retail:0.7;online:0.3".
using Distribution = std::vector<std::pair<std::string, double>>;

/// Raw cell: number (NaN when missing), category, or category distribution.
using RawValue = std::variant<double, std::string, Distribution>;

/// One company's ordered record. steps[t][j] follows SchemaConfig::fields order.
struct SequencedSample {
    std::string entity_id;
    std::vector<std::vector<RawValue>> steps;
    int label = 0;
};

class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

struct LoadResult {
    std::vector<SequencedSample> samples;
    std::size_t dropped_entities = 0;
    std::size_t missing_cells = 0;
    std::vector<RowError> row_errors;
    std::vector<std::string> warnings;
};

LoadResult load_csv(const std::filesystem::path& path, const SchemaConfig& config);
LoadResult read_csv(std::istream& in, const SchemaConfig& config);

/// Writes the long format read by load_csv; the label goes on each entity's final row only.
void write_csv(std::ostream& out, std::span<const SequencedSample> samples, const SchemaConfig& config);
void write_csv(const std::filesystem::path& path, std::span<const SequencedSample> samples,
               const SchemaConfig& config);

Distribution parse_distribution(std::string_view cell);
std::string format_distribution(const Distribution& d);

/// A fitted input field. `source` indexes the SchemaConfig field the values come from.
struct FeatureField {
    std::string name;
    FieldKind kind = FieldKind::numerical;
    std::size_t source = 0;
    std::vector<std::string> vocab;
    double mean = 0.0;
    double std = 1.0;

    /// Reserved slot for categories never seen in training.
    std::size_t oov_index() const { return vocab.size(); }
    bool is_numerical() const { return kind == FieldKind::numerical; }
    bool operator==(const FeatureField&) const = default;
};

struct Schema {
    std::vector<FeatureField> fields;
    std::vector<std::string> dropped;
    std::vector<std::string> warnings;

    std::size_t size() const { return fields.size(); }
    std::size_t numerical_count() const;
    std::vector<std::string> names() const;
    /// FNV-1a over field names, kinds and vocabularies.
    std::uint64_t hash() const;
};

/// Sorted vocabularies and sample (n-1) mean/std, computed on the training samples only.
Schema build_schema(std::span<const SequencedSample> train, const SchemaConfig& config);

/// Normalised cell: standardised number, vocab index, or distribution of length vocab+1.
using EncodedValue = std::variant<double, std::size_t, std::vector<double>>;

struct EncodedSample {
    std::string entity_id;
    std::vector<std::vector<EncodedValue>> steps; // [T][schema field]
    int label = 0;

    std::size_t time_span() const { return steps.size(); }
};

EncodedSample normalize(const SequencedSample& sample, const Schema& schema);
std::vector<EncodedSample> normalize(std::span<const SequencedSample> samples, const Schema& schema);

struct DatasetSplit {
    std::vector<SequencedSample> train;
    std::vector<SequencedSample> test;
    std::uint64_t seed = 0;
};

/// Entity-level shuffled split; round(ratio * entities) go to train (at least one each side).
DatasetSplit split(std::span<const SequencedSample> samples, double ratio, std::uint64_t seed);

/// Two Uniform(-1,1) signal fields x1, x2 plus `noise_fields` more; label = x1 * x2 > 0 at the final step.
std::vector<SequencedSample> gen_synthetic_interaction(std::size_t n_samples, std::size_t time_span,
                                                       std::size_t noise_fields, std::uint64_t seed);
SchemaConfig synthetic_schema_config(std::size_t time_span, std::size_t noise_fields);

} // namespace deepcross
