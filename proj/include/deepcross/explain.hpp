#pragma once

#include "deepcross/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace deepcross {

/// Sorted raw-field indices, with multiplicity.
using FieldMultiset = std::vector<std::size_t>;

struct NonzeroEntry {
    std::size_t in = 0;
    std::size_t out = 0;
    double weight = 0.0;
    bool operator==(const NonzeroEntry&) const = default;
};

/// Entries with |W| > epsilon, row-major order.
std::vector<NonzeroEntry> extract_nonzero(const Tensor& selection, double epsilon);

struct CombinationPattern {
    std::size_t rank = 1;
    FieldMultiset fields;
    double weight = 0.0;
};

struct PatternSet {
    /// Grouped by ascending rank; within a rank by descending weight, then by fields.
    std::vector<CombinationPattern> patterns;
    /// Highest-weight pattern of each concatenated channel; empty when no path survives.
    std::vector<FieldMultiset> channel_patterns;
};

/**
 * Recursive expansion of the selection matrices. A path through
 * rank 2 .. i carries the product of its |W| entries; paths with the same
 * multiset are summed and each rank is normalised to 1. Rank-1 entries are
 * reported only when `rank1_weights` (one per raw field) is given.
 */
PatternSet backtrack_patterns(std::span<const Tensor> selections, std::size_t n1, double epsilon,
                              std::span<const double> rank1_weights = {});
PatternSet backtrack_patterns(const DeepCross& model, double epsilon, std::span<const double> rank1_weights = {});

/// Feature-attention scores averaged over the samples, restricted to raw fields and renormalised.
std::vector<double> rank1_weights(const DeepCross& model, std::span<const EncodedSample> samples);

struct ExplanationEntry {
    std::size_t time = 0;
    std::size_t channel = 0;
    double score = 0.0;
    FieldMultiset pattern;
};

struct IndividualExplanation {
    std::vector<ExplanationEntry> entries;
    std::string warning; // set when K was clipped
};

/// E[t, i] = r[predicted] * q[t] * p[i], [T x N].
Tensor explanation_matrix(std::span<const double> p, std::span<const double> q, double r_predicted);

/// Top K cells of E, ties broken by ascending (time, channel).
IndividualExplanation individual_explanation(std::span<const double> p, std::span<const double> q,
                                             std::span<const double> r, std::size_t predicted, std::size_t k,
                                             std::span<const FieldMultiset> channel_patterns = {});

/// Comma-joined names in ascending field-index order.
std::string pattern_label(const FieldMultiset& fields, std::span<const std::string> names);

void write_patterns_csv(std::ostream& out, std::span<const CombinationPattern> patterns,
                        std::span<const std::string> names);
void write_explanation_csv(std::ostream& out, const IndividualExplanation& e, std::span<const std::string> names);
/// One rect per cell, grey level from the min-max normalised value (a constant matrix maps to 1).
void write_heatmap_svg(std::ostream& out, const Tensor& e);

struct EntityReport {
    std::string entity_id;
    IndividualExplanation explanation;
    Tensor matrix;
};

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes patterns.csv and, per entity, explain_<id>.csv and heatmap_<id>.svg into `dir`.
std::vector<std::filesystem::path> emit_reports(const std::filesystem::path& dir, const PatternSet& omega,
                                                std::span<const EntityReport> entities,
                                                std::span<const std::string> names);

} // namespace deepcross
