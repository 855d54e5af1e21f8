#pragma once

#include "deepcross/baselines.hpp"
#include "deepcross/explain.hpp"
#include "deepcross/grad_check.hpp"
#include "deepcross/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace deepcross {

/// Bad flags or configuration; the command-line tool exits with status 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` configuration; `#` starts a comment.
struct RunConfig {
    std::string data;
    std::vector<FieldSpec> fields;
    std::string label = "label";
    std::string entity_column = "entity_id";
    std::size_t time_span = 5;
    std::size_t dim = 64;
    std::vector<std::size_t> rank_widths{128, 64, 32};
    std::size_t window = 3;
    std::size_t hidden = 32;
    std::size_t classes = 2;
    double q = 0.7;
    double lambda = 1e-3;
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    double epsilon = 1e-4;
    std::size_t top_k = 10;
    double split_ratio = 0.7;
    std::vector<std::string> zscore_columns;
    double lr_l1 = 1e-4;
    double lr_rate = 0.01;
    std::size_t lr_epochs = 50;

    /// Throws UsageError naming the offending key or line.
    static RunConfig parse(std::istream& in);
    static RunConfig load(const std::filesystem::path& path);

    SchemaConfig schema_config() const;
    ArchConfig arch() const;
    TrainConfig train() const;
    LrConfig lr_config() const;
};

/// Keys accepted by RunConfig::parse.
std::span<const std::string_view> config_keys();

struct PreparedData {
    LoadResult load;
    DatasetSplit split;
    Schema schema;
    std::vector<EncodedSample> train, test;
};

/// Load, split by entity, build the schema on the training split and normalise both splits.
PreparedData prepare_data(const std::filesystem::path& data, const SchemaConfig& load, double ratio,
                          std::uint64_t seed);

struct IngestArgs {
    std::vector<std::filesystem::path> inputs; // one wide file per period, oldest first
    std::filesystem::path output;
    std::filesystem::path config;
};
void cmd_ingest(const IngestArgs& args, std::ostream& log);

struct SynthArgs {
    std::filesystem::path output;
    std::size_t samples = 2000;
    std::size_t time_span = 2;
    std::size_t noise = 2;
    std::uint64_t seed = 7;
    std::filesystem::path config_out; // optional
};
void cmd_synth(const SynthArgs& args, std::ostream& log);

struct TrainArgs {
    std::filesystem::path data; // overrides the config's data key when set
    std::filesystem::path config;
    std::filesystem::path output;
    std::filesystem::path trace; // defaults to <output>.loss.csv
};
/// Returns the test-split report of the trained model.
EvalReport cmd_train(const TrainArgs& args, std::ostream& log);

enum class EvalSplit { test, train, all };

struct EvalArgs {
    std::filesystem::path data;
    std::filesystem::path model;
    EvalSplit split = EvalSplit::test;
    std::filesystem::path csv; // optional
};
EvalReport cmd_eval(const EvalArgs& args, std::ostream& out);

struct ExplainArgs {
    std::filesystem::path data;
    std::filesystem::path model;
    std::filesystem::path config; // optional; supplies epsilon and K
    std::optional<std::string> entity;
    bool static_only = false;
    std::filesystem::path output = "explain";
};
std::vector<std::filesystem::path> cmd_explain(const ExplainArgs& args, std::ostream& log);

struct BaselineArgs {
    std::filesystem::path data;
    std::filesystem::path config;
    std::string which = "lr";
};
EvalReport cmd_baseline(const BaselineArgs& args, std::ostream& out);

struct GradcheckArgs {
    std::filesystem::path config; // optional; architecture knobs
    std::size_t fields = 3;
    double tolerance = 1e-3;
};
GradCheckReport cmd_gradcheck(const GradcheckArgs& args, std::ostream& out);

struct SweepArgs {
    std::filesystem::path data;
    std::filesystem::path config;
    std::string axis = "rank";
    std::vector<std::size_t> values;
    std::filesystem::path output; // CSV; stdout when empty
};
struct SweepRow {
    std::size_t value = 0;
    double acc = 0, auc = 0;
};
std::vector<SweepRow> cmd_sweep(const SweepArgs& args, std::ostream& out);

void print_report(std::ostream& out, const EvalReport& r);

} // namespace deepcross
