#pragma once

#include "deepcross/attention.hpp"
#include "deepcross/crossing.hpp"
#include "deepcross/data.hpp"
#include "deepcross/embedding.hpp"
#include "deepcross/head.hpp"

#include <functional>
#include <iosfwd>
#include <stdexcept>

namespace deepcross {

struct ArchConfig {
    std::size_t time_span = 5;
    std::size_t dim = 64;
    std::vector<std::size_t> rank_widths{128, 64, 32}; // one crossing block per entry
    std::size_t window = 3;
    std::size_t hidden = 32;
    std::size_t classes = 2;

    std::size_t rank() const { return rank_widths.size() + 1; }
    /// Throws std::invalid_argument naming the offending setting.
    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

struct TrainConfig {
    double q = 0.7;
    double lambda = 1e-3;
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct ModelWeights {
    EmbeddingWeights embedding;
    std::vector<CrossingWeights> crossing;
    Var feature;
    Var temporal;
    GruWeights gru;
    Var output;
};

struct Forward {
    Var scores;     // [k]
    Var normalized; // [k]
    Var feature;    // p, [N]
    Var temporal;   // q, [T]
};

class DeepCross {
public:
    DeepCross(Schema schema, ArchConfig arch, std::uint64_t seed);

    const Schema& schema() const { return schema_; }
    const ArchConfig& arch() const { return arch_; }
    /// Total channel count N over all ranks.
    std::size_t channels() const;

    ModelWeights bind(Tape& tape);
    ModelWeights bind_frozen(Tape& tape) const;
    Forward forward(const ModelWeights& w, const EncodedSample& sample) const;

    std::vector<Param*> params();
    std::vector<const Param*> params() const;
    std::vector<CrossingBlock>& blocks() { return blocks_; }
    const std::vector<CrossingBlock>& blocks() const { return blocks_; }

private:
    Schema schema_;
    ArchConfig arch_;
    EmbeddingLayer embedding_;
    std::vector<CrossingBlock> blocks_;
    FeatureAttention feature_;
    TemporalAttention temporal_;
    Gru gru_;
    Param output_;
};

/// Mean L_q over the batch plus lambda times the lasso penalty of every selection matrix.
Var objective(const DeepCross& model, const ModelWeights& w, std::span<const EncodedSample* const> batch,
              const TrainConfig& cfg);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double train_acc = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seeded per-epoch shuffle, minibatch SGD. Throws TrainingDiverged on a non-finite loss.
std::vector<EpochStats> train(DeepCross& model, std::span<const EncodedSample> samples, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

void write_loss_trace(std::ostream& out, std::span<const EpochStats> trace);

struct SamplePrediction {
    std::size_t predicted = 0;
    std::vector<double> normalized; // r
    std::vector<double> feature;    // p
    std::vector<double> temporal;   // q
};

SamplePrediction predict_sample(const DeepCross& model, const EncodedSample& sample);

struct EvalReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double acc = 0, err1 = 0, err2 = 0;
    double auc = 0; // NaN when only one class is present
};

/// Positive class is 1; acc, err1 and err2 from the confusion counts.
EvalReport confusion_report(std::span<const int> predicted, std::span<const int> labels);

/// Mann-Whitney estimate with midranks for ties. Throws std::invalid_argument unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Predicted class is the argmax; the AUC ranks r[1].
EvalReport evaluate(const DeepCross& model, std::span<const EncodedSample> samples);

struct CheckpointMeta {
    SchemaConfig load;
    double split_ratio = 0.7;
    std::uint64_t split_seed = 1;
    TrainConfig train;
};

struct Checkpoint {
    DeepCross model;
    CheckpointMeta meta;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void save_checkpoint(std::ostream& out, const DeepCross& model, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const DeepCross& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace deepcross
