#pragma once

#include "deepcross/data.hpp"
#include "deepcross/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <span>

namespace deepcross {

struct ZScoreModel {
    std::array<double, 5> coefficients{0.517, -0.460, 18.640, 0.388, 1.158};
    double threshold = 0.9;
};

struct ZScoreResult {
    double score = 0.0;
    bool positive = false;
};

/// Throws std::invalid_argument unless exactly five indicators are given.
ZScoreResult zscore_rate(std::span<const double> x, const ZScoreModel& model = {});

/// Raw final-step values of the named numerical columns, in the order given.
std::vector<double> zscore_inputs(const SequencedSample& sample, const SchemaConfig& cfg,
                                  std::span<const std::string> columns);

struct LrModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    double l1 = 0.0;
};

struct LrConfig {
    double l1 = 1e-4;
    double lr = 0.01;
    std::size_t epochs = 50;
    std::uint64_t seed = 1;
};

/// T * (numerical fields) values plus one-hot (or distribution) blocks for the other fields, step-major.
Eigen::VectorXd flatten_sample(const EncodedSample& sample, const Schema& schema);
std::size_t flattened_width(const Schema& schema, std::size_t time_span);

/**
 * Per-sample SGD on logistic loss + l1 * |w|_1 using the sign subgradient
 * (0 at 0), starting from zero. Labels must be 0/1 with both present.
 */
LrModel lr_train(const Eigen::MatrixXd& x, std::span<const int> labels, const LrConfig& cfg);
LrModel lr_train(std::span<const EncodedSample> samples, const Schema& schema, const LrConfig& cfg);

double lr_predict(const Eigen::VectorXd& x, const LrModel& model);

/// Confusion counts at probability 0.5 and AUC of the probabilities.
EvalReport lr_evaluate(const LrModel& model, std::span<const EncodedSample> samples, const Schema& schema);

} // namespace deepcross
