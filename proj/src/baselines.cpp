#include "deepcross/baselines.hpp"

#include "deepcross/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deepcross {

ZScoreResult zscore_rate(std::span<const double> x, const ZScoreModel& model)
{
    if (x.size() != model.coefficients.size())
        throw std::invalid_argument("zscore_rate: expected 5 indicators, got " + std::to_string(x.size()));
    double score = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        score += model.coefficients[i] * x[i];
    return {score, score > model.threshold};
}

std::vector<double> zscore_inputs(const SequencedSample& sample, const SchemaConfig& cfg,
                                  std::span<const std::string> columns)
{
    if (sample.steps.empty())
        throw std::invalid_argument("zscore_inputs: empty sample");
    std::vector<double> out;
    for (const std::string& name : columns) {
        const auto it = std::find_if(cfg.fields.begin(), cfg.fields.end(),
                                     [&](const FieldSpec& f) { return f.name == name; });
        if (it == cfg.fields.end())
            throw std::invalid_argument("zscore column " + name + " is not a configured field");
        if (it->kind != FieldKind::numerical)
            throw std::invalid_argument("zscore column " + name + " is not numerical");
        const RawValue& v = sample.steps.back()[std::size_t(it - cfg.fields.begin())];
        const double x = std::get<double>(v);
        out.push_back(std::isnan(x) ? 0.0 : x);
    }
    return out;
}

std::size_t flattened_width(const Schema& schema, std::size_t time_span)
{
    std::size_t per_step = 0;
    for (const FeatureField& f : schema.fields)
        per_step += f.is_numerical() ? 1 : f.vocab.size() + 1;
    return per_step * time_span;
}

Eigen::VectorXd flatten_sample(const EncodedSample& sample, const Schema& schema)
{
    Eigen::VectorXd x = Eigen::VectorXd::Zero(Eigen::Index(flattened_width(schema, sample.time_span())));
    Eigen::Index at = 0;
    for (const auto& step : sample.steps) {
        if (step.size() != schema.size())
            throw DimensionError("flatten_sample: step does not match the schema");
        for (std::size_t j = 0; j < step.size(); ++j) {
            const FeatureField& f = schema.fields[j];
            if (f.is_numerical()) {
                x[at++] = std::get<double>(step[j]);
                continue;
            }
            const Eigen::Index width = Eigen::Index(f.vocab.size() + 1);
            if (const auto* idx = std::get_if<std::size_t>(&step[j]))
                x[at + Eigen::Index(*idx)] = 1.0;
            else if (const auto* dist = std::get_if<std::vector<double>>(&step[j]))
                for (std::size_t r = 0; r < dist->size() && Eigen::Index(r) < width; ++r)
                    x[at + Eigen::Index(r)] = (*dist)[r];
            at += width;
        }
    }
    return x;
}

LrModel lr_train(const Eigen::MatrixXd& x, std::span<const int> labels, const LrConfig& cfg)
{
    if (std::size_t(x.rows()) != labels.size())
        throw std::invalid_argument("lr_train: row count does not match labels");
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    const auto negatives = std::count(labels.begin(), labels.end(), 0);
    if (positives + negatives != std::ptrdiff_t(labels.size()))
        throw std::invalid_argument("lr_train: labels must be 0 or 1");
    if (positives == 0 || negatives == 0)
        throw std::invalid_argument("lr_train: both classes are required");
    if (!(cfg.lr >= 0.0) || !(cfg.l1 >= 0.0))
        throw std::invalid_argument("lr_train: lr and l1 must be non-negative");

    LrModel m{Eigen::VectorXd::Zero(x.cols()), 0.0, cfg.l1};
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const auto row = x.row(Eigen::Index(i)).transpose();
            const double err = 1.0 / (1.0 + std::exp(-(row.dot(m.weights) + m.bias))) - double(labels[i]);
            const Eigen::VectorXd sign = m.weights.unaryExpr([](double w) { return double((w > 0) - (w < 0)); });
            m.weights -= cfg.lr * (err * row + cfg.l1 * sign);
            m.bias -= cfg.lr * err;
        }
    }
    return m;
}

LrModel lr_train(std::span<const EncodedSample> samples, const Schema& schema, const LrConfig& cfg)
{
    if (samples.empty())
        throw std::invalid_argument("lr_train: no samples");
    Eigen::MatrixXd x(Eigen::Index(samples.size()), Eigen::Index(flattened_width(schema, samples[0].time_span())));
    std::vector<int> labels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        x.row(Eigen::Index(i)) = flatten_sample(samples[i], schema).transpose();
        labels.push_back(samples[i].label);
    }
    return lr_train(x, labels, cfg);
}

double lr_predict(const Eigen::VectorXd& x, const LrModel& model)
{
    if (x.size() != model.weights.size())
        throw DimensionError("lr_predict: input width " + std::to_string(x.size()) + ", model expects " +
                             std::to_string(model.weights.size()));
    return 1.0 / (1.0 + std::exp(-(x.dot(model.weights) + model.bias)));
}

EvalReport lr_evaluate(const LrModel& model, std::span<const EncodedSample> samples, const Schema& schema)
{
    std::vector<int> predicted, labels;
    std::vector<double> prob;
    for (const EncodedSample& s : samples) {
        prob.push_back(lr_predict(flatten_sample(s, schema), model));
        predicted.push_back(prob.back() > 0.5 ? 1 : 0);
        labels.push_back(s.label);
    }
    EvalReport r = confusion_report(predicted, labels);
    if (r.tp + r.fn > 0 && r.tn + r.fp > 0)
        r.auc = auc(prob, labels);
    return r;
}

} // namespace deepcross
