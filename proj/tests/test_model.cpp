#include "doctest.h"

#include "deepcross/grad_check.hpp"
#include "deepcross/model.hpp"
#include "deepcross/ops.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace deepcross;

namespace {

struct Fixture {
    Schema schema;
    std::vector<EncodedSample> train, test;
};

Fixture synthetic(std::size_t n, std::size_t T, std::size_t noise, std::uint64_t seed)
{
    const auto samples = gen_synthetic_interaction(n, T, noise, seed);
    const DatasetSplit s = split(samples, 0.7, seed);
    Fixture f;
    f.schema = build_schema(s.train, synthetic_schema_config(T, noise));
    f.train = normalize(s.train, f.schema);
    f.test = normalize(s.test, f.schema);
    return f;
}

ArchConfig tiny_arch()
{
    ArchConfig a;
    a.time_span = 3;
    a.dim = 4;
    a.rank_widths = {4};
    a.window = 3;
    a.hidden = 5;
    a.classes = 2;
    return a;
}

std::vector<double> flat_params(const DeepCross& m)
{
    std::vector<double> out;
    for (const Param* p : m.params())
        out.insert(out.end(), p->value.values().begin(), p->value.values().end());
    return out;
}

} // namespace

TEST_CASE("config validation")
{
    ArchConfig a = tiny_arch();
    CHECK_NOTHROW(a.validate());
    a.window = 2;
    CHECK_THROWS_AS(a.validate(), std::invalid_argument);
    a.window = 5;
    CHECK_THROWS_AS(a.validate(), std::invalid_argument);
    a = tiny_arch();
    a.classes = 1;
    CHECK_THROWS_AS(a.validate(), std::invalid_argument);

    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.q = 0.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t.q = 1.0;
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("model shapes and parameter names")
{
    const Fixture f = synthetic(40, 3, 1, 1);
    DeepCross m(f.schema, tiny_arch(), 3);
    CHECK(m.channels() == 3 + 4);
    std::set<std::string> names;
    for (const Param* p : m.params())
        names.insert(p->name);
    CHECK(names.size() == m.params().size());
    CHECK(names.count("crossing.2.selection") == 1);
    CHECK(names.count("output.projection") == 1);

    Tape tape;
    const Forward out = m.forward(m.bind(tape), f.train[0]);
    CHECK(out.feature.shape() == Shape{7});
    CHECK(out.temporal.shape() == Shape{3});
    double total = 0;
    for (double v : out.normalized.value().values())
        total += v;
    CHECK(std::abs(total - 1.0) <= 1e-9);
}

TEST_CASE("objective is mean loss plus the weighted lasso term")
{
    const Fixture f = synthetic(40, 3, 1, 2);
    DeepCross m(f.schema, tiny_arch(), 5);
    TrainConfig cfg;
    cfg.q = 0.5;
    const EncodedSample* batch[] = {&f.train[0], &f.train[1]};

    double expected_loss = 0;
    for (const EncodedSample* s : batch) {
        const SamplePrediction p = predict_sample(m, *s);
        expected_loss += (1 - std::pow(p.normalized[std::size_t(s->label)], 0.5)) / 0.5;
    }
    expected_loss /= 2;
    double l1 = 0;
    for (double v : m.blocks()[0].selection().value.values())
        l1 += std::abs(v);

    cfg.lambda = 0.0;
    Tape t0;
    CHECK(objective(m, m.bind(t0), batch, cfg).value()[0] == doctest::Approx(expected_loss).epsilon(1e-12));
    cfg.lambda = 0.25;
    Tape t1;
    CHECK(objective(m, m.bind(t1), batch, cfg).value()[0] ==
          doctest::Approx(expected_loss + 0.25 * l1).epsilon(1e-12));

    ArchConfig flat = tiny_arch();
    flat.rank_widths.clear();
    DeepCross m1(f.schema, flat, 5);
    Tape t2;
    const EncodedSample* one[] = {&f.train[0]};
    const double p = predict_sample(m1, f.train[0]).normalized[std::size_t(f.train[0].label)];
    CHECK(objective(m1, m1.bind(t2), one, cfg).value()[0] == doctest::Approx((1 - std::sqrt(p)) / 0.5).epsilon(1e-12));
}

TEST_CASE("end-to-end gradient check")
{
    const Fixture f = synthetic(40, 3, 1, 3);
    DeepCross m(f.schema, tiny_arch(), 11);
    // Non-zero attention weights so every path carries gradient.
    Rng rng(12);
    for (Param* p : m.params())
        if (p->name.rfind("attention.", 0) == 0)
            for (double& v : p->value.values())
                v = rng.uniform(-0.5, 0.5);
    TrainConfig cfg;
    cfg.lambda = 1e-3;
    const EncodedSample* batch[] = {&f.train[0], &f.train[1], &f.train[2]};
    const auto report = grad_check([&](Tape& tape) { return objective(m, m.bind(tape), batch, cfg); }, m.params());
    CHECK(report.entries > 100);
    CHECK(report.max_rel_error <= 1e-3);
}

TEST_CASE("training")
{
    const Fixture f = synthetic(200, 3, 1, 4);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lr = 0.05;
    cfg.batch_size = 16;
    cfg.seed = 9;

    SUBCASE("lr 0 leaves parameters unchanged")
    {
        DeepCross m(f.schema, tiny_arch(), 1);
        const auto before = flat_params(m);
        cfg.lr = 0.0;
        train(m, f.train, cfg);
        CHECK(flat_params(m) == before);
    }
    SUBCASE("same seed gives identical parameters")
    {
        DeepCross a(f.schema, tiny_arch(), 1), b(f.schema, tiny_arch(), 1);
        const auto ta = train(a, f.train, cfg);
        const auto tb = train(b, f.train, cfg);
        CHECK(flat_params(a) == flat_params(b));
        CHECK(ta.size() == 5);
        CHECK(ta.back().mean_loss == tb.back().mean_loss);
    }
    SUBCASE("epoch loss mostly decreases")
    {
        DeepCross m(f.schema, tiny_arch(), 1);
        const auto trace = train(m, f.train, cfg);
        int drops = 0;
        for (std::size_t i = 1; i < trace.size(); ++i)
            drops += trace[i].mean_loss <= trace[i - 1].mean_loss;
        CHECK(drops >= 3);
        std::ostringstream out;
        write_loss_trace(out, trace);
        CHECK(out.str().rfind("epoch,mean_loss,train_acc\n1,", 0) == 0);
    }
    SUBCASE("non-finite loss aborts")
    {
        DeepCross m(f.schema, tiny_arch(), 1);
        m.params().back()->value[0] = std::nan("");
        CHECK_THROWS_AS(train(m, f.train, cfg), TrainingDiverged);
    }
}

TEST_CASE("confusion metrics")
{
    std::vector<int> labels, predicted;
    const auto add = [&](int label, int pred, int n) {
        for (int i = 0; i < n; ++i) {
            labels.push_back(label);
            predicted.push_back(pred);
        }
    };
    add(1, 1, 3);
    add(1, 0, 1);
    add(0, 0, 8);
    add(0, 1, 2);
    const EvalReport r = confusion_report(predicted, labels);
    CHECK(r.tp == 3);
    CHECK(r.fn == 1);
    CHECK(r.tn == 8);
    CHECK(r.fp == 2);
    CHECK(r.acc == 11.0 / 14.0);
    CHECK(r.err1 == 0.2);
    CHECK(r.err2 == 0.25);
    CHECK(r.acc == 1.0 - double(r.fp + r.fn) / 14.0);

    const EvalReport perfect = confusion_report(labels, labels);
    CHECK(perfect.acc == 1.0);
    CHECK(perfect.err1 == 0.0);
    CHECK(perfect.err2 == 0.0);
    CHECK_THROWS(confusion_report(std::vector<int>{}, std::vector<int>{}));
}

TEST_CASE("auc")
{
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.9, 0.4, 0.6, 0.2}, std::vector<int>{1, 0, 0, 1}) == 0.5);
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}) == 0.5);
    CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);

    // Pairwise oracle and invariance under a monotone transform.
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s, t;
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) {
            s.push_back(double(rng.below(10)) / 10.0);
            t.push_back(std::exp(3 * s.back()) - 7);
            y.push_back(int(rng.below(2)));
        }
        y[0] = 0;
        y[1] = 1;
        double pairs = 0, wins = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            for (std::size_t j = 0; j < y.size(); ++j)
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1;
                    wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
        CHECK(auc(s, y) == doctest::Approx(wins / pairs).epsilon(1e-14));
        CHECK(auc(t, y) == auc(s, y));
    }
}

TEST_CASE("evaluate")
{
    const Fixture f = synthetic(60, 3, 1, 5);
    DeepCross m(f.schema, tiny_arch(), 2);
    const EvalReport r = evaluate(m, f.test);
    CHECK(r.tp + r.fp + r.fn + r.tn == f.test.size());
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);
    CHECK_THROWS(evaluate(m, std::vector<EncodedSample>{}));
}

TEST_CASE("checkpoint round trip")
{
    const Fixture f = synthetic(60, 3, 1, 6);
    DeepCross m(f.schema, tiny_arch(), 8);
    CheckpointMeta meta;
    meta.load = synthetic_schema_config(3, 1);
    meta.split_ratio = 0.75;
    meta.split_seed = 44;
    meta.train.q = 0.6;
    meta.train.epochs = 17;

    std::stringstream first;
    save_checkpoint(first, m, meta);
    const Checkpoint ck = load_checkpoint(first);
    CHECK(ck.model.schema().fields == m.schema().fields);
    CHECK(ck.model.arch() == m.arch());
    CHECK(ck.meta.train == meta.train);
    CHECK(ck.meta.load.fields == meta.load.fields);
    CHECK(ck.meta.split_seed == 44);
    CHECK(flat_params(ck.model) == flat_params(m));

    std::stringstream second;
    save_checkpoint(second, ck.model, ck.meta);
    CHECK(second.str() == first.str());
    CHECK(predict_sample(ck.model, f.test[0]).normalized == predict_sample(m, f.test[0]).normalized);

    std::string corrupt = first.str();
    corrupt[0] = 'X';
    std::stringstream bad(corrupt);
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    std::stringstream truncated(first.str().substr(0, first.str().size() / 2));
    CHECK_THROWS_AS(load_checkpoint(truncated), CheckpointError);
}
