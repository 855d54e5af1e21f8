#include "doctest.h"

#include "deepcross/grad_check.hpp"
#include "deepcross/head.hpp"
#include "deepcross/ops.hpp"

#include <cmath>
#include <random>

using namespace deepcross;

TEST_CASE("time_concat")
{
    Tape tape;
    const Var x = tape.constant(Tensor(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    const auto steps = time_concat(x);
    REQUIRE(steps.size() == 1);
    CHECK(steps[0].value() == Tensor::vector({1, 2, 3, 4}));
    CHECK(time_concat(tape.constant(Tensor(Shape{3, 2, 5}))).size() == 3);
}

TEST_CASE("gru with zero parameters halves the state each step")
{
    Rng init(1);
    Gru gru(3, 4, init);
    for (Param* p : gru.params())
        p->value.fill(0.0);
    Tape tape;
    const GruWeights w = gru.bind(tape);
    std::vector<Var> inputs;
    for (int t = 0; t < 4; ++t)
        inputs.push_back(tape.constant(Tensor::vector({0.3, -1, 2, 0.5})));
    const Tensor zero = gru_forward(inputs, w, tape.constant(Tensor(Shape{3}))).value();
    CHECK(zero == Tensor(Shape{3}));
    const Tensor v = gru_forward(inputs, w, tape.constant(Tensor::vector({1.6, -3.2, 0.8}))).value();
    CHECK(v == Tensor::vector({0.1, -0.2, 0.05}));
}

TEST_CASE("gru step matches a hand evaluation")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    Rng init(2);
    Gru gru(2, 3, init);
    const Tensor e = Tensor::vector({u(rng), u(rng), u(rng)});
    const Tensor h0 = Tensor::vector({u(rng), u(rng)});
    Tape tape;
    const GruWeights w = gru.bind(tape);
    const Var inputs[] = {tape.constant(e)};
    const Tensor h = gru_forward(inputs, w, tape.constant(h0)).value();

    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const auto& Wr = w.reset.value();
    const auto& Wz = w.update.value();
    const auto& Wh = w.candidate.value();
    const double x[] = {h0[0], h0[1], e[0], e[1], e[2]};
    double r[2], z[2];
    for (std::size_t i = 0; i < 2; ++i) {
        double a = 0, b = 0;
        for (std::size_t j = 0; j < 5; ++j) {
            a += Wr.at(i, j) * x[j];
            b += Wz.at(i, j) * x[j];
        }
        r[i] = sig(a);
        z[i] = sig(b);
    }
    const double g[] = {r[0] * h0[0], r[1] * h0[1], e[0], e[1], e[2]};
    for (std::size_t i = 0; i < 2; ++i) {
        double c = 0;
        for (std::size_t j = 0; j < 5; ++j)
            c += Wh.at(i, j) * g[j];
        const double expect = z[i] * std::tanh(c) + (1 - z[i]) * h0[i];
        CHECK(std::abs(h[i] - expect) <= 1e-14);
    }
}

TEST_CASE("predict")
{
    Tape tape;
    const Var h = tape.constant(Tensor::vector({1.0, -2.0}));
    const Prediction zero = predict(h, tape.constant(Tensor(Shape{2, 2})));
    CHECK(zero.scores.value() == Tensor::vector({0.5, 0.5}));
    CHECK(zero.normalized.value() == Tensor::vector({0.5, 0.5}));

    const Prediction sharp = predict(tape.constant(Tensor::vector({1.0})), tape.constant(Tensor::matrix({{20}, {-20}})));
    CHECK(sharp.scores.value()[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sharp.scores.value()[1] == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(sharp.normalized.value()[0] > sharp.normalized.value()[1]);
}

TEST_CASE("lq_loss")
{
    Tape tape;
    const auto loss = [&](double p, double q) {
        return lq_loss(tape.constant(Tensor::vector({p, 1 - p})), 0, q).value()[0];
    };
    CHECK(loss(1.0, 0.7) == doctest::Approx(0.0).epsilon(1e-11));
    CHECK(loss(1.0, 0.1) <= 1e-11);
    CHECK(loss(0.25, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(loss(0.3, 1e-3) + std::log(0.3)) / -std::log(0.3) <= 1e-2);
    CHECK(loss(0.3, 1.0) == 1.0 - 0.3);
    CHECK(lq_loss(tape.constant(Tensor::vector({0.6, 0.4})), 1, 1.0).value()[0] == doctest::Approx(0.6));
    CHECK_THROWS_AS(loss(0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(loss(0.5, 1.5), std::invalid_argument);
}

TEST_CASE("head gradients")
{
    std::mt19937_64 rng(3);
    Rng init(3);
    Gru gru(3, 4, init);
    Param fc("fc", Tensor(Shape{2, 3}));
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& v : fc.value.values())
        v = u(rng);
    Param x("x", Tensor(Shape{3, 2, 2}));
    for (double& v : x.value.values())
        v = u(rng);
    std::vector<Param*> params = gru.params();
    params.push_back(&fc);
    params.push_back(&x);
    const auto report = grad_check(
        [&](Tape& tape) {
            const auto steps = time_concat(tape.param(x));
            const Var h = gru_forward(steps, gru.bind(tape), tape.constant(Tensor(Shape{3})));
            return lq_loss(predict(h, tape.param(fc)).normalized, 1, 0.7);
        },
        params);
    CHECK(report.max_rel_error <= 1e-5);
}
