#include "doctest.h"

#include "deepcross/crossing.hpp"
#include "deepcross/grad_check.hpp"
#include "deepcross/ops.hpp"

#include <cmath>
#include <map>
#include <random>

using namespace deepcross;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(s));
    for (double& v : t.values())
        v = u(rng);
    return t;
}

double leaky(double x) { return x > 0 ? x : 0.1 * x; }

// Rank-i channels of an identity-selection stack, keyed by the field sequence.
using Path = std::vector<std::size_t>;

std::map<Path, std::vector<double>> enumerate_paths(const Tensor& raw, std::size_t t, std::size_t rank)
{
    const std::size_t n1 = raw.extent(1), d = raw.extent(2);
    std::map<Path, std::vector<double>> level;
    for (std::size_t k = 0; k < n1; ++k) {
        std::vector<double> v(d);
        for (std::size_t j = 0; j < d; ++j)
            v[j] = raw.at(t, k, j);
        level[{k}] = v;
    }
    for (std::size_t r = 2; r <= rank; ++r) {
        const double factor = 1.0 + 1.0 / double(level.size());
        std::map<Path, std::vector<double>> next;
        for (const auto& [path, v] : level)
            for (std::size_t k = 0; k < n1; ++k) {
                Path p = path;
                p.push_back(k);
                std::vector<double> out(d);
                for (std::size_t j = 0; j < d; ++j)
                    out[j] = leaky(factor * (v[j] * raw.at(t, k, j)));
                next[p] = out;
            }
        level = std::move(next);
    }
    return level;
}

// Channel index of a field sequence under c = prev * n1 + raw.
std::size_t channel_of(const Path& p, std::size_t n1)
{
    std::size_t c = 0;
    for (std::size_t k : p)
        c = c * n1 + k;
    return c;
}

struct PlainBlock {
    Tensor query, key, pca;
};

// Step-by-step re-evaluation of the stack with loops over plain tensors.
std::vector<Tensor> unfused_stack(const Tensor& raw, const std::vector<PlainBlock>& blocks)
{
    const std::size_t T = raw.extent(0), n1 = raw.extent(1), d = raw.extent(2);
    std::vector<Tensor> ranks{raw};
    for (const PlainBlock& b : blocks) {
        const Tensor& prev = ranks.back();
        const std::size_t np = prev.extent(1), c_in = np * n1, c_out = b.pca.extent(1);
        Tensor Q(Shape{np, d}), K(Shape{n1, d});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) {
                for (std::size_t m = 0; m < np; ++m)
                    Q.at(m, j) += b.query[t] * prev.at(t, m, j);
                for (std::size_t k = 0; k < n1; ++k)
                    K.at(k, j) += b.key[t] * raw.at(t, k, j);
            }
        Tensor a(Shape{np, n1});
        for (std::size_t k = 0; k < n1; ++k) {
            std::vector<double> logit(np);
            double hi = -INFINITY, z = 0;
            for (std::size_t m = 0; m < np; ++m) {
                for (std::size_t j = 0; j < d; ++j)
                    logit[m] += Q.at(m, j) * K.at(k, j);
                hi = std::max(hi, logit[m]);
            }
            for (std::size_t m = 0; m < np; ++m)
                z += std::exp(logit[m] - hi);
            for (std::size_t m = 0; m < np; ++m)
                a.at(m, k) = std::exp(logit[m] - hi) / z;
        }
        Tensor crossed(Shape{T, c_in, d});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < np; ++m)
                for (std::size_t k = 0; k < n1; ++k)
                    for (std::size_t j = 0; j < d; ++j)
                        crossed.at(t, m * n1 + k, j) = leaky((1.0 + a.at(m, k)) * (prev.at(t, m, j) * raw.at(t, k, j)));
        Tensor out(Shape{T, c_out, d});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t o = 0; o < c_out; ++o)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t c = 0; c < c_in; ++c)
                        out.at(t, o, j) += b.pca.at(c, o) * crossed.at(t, c, j);
        ranks.push_back(out);
    }
    return ranks;
}

} // namespace

TEST_CASE("temporal_aggregate")
{
    std::mt19937_64 rng(1);
    Tape tape;
    const Tensor x = random_tensor({2, 3, 2}, rng);
    const Var xv = tape.constant(x);
    const Tensor sel = temporal_aggregate(xv, tape.constant(Tensor::vector({0, 1}))).value();
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(sel.at(m, j) == x.at(1, m, j));
    for (double v : temporal_aggregate(xv, tape.constant(Tensor::vector({0, 0}))).value().values())
        CHECK(v == 0.0);

    Tensor c(Shape{2, 3, 2});
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < 2; ++j)
            c.at(0, m, j) = c.at(1, m, j) = double(m) - 0.5 * double(j);
    const Tensor avg = temporal_aggregate(tape.constant(c), tape.constant(Tensor::vector({0.5, 0.5}))).value();
    for (std::size_t m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(avg.at(m, j) == c.at(0, m, j));
}

TEST_CASE("cross_product")
{
    Tape tape;
    const Var a = tape.constant(Tensor::matrix({{1, 2}}));
    const Var b = tape.constant(Tensor::matrix({{3, 4}}));
    CHECK(cross_product(a, b).value() == Tensor::matrix({{3, 8}}));

    std::mt19937_64 rng(2);
    const Var raw = tape.constant(random_tensor({3, 4}, rng));
    const Var ones = tape.constant(Tensor(Shape{1, 4}, 1.0));
    CHECK(cross_product(raw, ones).value() == raw.value());

    const Var prev = tape.constant(random_tensor({2, 4}, rng));
    const Tensor c = cross_product(raw, prev).value();
    CHECK(c.shape() == Shape{6, 4});
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(c.at(m * 3 + k, j) == prev.value().at(m, j) * raw.value().at(k, j));
}

TEST_CASE("cross_attention")
{
    std::mt19937_64 rng(3);
    Tape tape;
    const Var raw = tape.constant(random_tensor({3, 4, 2}, rng));
    const Var prev = tape.constant(random_tensor({3, 5, 2}, rng));
    const Var zero = tape.constant(Tensor(Shape{3}));
    CrossingWeights w{zero, zero, Var{}};
    const Tensor uniform = cross_attention(raw, prev, w).value();
    CHECK(uniform.shape() == Shape{5, 4});
    for (double v : uniform.values())
        CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

    const Var single = tape.constant(random_tensor({3, 1, 2}, rng));
    w.query = tape.constant(random_tensor({3}, rng));
    w.key = tape.constant(random_tensor({3}, rng));
    for (double v : cross_attention(raw, single, w).value().values())
        CHECK(v == 1.0);

    for (int trial = 0; trial < 20; ++trial) {
        Tape t2;
        const Var r = t2.constant(random_tensor({3, 4, 2}, rng, -3, 3));
        const Var p = t2.constant(random_tensor({3, 6, 2}, rng, -3, 3));
        CrossingWeights wr{t2.constant(random_tensor({3}, rng, -2, 2)), t2.constant(random_tensor({3}, rng, -2, 2)),
                           Var{}};
        const Tensor a = cross_attention(r, p, wr).value();
        for (std::size_t k = 0; k < 4; ++k) {
            double col = 0;
            for (std::size_t m = 0; m < 6; ++m)
                col += a.at(m, k);
            CHECK(std::abs(col - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("residual_scale")
{
    Tape tape;
    const Var one = tape.constant(Tensor::matrix({{1.0}}));
    CHECK(residual_scale(tape.constant(Tensor::matrix({{2.0}})), one).value()[0] == 4.0);
    const Var half = tape.constant(Tensor::matrix({{0.5}}));
    CHECK(residual_scale(tape.constant(Tensor::matrix({{-2.0}})), half).value()[0] == doctest::Approx(-0.3));
}

TEST_CASE("pca_select")
{
    std::mt19937_64 rng(4);
    Tape tape;
    const Tensor x = random_tensor({2, 3, 2}, rng);
    const Var xv = tape.constant(x);
    CHECK(pca_select(xv, tape.constant(Tensor::identity(3))).value() == x);

    Tensor w = random_tensor({3, 2}, rng);
    for (std::size_t c = 0; c < 3; ++c)
        w.at(c, 1) = 0.0;
    const Tensor out = pca_select(xv, tape.constant(w)).value();
    CHECK(out.shape() == Shape{2, 2, 2});
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(out.at(t, 1, j) == 0.0);

    Tensor two(Shape{1, 2, 2});
    two.at(0, 0, 0) = 1;
    two.at(0, 0, 1) = 2;
    two.at(0, 1, 0) = 3;
    two.at(0, 1, 1) = -4;
    const Tensor mixed = pca_select(tape.constant(two), tape.constant(Tensor::matrix({{0.5}, {0.5}}))).value();
    CHECK(mixed == Tensor(Shape{1, 1, 2}, std::vector<double>{2.0, -1.0}));
}

TEST_CASE("lasso_penalty")
{
    Param w("w", Tensor::matrix({{1, -2}, {0, 3}}));
    Param z("z", Tensor(Shape{2, 2}));
    Tape tape;
    CHECK(lasso_penalty(std::vector<CrossingWeights>{{Var{}, Var{}, tape.param(w)}}).value()[0] == 6.0);
    CHECK(lasso_penalty(std::vector<CrossingWeights>{{Var{}, Var{}, tape.param(z)}}).value()[0] == 0.0);
    tape.backward(lasso_penalty(std::vector<CrossingWeights>{{Var{}, Var{}, tape.param(w)}}));
    CHECK(w.grad == Tensor::matrix({{1, -1}, {0, 1}}));

    Tape empty;
    std::vector<CrossingBlock> none;
    CHECK(lasso_penalty(empty, none).value()[0] == 0.0);
}

TEST_CASE("channel origins")
{
    Rng init(1);
    const CrossingBlock block(3, 4, 5, 6, 2, init);
    CHECK(block.channels_in() == 20);
    std::vector<int> seen(20, 0);
    for (std::size_t m = 0; m < 5; ++m)
        for (std::size_t k = 0; k < 4; ++k)
            ++seen[m * 4 + k];
    const auto origins = block.origins();
    for (std::size_t c = 0; c < 20; ++c) {
        CHECK(seen[c] == 1);
        CHECK(origins[c] == ChannelOrigin{c / 4, c % 4});
        CHECK(origins[c].prev * 4 + origins[c].raw == c);
    }
}

TEST_CASE("run_stack shapes")
{
    std::mt19937_64 rng(5);
    Rng init(5);
    Tape tape;
    const Var raw = tape.constant(random_tensor({3, 2, 4}, rng));
    const RankStack one = run_stack(raw, {});
    CHECK(one.ranks.size() == 1);
    CHECK(one.concatenated.value() == raw.value());

    CrossingBlock block(2, 2, 2, 3, 3, init);
    const CrossingWeights w[] = {block.bind(tape)};
    const RankStack two = run_stack(raw, w);
    CHECK(two.concatenated.shape() == Shape{3, 5, 4});
    CHECK(two.attentions.at(0).shape() == Shape{2, 2});
}

TEST_CASE("identity selection matches brute-force path enumeration")
{
    std::mt19937_64 rng(6);
    for (std::size_t n1 = 1; n1 <= 3; ++n1)
        for (std::size_t d = 1; d <= 2; ++d)
            for (std::size_t T = 1; T <= 2; ++T) {
                Tape tape;
                const Tensor raw = random_tensor({T, n1, d}, rng, -2, 2);
                const Var zero = tape.constant(Tensor(Shape{T}));
                std::vector<CrossingWeights> blocks;
                std::size_t width = n1;
                for (int b = 0; b < 2; ++b) {
                    width *= n1;
                    blocks.push_back({zero, zero, tape.constant(Tensor::identity(width))});
                }
                const RankStack st = run_stack(tape.constant(raw), blocks);
                for (std::size_t rank = 1; rank <= 3; ++rank) {
                    const Tensor& got = st.ranks[rank - 1].value();
                    for (std::size_t t = 0; t < T; ++t) {
                        const auto paths = enumerate_paths(raw, t, rank);
                        CHECK(got.extent(1) == paths.size());
                        for (const auto& [path, v] : paths)
                            for (std::size_t j = 0; j < d; ++j)
                                CHECK(got.at(t, channel_of(path, n1), j) == v[j]);
                    }
                }
            }
}

TEST_CASE("zeroing a raw field zeroes every crossed channel that contains it")
{
    std::mt19937_64 rng(7);
    Tensor raw = random_tensor({2, 3, 2}, rng);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t j = 0; j < 2; ++j)
            raw.at(t, 1, j) = 0.0;
    Tape tape;
    const Var q = tape.constant(random_tensor({2}, rng));
    const Var k = tape.constant(random_tensor({2}, rng));
    const CrossingWeights blocks[] = {{q, k, tape.constant(Tensor::identity(9))},
                                      {q, k, tape.constant(Tensor::identity(27))}};
    const RankStack st = run_stack(tape.constant(raw), blocks);
    for (std::size_t rank = 2; rank <= 3; ++rank) {
        const Tensor& x = st.ranks[rank - 1].value();
        for (std::size_t c = 0; c < x.extent(1); ++c) {
            bool contains = false;
            for (std::size_t rest = c, r = 0; r < rank; ++r, rest /= 3)
                contains = contains || rest % 3 == 1;
            double mag = 0;
            for (std::size_t t = 0; t < 2; ++t)
                for (std::size_t j = 0; j < 2; ++j)
                    mag += std::abs(x.at(t, c, j));
            if (contains)
                CHECK(mag == 0.0);
            else
                CHECK(mag > 0.0);
        }
    }
}

TEST_CASE("three-rank stack matches an unfused step-by-step evaluation")
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor raw = random_tensor({3, 3, 4}, rng, -1.5, 1.5);
        const std::vector<PlainBlock> plain{
            {random_tensor({3}, rng), random_tensor({3}, rng), random_tensor({9, 4}, rng)},
            {random_tensor({3}, rng), random_tensor({3}, rng), random_tensor({12, 2}, rng)},
        };
        Tape tape;
        std::vector<CrossingWeights> blocks;
        for (const PlainBlock& b : plain)
            blocks.push_back({tape.constant(b.query), tape.constant(b.key), tape.constant(b.pca)});
        const RankStack st = run_stack(tape.constant(raw), blocks);
        const std::vector<Tensor> expect = unfused_stack(raw, plain);
        CHECK(st.concatenated.shape() == Shape{3, 9, 4});
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t i = 0; i < expect[r].size(); ++i)
                CHECK(std::abs(st.ranks[r].value()[i] - expect[r][i]) <= 1e-12);
    }
}

TEST_CASE("crossing gradients")
{
    std::mt19937_64 rng(9);
    Rng init(9);
    Param raw("raw", random_tensor({3, 3, 2}, rng));
    CrossingBlock b2(2, 3, 3, 4, 3, init), b3(3, 3, 4, 2, 3, init);
    for (CrossingBlock* b : {&b2, &b3}) {
        b->query().value = random_tensor({3}, rng);
        b->key().value = random_tensor({3}, rng);
    }
    std::vector<Param*> params{&raw};
    for (CrossingBlock* b : {&b2, &b3})
        for (Param* p : b->params())
            params.push_back(p);
    const auto report = grad_check(
        [&](Tape& tape) {
            const CrossingWeights w[] = {b2.bind(tape), b3.bind(tape)};
            const Var x = run_stack(tape.param(raw), w).concatenated;
            return sum(hadamard(x, x));
        },
        params);
    CHECK(report.max_rel_error <= 1e-5);
}
