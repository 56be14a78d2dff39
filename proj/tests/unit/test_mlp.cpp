#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "aiive/error.hpp"
#include "aiive/mlp.hpp"
#include "aiive/optimizer.hpp"
#include "aiive/rng.hpp"
#include "support/oracle.hpp"

using namespace aiive;

namespace {

Mlp random_net(const LayerSizes& sizes, std::uint64_t seed, double scale = 0.6)
{
    Mlp net = init_network(sizes, seed);
    Rng rng(seed * 7 + 3);
    net.params.for_each_array([&](std::span<double> values) {
        for (double& v : values)
            v = scale * rng.normal();
    });
    return net;
}

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng)
{
    Matrix x(rows, cols);
    for (double& v : x.flat())
        v = rng.uniform(-1.0, 1.0);
    return x;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng)
{
    std::vector<int> labels(n);
    for (int& l : labels)
        l = static_cast<int>(rng.below(classes));
    return labels;
}

} // namespace

TEST_CASE("init_network is deterministic per seed")
{
    const Mlp a = init_network({2304, 3, 4, 7}, 42);
    const Mlp b = init_network({2304, 3, 4, 7}, 42);
    CHECK(a == b);
    const Mlp c = init_network({2304, 3, 4, 7}, 43);
    CHECK_FALSE(a == c);
}

TEST_CASE("init_network zeroes biases")
{
    const Mlp net = init_network({1, 1, 1, 1}, 9);
    for (const auto& layer : net.params.layers)
        CHECK(layer.bias == Vector(1, 0.0));
}

TEST_CASE("init_network weights respect the fan-in bound")
{
    const Mlp net = init_network({2304, 10, 10, 7}, 5);
    const double bound = 1.0 / std::sqrt(2304.0);
    CHECK(bound == doctest::Approx(0.0208333).epsilon(1e-5));
    double worst = 0.0;
    for (double w : net.layer(0).weight.flat())
        worst = std::max(worst, std::abs(w));
    CHECK(worst <= bound);
    CHECK(worst > 0.9 * bound);

    const double bound3 = 1.0 / std::sqrt(10.0);
    for (double w : net.layer(2).weight.flat())
        CHECK(std::abs(w) <= bound3);
}

TEST_CASE("init_network rejects empty layers")
{
    const LayerSizes empty_hidden{4, 0, 3, 2};
    const LayerSizes empty_input{0, 3, 3, 2};
    CHECK_THROWS_AS(init_network(empty_hidden, 1), InvalidArgument);
    CHECK_THROWS_AS(init_network(empty_input, 1), InvalidArgument);
}

TEST_CASE("forward on an all-zero network is uniform")
{
    Mlp net = init_network({5, 3, 4, 7}, 1);
    net.params.set_zero();
    Rng rng(2);
    const ForwardCache c = forward(net, random_batch(3, 5, rng));
    for (double p : c.y.flat())
        CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("softmax is stable for large logits")
{
    Matrix z(1, 7, 0.0);
    z(0, 0) = 1000.0;
    const Matrix y = softmax_rows(z);
    for (double p : y.flat())
        CHECK(std::isfinite(p));
    CHECK(y(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("forward rows are probability vectors")
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Mlp net = random_net({6, 5, 4, 3}, 100 + static_cast<std::uint64_t>(trial), 1.5);
        const ForwardCache c = forward(net, random_batch(8, 6, rng));
        for (std::size_t b = 0; b < c.y.rows(); ++b) {
            double sum = 0.0;
            for (double p : c.y.row(b)) {
                CHECK(p >= 0.0);
                CHECK(p <= 1.0);
                sum += p;
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("forward rejects mismatched input width")
{
    const Mlp net = init_network({4, 3, 3, 2}, 1);
    CHECK_THROWS_AS(forward(net, Matrix(2, 5)), ShapeError);
}

TEST_CASE("cross_entropy basic values")
{
    Matrix onehot(2, 3, 0.0);
    onehot(0, 1) = 1.0;
    onehot(1, 2) = 1.0;
    const std::vector<int> labels{1, 2};
    CHECK(cross_entropy(onehot, labels) == 0.0);

    Matrix uniform(4, 7, 1.0 / 7.0);
    const std::vector<int> l4{0, 3, 6, 2};
    CHECK(cross_entropy(uniform, l4) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
    CHECK(std::log(7.0) == doctest::Approx(1.945910).epsilon(1e-6));

    Matrix pair(2, 2);
    pair(0, 0) = 0.25;
    pair(0, 1) = 0.75;
    pair(1, 0) = 0.6;
    pair(1, 1) = 0.4;
    const std::vector<int> lp{0, 1};
    const double a = -std::log(0.25);
    const double b = -std::log(0.4);
    CHECK(cross_entropy(pair, lp) == doctest::Approx((a + b) / 2.0));
}

TEST_CASE("cross_entropy clamps zero probabilities")
{
    Matrix y(1, 2, 0.0);
    y(0, 0) = 1.0;
    const std::vector<int> labels{1};
    CHECK(cross_entropy(y, labels) == doctest::Approx(-std::log(kLogClamp)));
}

TEST_CASE("backward matches central finite differences")
{
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        const Mlp net = random_net({4, 3, 3, 2}, 500 + static_cast<std::uint64_t>(trial));
        const Matrix x = random_batch(5, 4, rng);
        const auto labels = random_labels(5, 2, rng);
        const GradientSet g = backward(net, x, forward(net, x), labels);
        const ParamSet fd = oracle::finite_difference_grad(net, x, labels, 1e-5);
        CHECK(oracle::max_relative_error(g.params, fd) < 1e-5);
    }
}

TEST_CASE("backward is zero when predictions equal targets")
{
    Mlp net = init_network({3, 2, 2, 3}, 4);
    net.layer(2).weight.fill(0.0);
    net.layer(2).bias = {0.0, 1000.0, 0.0};
    Rng rng(8);
    const Matrix x = random_batch(4, 3, rng);
    const std::vector<int> labels(4, 1);
    const ForwardCache c = forward(net, x);
    for (std::size_t b = 0; b < 4; ++b)
        CHECK(c.y(b, 1) == 1.0);
    const GradientSet g = backward(net, x, c, labels);
    g.params.for_each_array([](auto values) {
        for (double v : values)
            CHECK(v == 0.0);
    });
}

TEST_CASE("duplicating every example leaves gradients unchanged")
{
    Rng rng(31);
    const Mlp net = random_net({5, 4, 3, 3}, 12);
    const Matrix x = random_batch(6, 5, rng);
    const auto labels = random_labels(6, 3, rng);
    Matrix x2(12, 5);
    std::vector<int> labels2;
    for (std::size_t b = 0; b < 6; ++b) {
        for (int copy = 0; copy < 2; ++copy) {
            const std::size_t dst = 2 * b + static_cast<std::size_t>(copy);
            std::copy(x.row(b).begin(), x.row(b).end(), x2.row(dst).begin());
            labels2.push_back(labels[b]);
        }
    }
    const GradientSet g1 = backward(net, x, forward(net, x), labels);
    const GradientSet g2 = backward(net, x2, forward(net, x2), labels2);
    CHECK(oracle::max_relative_error(g1.params, g2.params, 1e-12) < 1e-12);
}

TEST_CASE("backward rejects mismatched labels")
{
    const Mlp net = init_network({4, 3, 3, 2}, 1);
    Rng rng(3);
    const Matrix x = random_batch(3, 4, rng);
    const std::vector<int> labels{0, 1};
    CHECK_THROWS_AS(backward(net, x, forward(net, x), labels), ShapeError);
}

namespace {

// 1-1-1-1 network used for scalar update arithmetic.
struct ScalarCase {
    Mlp net = init_network({1, 1, 1, 1}, 1);
    GradientSet grad = GradientSet::zeros_like(net);
    MomentumBuffer momentum = MomentumBuffer::zeros_like(net);

    ScalarCase(double w, double m, double g)
    {
        net.params.set_zero();
        net.layer(0).weight(0, 0) = w;
        momentum.buffer.params.layers[0].weight(0, 0) = m;
        grad.params.layers[0].weight(0, 0) = g;
    }
    double weight() const { return net.layer(0).weight(0, 0); }
    double buffer() const { return momentum.buffer.params.layers[0].weight(0, 0); }
};

} // namespace

TEST_CASE("momentum update arithmetic")
{
    SUBCASE("standard mode")
    {
        ScalarCase s(1.0, 0.1, 0.5);
        sgd_momentum_step(s.net, s.grad, s.momentum, Hyperparams{0.01, 0.9, 1});
        CHECK(s.buffer() == doctest::Approx(0.085).epsilon(1e-15));
        CHECK(s.weight() == doctest::Approx(1.085).epsilon(1e-15));
    }
    SUBCASE("paper-literal mode")
    {
        ScalarCase s(1.0, 0.1, 0.5);
        sgd_momentum_step(s.net, s.grad, s.momentum, {0.01, 0.9, 1}, MomentumMode::PaperLiteral);
        CHECK(s.weight() == doctest::Approx(1.085).epsilon(1e-15));
        CHECK(s.buffer() == 0.5);
    }
    SUBCASE("zero momentum is plain SGD in both modes")
    {
        for (auto mode : {MomentumMode::Standard, MomentumMode::PaperLiteral}) {
            ScalarCase s(1.0, 123.0, 0.5);
            sgd_momentum_step(s.net, s.grad, s.momentum, {0.01, 0.0, 1}, mode);
            CHECK(s.weight() == 1.0 - 0.01 * 0.5);
        }
    }
}

TEST_CASE("non-finite gradients are refused without modifying state")
{
    ScalarCase s(1.0, 0.1, std::nan(""));
    const Mlp before = s.net;
    const Hyperparams hp{0.01, 0.9, 1};
    CHECK_THROWS_AS(sgd_momentum_step(s.net, s.grad, s.momentum, hp), NumericError);
    CHECK(s.net == before);
    CHECK(s.buffer() == 0.1);
}

TEST_CASE("hyperparameter validation")
{
    auto valid = [](double lr, double mu, std::size_t batch) {
        const Hyperparams hp{lr, mu, batch};
        try {
            hp.validate(10);
            return true;
        } catch (const InvalidArgument&) {
            return false;
        }
    };
    CHECK(valid(0.1, 0.0, 1));
    CHECK(valid(0.1, 0.99, 10));
    CHECK_FALSE(valid(0.0, 0.5, 1));
    CHECK_FALSE(valid(0.1, 1.0, 1));
    CHECK_FALSE(valid(0.1, -0.1, 1));
    CHECK_FALSE(valid(0.1, 0.5, 0));
    CHECK_FALSE(valid(0.1, 0.5, 11));
}

TEST_CASE("grow then shrink restores the network bit-exactly")
{
    const Mlp net = init_network({2304, 3, 4, 7}, 3);
    const Mlp grown = resize_hidden_layer(net, 1, 4, 99);
    CHECK(grown.sizes() == LayerSizes({2304, 4, 4, 7}));
    CHECK(resize_hidden_layer(grown, 1, 3, 0) == net);
    CHECK(remove_hidden_neuron(grown, 1, 3) == net);
}

TEST_CASE("growing hidden layer 2 adjusts W2, b2 and W3")
{
    const Mlp net = init_network({2304, 3, 4, 7}, 3);
    const Mlp grown = resize_hidden_layer(net, 2, 5, 7);
    CHECK(grown.layer(1).weight.rows() == 5);
    CHECK(grown.layer(1).weight.cols() == 3);
    CHECK(grown.layer(1).bias.size() == 5);
    CHECK(grown.layer(2).weight.rows() == 7);
    CHECK(grown.layer(2).weight.cols() == 5);
    CHECK(grown.layer(0) == net.layer(0));
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(grown.layer(1).weight(r, c) == net.layer(1).weight(r, c));
    CHECK(grown.layer(1).bias[4] == 0.0);
}

TEST_CASE("removing a middle neuron drops its row and downstream column")
{
    const Mlp net = random_net({3, 4, 3, 2}, 21);
    const Mlp cut = remove_hidden_neuron(net, 2, 1);
    CHECK(cut.sizes() == LayerSizes({3, 4, 2, 2}));
    CHECK(cut.layer(1).weight(0, 0) == net.layer(1).weight(0, 0));
    CHECK(cut.layer(1).weight(1, 0) == net.layer(1).weight(2, 0));
    CHECK(cut.layer(2).weight(1, 1) == net.layer(2).weight(1, 2));
}

TEST_CASE("resize edge cases")
{
    const Mlp net = init_network({4, 1, 3, 2}, 1);
    CHECK_THROWS_AS(resize_hidden_layer(net, 1, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(resize_hidden_layer(net, 3, 2, 1), InvalidArgument);
    CHECK_THROWS_AS(remove_hidden_neuron(net, 1, 0), InvalidArgument);
    CHECK_THROWS_AS(remove_hidden_neuron(net, 2, 7), InvalidArgument);
}

TEST_CASE("forward still yields distributions after resizes")
{
    Rng rng(4);
    Mlp net = random_net({6, 3, 4, 5}, 8);
    net = resize_hidden_layer(net, 1, 6, 2);
    net = remove_hidden_neuron(net, 2, 0);
    net = resize_hidden_layer(net, 2, 7, 3);
    const ForwardCache c = forward(net, random_batch(5, 6, rng));
    for (std::size_t b = 0; b < 5; ++b) {
        const auto row = c.y.row(b);
        CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9);
    }
}

TEST_CASE("set_edge_weight writes exactly one entry")
{
    Mlp net = random_net({4, 3, 3, 2}, 5);
    const Mlp before = net;
    const EdgeId id{2, 1, 2};
    set_edge_weight(net, id, 0.375);
    CHECK(edge_weight(net, id) == 0.375);
    Mlp expect = before;
    expect.layer(1).weight(1, 2) = 0.375;
    CHECK(net == expect);

    const EdgeId bad_layer{4, 0, 0};
    const EdgeId bad_row{1, 3, 0};
    const EdgeId bad_col{3, 0, 3};
    const EdgeId ok{1, 0, 0};
    CHECK_THROWS_AS(set_edge_weight(net, bad_layer, 1.0), InvalidArgument);
    CHECK_THROWS_AS(set_edge_weight(net, bad_row, 1.0), InvalidArgument);
    CHECK_THROWS_AS(set_edge_weight(net, bad_col, 1.0), InvalidArgument);
    CHECK_THROWS_AS(set_edge_weight(net, ok, std::numeric_limits<double>::infinity()), NumericError);
}

TEST_CASE("zeroing the only path weight removes that input's contribution")
{
    Mlp net = init_network({2, 1, 1, 2}, 6);
    net.layer(0).weight(0, 0) = 0.7;
    net.layer(0).weight(0, 1) = 0.4;
    Matrix x(1, 2);
    x(0, 0) = 3.0;
    x(0, 1) = 1.0;
    CHECK(forward(net, x).z1(0, 0) == doctest::Approx(3.0 * 0.7 + 0.4));
    set_edge_weight(net, {1, 0, 0}, 0.0);
    CHECK(forward(net, x).z1(0, 0) == doctest::Approx(0.4));
}
