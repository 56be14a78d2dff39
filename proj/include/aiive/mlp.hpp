#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "aiive/matrix.hpp"

namespace aiive {

// [input_dim, hidden1, hidden2, output_dim]
using LayerSizes = std::array<std::size_t, 4>;

inline constexpr std::size_t kNumLayers = 3;

struct DenseParams {
    Matrix weight; // fan_out x fan_in
    Vector bias;   // fan_out

    friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

// Parameter-shaped storage: one weight matrix and bias vector per layer.
// Used for the network itself, its gradients, and optimizer buffers.
struct ParamSet {
    std::array<DenseParams, kNumLayers> layers;

    LayerSizes sizes() const;
    bool congruent(const ParamSet& other) const;
    bool all_finite() const;
    void set_zero();

    // Visits every (value) of every weight and bias, layer order, weight before bias.
    template <typename Fn>
    void for_each_array(Fn&& fn)
    {
        for (auto& layer : layers) {
            fn(layer.weight.flat());
            fn(std::span<double>(layer.bias));
        }
    }
    template <typename Fn>
    void for_each_array(Fn&& fn) const
    {
        for (const auto& layer : layers) {
            fn(layer.weight.flat());
            fn(std::span<const double>(layer.bias));
        }
    }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// z1 = W1 x + b1, h1 = ReLU(z1), z2 = W2 h1 + b2, h2 = ReLU(z2),
// z3 = W3 h2 + b3, y = softmax(z3).
struct Mlp {
    ParamSet params;

    LayerSizes sizes() const { return params.sizes(); }
    DenseParams& layer(std::size_t i) { return params.layers.at(i); }
    const DenseParams& layer(std::size_t i) const { return params.layers.at(i); }

    friend bool operator==(const Mlp&, const Mlp&) = default;
};

// Same shapes as the network it was computed for.
struct GradientSet {
    ParamSet params;

    static GradientSet zeros_like(const Mlp& net);
};

// Per-example activations, one row per example.
struct ForwardCache {
    Matrix z1, h1, z2, h2, z3, y;
};

// Zero biases, weights i.i.d. uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Mlp init_network(const LayerSizes& sizes, std::uint64_t seed);

ForwardCache forward(const Mlp& net, const Matrix& x_batch);

// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

// Mean over rows of -log(y[label]), y clamped at 1e-12.
double cross_entropy(const Matrix& y, std::span<const int> labels);

inline constexpr double kLogClamp = 1e-12;

// Exact gradients of the mean cross-entropy.
GradientSet backward(const Mlp& net, const Matrix& x_batch, const ForwardCache& cache,
                     std::span<const int> labels);

// Adds or removes neurons in hidden layer `which` (1 or 2). Growth appends
// freshly initialized neurons at the end; shrink drops the last neurons.
Mlp resize_hidden_layer(const Mlp& net, int which, std::size_t new_count, std::uint64_t seed);

// Removes neuron `index` from hidden layer `which`, with its incoming row and
// downstream column.
Mlp remove_hidden_neuron(const Mlp& net, int which, std::size_t index);

// Applies the same growth / removal to a parameter-shaped buffer, zero-filling
// new slots. Used to keep optimizer state congruent with the network.
ParamSet resize_hidden_zero(const ParamSet& buffer, int which, std::size_t new_count);
ParamSet remove_hidden_slot(const ParamSet& buffer, int which, std::size_t index);

// Addresses a single weight entry: layer in {1,2,3}, row/col into W_layer.
struct EdgeId {
    int layer = 1;
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const EdgeId&, const EdgeId&) = default;
};

double edge_weight(const Mlp& net, const EdgeId& id);
void set_edge_weight(Mlp& net, const EdgeId& id, double value);

void validate_sizes(const LayerSizes& sizes);

} // namespace aiive
