#include "aiive/optimizer.hpp"

#include <cmath>
#include <string>

#include "aiive/error.hpp"

namespace aiive {

void Hyperparams::validate(std::size_t train_size) const
{
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw InvalidArgument("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw InvalidArgument("momentum must lie in [0, 1)");
    if (batch_size < 1 || batch_size > train_size)
        throw InvalidArgument("batch_size must lie in [1, " + std::to_string(train_size) + "]");
}

void sgd_momentum_step(Mlp& net, const GradientSet& grads, MomentumBuffer& momentum,
                       const Hyperparams& hp, MomentumMode mode)
{
    if (!net.params.congruent(grads.params) || !net.params.congruent(momentum.buffer.params))
        throw ShapeError("sgd_momentum_step: gradient/momentum shapes do not match the network");
    if (!grads.params.all_finite())
        throw NumericError("sgd_momentum_step: non-finite gradient, step refused");

    const double mu = hp.momentum;
    const double lr = hp.learning_rate;
    for (std::size_t i = 0; i < kNumLayers; ++i) {
        auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m) {
            for (std::size_t k = 0; k < w.size(); ++k) {
                if (mode == MomentumMode::Standard) {
                    m[k] = mu * m[k] - lr * g[k];
                    w[k] += m[k];
                } else {
                    w[k] += mu * m[k] - lr * g[k];
                    m[k] = g[k];
                }
            }
        };
        auto& layer = net.params.layers[i];
        const auto& glayer = grads.params.layers[i];
        auto& mlayer = momentum.buffer.params.layers[i];
        update(layer.weight.flat(), glayer.weight.flat(), mlayer.weight.flat());
        update(layer.bias, glayer.bias, mlayer.bias);
    }
}

} // namespace aiive
