#pragma once

#include <cstddef>

#include "aiive/mlp.hpp"

namespace aiive {

struct Hyperparams {
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 64;

    // Throws InvalidArgument unless lr > 0, 0 <= momentum < 1 and
    // 1 <= batch_size <= train_size.
    void validate(std::size_t train_size) const;

    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

enum class MomentumMode {
    // v <- mu v - lr g ; W <- W + v
    Standard,
    // W <- W + mu g_prev - lr g, g_prev being the previous raw gradient
    PaperLiteral,
};

// Velocity (standard mode) or previous gradient (paper-literal mode), shaped
// like the network.
struct MomentumBuffer {
    GradientSet buffer;

    static MomentumBuffer zeros_like(const Mlp& net) { return {GradientSet::zeros_like(net)}; }
};

// Refuses (NumericError, nothing modified) when the gradient has a non-finite
// entry; ShapeError when the three sets are not congruent.
void sgd_momentum_step(Mlp& net, const GradientSet& grads, MomentumBuffer& momentum,
                       const Hyperparams& hp, MomentumMode mode = MomentumMode::Standard);

} // namespace aiive
