#pragma once

// Independent reference computations for tests. Deliberately naive and in
// long double; shares nothing with the library's forward/backward path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "aiive/mlp.hpp"

namespace oracle {

using Real = long double;

// Mean cross-entropy of the network on (x rows, labels), computed per example
// with explicit loops.
inline Real mean_loss(const aiive::Mlp& net, const aiive::Matrix& x, const std::vector<int>& labels)
{
    Real total = 0;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        std::vector<Real> act(x.cols());
        for (std::size_t k = 0; k < x.cols(); ++k)
            act[k] = x(b, k);
        for (std::size_t layer = 0; layer < aiive::kNumLayers; ++layer) {
            const auto& p = net.layer(layer);
            std::vector<Real> next(p.weight.rows());
            for (std::size_t j = 0; j < p.weight.rows(); ++j) {
                Real s = p.bias[j];
                for (std::size_t k = 0; k < p.weight.cols(); ++k)
                    s += static_cast<Real>(p.weight(j, k)) * act[k];
                next[j] = (layer + 1 < aiive::kNumLayers) ? std::max<Real>(s, 0) : s;
            }
            act = next;
        }
        Real mx = act[0];
        for (Real v : act)
            mx = std::max(mx, v);
        Real denom = 0;
        for (Real v : act)
            denom += std::exp(v - mx);
        const Real logp = act[static_cast<std::size_t>(labels[b])] - mx - std::log(denom);
        total -= logp;
    }
    return total / static_cast<Real>(x.rows());
}

// Central finite difference of mean_loss with respect to every parameter,
// returned in the same shape as the network.
inline aiive::ParamSet finite_difference_grad(const aiive::Mlp& net, const aiive::Matrix& x,
                                              const std::vector<int>& labels, double h)
{
    aiive::Mlp probe = net;
    aiive::ParamSet grad = net.params;
    for (std::size_t layer = 0; layer < aiive::kNumLayers; ++layer) {
        auto perturb = [&](double& slot, double& out) {
            const double saved = slot;
            slot = saved + h;
            const Real up = mean_loss(probe, x, labels);
            slot = saved - h;
            const Real down = mean_loss(probe, x, labels);
            slot = saved;
            out = static_cast<double>((up - down) / (2 * static_cast<Real>(h)));
        };
        auto w = probe.layer(layer).weight.flat();
        auto gw = grad.layers[layer].weight.flat();
        for (std::size_t i = 0; i < w.size(); ++i)
            perturb(w[i], gw[i]);
        auto& bias = probe.layer(layer).bias;
        auto& gb = grad.layers[layer].bias;
        for (std::size_t i = 0; i < bias.size(); ++i)
            perturb(bias[i], gb[i]);
    }
    return grad;
}

// max over entries of |a - n| / max(|a|, |n|, floor)
inline double max_relative_error(const aiive::ParamSet& analytic, const aiive::ParamSet& numeric,
                                 double floor = 1e-8)
{
    double worst = 0.0;
    for (std::size_t layer = 0; layer < aiive::kNumLayers; ++layer) {
        auto cmp = [&](const std::vector<double>& a, const std::vector<double>& n) {
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
                worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
            }
        };
        cmp(analytic.layers[layer].weight.values(), numeric.layers[layer].weight.values());
        cmp(analytic.layers[layer].bias, numeric.layers[layer].bias);
    }
    return worst;
}

} // namespace oracle
