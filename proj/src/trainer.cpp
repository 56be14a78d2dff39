#include "aiive/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

namespace {

constexpr std::size_t kEvalChunk = 512;

} // namespace

EvalMetrics evaluate(const Mlp& net, const Dataset& ds, Split split)
{
    const auto rows = ds.indices(split);
    if (rows.empty())
        return {};
    if (ds.input_dim() != net.sizes()[0])
        throw ShapeError("evaluate: dataset input dimension does not match the network");

    Matrix x;
    std::vector<int> labels;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
        const std::size_t n = std::min(kEvalChunk, rows.size() - start);
        ds.gather(std::span(rows).subspan(start, n), x, labels);
        const ForwardCache c = forward(net, x);
        loss_sum += cross_entropy(c.y, labels) * static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b) {
            auto p = c.y.row(b);
            const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
            if (best == static_cast<std::size_t>(labels[b]))
                ++correct;
        }
    }
    const auto total = static_cast<double>(rows.size());
    return {static_cast<double>(correct) / total, loss_sum / total};
}

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size)
{
    if (batch_size == 0)
        throw InvalidArgument("batch_size must be >= 1");
    return (train_size + batch_size - 1) / batch_size;
}

std::vector<std::size_t> epoch_permutation(const Dataset& ds, std::uint64_t seed,
                                           std::size_t epoch_index)
{
    auto order = ds.indices(Split::Train);
    Rng rng(Rng::derive(seed, epoch_index));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

namespace {

double step_on(Mlp& net, MomentumBuffer& momentum, const Dataset& ds,
               std::span<const std::size_t> rows, const Hyperparams& hp, MomentumMode mode,
               Matrix& x, std::vector<int>& labels)
{
    ds.gather(rows, x, labels);
    const ForwardCache cache = forward(net, x);
    const GradientSet g = backward(net, x, cache, labels);
    sgd_momentum_step(net, g, momentum, hp, mode);
    return cross_entropy(cache.y, labels);
}

std::span<const std::size_t> batch_rows(const std::vector<std::size_t>& order, std::size_t step,
                                        std::size_t batch)
{
    const std::size_t start = step * batch;
    return std::span(order).subspan(start, std::min(batch, order.size() - start));
}

} // namespace

double train_step(Mlp& net, MomentumBuffer& momentum, const Dataset& ds,
                  std::span<const std::size_t> rows, const Hyperparams& hp, MomentumMode mode)
{
    Matrix x;
    std::vector<int> labels;
    return step_on(net, momentum, ds, rows, hp, mode, x, labels);
}

EpochMetrics train_epoch(Mlp& net, const Dataset& ds, const Hyperparams& hp,
                         MomentumBuffer& momentum, std::uint64_t seed, std::size_t epoch_index,
                         MomentumMode mode)
{
    if (ds.split_size(Split::Train) == 0)
        throw InvalidArgument("train_epoch: empty training split");
    hp.validate(ds.split_size(Split::Train));
    const auto order = epoch_permutation(ds, seed, epoch_index);
    const std::size_t steps = steps_per_epoch(order.size(), hp.batch_size);
    Matrix x;
    std::vector<int> labels;
    for (std::size_t s = 0; s < steps; ++s)
        step_on(net, momentum, ds, batch_rows(order, s, hp.batch_size), hp, mode, x, labels);
    const EvalMetrics m = evaluate(net, ds, Split::Validation);
    return {epoch_index + 1, m.accuracy, m.loss};
}

Trainer::Trainer(const Dataset& ds, Mlp net, Hyperparams hp, std::uint64_t seed, MomentumMode mode)
    : ds_(&ds), net_(std::move(net)), hp_(hp), seed_(seed), mode_(mode),
      momentum_(MomentumBuffer::zeros_like(net_))
{
    if (ds.split_size(Split::Train) == 0)
        throw InvalidArgument("trainer: empty training split");
    if (ds.input_dim() != net_.sizes()[0] || ds.num_classes() != net_.sizes()[3])
        throw ShapeError("trainer: network shape does not match the dataset");
    hp_.validate(ds.split_size(Split::Train));
}

std::size_t Trainer::steps_per_epoch() const
{
    return aiive::steps_per_epoch(ds_->split_size(Split::Train), hp_.batch_size);
}

void Trainer::step()
{
    if (epoch_done())
        throw InvalidArgument("trainer: epoch finished, call finish_epoch() first");
    if (step_ == 0 || order_.empty())
        order_ = epoch_permutation(*ds_, seed_, epoch_);
    step_on(net_, momentum_, *ds_, batch_rows(order_, step_, hp_.batch_size), hp_, mode_, x_,
            labels_);
    ++step_;
    ++global_step_;
}

EpochMetrics Trainer::finish_epoch()
{
    const EvalMetrics m = evaluate();
    ++epoch_;
    step_ = 0;
    order_.clear();
    return {epoch_, m.accuracy, m.loss};
}

EpochMetrics Trainer::run_epoch()
{
    while (!epoch_done())
        step();
    return finish_epoch();
}

void Trainer::set_rates(double learning_rate, double momentum)
{
    Hyperparams next = hp_;
    next.learning_rate = learning_rate;
    next.momentum = momentum;
    next.validate(ds_->split_size(Split::Train));
    hp_ = next;
}

void Trainer::set_edge(const EdgeId& id, double value)
{
    set_edge_weight(net_, id, value);
}

void Trainer::set_weights(int layer, const Matrix& weight)
{
    if (layer < 1 || layer > 3)
        throw InvalidArgument("set_weights: layer must be 1..3");
    Matrix& w = net_.layer(static_cast<std::size_t>(layer) - 1).weight;
    if (!w.same_shape(weight))
        throw ShapeError("set_weights: shape mismatch");
    for (double v : weight.flat())
        if (!std::isfinite(v))
            throw NumericError("set_weights: non-finite value");
    w = weight;
}

void Trainer::grow_hidden(int which, std::uint64_t seed)
{
    if (which != 1 && which != 2)
        throw InvalidArgument("hidden layer must be 1 or 2");
    const std::size_t count = net_.sizes()[static_cast<std::size_t>(which)];
    net_ = resize_hidden_layer(net_, which, count + 1, seed);
    momentum_.buffer.params = resize_hidden_zero(momentum_.buffer.params, which, count + 1);
}

void Trainer::remove_hidden(int which, std::size_t index)
{
    net_ = remove_hidden_neuron(net_, which, index);
    momentum_.buffer.params = remove_hidden_slot(momentum_.buffer.params, which, index);
}

EvalMetrics Trainer::evaluate(Split split) const
{
    return aiive::evaluate(net_, *ds_, split);
}

} // namespace aiive
