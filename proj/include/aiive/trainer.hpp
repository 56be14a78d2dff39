#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "aiive/dataset.hpp"
#include "aiive/mlp.hpp"
#include "aiive/optimizer.hpp"

namespace aiive {

struct EvalMetrics {
    double accuracy = 0.0; // fraction with argmax y == label
    double loss = 0.0;     // mean cross-entropy

    friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

struct EpochMetrics {
    std::size_t epoch = 0; // number of completed training epochs
    double val_accuracy = 0.0;
    double val_loss = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

EvalMetrics evaluate(const Mlp& net, const Dataset& ds, Split split);

// ceil(train_size / batch_size); the last batch of an epoch may be short.
std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size);

// Training-set order for a given epoch. A pure function of (seed, epoch).
std::vector<std::size_t> epoch_permutation(const Dataset& ds, std::uint64_t seed,
                                           std::size_t epoch_index);

// One forward/backward/update on the given dataset rows. Returns the batch loss.
double train_step(Mlp& net, MomentumBuffer& momentum, const Dataset& ds,
                  std::span<const std::size_t> rows, const Hyperparams& hp, MomentumMode mode);

// Runs a full epoch over a seeded shuffle, then evaluates on the validation split.
EpochMetrics train_epoch(Mlp& net, const Dataset& ds, const Hyperparams& hp,
                         MomentumBuffer& momentum, std::uint64_t seed, std::size_t epoch_index,
                         MomentumMode mode = MomentumMode::Standard);

// Step-granular driver used by the session: owns the network, its momentum
// buffer and the position inside the current epoch. Structural edits keep the
// momentum buffer congruent.
class Trainer {
public:
    Trainer(const Dataset& ds, Mlp net, Hyperparams hp, std::uint64_t seed,
            MomentumMode mode = MomentumMode::Standard);

    const Mlp& net() const { return net_; }
    const Hyperparams& hyperparams() const { return hp_; }
    const MomentumBuffer& momentum() const { return momentum_; }
    MomentumMode mode() const { return mode_; }
    const Dataset& dataset() const { return *ds_; }

    std::size_t steps_per_epoch() const;
    std::size_t epochs_completed() const { return epoch_; }
    std::size_t step_in_epoch() const { return step_; }
    std::size_t global_step() const { return global_step_; }

    // True when every step of the current epoch has run and finish_epoch()
    // has not been called yet.
    bool epoch_done() const { return step_ >= steps_per_epoch(); }

    // One SGD step. Throws NumericError (state unchanged) on a non-finite gradient.
    void step();

    // Evaluates on validation and moves to the next epoch.
    EpochMetrics finish_epoch();

    EpochMetrics run_epoch();

    // Learning rate and momentum only; batch size is fixed per session.
    void set_rates(double learning_rate, double momentum);

    void set_edge(const EdgeId& id, double value);
    void set_weights(int layer, const Matrix& weight);
    void grow_hidden(int which, std::uint64_t seed);
    void remove_hidden(int which, std::size_t index);

    EvalMetrics evaluate(Split split = Split::Validation) const;

private:
    const Dataset* ds_;
    Mlp net_;
    Hyperparams hp_;
    std::uint64_t seed_;
    MomentumMode mode_;
    MomentumBuffer momentum_;
    std::size_t epoch_ = 0;
    std::size_t step_ = 0;
    std::size_t global_step_ = 0;
    std::vector<std::size_t> order_;
    Matrix x_;
    std::vector<int> labels_;
};

} // namespace aiive
