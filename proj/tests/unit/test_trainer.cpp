#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "aiive/dataset.hpp"
#include "aiive/error.hpp"
#include "aiive/trainer.hpp"
#include "support/temp_dir.hpp"

using namespace aiive;
using testing_support::TempDir;

namespace {

const Dataset& small_dataset()
{
    static const Dataset ds = [] {
        SyntheticConfig cfg;
        cfg.counts = {350, 140, 70};
        cfg.seed = 3;
        return generate_synthetic(cfg);
    }();
    return ds;
}

} // namespace

TEST_CASE("steps per epoch rounds up")
{
    CHECK(steps_per_epoch(3374, 64) == 53);
    CHECK(steps_per_epoch(64, 64) == 1);
    CHECK(steps_per_epoch(65, 64) == 2);
    CHECK(steps_per_epoch(1, 1) == 1);
}

TEST_CASE("synthetic generator shape and balance")
{
    const Dataset& ds = small_dataset();
    CHECK(ds.size() == 560);
    CHECK(ds.input_dim() == 2304);
    CHECK(ds.num_classes() == 7);
    const auto pixels = ds.images().flat();
    CHECK(*std::min_element(pixels.begin(), pixels.end()) >= 0.0f);
    CHECK(*std::max_element(pixels.begin(), pixels.end()) <= 1.0f);
    std::array<int, 7> per_class{};
    for (std::size_t i : ds.indices(Split::Validation))
        ++per_class[static_cast<std::size_t>(ds.labels()[i])];
    for (int c : per_class)
        CHECK(c == 20);
}

TEST_CASE("split index sets are disjoint and cover the data")
{
    const Dataset& ds = small_dataset();
    std::set<std::size_t> seen;
    for (Split s : {Split::Train, Split::Validation, Split::Test})
        for (std::size_t i : ds.indices(s))
            CHECK(seen.insert(i).second);
    CHECK(seen.size() == ds.size());
}

TEST_CASE("synthetic generator is deterministic per seed")
{
    SyntheticConfig cfg;
    cfg.counts = {14, 7, 7};
    const Dataset a = generate_synthetic(cfg);
    const Dataset b = generate_synthetic(cfg);
    CHECK(a.images() == b.images());
    CHECK(a.labels() == b.labels());
    cfg.seed = 2;
    CHECK_FALSE(generate_synthetic(cfg).images() == a.images());
}

TEST_CASE("dataset files round-trip")
{
    TempDir dir;
    SyntheticConfig cfg;
    cfg.counts = {21, 7, 7};
    const Dataset ds = generate_synthetic(cfg);
    save_dataset(ds, dir / "ds");

    std::ifstream meta(dir / "ds.meta");
    std::string magic;
    std::getline(meta, magic);
    CHECK(magic == "AIIVE-DS/1");
    CHECK(std::filesystem::file_size(dir / "ds.bin") == 35u * 2304u * 4u + 35u);

    const Dataset back = load_dataset(dir / "ds");
    CHECK(back.images() == ds.images());
    CHECK(back.labels() == ds.labels());
    CHECK(back.split_counts() == ds.split_counts());
    CHECK(back.num_classes() == 7);
}

TEST_CASE("dataset loader rejects broken files")
{
    TempDir dir;
    SyntheticConfig cfg;
    cfg.counts = {7, 7, 7};
    save_dataset(generate_synthetic(cfg), dir / "ds");

    SUBCASE("missing files")
    {
        CHECK_THROWS_AS(load_dataset(dir / "nope"), IoError);
    }
    SUBCASE("bad magic")
    {
        std::ofstream(dir / "ds.meta") << "NOT-A-DATASET\nN 21\n";
        CHECK_THROWS_AS(load_dataset(dir / "ds"), IoError);
    }
    SUBCASE("truncated payload")
    {
        std::filesystem::resize_file(dir / "ds.bin", 100);
        CHECK_THROWS_AS(load_dataset(dir / "ds"), IoError);
    }
    SUBCASE("split counts disagree with N")
    {
        std::ofstream(dir / "ds.meta") << "AIIVE-DS/1\nN 21\nD 2304\nC 7\nSPLIT 7 7 6\n";
        CHECK_THROWS_AS(load_dataset(dir / "ds"), IoError);
    }
    SUBCASE("label out of range")
    {
        std::ofstream(dir / "ds.meta") << "AIIVE-DS/1\nN 21\nD 2304\nC 3\nSPLIT 7 7 7\n";
        CHECK_THROWS_AS(load_dataset(dir / "ds"), IoError);
    }
}

TEST_CASE("zero-weight network stays at the uniform prediction")
{
    const Dataset& ds = small_dataset();
    Mlp net = init_network({2304, 8, 8, 7}, 1);
    net.params.set_zero();
    MomentumBuffer m = MomentumBuffer::zeros_like(net);
    const EpochMetrics metrics = train_epoch(net, ds, {0.05, 0.5, 32}, m, 4, 0);
    CHECK(metrics.epoch == 1);
    CHECK(metrics.val_loss == doctest::Approx(std::log(7.0)).epsilon(0.01));
    CHECK(std::abs(metrics.val_accuracy - 1.0 / 7.0) < 0.03);
}

TEST_CASE("training is deterministic for a fixed seed")
{
    const Dataset& ds = small_dataset();
    auto run = [&] {
        Trainer t(ds, init_network({2304, 8, 6, 7}, 11), {0.05, 0.9, 32}, 11);
        std::vector<EpochMetrics> out;
        for (int e = 0; e < 2; ++e)
            out.push_back(t.run_epoch());
        return std::make_pair(out, t.net());
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("Trainer stepping matches train_epoch")
{
    const Dataset& ds = small_dataset();
    const Hyperparams hp{0.05, 0.9, 48};
    Mlp net = init_network({2304, 6, 5, 7}, 2);
    MomentumBuffer m = MomentumBuffer::zeros_like(net);
    Trainer t(ds, net, hp, 9);
    for (std::size_t e = 0; e < 2; ++e) {
        const EpochMetrics direct = train_epoch(net, ds, hp, m, 9, e);
        CHECK(t.steps_per_epoch() == 8);
        CHECK(t.run_epoch() == direct);
    }
    CHECK(t.net() == net);
    CHECK(t.global_step() == 16);
}

TEST_CASE("epoch permutation covers the training split")
{
    const Dataset& ds = small_dataset();
    auto p = epoch_permutation(ds, 5, 0);
    CHECK(p != ds.indices(Split::Train));
    CHECK(p == epoch_permutation(ds, 5, 0));
    CHECK(p != epoch_permutation(ds, 5, 1));
    std::sort(p.begin(), p.end());
    CHECK(p == ds.indices(Split::Train));
}

TEST_CASE("structural edits keep the momentum buffer congruent")
{
    const Dataset& ds = small_dataset();
    Trainer t(ds, init_network({2304, 4, 4, 7}, 2), {0.05, 0.9, 50}, 1);
    t.step();
    t.grow_hidden(1, 77);
    CHECK(t.net().sizes() == LayerSizes({2304, 5, 4, 7}));
    CHECK(t.momentum().buffer.params.congruent(t.net().params));
    CHECK(t.momentum().buffer.params.layers[0].weight(4, 0) == 0.0);
    t.step();
    t.remove_hidden(2, 0);
    CHECK(t.momentum().buffer.params.congruent(t.net().params));
    t.step();
    CHECK(t.net().params.all_finite());
    CHECK_THROWS_AS(t.grow_hidden(0, 1), InvalidArgument);
}

TEST_CASE("editing a W2 entry changes the evaluation")
{
    const Dataset& ds = small_dataset();
    Trainer t(ds, init_network({2304, 6, 6, 7}, 8), {0.05, 0.9, 50}, 1);
    t.run_epoch();
    const EvalMetrics before = t.evaluate();
    const EdgeId id{2, 0, 0};
    const double w = edge_weight(t.net(), id);
    t.set_edge(id, w + 5.0);
    const EvalMetrics after = t.evaluate();
    CHECK(after.loss != before.loss);
    t.set_edge(id, w);
    CHECK(t.evaluate() == before);
}

TEST_CASE("trainer rejects mismatched networks and hyperparameters")
{
    const Dataset& ds = small_dataset();
    CHECK_THROWS_AS(Trainer(ds, init_network({100, 4, 4, 7}, 1), Hyperparams{}, 1), ShapeError);
    const Hyperparams too_big{0.1, 0.9, 351};
    CHECK_THROWS_AS(Trainer(ds, init_network({2304, 4, 4, 7}, 1), too_big, 1), InvalidArgument);
    Trainer t(ds, init_network({2304, 4, 4, 7}, 1), Hyperparams{0.1, 0.9, 50}, 1);
    CHECK_THROWS_AS(t.set_rates(0.1, 1.5), InvalidArgument);
    CHECK(t.hyperparams().momentum == 0.9);
}
