#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sf2f/layers.hpp"
#include "sf2f/model.hpp"
#include "sf2f/phantom.hpp"
#include "sf2f/trainer.hpp"
#include "sf2f/volume.hpp"

namespace sf2f {
namespace {

// A single linear layer over two input features.
struct LinearModel {
    ParameterStore<float> store;
    LinearRef<float> head;

    explicit LinearModel(std::uint64_t seed) {
        Rng rng(seed);
        head = make_linear(store, "head", 2, 2, rng);
    }
    ParameterStore<float>& parameters() { return store; }
    Var<float> forward(Graph<float>& g, const Tensor<float>& x) const { return apply(g, head, Var<float>::leaf(x)); }
};

SampleSource separable_points(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    auto points = std::make_shared<std::vector<Tensor<float>>>();
    SampleSource src;
    while (points->size() < n) {
        const float a = d(rng), b = d(rng);
        const float margin = a + 2.0f * b;
        if (std::abs(margin) < 0.2f) continue;
        points->push_back(Tensor<float>({2}, {a, b}));
        src.labels.push_back(margin > 0.0f ? kPatient : kControl);
    }
    src.make_input = [points](std::size_t i, std::optional<std::uint64_t>) { return (*points)[i]; };
    return src;
}

TrainConfig quick_config(int epochs, double lr) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.lr_max = lr;
    cfg.lr_min = std::min(lr, 1e-5);
    cfg.augment = false;
    return cfg;
}

TEST(TrainConfig, ValidationAndKeyValues) {
    TrainConfig cfg;
    EXPECT_EQ(cfg.epochs, 150);
    EXPECT_EQ(cfg.batch_size, 16u);
    EXPECT_EQ(cfg.lr_max, 1e-3);
    EXPECT_EQ(cfg.lr_min, 1e-5);
    EXPECT_EQ(cfg.momentum, 0.9);
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.lr_min = 1.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.seed = 42;
    cfg.augment = false;
    TrainConfig back;
    back.apply(cfg.to_key_values());
    EXPECT_EQ(back.to_key_values(), cfg.to_key_values());
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
    LinearModel m(1);
    const auto before = m.parameters().snapshot();
    TrainConfig cfg = quick_config(1, 0.0);
    cfg.lr_min = 0.0;
    const auto data = separable_points(16, 2);
    const auto r = train(m, data, nullptr, cfg);
    EXPECT_EQ(r.steps, 1u);
    const auto after = m.parameters().snapshot();
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST(Train, StepCountAndLogShape) {
    LinearModel m(1);
    const auto data = separable_points(37, 3);
    const auto r = train(m, data, nullptr, quick_config(4, 0.1));
    EXPECT_EQ(r.steps, 4u * 3u);
    ASSERT_EQ(r.log.size(), 4u);
    EXPECT_DOUBLE_EQ(r.log[0].lr, 0.1);
    EXPECT_TRUE(std::isnan(r.log[0].val_acc));
}

TEST(Train, LinearlySeparableReachesPerfectAccuracy) {
    LinearModel m(5);
    const auto data = separable_points(200, 6);
    const auto r = train(m, data, nullptr, quick_config(50, 0.5));
    EXPECT_EQ(r.log.back().train_acc, 1.0);
    EXPECT_EQ(accuracy(m, data), 1.0);
}

TEST(Train, BestValidationEpochIsRestored) {
    LinearModel m(7);
    const auto data = separable_points(64, 8);
    const auto val = separable_points(32, 9);
    std::vector<std::vector<Tensor<float>>> snapshots;
    TrainConfig cfg = quick_config(6, 0.5);
    const auto r = train(m, data, &val, cfg, [&](const EpochLog&) { snapshots.push_back(m.parameters().snapshot()); });
    double best = -1.0;
    int best_epoch = -1;
    for (const auto& e : r.log) {
        if (e.val_acc >= best) {
            best = e.val_acc;
            best_epoch = e.epoch;
        }
    }
    EXPECT_EQ(r.best_epoch, best_epoch);
    const auto now = m.parameters().snapshot();
    for (std::size_t i = 0; i < now.size(); ++i) EXPECT_EQ(now[i], snapshots[best_epoch][i]);
}

TEST(Train, DeterministicUnderSeed) {
    const auto data = separable_points(40, 10);
    LinearModel a(11), b(11);
    TrainConfig cfg = quick_config(3, 0.2);
    cfg.seed = 99;
    train(a, data, nullptr, cfg);
    train(b, data, nullptr, cfg);
    const auto sa = a.parameters().snapshot(), sb = b.parameters().snapshot();
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i], sb[i]);
}

TEST(Train, NonFiniteInputRaisesNumericalErrorWithStep) {
    LinearModel m(12);
    SampleSource data = separable_points(40, 13);
    auto inner = data.make_input;
    data.make_input = [inner](std::size_t i, std::optional<std::uint64_t> s) {
        auto t = inner(i, s);
        if (i == 35) t[0] = std::numeric_limits<float>::quiet_NaN();
        return t;
    };
    TrainConfig cfg = quick_config(1, 0.1);
    try {
        train(m, data, nullptr, cfg);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(e.step(), NumericalError::npos);
        EXPECT_LT(e.step(), 3u);
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(Train, FirstPhantomBatchLossDecreasesAfterOneSmallStep) {
    PhantomOptions po;
    po.n_subjects = 2;
    po.n_centers = 1;
    po.seed = 3;
    std::vector<LabeledSlice> slices;
    for (std::size_t i = 0; i < 2; ++i) {
        const auto set = select_slices(phantom_volume(po, i), 111, 118, SliceOptions{32, 32, true});
        for (const auto& s : set.slices) slices.push_back({s.image, phantom_label(po, i)});
    }
    const auto source = slice_source(slices, 1, AugmentOptions{});
    auto batch_loss = [&](const Sf2Former<float>& model) {
        Graph<float> g(false);
        std::vector<Var<float>> rows;
        for (std::size_t i = 0; i < source.size(); ++i) rows.push_back(model.forward(g, source.make_input(i, {})));
        return static_cast<double>(cross_entropy<float>(g, stack_rows<float>(g, rows), source.labels).value()[0]);
    };
    int decreased = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Sf2Former<float> model(ModelConfig::toy(), seed);
        const double before = batch_loss(model);
        TrainConfig cfg = quick_config(1, 1e-4);
        cfg.seed = seed;
        train(model, source, nullptr, cfg);
        decreased += batch_loss(model) < before;
    }
    EXPECT_GE(decreased, 19);
}

}  // namespace
}  // namespace sf2f
