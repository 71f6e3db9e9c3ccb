#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sf2f/autodiff.hpp"
#include "sf2f/config.hpp"
#include "sf2f/error.hpp"
#include "sf2f/image.hpp"
#include "sf2f/model.hpp"
#include "sf2f/nn.hpp"

namespace sf2f {

struct TrainConfig {
    int epochs = 150;
    std::size_t batch_size = 16;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double grad_clip = 0.0;
    std::uint64_t seed = 0;
    bool augment = true;
    bool normalize = true;
    bool majority_vote = true;
    /// When non-empty, weights are loaded from this checkpoint before training.
    std::string init_checkpoint;
    /// Restore the epoch with the best validation accuracy (ties to the latest).
    bool select_best = true;
    AugmentOptions augmentation;

    void validate() const;
    KeyValues to_key_values() const;
    /// Reads "train.*" keys, keeping current values for absent ones.
    void apply(const KeyValues& kv);
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    std::size_t steps = 0;
};

/// Inputs for one split: `make_input(i, aug_seed)` renders sample i, applying
/// augmentation seeded by `aug_seed` when it is present.
struct SampleSource {
    std::vector<int> labels;
    std::function<Tensor<float>(std::size_t, std::optional<std::uint64_t>)> make_input;

    std::size_t size() const noexcept { return labels.size(); }
};

struct LabeledSlice {
    Image image;
    int label = kControl;
};

/// Samples backed by slices; the augmentation clamp range follows `clamp`.
SampleSource slice_source(const std::vector<LabeledSlice>& slices, std::size_t channels, const AugmentOptions& aug);

using EpochCallback = std::function<void(const EpochLog&)>;

template <typename Model>
double accuracy(const Model& model, const SampleSource& data) {
    if (data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        Graph<float> g(false);
        const Var<float> logits = model.forward(g, data.make_input(i, std::nullopt));
        const auto& v = logits.value();
        std::size_t arg = 0;
        for (std::size_t c = 1; c < v.size(); ++c) {
            if (v[c] > v[arg]) arg = c;
        }
        correct += static_cast<int>(arg) == data.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mini-batch SGD with momentum under a per-epoch cosine schedule, one cross
/// entropy loss per batch. `Model` needs `forward(Graph<float>&, const
/// Tensor<float>&) const` returning logits and `parameters()`.
template <typename Model>
TrainResult train(Model& model, const SampleSource& train_data, const SampleSource* val_data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (train_data.size() == 0) throw DataError("training set is empty");
    auto& params = model.parameters();
    const SgdOptions base{cfg.lr_max, cfg.momentum, cfg.weight_decay, cfg.grad_clip};

    TrainResult result;
    std::vector<Tensor<float>> best;
    double best_val = -1.0;
    std::vector<std::size_t> order(train_data.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        SgdOptions opt = base;
        opt.lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            params.zero_grad();
            Graph<float> g(true);
            std::vector<Var<float>> rows;
            std::vector<int> labels;
            try {
                for (std::size_t b = start; b < end; ++b) {
                    const std::size_t idx = order[b];
                    std::optional<std::uint64_t> aug;
                    if (cfg.augment) aug = derive_seed(cfg.seed, 0x415547ULL + static_cast<std::uint64_t>(epoch), idx);
                    rows.push_back(model.forward(g, train_data.make_input(idx, aug)));
                    labels.push_back(train_data.labels[idx]);
                }
                const Var<float> logits = stack_rows<float>(g, rows);
                const Var<float> loss = cross_entropy<float>(g, logits, labels);
                g.backward(loss);
                const double lv = loss.value()[0];
                if (!std::isfinite(lv)) throw NumericalError("non-finite loss");
                loss_sum += lv * static_cast<double>(end - start);
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const auto& v = logits.value();
                    const std::size_t k = v.dim(1);
                    std::size_t arg = 0;
                    for (std::size_t c = 1; c < k; ++c) {
                        if (v[r * k + c] > v[r * k + arg]) arg = c;
                    }
                    correct += static_cast<int>(arg) == labels[r];
                }
                for (std::size_t p = 0; p < params.size(); ++p) {
                    if (!params[p].var.grad().all_finite()) {
                        throw NumericalError("non-finite gradient for " + params[p].name);
                    }
                }
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " at step " + std::to_string(result.steps),
                                     result.steps);
            }
            sgd_momentum_step(params, opt);
            ++result.steps;
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = opt.lr;
        log.train_loss = loss_sum / static_cast<double>(order.size());
        log.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        if (val_data && val_data->size() > 0) {
            log.val_acc = accuracy(model, *val_data);
            if (cfg.select_best && log.val_acc >= best_val) {
                best_val = log.val_acc;
                best = params.snapshot();
                result.best_epoch = epoch;
            }
        }
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    if (!best.empty()) {
        params.restore(best);
    } else {
        result.best_epoch = cfg.epochs - 1;
    }
    return result;
}

}  // namespace sf2f
