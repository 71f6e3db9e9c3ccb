#include "sf2f/trainer.hpp"

namespace sf2f {

void TrainConfig::validate() const {
    if (epochs <= 0) throw Error("epochs must be positive");
    if (batch_size == 0) throw Error("batch size must be positive");
    if (!(lr_max >= lr_min) || lr_min < 0.0) throw Error("need 0 <= lr_min <= lr_max");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must lie in [0, 1)");
}

KeyValues TrainConfig::to_key_values() const {
    KeyValues kv;
    kv["train.epochs"] = std::to_string(epochs);
    kv["train.batch_size"] = std::to_string(batch_size);
    kv["train.lr_max"] = format_double(lr_max);
    kv["train.lr_min"] = format_double(lr_min);
    kv["train.momentum"] = format_double(momentum);
    kv["train.weight_decay"] = format_double(weight_decay);
    kv["train.grad_clip"] = format_double(grad_clip);
    kv["train.seed"] = std::to_string(seed);
    kv["train.augment"] = augment ? "1" : "0";
    kv["train.normalize"] = normalize ? "1" : "0";
    kv["train.majority_vote"] = majority_vote ? "1" : "0";
    kv["train.select_best"] = select_best ? "1" : "0";
    kv["train.flip_probability"] = format_double(augmentation.flip_probability);
    kv["train.max_rotation_degrees"] = format_double(augmentation.max_rotation_degrees);
    if (!init_checkpoint.empty()) kv["train.init_checkpoint"] = init_checkpoint;
    return kv;
}

void TrainConfig::apply(const KeyValues& kv) {
    epochs = static_cast<int>(kv_int(kv, "train.epochs", epochs));
    const long long bs = kv_int(kv, "train.batch_size", static_cast<long long>(batch_size));
    if (bs <= 0) throw Error("train.batch_size must be positive");
    batch_size = static_cast<std::size_t>(bs);
    lr_max = kv_double(kv, "train.lr_max", lr_max);
    lr_min = kv_double(kv, "train.lr_min", lr_min);
    momentum = kv_double(kv, "train.momentum", momentum);
    weight_decay = kv_double(kv, "train.weight_decay", weight_decay);
    grad_clip = kv_double(kv, "train.grad_clip", grad_clip);
    seed = static_cast<std::uint64_t>(kv_int(kv, "train.seed", static_cast<long long>(seed)));
    augment = kv_bool(kv, "train.augment", augment);
    normalize = kv_bool(kv, "train.normalize", normalize);
    majority_vote = kv_bool(kv, "train.majority_vote", majority_vote);
    select_best = kv_bool(kv, "train.select_best", select_best);
    augmentation.flip_probability = kv_double(kv, "train.flip_probability", augmentation.flip_probability);
    augmentation.max_rotation_degrees = kv_double(kv, "train.max_rotation_degrees", augmentation.max_rotation_degrees);
    init_checkpoint = kv_string(kv, "train.init_checkpoint", init_checkpoint);
    validate();
}

SampleSource slice_source(const std::vector<LabeledSlice>& slices, std::size_t channels, const AugmentOptions& aug) {
    SampleSource src;
    src.labels.reserve(slices.size());
    for (const auto& s : slices) src.labels.push_back(s.label);
    src.make_input = [&slices, channels, aug](std::size_t i, std::optional<std::uint64_t> seed) {
        if (!seed) return to_model_input(slices[i].image, channels);
        Rng rng(*seed);
        return to_model_input(augment(slices[i].image, rng, aug), channels);
    };
    return src;
}

}  // namespace sf2f
