#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sf2f/io.hpp"
#include "sf2f/model.hpp"

namespace sf2f {

// Layout (little-endian):
//   "SF2F" | u32 version | u32 n | n bytes of key=value config text |
//   repeated { u32 name_len | name | u8 dtype | u32 rank | u32 extents[rank] | raw data }
// dtype 1 = f32, 2 = f64. Momentum buffers, when saved, are records named
// "momentum/<parameter>".
inline constexpr char kCheckpointMagic[4] = {'S', 'F', '2', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
    int epoch = 0;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Sf2Former<T>& model, const TrainingState* state = nullptr);

template <typename T>
void save_checkpoint(const Sf2Former<T>& model, const std::string& path, const TrainingState* state = nullptr);

/// Architecture recorded in a checkpoint's config block.
ModelConfig checkpoint_config(const std::vector<std::uint8_t>& bytes);

/// Overwrites the parameters of `model` (and momentum buffers, when present).
/// Throws FormatError on layout problems, architecture mismatch, or
/// missing/unexpected parameter names (all listed in the message).
template <typename T>
std::optional<TrainingState> decode_checkpoint_into(Sf2Former<T>& model, const std::vector<std::uint8_t>& bytes);

template <typename T>
std::optional<TrainingState> load_checkpoint_into(Sf2Former<T>& model, const std::string& path);

template <typename T>
struct LoadedCheckpoint {
    Sf2Former<T> model;
    std::optional<TrainingState> state;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

}  // namespace sf2f
