#pragma once

#include <cstdint>
#include <filesystem>

#include "matsim/encoder.hpp"
#include "matsim/losses.hpp"

namespace matsim {

struct CheckpointInfo {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    LossConfig loss;
};

struct Checkpoint {
    EncoderModel model;
    CheckpointInfo info;
};

// One JSON header line {layer_dims, activation, seed, epoch, loss_config, n_classes},
// then one PDSC block per tensor in layer order, weight (out x in) before bias (out x 1).
// Parameters are stored as float32.
void write_checkpoint(const std::filesystem::path& path, const EncoderModel& model, const CheckpointInfo& info);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace matsim
