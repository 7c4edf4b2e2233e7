#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "bmdg/config.hpp"
#include "bmdg/model.hpp"

namespace bmdg {

inline constexpr std::int64_t kCheckpointFormat = 1;

struct CheckpointMeta {
    std::int64_t format_version = kCheckpointFormat;
    int epochs_completed = 0;
    int step_t = 0;
    int num_classes = 0;
    std::uint64_t config_hash = 0;
    std::string config_json;
    std::string rng_sampler;
    std::string rng_augment;
    std::string rng_mix;
    torch::Tensor torch_rng_state;
};

void save_checkpoint(const std::filesystem::path& path, BmdgModel& model,
                     torch::optim::Optimizer* optimizer, const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

// Rebuilds the model from the stored config and loads its parameters and buffers.
struct LoadedModel {
    CheckpointMeta meta;
    TrainConfig config;
    BmdgModel model{nullptr};
};
LoadedModel load_model(const std::filesystem::path& path);

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace bmdg
