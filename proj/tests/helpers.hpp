#pragma once

#include <filesystem>
#include <string>

#include <torch/torch.h>

#include "bmdg/config.hpp"
#include "bmdg/synthdata.hpp"

namespace bmdg::testing {

inline bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
    return a.sizes() == b.sizes() && a.dtype() == b.dtype() && torch::equal(a, b);
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

// Scratch directory under the test working directory, emptied on creation.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// A small generated dataset shared by the model tests (generated once per process).
inline const std::filesystem::path& tiny_manifest() {
    static const std::filesystem::path path = [] {
        DatasetSpec spec;
        spec.num_identities = 4;
        spec.images_per_identity_per_modality = 4;
        spec.seed = 99;
        return generate_dataset(spec, scratch("tiny_data")).path;
    }();
    return path;
}

// Network sized for fast tests.
inline TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.num_prototypes = 3;
    cfg.num_steps = 2;
    cfg.batch_identities = 2;
    cfg.batch_positives = 2;
    cfg.feature_dim = 16;
    cfg.low_feature_dim = 8;
    cfg.embed_dim = 12;
    cfg.attention_dim = 8;
    cfg.head_width = 8;
    cfg.tail_width = 16;
    cfg.unet_width = 8;
    cfg.epochs = 2;
    cfg.warmup_epochs = 1;
    cfg.batches_per_epoch = 2;
    cfg.mmd_identities = 4;
    cfg.mmd_images = 2;
    return cfg;
}

}  // namespace bmdg::testing
