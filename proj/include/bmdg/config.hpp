#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bmdg {

enum class Direction { bidirectional, v_to_i, i_to_v, single_step };
enum class MixingMode { prototype_exchange, whole_mixup };
enum class LowTap { head, tail1 };

std::string_view to_string(Direction d);
std::string_view to_string(MixingMode m);
std::string_view to_string(LowTap t);
Direction parse_direction(std::string_view s);
MixingMode parse_mixing_mode(std::string_view s);

struct DatasetSpec {
    int num_identities = 20;
    int images_per_identity_per_modality = 10;
    int image_height = 36;
    int image_width = 18;
    int num_body_parts = 4;
    double noise_level = 0.08;
    std::uint64_t seed = 7;

    void validate() const;
};

struct LossWeights {
    double lambda_f = 0.1;   // L_lc + L_hc
    double lambda_v = 0.05;  // L_vc
    double lambda_c = 0.2;   // L_c
    double lambda_i = 0.4;   // L_p
    double lambda_e = 0.5;   // L_eq
    double tau = 0.1;

    void validate() const;
};

struct TrainConfig {
    int num_prototypes = 6;  // K
    int num_steps = 4;       // T
    LossWeights weights;
    double cc_margin = 0.3;
    double classifier_dropout = 0.2;

    int batch_identities = 10;  // N_b
    int batch_positives = 8;    // N_p
    int image_height = 36;
    int image_width = 18;

    int feature_dim = 128;      // d
    int low_feature_dim = 32;   // d_low
    int embed_dim = 128;        // d_e
    int attention_dim = 64;     // d_a
    int head_width = 16;
    int tail_width = 64;
    int unet_width = 32;
    int unet_depth = 2;
    LowTap low_tap = LowTap::head;

    int epochs = 30;
    int batches_per_epoch = 0;  // 0: one pass over the visible images
    double lr = 4e-4;
    double weight_decay = 0.0;
    int warmup_epochs = 3;
    std::vector<int> lr_milestones;   // empty: 80/180 and 120/180 of epochs
    std::vector<int> step_boundaries; // empty: uniform partition into T steps

    std::uint64_t seed = 1;
    Direction direction = Direction::bidirectional;
    MixingMode mixing = MixingMode::prototype_exchange;

    int crop_pad = 4;
    double erase_prob = 0.5;
    std::vector<std::string> eq_transforms{"hflip"};

    int checkpoint_every = 1;
    int mmd_every = 1;  // epochs between modality-gap probes, 0 = off
    int mmd_identities = 50;
    int mmd_images = 10;

    void validate() const;
    // Milestones after defaulting, in epochs.
    std::vector<int> resolved_milestones() const;
};

// Structured text form (one JSON object). Unknown keys are rejected.
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string dump_train_config(const TrainConfig& cfg);
std::uint64_t config_hash(const TrainConfig& cfg);

DatasetSpec parse_dataset_spec(std::string_view text);
DatasetSpec load_dataset_spec(const std::filesystem::path& path);
std::string dump_dataset_spec(const DatasetSpec& spec);

}  // namespace bmdg
