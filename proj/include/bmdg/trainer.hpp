#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bmdg/bmdg.hpp"
#include "bmdg/config.hpp"
#include "bmdg/losses.hpp"
#include "bmdg/model.hpp"
#include "bmdg/protodisc.hpp"
#include "bmdg/rng.hpp"
#include "bmdg/synthdata.hpp"

namespace bmdg {

// Scalar snapshot of one objective evaluation.
struct TermValues {
    double re = 0, bce = 0, bcc = 0, lc = 0, hc = 0, vc = 0, c = 0, p = 0, eq = 0, total = 0;
};

struct Objective {
    LossTerms terms;
    ReidLoss reid;
    torch::Tensor total;
    torch::Tensor f_v, f_i, f_v_t, f_i_t;
    MixResult mix_v, mix_i;  // undefined tensors when that direction is off

    TermValues values() const;
};

// Columns of metrics.csv, one row per batch.
inline constexpr const char* kMetricsHeader =
    "epoch,step_t,batch,lr,L_re,L_bce,L_bcc,L_lc,L_hc,L_vc,L_c,L_p,L_eq,total";

class Trainer {
public:
    // out_dir may be empty: nothing is written to disk.
    Trainer(TrainConfig cfg, const Dataset& data, std::filesystem::path out_dir = {});

    // The full objective on one prepared batch. `r` is the equivariance transform.
    Objective objective(const torch::Tensor& images_v, const torch::Tensor& images_i,
                        const torch::Tensor& labels, int t, const RigidTransform& r, Rng& mix_rng);

    // Samples, augments, and takes one optimizer step at step index t.
    TermValues train_step(int t);

    // Trains until cfg.epochs; returns the last checkpoint path (empty without out_dir).
    std::filesystem::path run();
    // Restores parameters, optimizer, epoch, and rng state.
    void resume(const std::filesystem::path& checkpoint);

    // Crop/erase augmentation as used by train_step.
    torch::Tensor augment(const torch::Tensor& images);

    double learning_rate(int epoch, int batch) const;
    int batches_per_epoch() const;
    // Modality gap on the fixed probe subset, L2-normalized embeddings.
    double probe_mmd();

    BmdgModel& model() { return model_; }
    torch::optim::Adam& optimizer() { return *optimizer_; }
    const TrainConfig& config() const { return cfg_; }
    const StepSchedule& schedule() const { return schedule_; }
    int epochs_completed() const { return epoch_; }
    Rng& sampler_rng() { return sampler_; }
    Rng& augment_rng() { return augment_; }
    Rng& mix_rng() { return mix_; }

    std::filesystem::path save(const std::filesystem::path& path);

private:
    void set_lr(double lr);
    void open_logs(bool append);

    TrainConfig cfg_;
    const Dataset& data_;
    std::filesystem::path out_dir_;
    StepSchedule schedule_;
    BmdgModel model_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    Rng sampler_, augment_, mix_;
    int epoch_ = 0;
    std::vector<std::size_t> probe_v_, probe_i_;
    std::ofstream metrics_, mmd_, log_;
};

// Train from scratch, writing all artifacts under out_dir.
std::filesystem::path train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& out_dir);

}  // namespace bmdg
