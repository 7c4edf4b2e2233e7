#pragma once

#include <vector>

#include <torch/torch.h>

#include "bmdg/config.hpp"
#include "bmdg/rng.hpp"

namespace bmdg {

struct ApeOptions {
    int num_prototypes = 6;
    int in_dim = 128;
    int attention_dim = 64;
    int out_dim = 128;
};

// Attentive prototype embedding: B = sigmoid(Wq(A) Wk(A)^T / sqrt(d_a)), C = B Wv(A),
// output = W_mlp(flatten(C)).
class ApeImpl : public torch::nn::Module {
public:
    explicit ApeImpl(const ApeOptions& opts);

    // a: [N, K, d] or [K, d] -> [N, d_e] or [d_e].
    torch::Tensor forward(const torch::Tensor& a);
    // The K x K gate for inspection.
    torch::Tensor gate(const torch::Tensor& a);

    void zero_final_layer();
    const ApeOptions& options() const { return opts_; }

    torch::nn::Linear w_q{nullptr}, w_k{nullptr}, w_v{nullptr}, w_mlp{nullptr};

private:
    ApeOptions opts_;
};
TORCH_MODULE(Ape);

// f = [APE(A); g]
torch::Tensor final_embedding(const torch::Tensor& ape_out, const torch::Tensor& global_vec);

struct MixResult {
    torch::Tensor a;        // mixed prototypes, same shape as the inputs
    torch::Tensor swapped;  // bool [.., K]: row taken from the other modality
};

// Per prototype row: keep own row when t/T <= u, u ~ U[0,1); otherwise copy the other's row.
// Rows are copied whole. Draw order is row-major over (batch, k).
MixResult mix_prototypes(const torch::Tensor& own, const torch::Tensor& other, int t, int total_steps,
                         Rng& rng);

// Whole-set interpolation alpha * own + (1 - alpha) * other with alpha = 1 - t/T.
torch::Tensor whole_mixup(const torch::Tensor& own, const torch::Tensor& other, int t, int total_steps);

struct StepSchedule {
    int total_steps = 0;          // T
    std::vector<int> boundaries;  // first epoch of steps 1..T, nondecreasing, starts at 0

    static StepSchedule uniform(int epochs, int total_steps);
    static StepSchedule from_config(const TrainConfig& cfg);
};

// Step index t for a 0-based epoch: 0 when T = 0, else the last step whose boundary has passed.
int step_for_epoch(int epoch, const StepSchedule& schedule);

// Which intermediates a training step builds.
struct DirectionFlags {
    bool visible_intermediate = false;   // A_v^(t) from V anchors
    bool infrared_intermediate = false;  // A_i^(t) from I anchors
};
Direction directionality_mode(const TrainConfig& cfg);
DirectionFlags direction_flags(Direction d);

}  // namespace bmdg
