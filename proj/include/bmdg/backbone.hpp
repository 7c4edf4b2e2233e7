#pragma once

#include <torch/torch.h>

#include "bmdg/config.hpp"
#include "bmdg/image.hpp"

namespace bmdg {

// Spatial features for a batch of images. Flattened views are pixel-major: [B, H*W, C].
struct FeatureMaps {
    torch::Tensor low_map;     // [B, d_low, H', W']
    torch::Tensor high_map;    // [B, d, H, W]
    torch::Tensor global_vec;  // [B, d], spatial mean of high_map

    torch::Tensor low() const { return low_map.flatten(2).transpose(1, 2); }
    torch::Tensor high() const { return high_map.flatten(2).transpose(1, 2); }
};

struct ConvBlockImpl : torch::nn::Module {
    ConvBlockImpl(int in, int out, int kernel, int stride);
    torch::Tensor forward(const torch::Tensor& x);
    void zero_();

    torch::nn::Conv2d conv{nullptr};
    torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBlock);

struct BackboneOptions {
    int head_width = 16;
    int low_dim = 32;
    int tail_width = 64;
    int feature_dim = 128;
    LowTap low_tap = LowTap::head;

    static BackboneOptions from(const TrainConfig& cfg);
};

// Four stages: stage 1 is modality-specific (head.V / head.I), stages 2-4 are shared (tail).
// Output stride is 2.
class BackboneImpl : public torch::nn::Module {
public:
    explicit BackboneImpl(const BackboneOptions& opts);

    // Runs head(m) then tail.
    FeatureMaps extract(const torch::Tensor& images, Modality m);

    torch::Tensor head_forward(const torch::Tensor& images, Modality m);
    // Tail over head outputs; returns the tail1 tap through *tail1 when non-null.
    torch::Tensor tail_forward(const torch::Tensor& head_out, torch::Tensor* tail1 = nullptr);
    FeatureMaps assemble(const torch::Tensor& head_out, const torch::Tensor& tail1,
                         const torch::Tensor& high) const;

    torch::nn::Sequential& head(Modality m) { return m == Modality::visible ? head_v_ : head_i_; }
    torch::nn::Sequential& tail() { return tail_; }
    const BackboneOptions& options() const { return opts_; }
    int low_dim() const { return opts_.low_tap == LowTap::head ? opts_.low_dim : opts_.tail_width; }

    // Zeroes the last tail layer so every output is exactly 0.
    void zero_final_layer();

private:
    BackboneOptions opts_;
    torch::nn::Sequential head_v_{nullptr};
    torch::nn::Sequential head_i_{nullptr};
    torch::nn::Sequential tail_{nullptr};
};
TORCH_MODULE(Backbone);

}  // namespace bmdg
