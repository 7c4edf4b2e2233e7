#pragma once

#include <torch/torch.h>

#include "bmdg/rng.hpp"

namespace bmdg {

enum class PrototypeLevel { low, high };

// K prototype vectors per image: a is [B, K, D] (or [K, D] for a single image).
struct PrototypeSet {
    torch::Tensor a;
    PrototypeLevel level = PrototypeLevel::high;
};

// Per-pixel K-way assignment probabilities, [B, H*W, K]; rows sum to 1.
struct MaskScores {
    torch::Tensor m;
    int height = 0;
    int width = 0;

    // [B, K, H, W] view for spatial ops.
    torch::Tensor spatial() const;
    static MaskScores from_spatial(const torch::Tensor& bkhw);
};

struct MaskHeadOptions {
    int in_channels = 128;
    int width = 32;
    int depth = 2;
    int num_prototypes = 6;
};

// Shallow encoder-decoder over the high-level feature map with skip connections.
class MaskHeadImpl : public torch::nn::Module {
public:
    explicit MaskHeadImpl(const MaskHeadOptions& opts);

    // high_map: [B, d, H, W] -> softmax-normalized masks.
    MaskScores forward(const torch::Tensor& high_map);
    torch::Tensor logits(const torch::Tensor& high_map);

    void zero_final_layer();
    int num_prototypes() const { return opts_.num_prototypes; }

private:
    MaskHeadOptions opts_;
    torch::nn::Sequential stem_{nullptr};
    torch::nn::ModuleList down_{nullptr};
    torch::nn::ModuleList up_{nullptr};
    torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(MaskHead);

// p^k = sum_u M^k_u F_u / sum_u M^k_u. features [B,HW,D] or [HW,D]; masks [B,HW,K] or [HW,K].
// Throws DegeneratePrototypeError when a column's total weight is below 1e-8.
torch::Tensor aggregate_prototypes(const torch::Tensor& features, const torch::Tensor& masks);

// Brings low-level feature maps [B,C,H',W'] onto the mask grid [H,W] by average pooling.
torch::Tensor align_to_mask_grid(const torch::Tensor& low_map, int height, int width);

struct RigidTransform {
    enum class Kind { identity, hflip, translate, rotate90 };
    Kind kind = Kind::identity;
    int dx = 0;             // translate, mask-grid pixels
    int dy = 0;
    int quarter_turns = 1;  // rotate90, counter-clockwise

    // Same transform expressed on a grid `factor` times finer (translation scales).
    RigidTransform scaled(int factor) const;
    // True when invert(apply(x)) == x for every x of the given size.
    bool lossless() const { return kind != Kind::translate || (dx == 0 && dy == 0); }
};

RigidTransform::Kind parse_transform_kind(const std::string& s);
RigidTransform random_transform(const std::vector<std::string>& kinds, Rng& rng, int max_shift = 1);

// Apply / invert over the two trailing (H, W) dims of any tensor. Translation zero-fills.
torch::Tensor apply_transform(const torch::Tensor& x, const RigidTransform& r);
torch::Tensor invert_transform(const torch::Tensor& x, const RigidTransform& r);

// Image-level op: translation is expressed in mask pixels and multiplied by `stride`.
torch::Tensor transform_image(const torch::Tensor& images, const RigidTransform& r, int stride);
// Maps masks computed on a transformed image back to the original frame.
MaskScores invert_mask_transform(const MaskScores& masks, const RigidTransform& r);
MaskScores transform_masks(const MaskScores& masks, const RigidTransform& r);

}  // namespace bmdg
