#pragma once

#include <utility>

#include <torch/torch.h>

#include "bmdg/backbone.hpp"
#include "bmdg/bmdg.hpp"
#include "bmdg/config.hpp"
#include "bmdg/losses.hpp"
#include "bmdg/protodisc.hpp"

namespace bmdg {

// Everything one modality's forward pass produces.
struct PrototypeForward {
    FeatureMaps maps;
    MaskScores masks;
    torch::Tensor protos_high;  // [B, K, d]
    torch::Tensor protos_low;   // [B, K, d_low]
};

class BmdgModelImpl : public torch::nn::Module {
public:
    BmdgModelImpl(const TrainConfig& cfg, int num_classes);

    PrototypeForward forward(const torch::Tensor& images, Modality m);
    // Both modalities with the shared tail run once over the concatenated batch.
    std::pair<PrototypeForward, PrototypeForward> forward_pair(const torch::Tensor& images_v,
                                                               const torch::Tensor& images_i);

    // f = [APE(A); g]
    torch::Tensor embed(const torch::Tensor& protos_high, const torch::Tensor& global_vec);

    // Single image [3,H,W] -> K x d (high) or K x d_low (low).
    PrototypeSet prototypes_from_image(const torch::Tensor& image, Modality m, PrototypeLevel level);

    // Eval-mode embeddings for a stack of images, processed in chunks.
    torch::Tensor embed_images(const torch::Tensor& images, Modality m, int chunk = 128);

    Backbone backbone{nullptr};
    MaskHead mask_head{nullptr};
    Ape ape{nullptr};
    PartClassifierBank part_classifiers{nullptr};
    torch::nn::Linear id_classifier{nullptr};

    int num_classes() const { return num_classes_; }
    int embedding_dim() const { return embedding_dim_; }

private:
    PrototypeForward finish(FeatureMaps maps);

    int num_classes_;
    int embedding_dim_;
};
TORCH_MODULE(BmdgModel);

}  // namespace bmdg
