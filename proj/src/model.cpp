#include "bmdg/model.hpp"

#include "bmdg/errors.hpp"

namespace bmdg {

BmdgModelImpl::BmdgModelImpl(const TrainConfig& cfg, int num_classes)
    : num_classes_(num_classes), embedding_dim_(cfg.embed_dim + cfg.feature_dim) {
    if (num_classes < 2) throw PreconditionError("model needs at least 2 identity classes");
    backbone = register_module("backbone", Backbone(BackboneOptions::from(cfg)));
    mask_head = register_module(
        "mask_head", MaskHead(MaskHeadOptions{cfg.feature_dim, cfg.unet_width, cfg.unet_depth, cfg.num_prototypes}));
    ape = register_module(
        "ape", Ape(ApeOptions{cfg.num_prototypes, cfg.feature_dim, cfg.attention_dim, cfg.embed_dim}));
    part_classifiers = register_module(
        "part_classifiers",
        PartClassifierBank(cfg.num_prototypes, cfg.feature_dim, num_classes, cfg.classifier_dropout));
    id_classifier = register_module("id_classifier", torch::nn::Linear(embedding_dim_, num_classes));
}

PrototypeForward BmdgModelImpl::finish(FeatureMaps maps) {
    PrototypeForward out;
    out.masks = mask_head->forward(maps.high_map);
    out.protos_high = aggregate_prototypes(maps.high(), out.masks.m);
    auto low = align_to_mask_grid(maps.low_map, out.masks.height, out.masks.width);
    out.protos_low = aggregate_prototypes(low.flatten(2).transpose(1, 2), out.masks.m);
    out.maps = std::move(maps);
    return out;
}

PrototypeForward BmdgModelImpl::forward(const torch::Tensor& images, Modality m) {
    return finish(backbone->extract(images, m));
}

std::pair<PrototypeForward, PrototypeForward> BmdgModelImpl::forward_pair(const torch::Tensor& images_v,
                                                                          const torch::Tensor& images_i) {
    const auto n = images_v.size(0);
    auto hv = backbone->head_forward(images_v, Modality::visible);
    auto hi = backbone->head_forward(images_i, Modality::infrared);
    auto heads = torch::cat({hv, hi}, 0);
    torch::Tensor t1;
    auto high = backbone->tail_forward(heads, &t1);
    auto maps = backbone->assemble(heads, t1, high);

    // Mask head and aggregation are per-image apart from batch norm; run them jointly too.
    auto joint = finish(std::move(maps));
    auto split = [&](int64_t begin, int64_t end) {
        PrototypeForward p;
        p.maps.low_map = joint.maps.low_map.slice(0, begin, end);
        p.maps.high_map = joint.maps.high_map.slice(0, begin, end);
        p.maps.global_vec = joint.maps.global_vec.slice(0, begin, end);
        p.masks = joint.masks;
        p.masks.m = joint.masks.m.slice(0, begin, end);
        p.protos_high = joint.protos_high.slice(0, begin, end);
        p.protos_low = joint.protos_low.slice(0, begin, end);
        return p;
    };
    return {split(0, n), split(n, heads.size(0))};
}

torch::Tensor BmdgModelImpl::embed(const torch::Tensor& protos_high, const torch::Tensor& global_vec) {
    return final_embedding(ape->forward(protos_high), global_vec);
}

PrototypeSet BmdgModelImpl::prototypes_from_image(const torch::Tensor& image, Modality m,
                                                  PrototypeLevel level) {
    if (image.dim() != 3) throw ShapeError("prototypes_from_image expects a [3,H,W] image");
    auto f = forward(image.unsqueeze(0), m);
    return {(level == PrototypeLevel::high ? f.protos_high : f.protos_low).squeeze(0), level};
}

torch::Tensor BmdgModelImpl::embed_images(const torch::Tensor& images, Modality m, int chunk) {
    torch::NoGradGuard guard;
    const bool was_training = is_training();
    eval();
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < images.size(0); i += chunk) {
        auto f = forward(images.slice(0, i, std::min<int64_t>(i + chunk, images.size(0))), m);
        parts.push_back(embed(f.protos_high, f.maps.global_vec));
    }
    train(was_training);
    return parts.empty() ? torch::empty({0, embedding_dim_}) : torch::cat(parts, 0);
}

}  // namespace bmdg
