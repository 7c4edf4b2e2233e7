#include "bmdg/protodisc.hpp"

#include "bmdg/backbone.hpp"
#include "bmdg/errors.hpp"

namespace bmdg {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor MaskScores::spatial() const {
    return m.transpose(1, 2).reshape({m.size(0), m.size(2), height, width});
}

MaskScores MaskScores::from_spatial(const torch::Tensor& bkhw) {
    MaskScores s;
    s.height = static_cast<int>(bkhw.size(2));
    s.width = static_cast<int>(bkhw.size(3));
    s.m = bkhw.flatten(2).transpose(1, 2);
    return s;
}

MaskHeadImpl::MaskHeadImpl(const MaskHeadOptions& opts) : opts_(opts) {
    const int w = opts.width;
    stem_ = register_module("stem", nn::Sequential(ConvBlock(opts.in_channels, w, 1, 1),
                                                   ConvBlock(w, w, 3, 1)));
    down_ = register_module("down", nn::ModuleList());
    up_ = register_module("up", nn::ModuleList());
    for (int i = 0; i < opts.depth; ++i) {
        down_->push_back(ConvBlock(w, w, 3, 1));
        up_->push_back(ConvBlock(2 * w, w, 3, 1));
    }
    out_ = register_module("out", nn::Conv2d(nn::Conv2dOptions(w, opts.num_prototypes, 1)));
}

torch::Tensor MaskHeadImpl::logits(const torch::Tensor& high_map) {
    if (high_map.dim() != 4 || high_map.size(1) != opts_.in_channels) {
        throw ShapeError("mask head expects [B," + std::to_string(opts_.in_channels) + ",H,W]");
    }
    std::vector<torch::Tensor> skips{stem_->forward(high_map)};
    for (int i = 0; i < opts_.depth; ++i) {
        auto pooled = F::avg_pool2d(skips.back(), F::AvgPool2dFuncOptions(2).ceil_mode(true));
        skips.push_back(down_[i]->as<ConvBlock>()->forward(pooled));
    }
    auto x = skips.back();
    for (int i = opts_.depth - 1; i >= 0; --i) {
        const auto& skip = skips[i];
        auto upsampled = F::interpolate(x, F::InterpolateFuncOptions()
                                               .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                                               .mode(torch::kBilinear)
                                               .align_corners(false));
        x = up_[i]->as<ConvBlock>()->forward(torch::cat({upsampled, skip}, 1));
    }
    return out_(x);
}

MaskScores MaskHeadImpl::forward(const torch::Tensor& high_map) {
    auto l = logits(high_map);
    if (!torch::isfinite(l).all().item<bool>()) throw NumericError("mask head produced non-finite logits");
    return MaskScores::from_spatial(torch::softmax(l, 1));
}

void MaskHeadImpl::zero_final_layer() {
    torch::NoGradGuard guard;
    out_->weight.zero_();
    out_->bias.zero_();
}

torch::Tensor aggregate_prototypes(const torch::Tensor& features, const torch::Tensor& masks) {
    const bool single = features.dim() == 2;
    auto f = single ? features.unsqueeze(0) : features;
    auto m = single ? masks.unsqueeze(0) : masks;
    if (f.dim() != 3 || m.dim() != 3 || f.size(0) != m.size(0) || f.size(1) != m.size(1)) {
        throw ShapeError("aggregate_prototypes: features [B,HW,D] and masks [B,HW,K] must agree");
    }
    auto weight = m.sum(1);  // [B,K]
    if ((weight < 1e-8).any().item<bool>()) {
        throw DegeneratePrototypeError("a mask column has total weight below 1e-8");
    }
    auto p = torch::bmm(m.transpose(1, 2), f) / weight.unsqueeze(-1);
    return single ? p.squeeze(0) : p;
}

torch::Tensor align_to_mask_grid(const torch::Tensor& low_map, int height, int width) {
    if (low_map.size(2) == height && low_map.size(3) == width) return low_map;
    return F::adaptive_avg_pool2d(low_map, F::AdaptiveAvgPool2dFuncOptions({height, width}));
}

RigidTransform RigidTransform::scaled(int factor) const {
    RigidTransform r = *this;
    r.dx *= factor;
    r.dy *= factor;
    return r;
}

RigidTransform::Kind parse_transform_kind(const std::string& s) {
    using K = RigidTransform::Kind;
    if (s == "identity") return K::identity;
    if (s == "hflip") return K::hflip;
    if (s == "translate") return K::translate;
    if (s == "rotate90") return K::rotate90;
    throw PreconditionError("unknown transform '" + s + "'");
}

RigidTransform random_transform(const std::vector<std::string>& kinds, Rng& rng, int max_shift) {
    RigidTransform r;
    r.kind = parse_transform_kind(kinds[uniform_index(rng, kinds.size())]);
    if (r.kind == RigidTransform::Kind::translate) {
        const auto span = static_cast<std::size_t>(2 * max_shift + 1);
        r.dx = static_cast<int>(uniform_index(rng, span)) - max_shift;
        r.dy = static_cast<int>(uniform_index(rng, span)) - max_shift;
    } else if (r.kind == RigidTransform::Kind::rotate90) {
        r.quarter_turns = 1 + static_cast<int>(uniform_index(rng, 3));
    }
    return r;
}

namespace {

torch::Tensor shift(const torch::Tensor& x, int dx, int dy) {
    const int64_t h = x.size(-2), w = x.size(-1);
    if (std::abs(dx) >= w || std::abs(dy) >= h) {
        throw PreconditionError("translation moves the whole grid out of frame");
    }
    auto out = torch::zeros_like(x);
    using torch::indexing::Slice;
    auto src_y = Slice(std::max<int64_t>(0, -dy), h - std::max<int64_t>(0, dy));
    auto dst_y = Slice(std::max<int64_t>(0, dy), h - std::max<int64_t>(0, -dy));
    auto src_x = Slice(std::max<int64_t>(0, -dx), w - std::max<int64_t>(0, dx));
    auto dst_x = Slice(std::max<int64_t>(0, dx), w - std::max<int64_t>(0, -dx));
    out.index_put_({"...", dst_y, dst_x}, x.index({"...", src_y, src_x}));
    return out;
}

}  // namespace

torch::Tensor apply_transform(const torch::Tensor& x, const RigidTransform& r) {
    using K = RigidTransform::Kind;
    switch (r.kind) {
        case K::identity: return x;
        case K::hflip: return x.flip({-1});
        case K::translate: return shift(x, r.dx, r.dy);
        case K::rotate90: return torch::rot90(x, r.quarter_turns, {-2, -1});
    }
    return x;
}

torch::Tensor invert_transform(const torch::Tensor& x, const RigidTransform& r) {
    using K = RigidTransform::Kind;
    switch (r.kind) {
        case K::identity: return x;
        case K::hflip: return x.flip({-1});
        case K::translate: return shift(x, -r.dx, -r.dy);
        case K::rotate90: return torch::rot90(x, -r.quarter_turns, {-2, -1});
    }
    return x;
}

torch::Tensor transform_image(const torch::Tensor& images, const RigidTransform& r, int stride) {
    return apply_transform(images, r.scaled(stride));
}

MaskScores invert_mask_transform(const MaskScores& masks, const RigidTransform& r) {
    return MaskScores::from_spatial(invert_transform(masks.spatial(), r));
}

MaskScores transform_masks(const MaskScores& masks, const RigidTransform& r) {
    return MaskScores::from_spatial(apply_transform(masks.spatial(), r));
}

}  // namespace bmdg
