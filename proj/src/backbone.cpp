#include "bmdg/backbone.hpp"

#include "bmdg/errors.hpp"

namespace bmdg {

namespace nn = torch::nn;

ConvBlockImpl::ConvBlockImpl(int in, int out, int kernel, int stride) {
    conv = register_module(
        "conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false)));
    bn = register_module("bn", nn::BatchNorm2d(out));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return torch::relu(bn(conv(x))); }

void ConvBlockImpl::zero_() {
    torch::NoGradGuard guard;
    conv->weight.zero_();
    bn->weight.zero_();
    bn->bias.zero_();
}

BackboneOptions BackboneOptions::from(const TrainConfig& cfg) {
    return {cfg.head_width, cfg.low_feature_dim, cfg.tail_width, cfg.feature_dim, cfg.low_tap};
}

BackboneImpl::BackboneImpl(const BackboneOptions& opts) : opts_(opts) {
    auto make_head = [&] {
        return nn::Sequential(ConvBlock(3, opts.head_width, 3, 1),
                              ConvBlock(opts.head_width, opts.low_dim, 3, 2));
    };
    auto heads = register_module("head", std::make_shared<nn::Module>());
    head_v_ = heads->register_module("V", make_head());
    head_i_ = heads->register_module("I", make_head());
    tail_ = register_module("tail", nn::Sequential(ConvBlock(opts.low_dim, opts.tail_width, 3, 1),
                                                   ConvBlock(opts.tail_width, opts.tail_width, 3, 1),
                                                   ConvBlock(opts.tail_width, opts.feature_dim, 1, 1)));
}

torch::Tensor BackboneImpl::head_forward(const torch::Tensor& images, Modality m) {
    if (images.dim() != 4 || images.size(1) != 3) {
        throw ShapeError("backbone expects [B,3,H,W] images");
    }
    return head(m)->forward(images);
}

torch::Tensor BackboneImpl::tail_forward(const torch::Tensor& head_out, torch::Tensor* tail1) {
    auto x = tail_[0]->as<ConvBlock>()->forward(head_out);
    if (tail1) *tail1 = x;
    for (std::size_t i = 1; i < tail_->size(); ++i) x = tail_[i]->as<ConvBlock>()->forward(x);
    return x;
}

FeatureMaps BackboneImpl::assemble(const torch::Tensor& head_out, const torch::Tensor& tail1,
                                   const torch::Tensor& high) const {
    FeatureMaps f;
    f.low_map = opts_.low_tap == LowTap::head ? head_out : tail1;
    f.high_map = high;
    f.global_vec = high.mean({2, 3});
    return f;
}

FeatureMaps BackboneImpl::extract(const torch::Tensor& images, Modality m) {
    auto h = head_forward(images, m);
    torch::Tensor t1;
    auto high = tail_forward(h, &t1);
    return assemble(h, t1, high);
}

void BackboneImpl::zero_final_layer() { tail_[tail_->size() - 1]->as<ConvBlock>()->zero_(); }

}  // namespace bmdg
