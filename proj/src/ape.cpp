#include <cmath>

#include "bmdg/bmdg.hpp"
#include "bmdg/errors.hpp"

namespace bmdg {

ApeImpl::ApeImpl(const ApeOptions& opts) : opts_(opts) {
    w_q = register_module("w_q", torch::nn::Linear(opts.in_dim, opts.attention_dim));
    w_k = register_module("w_k", torch::nn::Linear(opts.in_dim, opts.attention_dim));
    w_v = register_module("w_v", torch::nn::Linear(opts.in_dim, opts.attention_dim));
    w_mlp = register_module("w_mlp",
                            torch::nn::Linear(opts.num_prototypes * opts.attention_dim, opts.out_dim));
}

torch::Tensor ApeImpl::gate(const torch::Tensor& a) {
    auto q = w_q(a);
    auto k = w_k(a);
    return torch::sigmoid(torch::matmul(q, k.transpose(-1, -2)) / std::sqrt(double(opts_.attention_dim)));
}

torch::Tensor ApeImpl::forward(const torch::Tensor& a) {
    if (a.dim() < 2 || a.size(-2) != opts_.num_prototypes || a.size(-1) != opts_.in_dim) {
        throw ShapeError("APE expects [..., " + std::to_string(opts_.num_prototypes) + ", " +
                         std::to_string(opts_.in_dim) + "] prototypes");
    }
    auto c = torch::matmul(gate(a), w_v(a));  // [.., K, d_a]
    return w_mlp(c.flatten(-2));
}

void ApeImpl::zero_final_layer() {
    torch::NoGradGuard guard;
    w_mlp->weight.zero_();
    w_mlp->bias.zero_();
}

torch::Tensor final_embedding(const torch::Tensor& ape_out, const torch::Tensor& global_vec) {
    return torch::cat({ape_out, global_vec}, -1);
}

}  // namespace bmdg
