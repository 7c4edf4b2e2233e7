#include "bmdg/losses.hpp"

#include "bmdg/errors.hpp"

namespace bmdg {

namespace F = torch::nn::functional;

torch::Tensor contrastive_term(const torch::Tensor& anchor, const torch::Tensor& positive,
                               const torch::Tensor& negatives, double tau) {
    auto pos = (anchor * positive).sum() / tau;
    auto neg = torch::mv(negatives, anchor) / tau;
    auto denom = torch::logsumexp(torch::cat({pos.unsqueeze(0), neg}), 0);
    return denom - pos;
}

namespace {

// Mean over valid (n, m) pairs and all k of -log softmax-style terms.
torch::Tensor prototype_contrast(const torch::Tensor& protos, const torch::Tensor& pair_mask,
                                 double tau) {
    if (protos.dim() != 3) throw ShapeError("prototype batch must be [N, K, D]");
    const auto K = protos.size(1);
    if (K < 2) throw PreconditionError("contrastive prototype losses need K >= 2 (no negatives)");

    auto s = F::normalize(protos, F::NormalizeFuncOptions().dim(-1));
    // Within-sample similarities [N, K, K]; the diagonal is not a negative.
    auto within = torch::bmm(s, s.transpose(1, 2)) / tau;
    auto eye = torch::eye(K, torch::TensorOptions().dtype(torch::kBool).device(protos.device()));
    auto lse_neg = torch::logsumexp(within.masked_fill(eye, -std::numeric_limits<double>::infinity()), -1);
    // Same-index similarities across samples [K, N, N].
    auto pos = torch::einsum("nkd,mkd->knm", {s, s}) / tau;
    // -log(e^pos / (e^pos + e^lse_neg)) = log(1 + e^(lse_neg - pos))
    auto diff = lse_neg.transpose(0, 1).unsqueeze(-1) - pos;
    auto terms = torch::logaddexp(torch::zeros_like(diff), diff);

    auto mask = pair_mask.to(terms.dtype()).unsqueeze(0);
    auto count = mask.sum() * static_cast<double>(K);
    if (count.item<double>() == 0.0) return (protos * 0.0).sum();
    return (terms * mask).sum() / count;
}

torch::Tensor off_diagonal(int64_t n, const torch::Device& device) {
    return torch::ones({n, n}, torch::TensorOptions().dtype(torch::kBool).device(device))
        .logical_xor(torch::eye(n, torch::TensorOptions().dtype(torch::kBool).device(device)));
}

}  // namespace

torch::Tensor loss_lc(const torch::Tensor& protos, double tau) {
    return prototype_contrast(protos, off_diagonal(protos.size(0), protos.device()), tau);
}

torch::Tensor loss_hc(const torch::Tensor& protos, const torch::Tensor& labels, double tau) {
    if (labels.numel() != protos.size(0)) throw ShapeError("loss_hc: one label per sample");
    auto same = labels.view({-1, 1}) == labels.view({1, -1});
    return prototype_contrast(protos, same.logical_and(off_diagonal(protos.size(0), protos.device())), tau);
}

torch::Tensor loss_compact(const torch::Tensor& features, const torch::Tensor& masks,
                           const torch::Tensor& protos) {
    if (features.dim() != 3 || masks.dim() != 3 || protos.dim() != 3 ||
        features.size(1) != masks.size(1) || masks.size(2) != protos.size(1) ||
        features.size(2) != protos.size(2)) {
        throw ShapeError("loss_compact: expected features [N,HW,D], masks [N,HW,K], protos [N,K,D]");
    }
    // Elementwise distances (no matmul expansion) keep exact zeros exact.
    auto dist = torch::cdist(features, protos, 2.0, /*compute_mode=*/2);  // [N, HW, K]
    return (masks * dist).sum({1, 2}).mean();
}

torch::Tensor loss_diverse(const torch::Tensor& masks) {
    if (masks.dim() != 3) throw ShapeError("loss_diverse: masks must be [N,HW,K]");
    auto gram = torch::bmm(masks.transpose(1, 2), masks);  // [N, K, K]
    auto diag = gram.diagonal(0, 1, 2).sum(-1);
    return ((gram.sum({1, 2}) - diag) * 0.5).mean();
}

torch::Tensor loss_equivariance(const torch::Tensor& masks, const torch::Tensor& masks_inverted) {
    if (masks.sizes() != masks_inverted.sizes()) throw ShapeError("loss_equivariance: shape mismatch");
    return (masks - masks_inverted).abs().flatten(1).sum(1).mean();
}

PartClassifierBankImpl::PartClassifierBankImpl(int num_parts, int in_dim, int num_classes, double dropout)
    : dropout_(dropout) {
    heads_ = register_module("heads", torch::nn::ModuleList());
    for (int k = 0; k < num_parts; ++k) heads_->push_back(torch::nn::Linear(in_dim, num_classes));
}

torch::Tensor PartClassifierBankImpl::forward(const torch::Tensor& protos) {
    if (protos.dim() != 3 || protos.size(1) != num_parts()) {
        throw ShapeError("part classifier bank expects [N, K, D] with K = " + std::to_string(num_parts()));
    }
    std::vector<torch::Tensor> logits;
    logits.reserve(num_parts());
    for (int k = 0; k < num_parts(); ++k) {
        auto lin = heads_[k]->as<torch::nn::Linear>();
        auto w = F::dropout(lin->weight, F::DropoutFuncOptions().p(dropout_).training(is_training()));
        logits.push_back(F::linear(protos.select(1, k), w, lin->bias));
    }
    return torch::stack(logits, 1);
}

torch::Tensor loss_part_id_logits(const torch::Tensor& logits, const torch::Tensor& labels) {
    const auto N = logits.size(0), K = logits.size(1);
    auto expanded = labels.view({N, 1}).expand({N, K}).reshape({-1});
    // Mean over N*K equals (1/K) sum_k of the per-part batch means.
    return F::cross_entropy(logits.reshape({N * K, -1}), expanded);
}

torch::Tensor loss_part_id(const torch::Tensor& protos, const torch::Tensor& labels,
                           PartClassifierBank& bank) {
    return loss_part_id_logits(bank->forward(protos), labels);
}

torch::Tensor loss_ce(const torch::Tensor& logits, const torch::Tensor& labels) {
    return F::cross_entropy(logits, labels);
}

torch::Tensor loss_cc(const torch::Tensor& x, const torch::Tensor& x_labels, const torch::Tensor& x2,
                      const torch::Tensor& x2_labels, double margin) {
    auto u = torch::cat({x, x2}, 0);
    auto y = torch::cat({x_labels, x2_labels}, 0);
    if (u.size(0) == 0) throw PreconditionError("loss_cc: empty identity groups");
    auto [uniq, inverse] = torch::_unique(y, /*sorted=*/true, /*return_inverse=*/true);
    const auto C = uniq.size(0);
    auto onehot = F::one_hot(inverse, C).to(u.dtype());      // [N, C]
    auto centers = onehot.t().mm(u) / onehot.sum(0).unsqueeze(1);  // [C, E]
    auto compact = (u - centers.index_select(0, inverse)).pow(2).sum(1).mean();
    if (C < 2) return compact;
    auto dist = torch::cdist(centers.unsqueeze(0), centers.unsqueeze(0), 2.0, 2).squeeze(0);
    auto off = off_diagonal(C, u.device());
    auto hinge = torch::relu(margin - dist).masked_select(off).sum();
    return compact + hinge;
}

ReidLoss loss_reid(const torch::Tensor& f_v, const torch::Tensor& f_i, const torch::Tensor& f_v_t,
                   const torch::Tensor& f_i_t, const torch::Tensor& labels,
                   torch::nn::Linear& id_classifier, double margin) {
    ReidLoss out;
    out.bce = loss_ce(id_classifier(f_v), labels) + loss_ce(id_classifier(f_v_t), labels) +
              loss_ce(id_classifier(f_i), labels) + loss_ce(id_classifier(f_i_t), labels);
    // Center clustering runs on the unit sphere, where matching happens and the margin has a scale.
    auto unit = [](const torch::Tensor& x) { return F::normalize(x, F::NormalizeFuncOptions().dim(1)); };
    out.bcc = loss_cc(unit(f_v), labels, unit(f_v_t), labels, margin) +
              loss_cc(unit(f_i), labels, unit(f_i_t), labels, margin);
    return out;
}

torch::Tensor total_loss(const LossTerms& t, const LossWeights& w) {
    return t.re + w.lambda_f * (t.lc + t.hc) + w.lambda_v * t.vc + w.lambda_c * t.c +
           w.lambda_i * t.p + w.lambda_e * t.eq;
}

}  // namespace bmdg
