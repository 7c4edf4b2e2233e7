#pragma once

#include <torch/torch.h>

#include "bmdg/config.hpp"

namespace bmdg {

// -log(e^{a.p/tau} / (e^{a.p/tau} + sum_n e^{a.n/tau})) on raw dot products.
// anchor, positive: [D]; negatives: [M, D].
torch::Tensor contrastive_term(const torch::Tensor& anchor, const torch::Tensor& positive,
                               const torch::Tensor& negatives, double tau);

// Low-level contrast. protos: [N, K, D]. Positives of anchor (n, k) are the index-k prototypes
// of every other sample; negatives are the anchor's own other-index prototypes. Rows are
// L2-normalized first; the result is the mean over (anchor, positive) pairs.
torch::Tensor loss_lc(const torch::Tensor& protos, double tau);

// High-level contrast: as loss_lc with positives restricted to samples of the same identity.
// Returns 0 when no identity has two samples.
torch::Tensor loss_hc(const torch::Tensor& protos, const torch::Tensor& labels, double tau);

// sum_k sum_u M^k_u ||p^k - F_u||, batch mean. features [N,HW,D], masks [N,HW,K], protos [N,K,D].
torch::Tensor loss_compact(const torch::Tensor& features, const torch::Tensor& masks,
                           const torch::Tensor& protos);

// Pairwise overlap mass sum_{k<q} sum_u M^k_u M^q_u, batch mean. masks [N,HW,K].
torch::Tensor loss_diverse(const torch::Tensor& masks);

// sum_k ||M^k - R^-1(M~^k)||_1, batch mean.
torch::Tensor loss_equivariance(const torch::Tensor& masks, const torch::Tensor& masks_inverted);

// K unshared linear classifiers d -> C_y with DropConnect on their weights in training mode.
class PartClassifierBankImpl : public torch::nn::Module {
public:
    PartClassifierBankImpl(int num_parts, int in_dim, int num_classes, double dropout);

    // protos [N, K, D] -> logits [N, K, C].
    torch::Tensor forward(const torch::Tensor& protos);

    int num_parts() const { return static_cast<int>(heads_->size()); }
    torch::nn::Linear head(int k) { return torch::nn::Linear(heads_->ptr<torch::nn::LinearImpl>(k)); }
    double dropout() const { return dropout_; }

private:
    torch::nn::ModuleList heads_{nullptr};
    double dropout_;
};
TORCH_MODULE(PartClassifierBank);

// (1/K) sum_k CE(W^k(p^k), y), batch mean.
torch::Tensor loss_part_id(const torch::Tensor& protos, const torch::Tensor& labels,
                           PartClassifierBank& bank);
// Same, from precomputed logits [N, K, C].
torch::Tensor loss_part_id_logits(const torch::Tensor& logits, const torch::Tensor& labels);

// Identity cross-entropy of a shared classifier, batch mean.
torch::Tensor loss_ce(const torch::Tensor& logits, const torch::Tensor& labels);

// Center-cluster loss on the union of two embedding sets:
// mean_j ||x_j - c_{y_j}||^2 + sum_{y != y'} max(0, margin - ||c_y - c_y'||) (ordered pairs).
torch::Tensor loss_cc(const torch::Tensor& x, const torch::Tensor& x_labels, const torch::Tensor& x2,
                      const torch::Tensor& x2_labels, double margin);

struct ReidLoss {
    torch::Tensor bce;
    torch::Tensor bcc;
    torch::Tensor total() const { return bce + bcc; }
};

// L_re = L_bce + L_bcc over (f_v, f_i) and their intermediates. All four sets share `labels`.
ReidLoss loss_reid(const torch::Tensor& f_v, const torch::Tensor& f_i, const torch::Tensor& f_v_t,
                   const torch::Tensor& f_i_t, const torch::Tensor& labels,
                   torch::nn::Linear& id_classifier, double margin);

struct LossTerms {
    torch::Tensor re, lc, hc, vc, c, p, eq;
};

// L = L_re + lambda_f (L_lc + L_hc) + lambda_v L_vc + lambda_c L_c + lambda_i L_p + lambda_e L_eq
torch::Tensor total_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace bmdg
