#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bmdg/model.hpp"
#include "bmdg/synthdata.hpp"

namespace bmdg {

enum class Protocol { single_shot, multi_shot };
enum class SearchDirection { v2i, i2v };

std::string to_string(Protocol p);
std::string to_string(SearchDirection d);

// Cosine similarity of two vectors.
double match_score(const torch::Tensor& query, const torch::Tensor& gallery);

struct RetrievalSet {
    torch::Tensor embeddings;  // [N, E]
    std::vector<int> labels;
    std::vector<int> cameras;  // only needed for the single-shot protocol
};

inline constexpr std::array<int, 4> kCmcRanks{1, 5, 10, 20};

struct RetrievalResult {
    std::array<double, 4> rank{};  // CMC at kCmcRanks, percent
    double mAP = 0.0;              // percent
    Protocol protocol = Protocol::multi_shot;
    SearchDirection direction = SearchDirection::i2v;
    int queries_evaluated = 0;
    int queries_excluded = 0;  // identity absent from the gallery

    double rank1() const { return rank[0]; }
};

struct EvalOptions {
    Protocol protocol = Protocol::multi_shot;
    int repetitions = 10;  // single-shot gallery draws
    std::uint64_t seed = 0;
};

// Cosine ranking; ties go to the lower gallery index.
RetrievalResult evaluate(const RetrievalSet& query, const RetrievalSet& gallery, const EvalOptions& opts = {});

// Eval-mode embeddings of every image of one modality, with labels and cameras.
RetrievalSet embed_modality(BmdgModel& model, const Dataset& data, Modality m);

// Query/gallery pair for a search direction: v2i queries visible images against infrared.
RetrievalResult evaluate_model(BmdgModel& model, const Dataset& data, SearchDirection dir, const EvalOptions& opts);

// Scores for one query against a full gallery, computed in double. [Q, G].
torch::Tensor cosine_scores(const torch::Tensor& query, const torch::Tensor& gallery);

// Euclidean distance between the modality means.
double mmd_gap(const torch::Tensor& features_v, const torch::Tensor& features_i);
// Mean over identities present in both sets of the per-identity center distance.
double mmd_gap_per_identity(const torch::Tensor& features_v, const std::vector<int>& labels_v,
                            const torch::Tensor& features_i, const std::vector<int>& labels_i);
// Biased squared MMD with an RBF kernel of bandwidth sigma.
double mmd_rbf(const torch::Tensor& features_v, const torch::Tensor& features_i, double sigma);

struct Projection {
    torch::Tensor coords;       // [N, 2] double
    torch::Tensor components;   // [2, E] double, rows are unit loadings
    torch::Tensor eigenvalues;  // [E] descending, covariance normalized by N
    torch::Tensor mean;         // [E]
};

// PCA onto the top-2 components. Each component's first nonzero loading is made positive.
Projection project_2d(const torch::Tensor& embeddings);

}  // namespace bmdg
