#include "bmdg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bmdg/errors.hpp"
#include "bmdg/rng.hpp"

namespace bmdg {

namespace F = torch::nn::functional;

std::string to_string(Protocol p) { return p == Protocol::single_shot ? "single" : "multi"; }
std::string to_string(SearchDirection d) { return d == SearchDirection::v2i ? "v2i" : "i2v"; }

double match_score(const torch::Tensor& query, const torch::Tensor& gallery) {
    auto q = query.to(torch::kFloat64).flatten();
    auto g = gallery.to(torch::kFloat64).flatten();
    const double denom = q.norm().item<double>() * g.norm().item<double>();
    if (denom == 0.0) return 0.0;
    return std::clamp(q.dot(g).item<double>() / denom, -1.0, 1.0);
}

torch::Tensor cosine_scores(const torch::Tensor& query, const torch::Tensor& gallery) {
    auto opts = F::NormalizeFuncOptions().dim(1);
    auto q = F::normalize(query.to(torch::kFloat64), opts);
    auto g = F::normalize(gallery.to(torch::kFloat64), opts);
    return q.mm(g.t()).contiguous();
}

namespace {

struct Accumulator {
    std::array<double, 4> hits{};
    double ap_sum = 0.0;
    int evaluated = 0;
    int excluded = 0;
};

void score_query(const double* scores, int query_label, const std::vector<int>& gallery_labels,
                 const std::vector<int>& selection, Accumulator& acc) {
    std::vector<int> order(selection.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[selection[a]] > scores[selection[b]];
    });
    int relevant = 0;
    for (int g : selection) relevant += gallery_labels[g] == query_label;
    if (relevant == 0) {
        ++acc.excluded;
        return;
    }
    int found = 0, first = -1;
    double ap = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        if (gallery_labels[selection[order[pos]]] != query_label) continue;
        if (first < 0) first = static_cast<int>(pos);
        ++found;
        ap += static_cast<double>(found) / static_cast<double>(pos + 1);
    }
    for (std::size_t k = 0; k < kCmcRanks.size(); ++k) acc.hits[k] += first < kCmcRanks[k] ? 1.0 : 0.0;
    acc.ap_sum += ap / relevant;
    ++acc.evaluated;
}

RetrievalResult finish(const Accumulator& acc) {
    RetrievalResult r;
    r.queries_evaluated = acc.evaluated;
    r.queries_excluded = acc.excluded;
    if (acc.evaluated == 0) return r;
    for (std::size_t k = 0; k < kCmcRanks.size(); ++k) r.rank[k] = 100.0 * acc.hits[k] / acc.evaluated;
    r.mAP = 100.0 * acc.ap_sum / acc.evaluated;
    return r;
}

}  // namespace

RetrievalResult evaluate(const RetrievalSet& query, const RetrievalSet& gallery, const EvalOptions& opts) {
    const auto nq = query.embeddings.size(0), ng = gallery.embeddings.size(0);
    if (static_cast<std::size_t>(nq) != query.labels.size() ||
        static_cast<std::size_t>(ng) != gallery.labels.size()) {
        throw ShapeError("evaluate: one label per embedding");
    }
    auto scores = cosine_scores(query.embeddings, gallery.embeddings);
    const double* s = scores.data_ptr<double>();

    auto run = [&](const std::vector<int>& selection) {
        Accumulator acc;
        for (int64_t q = 0; q < nq; ++q) score_query(s + q * ng, query.labels[q], gallery.labels, selection, acc);
        return finish(acc);
    };

    RetrievalResult result;
    if (opts.protocol == Protocol::multi_shot) {
        std::vector<int> all(ng);
        std::iota(all.begin(), all.end(), 0);
        result = run(all);
    } else {
        if (gallery.cameras.size() != static_cast<std::size_t>(ng)) {
            throw ShapeError("single-shot evaluation needs gallery cameras");
        }
        std::map<std::pair<int, int>, std::vector<int>> groups;
        for (int g = 0; g < ng; ++g) groups[{gallery.labels[g], gallery.cameras[g]}].push_back(g);
        const int reps = std::max(1, opts.repetitions);
        for (int rep = 0; rep < reps; ++rep) {
            Rng rng(splitmix64(opts.seed + static_cast<std::uint64_t>(rep)));
            std::vector<int> selection;
            for (const auto& [key, members] : groups) selection.push_back(members[uniform_index(rng, members.size())]);
            std::sort(selection.begin(), selection.end());
            auto r = run(selection);
            for (std::size_t k = 0; k < r.rank.size(); ++k) result.rank[k] += r.rank[k] / reps;
            result.mAP += r.mAP / reps;
            result.queries_evaluated = r.queries_evaluated;
            result.queries_excluded = r.queries_excluded;
        }
    }
    result.protocol = opts.protocol;
    return result;
}

RetrievalSet embed_modality(BmdgModel& model, const Dataset& data, Modality m) {
    std::vector<std::size_t> entries;
    RetrievalSet set;
    for (int id = 0; id < data.num_identities(); ++id) {
        for (auto e : data.indices(id, m)) {
            entries.push_back(e);
            set.labels.push_back(data.entries()[e].identity);
            set.cameras.push_back(data.entries()[e].camera);
        }
    }
    set.embeddings = model->embed_images(data.stack(entries), m);
    return set;
}

RetrievalResult evaluate_model(BmdgModel& model, const Dataset& data, SearchDirection dir, const EvalOptions& opts) {
    auto v = embed_modality(model, data, Modality::visible);
    auto i = embed_modality(model, data, Modality::infrared);
    auto r = dir == SearchDirection::v2i ? evaluate(v, i, opts) : evaluate(i, v, opts);
    r.direction = dir;
    return r;
}

double mmd_gap(const torch::Tensor& features_v, const torch::Tensor& features_i) {
    if (features_v.size(0) == 0 || features_i.size(0) == 0) throw PreconditionError("mmd_gap: empty feature set");
    auto mv = features_v.to(torch::kFloat64).mean(0);
    auto mi = features_i.to(torch::kFloat64).mean(0);
    return (mv - mi).norm().item<double>();
}

double mmd_gap_per_identity(const torch::Tensor& features_v, const std::vector<int>& labels_v,
                            const torch::Tensor& features_i, const std::vector<int>& labels_i) {
    std::map<int, std::vector<int64_t>> v, i;
    for (std::size_t n = 0; n < labels_v.size(); ++n) v[labels_v[n]].push_back(static_cast<int64_t>(n));
    for (std::size_t n = 0; n < labels_i.size(); ++n) i[labels_i[n]].push_back(static_cast<int64_t>(n));
    double total = 0.0;
    int count = 0;
    for (const auto& [id, rows] : v) {
        auto it = i.find(id);
        if (it == i.end()) continue;
        total += mmd_gap(features_v.index_select(0, torch::tensor(rows)),
                         features_i.index_select(0, torch::tensor(it->second)));
        ++count;
    }
    if (count == 0) throw PreconditionError("mmd_gap_per_identity: no shared identities");
    return total / count;
}

double mmd_rbf(const torch::Tensor& features_v, const torch::Tensor& features_i, double sigma) {
    auto x = features_v.to(torch::kFloat64), y = features_i.to(torch::kFloat64);
    auto k = [&](const torch::Tensor& a, const torch::Tensor& b) {
        auto d2 = torch::cdist(a, b, 2.0, 2).pow(2);
        return torch::exp(-d2 / (2.0 * sigma * sigma)).mean();
    };
    return std::max(0.0, (k(x, x) + k(y, y) - 2.0 * k(x, y)).item<double>());
}

Projection project_2d(const torch::Tensor& embeddings) {
    if (embeddings.dim() != 2 || embeddings.size(0) == 0) throw ShapeError("project_2d expects [N, E]");
    auto x = embeddings.to(torch::kFloat64);
    Projection p;
    p.mean = x.mean(0);
    auto xc = x - p.mean;
    auto cov = xc.t().mm(xc) / static_cast<double>(x.size(0));
    auto [evals, evecs] = torch::linalg_eigh(cov);
    p.eigenvalues = evals.flip({0});
    auto vecs = evecs.flip({1}).t();  // rows = components, descending
    const auto E = x.size(1);
    auto comps = torch::zeros({2, E}, torch::kFloat64);
    for (int64_t c = 0; c < std::min<int64_t>(2, E); ++c) {
        auto row = vecs[c].clone();
        auto acc = row.accessor<double, 1>();
        for (int64_t j = 0; j < E; ++j) {
            if (std::abs(acc[j]) > 1e-12) {
                if (acc[j] < 0) row.neg_();
                break;
            }
        }
        comps[c].copy_(row);
    }
    p.components = comps;
    p.coords = xc.mm(comps.t());
    return p;
}

}  // namespace bmdg
