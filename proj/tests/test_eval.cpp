#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bmdg/eval.hpp"
#include "helpers.hpp"

using namespace bmdg;

namespace {

const auto kD = torch::kFloat64;

torch::Tensor at_angles(const std::vector<double>& degrees) {
    std::vector<double> xy;
    for (double d : degrees) {
        xy.push_back(std::cos(d * M_PI / 180.0));
        xy.push_back(std::sin(d * M_PI / 180.0));
    }
    return torch::tensor(xy, kD).view({-1, 2});
}

// Rank-1 and AP straight from the definitions: sort all gallery items by score.
std::pair<double, double> brute_force(const torch::Tensor& q, int label, const torch::Tensor& gallery,
                                      const std::vector<int>& labels) {
    std::vector<std::pair<double, int>> scored;
    for (int g = 0; g < gallery.size(0); ++g) scored.emplace_back(-match_score(q, gallery[g]), g);
    std::sort(scored.begin(), scored.end());
    double hits = 0, ap = 0;
    const double relevant = static_cast<double>(std::count(labels.begin(), labels.end(), label));
    for (std::size_t r = 0; r < scored.size(); ++r) {
        if (labels[scored[r].second] != label) continue;
        hits += 1;
        ap += hits / (r + 1);
    }
    return {labels[scored[0].second] == label ? 1.0 : 0.0, ap / relevant};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("match score") {
    auto v = torch::tensor({0.3, -1.2, 2.0}, kD);
    CHECK(match_score(v, v) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(match_score(v, -v) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(match_score(torch::tensor({1.0, 0.0}), torch::tensor({0.0, 2.0})) == 0.0);
}

TEST_CASE("perfect gallery") {
    RetrievalSet q{torch::eye(3, kD), {0, 1, 2}, {}};
    RetrievalSet g{torch::eye(3, kD) * 2, {0, 1, 2}, {}};
    auto r = evaluate(q, g);
    CHECK(r.rank1() == 100.0);
    CHECK(r.mAP == 100.0);
    CHECK(r.queries_evaluated == 3);
}

TEST_CASE("two queries and three gallery items, hand computed") {
    // q0 (label 0, 0 deg): gallery order g0(10, wrong), g1(20), g2(90) -> R1 0, AP (1/2 + 2/3)/2 = 7/12.
    // q1 (label 1, 12 deg): g0 first -> R1 1, AP 1.
    RetrievalSet q{at_angles({0, 12}), {0, 1}, {}};
    RetrievalSet g{at_angles({10, 20, 90}), {1, 0, 0}, {}};
    auto r = evaluate(q, g);
    CHECK(r.rank1() == doctest::Approx(50.0));
    CHECK(r.rank[1] == doctest::Approx(100.0));
    CHECK(r.mAP == doctest::Approx(100.0 * (7.0 / 12.0 + 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("matches a brute-force ranking on random data") {
    torch::manual_seed(1);
    const int nq = 30, ng = 40;
    RetrievalSet q{torch::randn({nq, 6}, kD), {}, {}};
    RetrievalSet g{torch::randn({ng, 6}, kD), {}, {}};
    for (int i = 0; i < nq; ++i) q.labels.push_back(i % 5);
    for (int i = 0; i < ng; ++i) g.labels.push_back(i % 5);
    double r1 = 0, map = 0;
    for (int i = 0; i < nq; ++i) {
        auto [hit, ap] = brute_force(q.embeddings[i], q.labels[i], g.embeddings, g.labels);
        r1 += hit;
        map += ap;
    }
    auto r = evaluate(q, g);
    CHECK(r.rank1() == doctest::Approx(100.0 * r1 / nq).epsilon(1e-12));
    CHECK(r.mAP == doctest::Approx(100.0 * map / nq).epsilon(1e-12));
}

TEST_CASE("random embeddings sit at chance level") {
    torch::manual_seed(2);
    const int ids = 20, nq = 2000, per_id = 10;
    RetrievalSet q{torch::randn({nq, 32}), {}, {}};
    RetrievalSet g{torch::randn({ids * per_id, 32}), {}, {}};
    for (int i = 0; i < nq; ++i) q.labels.push_back(i % ids);
    for (int i = 0; i < ids * per_id; ++i) g.labels.push_back(i % ids);
    auto r = evaluate(q, g);
    // Binomial standard error at p = 0.05 with 2000 queries is about 0.5 points.
    CHECK(std::abs(r.rank1() - 100.0 / ids) < 2.0);
}

TEST_CASE("CMC is monotone and bounded") {
    torch::manual_seed(3);
    for (int trial = 0; trial < 5; ++trial) {
        RetrievalSet q{torch::randn({50, 4}), {}, {}};
        RetrievalSet g{torch::randn({60, 4}), {}, {}};
        for (int i = 0; i < 50; ++i) q.labels.push_back(i % 25);
        for (int i = 0; i < 60; ++i) g.labels.push_back(i % 30);
        for (auto proto : {Protocol::multi_shot, Protocol::single_shot}) {
            g.cameras.assign(60, 0);
            for (int i = 0; i < 60; ++i) g.cameras[i] = i % 2;
            auto r = evaluate(q, g, {proto, 10, 7});
            for (std::size_t k = 1; k < r.rank.size(); ++k) CHECK(r.rank[k] >= r.rank[k - 1]);
            CHECK(r.rank[0] >= 0.0);
            CHECK(r.rank[3] <= 100.0);
            CHECK(r.mAP <= 100.0);
            CHECK(r.protocol == proto);
        }
    }
}

TEST_CASE("absent identities are excluded and counted") {
    RetrievalSet q{at_angles({0, 45, 90}), {0, 1, 7}, {}};
    RetrievalSet g{at_angles({0, 45}), {0, 1}, {}};
    auto r = evaluate(q, g);
    CHECK(r.queries_evaluated == 2);
    CHECK(r.queries_excluded == 1);
    CHECK(r.rank1() == 100.0);
}

TEST_CASE("gallery order does not matter") {
    torch::manual_seed(4);
    RetrievalSet q{torch::randn({20, 5}, kD), {}, {}};
    RetrievalSet g{torch::randn({25, 5}, kD), {}, {}};
    for (int i = 0; i < 20; ++i) q.labels.push_back(i % 4);
    for (int i = 0; i < 25; ++i) g.labels.push_back(i % 4);
    auto perm = torch::randperm(25);
    RetrievalSet shuffled{g.embeddings.index_select(0, perm), {}, {}};
    for (int i = 0; i < 25; ++i) shuffled.labels.push_back(g.labels[perm[i].item<int64_t>()]);
    auto a = evaluate(q, g), b = evaluate(q, shuffled);
    CHECK(a.rank == b.rank);
    CHECK(a.mAP == doctest::Approx(b.mAP).epsilon(1e-12));
}

TEST_CASE("single-shot keeps one item per identity and camera") {
    torch::manual_seed(5);
    RetrievalSet q{torch::randn({12, 4}, kD), {}, {}};
    RetrievalSet g{torch::randn({8, 4}, kD), {}, {}};
    for (int i = 0; i < 12; ++i) q.labels.push_back(i % 4);
    for (int i = 0; i < 8; ++i) {
        g.labels.push_back(i % 4);
        g.cameras.push_back(i / 4);
    }
    // Already one item per group: single-shot equals multi-shot.
    auto single = evaluate(q, g, {Protocol::single_shot, 10, 3});
    auto multi = evaluate(q, g);
    CHECK(single.rank1() == doctest::Approx(multi.rank1()));
    CHECK(single.mAP == doctest::Approx(multi.mAP));
    // Seeded draws are reproducible.
    g.cameras.assign(8, 0);
    auto a = evaluate(q, g, {Protocol::single_shot, 10, 3});
    auto b = evaluate(q, g, {Protocol::single_shot, 10, 3});
    CHECK(a.rank == b.rank);
    CHECK(a.mAP == b.mAP);
    g.cameras.clear();
    CHECK_THROWS(evaluate(q, g, {Protocol::single_shot, 10, 3}));
}

TEST_CASE("center-based modality gap") {
    torch::manual_seed(6);
    auto x = torch::randn({10, 4}, kD);
    CHECK(mmd_gap(x, x) == 0.0);
    auto v = torch::tensor({3.0, 0.0, -4.0, 0.0}, kD);
    CHECK(mmd_gap(x, x + v) == doctest::Approx(5.0).epsilon(1e-12));
    auto y = torch::randn({7, 4}, kD);
    CHECK(mmd_gap(x.index_select(0, torch::randperm(10)), y.index_select(0, torch::randperm(7))) ==
          doctest::Approx(mmd_gap(x, y)).epsilon(1e-12));

    std::vector<int> lx{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    CHECK(mmd_gap_per_identity(x, lx, x + v, lx) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(mmd_rbf(x, x, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mmd_rbf(x, x + 10 * v, 1.0) > 0.1);
}

TEST_CASE("2-D projection") {
    SUBCASE("centered 2-D data keeps its geometry") {
        torch::manual_seed(7);
        auto x = torch::randn({20, 2}, kD) * torch::tensor({3.0, 1.0}, kD);
        x = x - x.mean(0);
        auto p = project_2d(x);
        CHECK(bmdg::testing::max_abs_diff(p.coords.mm(p.coords.t()), x.mm(x.t())) < 1e-10);
        CHECK(p.components.sizes() == torch::IntArrayRef({2, 2}));
    }
    SUBCASE("rank-1 data has no second coordinate") {
        auto t = torch::linspace(-2, 3, 15, kD).unsqueeze(1);
        auto x = t * torch::tensor({1.0, -2.0, 0.5, 4.0}, kD) + 1.0;
        auto p = project_2d(x);
        CHECK(p.coords.select(1, 1).abs().max().item<double>() < 1e-8);
    }
    SUBCASE("reconstruction error is the trailing eigenvalue mass") {
        torch::manual_seed(8);
        auto x = torch::randn({40, 6}, kD) * torch::tensor({5.0, 3.0, 1.0, 0.5, 0.2, 0.1}, kD);
        auto p = project_2d(x);
        auto recon = p.coords.mm(p.components) + p.mean;
        const double err = (x - recon).pow(2).sum().item<double>() / 40.0;
        CHECK(err == doctest::Approx(p.eigenvalues.slice(0, 2).sum().item<double>()).epsilon(1e-9));
    }
    SUBCASE("sign convention is deterministic") {
        torch::manual_seed(9);
        auto x = torch::randn({12, 3}, kD);
        auto a = project_2d(x), b = project_2d(x * 1.0);
        CHECK(torch::equal(a.coords, b.coords));
        for (int c = 0; c < 2; ++c) {
            auto row = a.components[c];
            auto nz = row.abs() > 1e-12;
            auto first = row.masked_select(nz)[0].item<double>();
            CHECK(first > 0.0);
        }
    }
}

}
