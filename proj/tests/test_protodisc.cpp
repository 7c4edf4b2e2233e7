#include <doctest.h>

#include "bmdg/errors.hpp"
#include "bmdg/model.hpp"
#include "bmdg/protodisc.hpp"
#include "helpers.hpp"

using namespace bmdg;
using bmdg::testing::bitwise_equal;

namespace {

MaskHead make_head(int k, int depth = 2) {
    torch::manual_seed(11);
    return MaskHead(MaskHeadOptions{16, 8, depth, k});
}

// Row-stochastic random masks [B, H*W, K] on an h x w grid.
MaskScores random_masks(int b, int h, int w, int k) {
    auto logits = torch::randn({b, k, h, w}, torch::kFloat64);
    return MaskScores::from_spatial(torch::softmax(logits, 1));
}

}  // namespace

TEST_SUITE("protodisc") {

TEST_CASE("masks are row-stochastic with shape 162 x 6") {
    auto head = make_head(6);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = head->forward(torch::randn({2, 16, 18, 9}) * (trial + 1));
        CHECK(m.m.sizes() == torch::IntArrayRef({2, 162, 6}));
        CHECK(m.height == 18);
        CHECK(m.width == 9);
        CHECK((m.m.sum(-1) - 1).abs().max().item<double>() < 1e-6);
        CHECK(m.m.min().item<double>() >= 0.0);
        CHECK(m.m.max().item<double>() <= 1.0);
    }
}

TEST_CASE("zeroed output layer gives uniform masks") {
    auto head = make_head(4, 1);
    head->zero_final_layer();
    auto m = head->forward(torch::randn({1, 16, 18, 9}));
    CHECK((m.m - 0.25).abs().max().item<double>() == 0.0);
}

TEST_CASE("non-finite logits are rejected") {
    auto head = make_head(3);
    auto x = torch::randn({1, 16, 18, 9});
    x[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(head->forward(x), NumericError);
    CHECK_THROWS_AS(head->forward(torch::randn({1, 5, 18, 9})), ShapeError);
}

TEST_CASE("aggregation: uniform masks give the global mean") {
    auto f = torch::randn({162, 5}, torch::kFloat64);
    auto m = torch::full({162, 3}, 1.0 / 3.0, torch::kFloat64);
    auto p = aggregate_prototypes(f, m);
    for (int k = 0; k < 3; ++k) CHECK(bmdg::testing::max_abs_diff(p[k], f.mean(0)) < 1e-12);
}

TEST_CASE("aggregation: one-hot column selects the pixel exactly") {
    auto f = torch::randn({10, 4}, torch::kFloat64);
    auto m = torch::zeros({10, 2}, torch::kFloat64);
    m[7][0] = 1.0;
    m.select(1, 1).fill_(0.1);
    auto p = aggregate_prototypes(f, m);
    CHECK(bitwise_equal(p[0], f[7]));
}

TEST_CASE("aggregation: hand-evaluated weighted mean") {
    // F = (0), (2); M^k = (0.25, 0.75) -> 0.25*0 + 0.75*2 = 1.5
    auto f = torch::tensor({{0.0}, {2.0}}, torch::kFloat64);
    auto m = torch::tensor({{0.25}, {0.75}}, torch::kFloat64);
    CHECK(aggregate_prototypes(f, m).item<double>() == 1.5);
}

TEST_CASE("aggregation: degenerate column raises") {
    auto f = torch::randn({4, 2}, torch::kFloat64);
    auto m = torch::tensor({{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}, torch::kFloat64);
    CHECK_THROWS_AS(aggregate_prototypes(f, m), DegeneratePrototypeError);
    CHECK_THROWS_AS(aggregate_prototypes(f, torch::ones({3, 2}, torch::kFloat64)), ShapeError);
}

TEST_CASE("aggregation is permutation-equivariant in K") {
    auto f = torch::randn({2, 30, 6}, torch::kFloat64);
    auto m = random_masks(2, 6, 5, 4).m;
    auto perm = torch::tensor({2, 0, 3, 1});
    auto p = aggregate_prototypes(f, m);
    auto pp = aggregate_prototypes(f, m.index_select(2, perm));
    CHECK(bmdg::testing::max_abs_diff(pp, p.index_select(1, perm)) < 1e-14);
}

TEST_CASE("low-level features are pooled onto the mask grid") {
    auto low = torch::arange(16, torch::kFloat64).reshape({1, 1, 4, 4});
    auto a = align_to_mask_grid(low, 2, 2);
    CHECK(a.sizes() == torch::IntArrayRef({1, 1, 2, 2}));
    CHECK(a[0][0][0][0].item<double>() == (0 + 1 + 4 + 5) / 4.0);
    CHECK(bitwise_equal(align_to_mask_grid(low, 4, 4), low));
}

TEST_CASE("transform round-trips are exact") {
    auto masks = random_masks(2, 18, 9, 6);
    using K = RigidTransform::Kind;

    SUBCASE("identity is a no-op") {
        RigidTransform r;
        CHECK(bitwise_equal(transform_masks(masks, r).m, masks.m));
        auto img = torch::rand({1, 3, 36, 18});
        CHECK(bitwise_equal(transform_image(img, r, 2), img));
    }
    SUBCASE("hflip twice") {
        RigidTransform r{K::hflip};
        CHECK(bitwise_equal(transform_masks(transform_masks(masks, r), r).m, masks.m));
        CHECK(bitwise_equal(invert_mask_transform(transform_masks(masks, r), r).m, masks.m));
        CHECK_FALSE(bitwise_equal(transform_masks(masks, r).m, masks.m));
    }
    SUBCASE("rotate90 by each quarter") {
        for (int q = 1; q <= 3; ++q) {
            RigidTransform r{K::rotate90, 0, 0, q};
            auto back = invert_mask_transform(transform_masks(masks, r), r);
            CHECK(back.height == 18);
            CHECK(bitwise_equal(back.m, masks.m));
        }
    }
    SUBCASE("translate by one keeps interior pixels") {
        auto onehot = torch::zeros({1, 1, 18, 9}, torch::kFloat64);
        onehot[0][0][5][4] = 1.0;
        RigidTransform r{K::translate, 1, -1};
        auto moved = apply_transform(onehot, r);
        CHECK(moved[0][0][4][5].item<double>() == 1.0);
        CHECK(bitwise_equal(invert_transform(moved, r), onehot));
        // Full mask sets: exact on the region that stays in frame.
        auto s = masks.spatial();
        auto back = invert_transform(apply_transform(s, r), r);
        using torch::indexing::Slice;
        auto interior = Slice(1, -1);
        CHECK(bitwise_equal(back.index({"...", interior, interior}), s.index({"...", interior, interior})));
        CHECK_FALSE(r.lossless());
    }
    SUBCASE("translation that leaves the frame is rejected") {
        RigidTransform r{K::translate, 9, 0};
        CHECK_THROWS_AS(apply_transform(masks.spatial(), r), PreconditionError);
    }
}

TEST_CASE("image transforms scale translation by the stride") {
    auto img = torch::zeros({1, 1, 36, 18});
    img[0][0][10][6] = 1.0;
    RigidTransform r{RigidTransform::Kind::translate, 1, 2};
    auto t = transform_image(img, r, 2);
    CHECK(t[0][0][14][8].item<double>() == 1.0);
}

TEST_CASE("random transforms draw from the configured kinds") {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        auto r = random_transform({"translate"}, rng, 1);
        CHECK(r.kind == RigidTransform::Kind::translate);
        CHECK(std::abs(r.dx) <= 1);
        CHECK(std::abs(r.dy) <= 1);
        auto q = random_transform({"rotate90"}, rng);
        CHECK(q.quarter_turns >= 1);
        CHECK(q.quarter_turns <= 3);
    }
    CHECK_THROWS_AS(parse_transform_kind("shear"), PreconditionError);
}

}

TEST_CASE("prototypes from a single image") {
    torch::manual_seed(5);
    auto cfg = bmdg::testing::tiny_config();
    BmdgModel model(cfg, 4);
    model->eval();
    auto img = torch::rand({3, cfg.image_height, cfg.image_width});
    torch::NoGradGuard ng;
    auto high = model->prototypes_from_image(img, Modality::visible, PrototypeLevel::high);
    auto low = model->prototypes_from_image(img, Modality::visible, PrototypeLevel::low);
    CHECK(high.a.sizes() == torch::IntArrayRef({cfg.num_prototypes, cfg.feature_dim}));
    CHECK(low.a.sizes() == torch::IntArrayRef({cfg.num_prototypes, cfg.low_feature_dim}));
    CHECK(high.level == PrototypeLevel::high);
    auto again = model->prototypes_from_image(img, Modality::visible, PrototypeLevel::high);
    CHECK(bitwise_equal(high.a, again.a));
    CHECK_THROWS_AS(model->prototypes_from_image(torch::rand({1, 3, 36, 18}), Modality::visible,
                                                 PrototypeLevel::high),
                    ShapeError);
}
