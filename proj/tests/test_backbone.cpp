#include <doctest.h>

#include "bmdg/backbone.hpp"
#include "bmdg/errors.hpp"
#include "helpers.hpp"

using namespace bmdg;

namespace {

Backbone make_backbone() {
    torch::manual_seed(3);
    BackboneOptions o;
    o.head_width = 8;
    o.low_dim = 8;
    o.tail_width = 16;
    o.feature_dim = 16;
    return Backbone(o);
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("global vector is the spatial mean of the high map") {
    auto b = make_backbone();
    b->eval();
    auto x = torch::rand({3, 3, 36, 18});
    for (auto m : {Modality::visible, Modality::infrared}) {
        auto f = b->extract(x, m);
        CHECK(f.high_map.sizes() == torch::IntArrayRef({3, 16, 18, 9}));
        CHECK(f.low_map.sizes() == torch::IntArrayRef({3, 8, 18, 9}));
        CHECK(f.high().sizes() == torch::IntArrayRef({3, 162, 16}));
        CHECK(bmdg::testing::max_abs_diff(f.global_vec, f.high().mean(1)) < 1e-5);
        CHECK(torch::isfinite(f.high_map).all().item<bool>());
    }
}

TEST_CASE("zeroed final tail layer gives a zero global vector") {
    auto b = make_backbone();
    b->zero_final_layer();
    b->eval();
    auto f = b->extract(torch::full({1, 3, 36, 18}, 0.5), Modality::visible);
    CHECK(f.global_vec.abs().max().item<double>() == 0.0);
}

TEST_CASE("visible and infrared heads differ, the tail is shared") {
    auto b = make_backbone();
    b->eval();
    auto x = torch::rand({2, 3, 36, 18});
    auto v = b->extract(x, Modality::visible);
    auto i = b->extract(x, Modality::infrared);
    CHECK_FALSE(torch::equal(v.low_map, i.low_map));

    int head_v = 0, head_i = 0, tail = 0;
    for (const auto& p : b->named_parameters()) {
        const auto& k = p.key();
        if (k.rfind("head.V.", 0) == 0) ++head_v;
        else if (k.rfind("head.I.", 0) == 0) ++head_i;
        else if (k.rfind("tail.", 0) == 0) ++tail;
        else FAIL("unexpected parameter " << k);
    }
    CHECK(head_v > 0);
    CHECK(head_v == head_i);
    CHECK(tail > 0);
    // An infrared-only loss trains the tail and the infrared head, never the visible head.
    b->train();
    b->extract(x, Modality::infrared).global_vec.sum().backward();
    for (const auto& p : b->tail()->parameters()) {
        if (p.grad().defined() && p.grad().abs().sum().item<double>() > 0) { tail = -1; break; }
    }
    CHECK(tail == -1);
    for (const auto& p : b->head(Modality::visible)->parameters()) {
        CHECK((!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0));
    }
}

TEST_CASE("output shapes depend only on the configuration") {
    auto b = make_backbone();
    b->eval();
    auto a = b->extract(torch::zeros({1, 3, 36, 18}), Modality::visible);
    auto c = b->extract(torch::rand({1, 3, 36, 18}) * 7, Modality::infrared);
    CHECK(a.high_map.sizes() == c.high_map.sizes());
    CHECK(a.low_map.sizes() == c.low_map.sizes());
}

TEST_CASE("tail1 tap changes the low-level width") {
    torch::manual_seed(3);
    BackboneOptions o;
    o.head_width = 8;
    o.low_dim = 8;
    o.tail_width = 16;
    o.feature_dim = 16;
    o.low_tap = LowTap::tail1;
    Backbone b(o);
    auto f = b->extract(torch::rand({1, 3, 36, 18}), Modality::visible);
    CHECK(f.low_map.size(1) == b->low_dim());
    CHECK(b->low_dim() == 16);
}

}
