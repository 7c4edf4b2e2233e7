#include <doctest.h>

#include "bmdg/config.hpp"
#include "bmdg/errors.hpp"

using namespace bmdg;

TEST_SUITE("config") {

TEST_CASE("defaults carry the published hyperparameters") {
    // K=6, T=4, lambda_f=0.1, lambda_v=0.05, lambda_p=0.2 (used for L_c), lambda_i=0.4, lambda_eq=0.5, lr 4e-4
    TrainConfig cfg;
    CHECK(cfg.num_prototypes == 6);
    CHECK(cfg.num_steps == 4);
    CHECK(cfg.weights.lambda_f == 0.1);
    CHECK(cfg.weights.lambda_v == 0.05);
    CHECK(cfg.weights.lambda_c == 0.2);
    CHECK(cfg.weights.lambda_i == 0.4);
    CHECK(cfg.weights.lambda_e == 0.5);
    CHECK(cfg.lr == 4e-4);
    CHECK(cfg.batch_identities == 10);
    CHECK(cfg.batch_positives == 8);
    CHECK(cfg.direction == Direction::bidirectional);
    CHECK(cfg.mixing == MixingMode::prototype_exchange);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("milestones rescale 80/120 of 180 epochs") {
    TrainConfig cfg;
    cfg.epochs = 180;
    CHECK(cfg.resolved_milestones() == std::vector<int>{80, 120});
    cfg.epochs = 36;
    CHECK(cfg.resolved_milestones() == std::vector<int>{16, 24});
    cfg.lr_milestones = {5, 9};
    CHECK(cfg.resolved_milestones() == std::vector<int>{5, 9});
}

TEST_CASE("unknown key is rejected by name") {
    try {
        parse_train_config(R"({"lamda_f": 0.1})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("lamda_f") != std::string::npos);
    }
}

TEST_CASE("wrong types and invalid values are config errors") {
    CHECK_THROWS_AS(parse_train_config(R"({"K": "six"})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"K": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"T": -1})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"tau": 0})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"direction": "sideways"})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"([1, 2])"), ConfigError);
    CHECK_THROWS_AS(parse_train_config(R"({"T": 2, "step_boundaries": [0]})"), ConfigError);
    CHECK_THROWS_AS(parse_train_config("{not json"), ConfigError);
}

TEST_CASE("dump and parse round-trip every field") {
    TrainConfig cfg;
    cfg.num_prototypes = 4;
    cfg.num_steps = 3;
    cfg.weights.tau = 0.25;
    cfg.direction = Direction::i_to_v;
    cfg.mixing = MixingMode::whole_mixup;
    cfg.low_tap = LowTap::tail1;
    cfg.step_boundaries = {0, 2, 7};
    cfg.eq_transforms = {"hflip", "translate"};
    cfg.seed = 0xfeedbeefcafeULL;
    const auto text = dump_train_config(cfg);
    const auto back = parse_train_config(text);
    CHECK(dump_train_config(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));
    cfg.seed += 1;
    CHECK(config_hash(back) != config_hash(cfg));
}

TEST_CASE("mode strings round-trip") {
    for (auto d : {Direction::bidirectional, Direction::v_to_i, Direction::i_to_v, Direction::single_step}) {
        CHECK(parse_direction(to_string(d)) == d);
        TrainConfig cfg;
        cfg.direction = d;
        CHECK(parse_train_config(dump_train_config(cfg)).direction == d);
    }
    for (auto m : {MixingMode::prototype_exchange, MixingMode::whole_mixup}) CHECK(parse_mixing_mode(to_string(m)) == m);
}

TEST_CASE("dataset spec parsing and validation") {
    auto spec = parse_dataset_spec(R"({"num_identities": 5, "seed": 3})");
    CHECK(spec.num_identities == 5);
    CHECK(spec.seed == 3);
    CHECK(parse_dataset_spec(dump_dataset_spec(spec)).num_identities == 5);
    CHECK_THROWS_AS(parse_dataset_spec(R"({"num_identites": 5})"), ConfigError);
    CHECK_THROWS_AS(parse_dataset_spec(R"({"num_identities": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_dataset_spec(R"({"num_body_parts": 1})"), ConfigError);
}

}
