#include <gtest/gtest.h>

#include "casp/config.hpp"

using namespace casp;
using nlohmann::json;

TEST(RunConfig, DefaultsMatchPublishedHyperparameters) {
    auto rc = parse_run_config(json::object());
    EXPECT_EQ(rc.model.cpc.iterations, 3);
    EXPECT_EQ(rc.model.cpc.alpha, 0.1);
    EXPECT_EQ(rc.model.cpc.layers, 3);
    EXPECT_EQ(rc.model.channels, 256);
    EXPECT_EQ(rc.model.attention, AttentionMode::Linear);
    EXPECT_EQ(rc.model.frames, 16);
    EXPECT_EQ(rc.model.height, 64);
    EXPECT_EQ(rc.model.width_px, 96);
    EXPECT_EQ(rc.model.frontend.frames, 96);
    EXPECT_EQ(rc.model.frontend.n_mels, 64);
    EXPECT_EQ(rc.train.adam.lr, 1e-4);
    EXPECT_EQ(rc.train.adam.beta1, 0.9);
    EXPECT_EQ(rc.train.adam.beta2, 0.999);
    EXPECT_EQ(rc.train.adam.eps, 1e-8);
    EXPECT_EQ(rc.train.batch_size, 4);
    EXPECT_EQ(rc.train.loss.lambda_cc, -0.1);
    EXPECT_EQ(rc.train.loss.lambda_sim, -0.1);
    EXPECT_FALSE(rc.train.loss.paper_literal_signs);
}

TEST(RunConfig, JsonRoundTrip) {
    auto rc = parse_run_config(json::parse(R"({
        "seed": 5,
        "model": {"channels": 32, "avim": {"mode": "bilinear", "stages": [true, false, true, false]},
                  "cpc": {"iterations": 6, "alpha": 0.01, "refresh": true, "activation": "identity"},
                  "decoder": {"width": 32}},
        "train_data": {"clips": 8, "mode": "mixed"},
        "train": {"lr": 0.001, "steps": 20, "loss": {"paper_literal_signs": true}}
    })"));
    EXPECT_EQ(rc.model.attention, AttentionMode::Bilinear);
    EXPECT_FALSE(rc.model.avim_stages[1]);
    EXPECT_TRUE(rc.model.cpc.refresh);
    EXPECT_EQ(rc.model.cpc.feedforward_activation, Activation::Identity);
    EXPECT_EQ(rc.train_data.mode, Consistency::Mixed);
    EXPECT_EQ(rc.val_data.mode, Consistency::Mixed);
    EXPECT_EQ(rc.val_data.clips, 16);
    EXPECT_TRUE(rc.train.loss.paper_literal_signs);
    const auto j = to_json(rc);
    EXPECT_EQ(to_json(parse_run_config(j)), j);
    EXPECT_EQ(config_hash(j), config_hash(to_json(parse_run_config(j))));
    EXPECT_NE(config_hash(to_json(rc.model)), config_hash(to_json(parse_model_config(json::object()))));
}

TEST(RunConfig, SeedFansOutToSplits) {
    RunConfig a, b;
    a.apply_seed(1);
    b.apply_seed(2);
    EXPECT_NE(a.train_data.seed, a.val_data.seed);
    EXPECT_NE(a.train_data.seed, b.train_data.seed);
    EXPECT_EQ(a.train.seed, 1u);
    RunConfig c;
    c.apply_seed(1);
    EXPECT_EQ(a.train_data.seed, c.train_data.seed);
}

TEST(RunConfig, RejectsInvalidInput) {
    auto bad = [](const char* text) { return parse_run_config(json::parse(text)); };
    EXPECT_THROW(bad(R"({"modle": {}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"cpc": {"alpah": 0.1}}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"channels": "wide"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"avim": {"mode": "cubic"}}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"avim": {"stages": [true]}}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"cpc": {"alpha": 0}}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"cpc": {"iterations": -1}}})"), ConfigError);
    EXPECT_THROW(bad(R"({"model": {"height": 48}})"), ConfigError);
    EXPECT_THROW(bad(R"({"train": {"lr": -1}})"), ConfigError);
    EXPECT_THROW(bad(R"({"train_data": {"mode": "sometimes"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"train_data": {"max_blobs": 4}})"), ConfigError);
    EXPECT_THROW(bad(R"({"bench": {"tokens": [0, 8]}})"), ConfigError);
    EXPECT_THROW(bad(R"([1, 2])"), ConfigError);
    EXPECT_THROW(load_run_config("/nonexistent/config.json"), InputError);
}

TEST(RunConfig, VisualOnlyDisablesCpc) {
    auto rc = parse_run_config(json::parse(R"({"model": {"use_audio": false}})"));
    EXPECT_FALSE(rc.model.use_cpc);
}
