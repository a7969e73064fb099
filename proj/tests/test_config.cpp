#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hiwm/config.hpp"

using namespace hiwm;

namespace {

std::string error_code(const nlohmann::json& j) {
    try {
        RunConfig::from_json(j);
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST(RunConfig, DefaultsMatchDocumentedSetup) {
    const RunConfig c;
    EXPECT_EQ(c.session.wm.mode, WmMode::Proxy);
    EXPECT_EQ(c.session.wm.coverage, 0.8);
    EXPECT_EQ(c.session.wm.perturb_seed, 7u);
    EXPECT_EQ(c.train.epochs, 300u);
    EXPECT_EQ(c.post_train.epochs, 200u);
    EXPECT_EQ(c.post_train.corrective_weight, 2.0);
    EXPECT_EQ(c.corrective_budget_steps, 5000u);
    EXPECT_EQ(c.context_steps, 15u);
    EXPECT_EQ(c.demo_seeds.seeds().size(), 50u);
    EXPECT_EQ(c.eval_seeds.seeds().front(), 100000u);
    EXPECT_EQ(c.server.ws_port, 8787);
    EXPECT_EQ(c.server.tcp_port, 8788);
    EXPECT_EQ(c.out_dir(), std::filesystem::path("out") / "default");
}

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c;
    c.run_name = "x1";
    c.task = TaskSpec::push_t_distractor();
    c.session.task = c.task;
    c.session.wm = WmConfig::proxy(0.5, 11);
    c.session.auto_op.branches = 5;
    c.train.epochs = 12;
    c.eval_seeds.explicit_seeds = {4, 8, 15};
    c.analyze.coverages = {0.1, 0.9};
    c.cost.m_wm = 70;
    const RunConfig back = RunConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(back.session.task.id, TaskId::PushTDistractor);
    EXPECT_EQ(back.eval_seeds.seeds(), (std::vector<std::uint64_t>{4, 8, 15}));
}

TEST(RunConfig, UnknownKeysRejectedWithPath) {
    EXPECT_EQ(error_code({{"run_nam", "x"}}), "invalid_config");
    EXPECT_EQ(error_code({{"session", {{"world_model", {{"coverag", 0.5}}}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"seeds", {{"demo", {{"first", 1}, {"cnt", 2}}}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"analyze", {{"grid", 3}}}}), "invalid_config");
    try {
        RunConfig::from_json({{"server", {{"wsport", 1}}}});
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("server.wsport"), std::string::npos) << e.what();
    }
}

TEST(RunConfig, BadValuesRejected) {
    EXPECT_EQ(error_code({{"run_name", "../evil"}}), "invalid_config");
    EXPECT_EQ(error_code({{"train", {{"lr", 0.0}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"analyze", {{"coverages", {0.5, 0.2}}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"analyze", {{"coverages", {0.5, 1.5}}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"session", {{"task", {{"id", "push_t"}}}}}}), "invalid_config");
    EXPECT_EQ(error_code({{"corrective_budget_steps", "many"}}), "invalid_config");
    EXPECT_EQ(error_code(nlohmann::json::array()), "invalid_config");
}

TEST(RunConfig, PartialPostTrainKeepsDefaults) {
    const RunConfig c = RunConfig::from_json({{"post_train", {{"corrective_weight", 3.0}}}});
    EXPECT_EQ(c.post_train.corrective_weight, 3.0);
    EXPECT_EQ(c.post_train.epochs, 200u);
}

TEST(RunConfig, SessionTaskFollowsTopLevel) {
    const RunConfig c = RunConfig::from_json({{"task", {{"id", "push_t_distractor"}}}});
    EXPECT_EQ(c.session.task.id, TaskId::PushTDistractor);
    EXPECT_EQ(c.session.task.distractor_count, 3u);
}

TEST(RunConfig, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "hiwm_cfg_test.json";
    std::ofstream(path) << R"({"run_name": "filed", "context_steps": 7})";
    const RunConfig c = load_run_config(path);
    EXPECT_EQ(c.run_name, "filed");
    EXPECT_EQ(c.context_steps, 7u);
    std::ofstream(path) << "{not json";
    EXPECT_THROW(load_run_config(path), Error);
    std::filesystem::remove(path);
    EXPECT_THROW(load_run_config(path), Error);
}

TEST(WmLabel, ParsesGtAndProxy) {
    EXPECT_EQ(wm_from_label("gt", 3).mode, WmMode::GroundTruth);
    const WmConfig p = wm_from_label("proxy:0.25", 3);
    EXPECT_EQ(p.mode, WmMode::Proxy);
    EXPECT_EQ(p.coverage, 0.25);
    EXPECT_EQ(p.perturb_seed, 3u);
    EXPECT_EQ(p.label(), "proxy:0.25");
    EXPECT_THROW(wm_from_label("proxy:", 3), Error);
    EXPECT_THROW(wm_from_label("proxy:2", 3), Error);
    EXPECT_THROW(wm_from_label("sim", 3), Error);
}

TEST(SeedSpec, ListAndRange) {
    EXPECT_EQ(SeedSpec::from_json(nlohmann::json::array({3, 1}), "s").seeds(), (std::vector<std::uint64_t>{3, 1}));
    EXPECT_EQ(SeedSpec::from_json({{"first", 10}, {"count", 3}}, "s").seeds(),
              (std::vector<std::uint64_t>{10, 11, 12}));
    EXPECT_THROW(SeedSpec::from_json(nlohmann::json::array({"a"}), "s"), Error);
}
