#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hiwm/analytics.hpp"
#include "hiwm/common.hpp"
#include "hiwm/policy.hpp"
#include "hiwm/session.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

namespace detail {

/// Reads fields out of a JSON object and rejects the keys nobody asked for.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw Error("invalid_config", where_ + " must be a JSON object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error("invalid_config", where_ + "." + key + " has the wrong type");
        }
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw Error("invalid_config", "unknown key '" + where_ + "." + k + "'");
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// World model, task, session

inline nlohmann::ordered_json wm_to_json(const WmConfig& c) {
    return {{"environment", c.mode == WmMode::GroundTruth ? "gt" : "proxy"},
            {"coverage", c.coverage},
            {"perturb_seed", c.perturb_seed},
            {"max_warp_mm", c.max_warp_mm},
            {"param_jitter", c.param_jitter}};
}

inline WmConfig wm_from_json(const nlohmann::json& j, const std::string& where = "world_model") {
    WmConfig c;
    detail::StrictObject o(j, where);
    std::string env = "gt";
    o.read("environment", env);
    if (env != "gt" && env != "proxy") throw Error("invalid_config", where + ".environment must be gt or proxy");
    c.mode = env == "gt" ? WmMode::GroundTruth : WmMode::Proxy;
    o.read("coverage", c.coverage);
    o.read("perturb_seed", c.perturb_seed);
    o.read("max_warp_mm", c.max_warp_mm);
    o.read("param_jitter", c.param_jitter);
    o.finish();
    c.validate();
    return c;
}

/// "gt" or "proxy:<coverage>" (the label written into dataset headers).
inline WmConfig wm_from_label(const std::string& label, std::uint64_t perturb_seed) {
    if (label == "gt") return WmConfig::ground_truth();
    if (label.rfind("proxy:", 0) == 0) {
        double c = 0.0;
        try {
            std::size_t used = 0;
            c = std::stod(label.substr(6), &used);
            if (used != label.size() - 6) throw std::invalid_argument(label);
        } catch (const std::exception&) {
            throw Error("invalid_config", "bad environment label '" + label + "'");
        }
        WmConfig w = WmConfig::proxy(c, perturb_seed);
        w.validate();
        return w;
    }
    throw Error("invalid_config", "environment must be 'gt' or 'proxy:<coverage>', got '" + label + "'");
}

inline nlohmann::ordered_json task_to_json(const TaskSpec& t) {
    return {{"id", to_string(t.id)},
            {"success_threshold", t.success_threshold},
            {"max_ticks", t.max_ticks},
            {"target_xy_jitter", t.target_xy_jitter},
            {"target_theta_jitter", t.target_theta_jitter},
            {"distractor_count", t.distractor_count}};
}

/// Starts from the preset named by "id" and overrides the listed fields.
inline TaskSpec task_from_json(const nlohmann::json& j, const std::string& where = "task") {
    detail::StrictObject o(j, where);
    std::string id = "push_t";
    o.read("id", id);
    TaskSpec t = TaskSpec::for_id(task_id_from_string(id));
    o.read("success_threshold", t.success_threshold);
    o.read("max_ticks", t.max_ticks);
    o.read("target_xy_jitter", t.target_xy_jitter);
    o.read("target_theta_jitter", t.target_theta_jitter);
    o.read("distractor_count", t.distractor_count);
    o.finish();
    t.validate();
    return t;
}

inline nlohmann::ordered_json auto_op_to_json(const AutoOperatorConfig& a) {
    return {{"rewind_depth", a.rewind_depth},
            {"max_correction", a.max_correction},
            {"branches", a.branches},
            {"jitter_mm", a.jitter_mm}};
}

inline AutoOperatorConfig auto_op_from_json(const nlohmann::json& j, const std::string& where) {
    AutoOperatorConfig a;
    detail::StrictObject o(j, where);
    o.read("rewind_depth", a.rewind_depth);
    o.read("max_correction", a.max_correction);
    o.read("branches", a.branches);
    o.read("jitter_mm", a.jitter_mm);
    o.finish();
    a.validate();
    return a;
}

inline nlohmann::ordered_json session_to_json(const SessionConfig& s) {
    return {{"tick_rate_hz", s.tick_rate_hz},
            {"world_model", wm_to_json(s.wm)},
            {"task", task_to_json(s.task)},
            {"failure_window", s.failure_window},
            {"failure_epsilon", s.failure_epsilon},
            {"auto_operator", auto_op_to_json(s.auto_op)}};
}

inline SessionConfig session_from_json(const nlohmann::json& j, const std::string& where = "session") {
    SessionConfig s;
    detail::StrictObject o(j, where);
    o.read("tick_rate_hz", s.tick_rate_hz);
    if (const auto* w = o.child("world_model")) s.wm = wm_from_json(*w, where + ".world_model");
    if (const auto* t = o.child("task")) s.task = task_from_json(*t, where + ".task");
    o.read("failure_window", s.failure_window);
    o.read("failure_epsilon", s.failure_epsilon);
    if (const auto* a = o.child("auto_operator")) s.auto_op = auto_op_from_json(*a, where + ".auto_operator");
    o.finish();
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Seeds

/// Either an explicit list or a contiguous {first, count} range.
struct SeedSpec {
    std::vector<std::uint64_t> explicit_seeds;
    std::uint64_t first = 0;
    std::size_t count = 0;

    static SeedSpec range(std::uint64_t first, std::size_t count) { return {{}, first, count}; }

    std::vector<std::uint64_t> seeds() const {
        return explicit_seeds.empty() ? seed_range(first, count) : explicit_seeds;
    }

    nlohmann::ordered_json to_json() const {
        if (!explicit_seeds.empty()) return explicit_seeds;
        return {{"first", first}, {"count", count}};
    }

    static SeedSpec from_json(const nlohmann::json& j, const std::string& where) {
        SeedSpec s;
        if (j.is_array()) {
            try {
                s.explicit_seeds = j.get<std::vector<std::uint64_t>>();
            } catch (const nlohmann::json::exception&) {
                throw Error("invalid_config", where + " must list unsigned integers");
            }
            return s;
        }
        detail::StrictObject o(j, where);
        o.read("first", s.first);
        o.read("count", s.count);
        o.finish();
        return s;
    }
};

// ---------------------------------------------------------------------------
// Run configuration

struct AnalyzeConfig {
    std::vector<double> coverages{0.0, 0.2, 0.5, 1.0};
    std::size_t grid_points = 9;  // per side
    std::vector<std::uint64_t> fidelity_seeds{5, 6};
    std::vector<std::size_t> checkpoint_epochs{5, 10, 20, 40, 80, 150, 300};
    double correlation_coverage = 0.8;
    std::size_t cost_max_scenes = 400;
    std::size_t cost_step = 10;
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    int ws_port = 8787;
    int tcp_port = 8788;
};

struct RunConfig {
    std::string run_name = "default";
    std::string out_root = "out";
    TaskSpec task;
    SessionConfig session;  // world_model here is the collection proxy
    TrainConfig train;
    TrainConfig post_train = [] {
        TrainConfig t;
        t.epochs = 200;
        return t;
    }();
    CostModel cost;
    SeedSpec demo_seeds = SeedSpec::range(1000, 50);
    SeedSpec eval_seeds = SeedSpec::range(100000, 100);
    SeedSpec hiwm_seeds = SeedSpec::range(20000, 400);
    SeedSpec wmcl_seeds = SeedSpec::range(30000, 1000);
    std::size_t corrective_budget_steps = 5000;
    std::size_t context_steps = 15;
    AnalyzeConfig analyze;
    ServerConfig server;

    RunConfig() {
        session.wm = WmConfig::proxy(0.8, 7);
        session.task = task;
    }

    std::filesystem::path out_dir() const { return std::filesystem::path(out_root) / run_name; }

    void validate() const {
        if (run_name.empty() || run_name.find('/') != std::string::npos || run_name == "." || run_name == "..")
            throw Error("invalid_config", "run_name must be a plain directory name");
        session.validate();
        train.validate();
        post_train.validate();
        cost.validate();
        if (analyze.grid_points < 2) throw Error("invalid_config", "analyze.grid_points must be >= 2");
        for (std::size_t i = 1; i < analyze.coverages.size(); ++i)
            if (analyze.coverages[i] < analyze.coverages[i - 1])
                throw Error("invalid_config", "analyze.coverages must be sorted");
        for (double c : analyze.coverages)
            if (!(c >= 0.0 && c <= 1.0)) throw Error("invalid_config", "analyze.coverages must lie in [0, 1]");
        if (analyze.cost_step == 0) throw Error("invalid_config", "analyze.cost_step must be > 0");
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json sess = session_to_json(session);
        sess.erase("task");
        return {{"run_name", run_name},
                {"out_root", out_root},
                {"task", task_to_json(task)},
                {"session", sess},
                {"train", train.to_json()},
                {"post_train", post_train.to_json()},
                {"cost_model", cost.to_json()},
                {"seeds",
                 {{"demo", demo_seeds.to_json()},
                  {"eval", eval_seeds.to_json()},
                  {"hiwm", hiwm_seeds.to_json()},
                  {"wmcl", wmcl_seeds.to_json()}}},
                {"corrective_budget_steps", corrective_budget_steps},
                {"context_steps", context_steps},
                {"analyze",
                 {{"coverages", analyze.coverages},
                  {"grid_points", analyze.grid_points},
                  {"fidelity_seeds", analyze.fidelity_seeds},
                  {"checkpoint_epochs", analyze.checkpoint_epochs},
                  {"correlation_coverage", analyze.correlation_coverage},
                  {"cost_max_scenes", analyze.cost_max_scenes},
                  {"cost_step", analyze.cost_step}}},
                {"server", {{"host", server.host}, {"ws_port", server.ws_port}, {"tcp_port", server.tcp_port}}}};
    }

    /// Missing keys keep their defaults; unknown keys are errors. The
    /// session task always follows the top-level task.
    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        detail::StrictObject o(j, "config");
        o.read("run_name", c.run_name);
        o.read("out_root", c.out_root);
        if (const auto* t = o.child("task")) c.task = task_from_json(*t);
        if (const auto* s = o.child("session")) {
            if (s->contains("task")) throw Error("invalid_config", "set the task at top level, not in session");
            c.session = session_from_json(*s);
        }
        c.session.task = c.task;
        if (const auto* t = o.child("train")) c.train = TrainConfig::from_json(*t);
        if (const auto* t = o.child("post_train")) {
            if (!t->is_object()) throw Error("invalid_config", "post_train must be a JSON object");
            nlohmann::json merged = c.post_train.to_json();
            merged.update(*t);
            c.post_train = TrainConfig::from_json(merged);
        }
        if (const auto* m = o.child("cost_model")) c.cost = CostModel::from_json(*m);
        if (const auto* s = o.child("seeds")) {
            detail::StrictObject so(*s, "seeds");
            if (const auto* v = so.child("demo")) c.demo_seeds = SeedSpec::from_json(*v, "seeds.demo");
            if (const auto* v = so.child("eval")) c.eval_seeds = SeedSpec::from_json(*v, "seeds.eval");
            if (const auto* v = so.child("hiwm")) c.hiwm_seeds = SeedSpec::from_json(*v, "seeds.hiwm");
            if (const auto* v = so.child("wmcl")) c.wmcl_seeds = SeedSpec::from_json(*v, "seeds.wmcl");
            so.finish();
        }
        o.read("corrective_budget_steps", c.corrective_budget_steps);
        o.read("context_steps", c.context_steps);
        if (const auto* a = o.child("analyze")) {
            detail::StrictObject ao(*a, "analyze");
            ao.read("coverages", c.analyze.coverages);
            ao.read("grid_points", c.analyze.grid_points);
            ao.read("fidelity_seeds", c.analyze.fidelity_seeds);
            ao.read("checkpoint_epochs", c.analyze.checkpoint_epochs);
            ao.read("correlation_coverage", c.analyze.correlation_coverage);
            ao.read("cost_max_scenes", c.analyze.cost_max_scenes);
            ao.read("cost_step", c.analyze.cost_step);
            ao.finish();
        }
        if (const auto* s = o.child("server")) {
            detail::StrictObject so(*s, "server");
            so.read("host", c.server.host);
            so.read("ws_port", c.server.ws_port);
            so.read("tcp_port", c.server.tcp_port);
            so.finish();
        }
        o.finish();
        c.validate();
        return c;
    }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("invalid_config", "cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid_config", "config is not valid JSON: " + std::string(e.what()));
    }
    return RunConfig::from_json(j);
}

}  // namespace hiwm
