#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hiwm/analytics.hpp"
#include "hiwm/config.hpp"
#include "hiwm/datasets.hpp"
#include "hiwm/net.hpp"
#include "hiwm/pipeline.hpp"
#include "hiwm/policy.hpp"
#include "hiwm/service.hpp"
#include "hiwm/session.hpp"

namespace fs = std::filesystem;
using namespace hiwm;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_stop{false};

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("io_error", "cannot write " + p.string());
    f << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error("missing_input", "cannot read " + p.string());
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

/// Options every subcommand shares.
struct Common {
    std::string config_path;
    std::string run_name;
    std::string out_root;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "run config (JSON)");
        app->add_option("--run-name", run_name, "override run_name");
        app->add_option("--out-root", out_root, "override out_root");
    }

    RunConfig resolve() const {
        RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (!run_name.empty()) c.run_name = run_name;
        if (!out_root.empty()) c.out_root = out_root;
        c.validate();
        return c;
    }
};

/// Resolved config next to the subcommand's outputs.
void record_config(const RunConfig& c, const std::string& subcommand) {
    write_text(c.out_dir() / ("config." + subcommand + ".json"), c.to_json().dump(2) + "\n");
}

/// "first:count" or "a,b,c".
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    if (s.empty()) return out;
    try {
        if (const auto colon = s.find(':'); colon != std::string::npos)
            return seed_range(std::stoull(s.substr(0, colon)), std::stoull(s.substr(colon + 1)));
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
        throw Error("invalid_config", "seeds must look like first:count or a,b,c");
    }
    return out;
}

/// expert | random:<seed> | path to a checkpoint.
PolicyFn resolve_policy(const std::string& spec, nlohmann::json* wire = nullptr) {
    if (spec == "expert") {
        if (wire) *wire = {{"kind", "expert"}};
        return expert_policy();
    }
    if (spec.rfind("random:", 0) == 0) {
        const std::uint64_t seed = parse_seeds(spec.substr(7)).at(0);
        if (wire) *wire = {{"kind", "random"}, {"seed", seed}};
        return random_policy(seed);
    }
    if (!fs::exists(spec)) throw Error("missing_input", "no checkpoint at " + spec);
    if (wire) *wire = {{"kind", "checkpoint"}, {"path", fs::absolute(spec).string()}};
    return as_policy(load_checkpoint(spec).params);
}

nlohmann::ordered_json eval_summary(const std::string& name, const EvalResult& r) {
    return {{"policy", name},
            {"episodes", r.outcomes.size()},
            {"successes", r.successes()},
            {"success_rate", r.success_rate},
            {"mean_overlap", r.mean_overlap}};
}

std::string outcomes_csv(const EvalResult& r) {
    std::string out = "seed,success,final_overlap,ticks\n";
    for (const auto& o : r.outcomes)
        out += std::to_string(o.seed) + "," + (o.success ? "1" : "0") + "," + format_double(o.final_overlap) + "," +
               std::to_string(o.ticks) + "\n";
    return out;
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen_demos(const RunConfig& c) {
    const Dataset ds = generate_demos(c.task, c.demo_seeds.seeds());
    const auto m = write_dataset(c.out_dir() / "demos", ds);
    print_json({{"dataset", (c.out_dir() / "demos").string()}, {"manifest", m.to_json()}});
}

void cmd_train_base(const RunConfig& c, const std::string& dataset) {
    const fs::path dir = dataset.empty() ? c.out_dir() / "demos" : fs::path(dataset);
    const Dataset ds = read_dataset(dir);
    const bool keep = !c.analyze.checkpoint_epochs.empty();
    const TrainResult r = train(ds, c.train, keep);
    save_checkpoint(c.out_dir() / "base.hiwp", r.final);
    write_text(c.out_dir() / "base_loss.csv", loss_csv(r.losses));
    for (auto e : c.analyze.checkpoint_epochs)
        if (e >= 1 && e <= r.epochs.size())
            save_checkpoint(c.out_dir() / "checkpoints" / ("epoch-" + std::to_string(e) + ".hiwp"), r.epochs[e - 1]);
    print_json({{"checkpoint", (c.out_dir() / "base.hiwp").string()},
                {"initial_loss", r.losses.front()},
                {"final_loss", r.losses.back()},
                {"epochs", r.losses.size() - 1}});
}

void cmd_eval(const RunConfig& c, const std::string& policy, const std::string& env, const std::string& seeds_opt,
              const std::string& name) {
    const auto seeds = seeds_opt.empty() ? c.eval_seeds.seeds() : parse_seeds(seeds_opt);
    const WmConfig wm = wm_from_label(env, c.session.wm.perturb_seed);
    const EvalResult r = evaluate_policy(resolve_policy(policy), c.task, wm, seeds);
    const std::string label = name.empty() ? "eval" : name;
    write_text(c.out_dir() / (label + ".csv"), outcomes_csv(r));
    auto summary = eval_summary(policy, r);
    summary["environment"] = wm.label();
    write_text(c.out_dir() / (label + ".json"), summary.dump(2) + "\n");
    print_json(summary);
}

void cmd_collect_wmcl(const RunConfig& c, const std::string& policy, std::size_t budget) {
    const Dataset ds =
        collect_wmcl(resolve_policy(policy), c.task, c.session.wm, c.wmcl_seeds.seeds(), budget);
    const auto m = write_dataset(c.out_dir() / "wmcl", ds);
    print_json({{"dataset", (c.out_dir() / "wmcl").string()}, {"manifest", m.to_json()}});
}

void cmd_collect_hiwm(const RunConfig& c, const std::string& policy, std::size_t budget) {
    const HiwmCollection h =
        collect_hiwm(resolve_policy(policy), c.session, c.hiwm_seeds.seeds(), budget, c.context_steps);
    const auto m = write_dataset(c.out_dir() / "hiwm", h.corrective);
    write_dataset(c.out_dir() / "hiwm_sessions", session_dataset(c.session, h.run.episodes));
    write_text(c.out_dir() / "hiwm_trace.jsonl", h.run.trace);
    const nlohmann::ordered_json summary{{"dataset", (c.out_dir() / "hiwm").string()},
                                         {"manifest", m.to_json()},
                                         {"failures", h.run.failures},
                                         {"corrective_branches", h.run.corrective_branches},
                                         {"successful_branches", h.run.successful_branches},
                                         {"tree_digest", hex64(h.run.digest)},
                                         {"exported_leaves", h.run.leaves}};
    write_text(c.out_dir() / "hiwm_summary.json", summary.dump(2) + "\n");
    print_json(summary);
}

void cmd_post_train(const RunConfig& c, const std::string& base, const std::string& base_ds,
                    const std::vector<std::string>& corrective, const std::string& name) {
    const Checkpoint ck = load_checkpoint(base.empty() ? c.out_dir() / "base.hiwp" : fs::path(base));
    const Dataset demos = read_dataset(base_ds.empty() ? c.out_dir() / "demos" : fs::path(base_ds));
    Dataset corr;
    for (const auto& dir : corrective) {
        const Dataset d = read_dataset(dir);
        corr.episodes.insert(corr.episodes.end(), d.episodes.begin(), d.episodes.end());
    }
    const TrainResult r = post_train(ck, demos, corr, c.post_train);
    save_checkpoint(c.out_dir() / (name + ".hiwp"), r.final);
    write_text(c.out_dir() / (name + "_loss.csv"), loss_csv(r.losses));
    print_json({{"checkpoint", (c.out_dir() / (name + ".hiwp")).string()},
                {"corrective_steps", corr.step_count()},
                {"final_loss", r.losses.back()}});
}

void cmd_analyze(const RunConfig& c, const std::vector<std::string>& checkpoints_opt) {
    const fs::path out = c.out_dir() / "analysis";
    nlohmann::ordered_json summary;

    // Proxy vs GroundTruth success across checkpoints.
    std::vector<std::string> cks = checkpoints_opt;
    if (cks.empty() && fs::exists(c.out_dir() / "checkpoints")) {
        for (const auto& e : fs::directory_iterator(c.out_dir() / "checkpoints"))
            if (e.path().extension() == ".hiwp") cks.push_back(e.path().string());
        for (const char* extra : {"hiwm.hiwp", "wmcl.hiwp"})
            if (fs::exists(c.out_dir() / extra)) cks.push_back((c.out_dir() / extra).string());
        std::sort(cks.begin(), cks.end());
    }
    if (!cks.empty()) {
        const auto seeds = c.eval_seeds.seeds();
        const WmConfig proxy = WmConfig::proxy(c.analyze.correlation_coverage, c.session.wm.perturb_seed);
        std::vector<double> gt, px;
        std::string csv = "checkpoint,gt_success,proxy_success\n";
        for (const auto& p : cks) {
            const PolicyFn pol = as_policy(load_checkpoint(p).params);
            gt.push_back(evaluate_policy(pol, c.task, WmConfig{}, seeds).success_rate);
            px.push_back(evaluate_policy(pol, c.task, proxy, seeds).success_rate);
            csv += fs::path(p).filename().string() + "," + format_double(gt.back()) + "," + format_double(px.back()) + "\n";
        }
        write_text(out / "correlation.csv", csv);
        if (cks.size() >= 2) {
            try {
                summary["pearson_r"] = pearson_r(px, gt);
            } catch (const Error& e) {
                summary["pearson_r"] = nullptr;
                summary["pearson_error"] = e.what();
            }
        }
    }

    // Fidelity sweep with a scripted-expert action script.
    const auto grid = workspace_grid(c.analyze.grid_points, c.session.wm.bounds);
    if (!c.analyze.fidelity_seeds.empty()) {
        const Episode script_ep =
            run_autonomous_rollout(expert_policy(), c.task, c.analyze.fidelity_seeds.front(), WmConfig{});
        std::vector<ActionVector> script;
        for (const auto& s : script_ep.steps) script.push_back(s.action);
        const auto rows = fidelity_sweep(c.analyze.coverages, script, c.task, c.analyze.fidelity_seeds,
                                         c.session.wm.perturb_seed, grid);
        write_text(out / "fidelity.csv", fidelity_csv(rows));
    }
    for (double cov : c.analyze.coverages) {
        const auto m = positioning_deviation(WmConfig::proxy(cov, c.session.wm.perturb_seed), grid);
        char label[16];
        std::snprintf(label, sizeof label, "%.2f", cov);
        write_text(out / ("deviation_c" + std::string(label) + ".csv"), deviation_csv(m));
    }

    std::vector<long long> ns;
    for (std::size_t n = 0; n <= c.analyze.cost_max_scenes; n += c.analyze.cost_step) ns.push_back(static_cast<long long>(n));
    write_text(out / "cost_curve.csv", cost_curve_csv(c.cost, ns));
    summary["break_even_scenes"] = break_even_scenes(c.cost);
    summary["cost_saved_at_max"] = cost_saved(c.cost, static_cast<double>(c.analyze.cost_max_scenes));
    summary["checkpoints"] = cks.size();
    write_text(out / "summary.json", summary.dump(2) + "\n");
    print_json(summary);
}

void on_signal(int) { g_stop = true; }

void cmd_serve(const RunConfig& c, double seconds) {
    SessionService svc({c.out_dir() / "server"});
    net::Server server(svc, c.server.host, c.server.ws_port, c.server.tcp_port);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    print_json({{"ws", "ws://" + c.server.host + ":" + std::to_string(server.ws_port()) + "/ws"},
                {"tcp", c.server.host + ":" + std::to_string(server.tcp_port())}});
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (seconds > 0 && std::chrono::steady_clock::now() - start > std::chrono::duration<double>(seconds)) break;
    }
    server.stop();
    svc.shutdown();
}

void cmd_replay(const RunConfig& c, const std::string& trace_path, const std::string& policy,
                const std::string& expect) {
    const auto trace = parse_trace(read_text(trace_path));
    const Session s = replay_trace(c.session, resolve_policy(policy), trace);
    const std::string digest = hex64(s.digest());
    print_json({{"tree_digest", digest}, {"trees", s.forest().size()}});
    if (!expect.empty() && expect != digest)
        throw Error("digest_mismatch", "replayed digest " + digest + " differs from expected " + expect);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hiwm: human-in-the-world-model workbench"};
    app.require_subcommand(1);

    Common common;
    std::string dataset, policy, env = "gt", seeds, name, base, base_ds, trace, expect;
    std::vector<std::string> corrective, checkpoints;
    std::size_t budget = 0;
    double serve_seconds = 0;

    auto* gen = app.add_subcommand("gen-demos", "scripted expert demos in GroundTruth");
    auto* tb = app.add_subcommand("train-base", "behaviour cloning on the demos");
    tb->add_option("--dataset", dataset, "dataset directory (default <out>/demos)");
    auto* ev = app.add_subcommand("eval", "success table for a policy");
    ev->add_option("--policy", policy, "checkpoint path, 'expert' or 'random:<seed>'")->required();
    ev->add_option("--env", env, "gt or proxy:<coverage>");
    ev->add_option("--seeds", seeds, "first:count or a,b,c (default from config)");
    ev->add_option("--name", name, "output file stem");
    auto* wm = app.add_subcommand("collect-wmcl", "success-filtered proxy rollouts");
    wm->add_option("--policy", policy, "checkpoint path, 'expert' or 'random:<seed>'")->required();
    wm->add_option("--budget", budget, "step budget (default corrective_budget_steps)");
    auto* hc = app.add_subcommand("collect-hiwm", "auto-operator corrective data in the proxy");
    hc->add_option("--policy", policy, "checkpoint path, 'expert' or 'random:<seed>'")->required();
    hc->add_option("--budget", budget, "corrective step budget (default corrective_budget_steps)");
    auto* pt = app.add_subcommand("post-train", "fine-tune the base policy on merged data");
    pt->add_option("--base", base, "base checkpoint (default <out>/base.hiwp)");
    pt->add_option("--base-dataset", base_ds, "demos directory (default <out>/demos)");
    pt->add_option("--corrective", corrective, "corrective dataset directories");
    pt->add_option("--name", name, "output stem")->required();
    auto* an = app.add_subcommand("analyze", "correlation, fidelity, deviation and cost CSVs");
    an->add_option("--checkpoints", checkpoints, "checkpoints for the correlation table");
    auto* sv = app.add_subcommand("serve", "run the session server");
    sv->add_option("--seconds", serve_seconds, "stop after this many seconds (0 = until signalled)");
    auto* rp = app.add_subcommand("replay", "rebuild a session from its event trace");
    rp->add_option("--trace", trace, "trace JSONL")->required();
    rp->add_option("--policy", policy, "policy that produced the trace")->required();
    rp->add_option("--expect", expect, "expected tree digest (hex)");
    for (auto* s : {gen, tb, ev, wm, hc, pt, an, sv, rp}) common.attach(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << nlohmann::json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
        return kExitConfig;
    }

    try {
        const RunConfig c = common.resolve();
        const std::size_t step_budget = budget > 0 ? budget : c.corrective_budget_steps;
        CLI::App* sub = app.get_subcommands().front();
        const std::string cmd = sub->get_name();
        fs::create_directories(c.out_dir());
        if (cmd == "eval") {
            const auto s = seeds.empty() ? c.eval_seeds.seeds() : parse_seeds(seeds);
            if (s.empty()) throw Error("invalid_config", "eval needs at least one seed");
        }
        record_config(c, cmd);
        if (cmd == "gen-demos") cmd_gen_demos(c);
        else if (cmd == "train-base") cmd_train_base(c, dataset);
        else if (cmd == "eval") cmd_eval(c, policy, env, seeds, name);
        else if (cmd == "collect-wmcl") cmd_collect_wmcl(c, policy, step_budget);
        else if (cmd == "collect-hiwm") cmd_collect_hiwm(c, policy, step_budget);
        else if (cmd == "post-train") cmd_post_train(c, base, base_ds, corrective, name);
        else if (cmd == "analyze") cmd_analyze(c, checkpoints);
        else if (cmd == "serve") cmd_serve(c, serve_seconds);
        else if (cmd == "replay") cmd_replay(c, trace, policy, expect);
        return 0;
    } catch (const Error& e) {
        const bool config = e.code() == "invalid_config" || e.code() == "missing_input";
        std::cerr << nlohmann::json{{"error", e.code()}, {"message", e.what()}}.dump() << std::endl;
        return config ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump() << std::endl;
        return kExitRuntime;
    }
}
