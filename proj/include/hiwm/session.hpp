#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hiwm/common.hpp"
#include "hiwm/datasets.hpp"
#include "hiwm/expert.hpp"
#include "hiwm/intervene.hpp"
#include "hiwm/records.hpp"
#include "hiwm/rng.hpp"
#include "hiwm/trajtree.hpp"
#include "hiwm/worldmodel.hpp"

namespace hiwm {

/// Anything that maps an observation to an action: trained networks, the
/// scripted expert, random baselines.
using PolicyFn = std::function<ActionVector(const Observation&)>;

enum class SessionMode { Autonomous, HumanControl, Paused, Terminal };

inline const char* to_string(SessionMode m) {
    switch (m) {
        case SessionMode::Autonomous: return "autonomous";
        case SessionMode::HumanControl: return "human_control";
        case SessionMode::Paused: return "paused";
        case SessionMode::Terminal: return "terminal";
    }
    return "?";
}

inline SessionMode session_mode_from_string(const std::string& s) {
    if (s == "autonomous") return SessionMode::Autonomous;
    if (s == "human_control") return SessionMode::HumanControl;
    if (s == "paused") return SessionMode::Paused;
    if (s == "terminal") return SessionMode::Terminal;
    throw Error("parse_error", "unknown session mode '" + s + "'");
}

/// Overlap lost when a T slides `mm` along its bar: the strip swept out of
/// the bar and the stem, over the T area.
inline double overlap_equivalent(double mm) {
    return mm * (tshape::kBarWidth + tshape::kStemLength) / tshape::kArea;
}

struct AutoOperatorConfig {
    std::size_t rewind_depth = 15;     // R
    std::size_t max_correction = 120;  // H
    std::size_t branches = 3;          // B
    double jitter_mm = 2.0;            // uniform noise on the operator's planar target

    void validate() const {
        if (rewind_depth == 0 || max_correction == 0 || branches == 0)
            throw Error("invalid_config", "rewind depth, correction length and branch count must be positive");
        if (!(jitter_mm >= 0.0)) throw Error("invalid_config", "jitter_mm must be >= 0");
    }
};

struct SessionConfig {
    double tick_rate_hz = 15.0;
    WmConfig wm;
    TaskSpec task;
    std::size_t failure_window = 45;  // K
    double failure_epsilon = overlap_equivalent(2.0);
    AutoOperatorConfig auto_op;

    void validate() const {
        if (!(tick_rate_hz > 0.0)) throw Error("invalid_config", "tick rate must be > 0");
        if (failure_window == 0) throw Error("invalid_config", "failure window must be positive");
        if (!(failure_epsilon >= 0.0)) throw Error("invalid_config", "failure epsilon must be >= 0");
        wm.validate();
        task.validate();
        auto_op.validate();
    }
};

// ---------------------------------------------------------------------------
// Events

struct Takeover {};
struct Release {};
struct HumanAction {
    std::variant<ActionVector, DeviceInput> input;
};
struct Rollback {
    std::uint64_t node = 0;
};
struct Pause {};
struct Resume {};
struct Reset {
    std::uint64_t seed = 0;
};

using SessionEvent = std::variant<Takeover, Release, HumanAction, Rollback, Pause, Resume, Reset>;

inline const char* event_name(const SessionEvent& e) {
    static constexpr const char* names[] = {"takeover", "release", "device_input", "rollback",
                                            "pause",    "resume",  "reset"};
    return names[e.index()];
}

inline nlohmann::ordered_json action_to_json(const ActionVector& a) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (double v : a.values) arr.push_back(v);
    return arr;
}

inline ActionVector action_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != act::kDims) throw Error("schema_error", "action must be an array of 14 numbers");
    ActionVector a;
    for (std::size_t i = 0; i < act::kDims; ++i) {
        if (!j[i].is_number()) throw Error("schema_error", "action entries must be numbers");
        a[i] = j[i].get<double>();
    }
    return a;
}

inline nlohmann::ordered_json device_input_to_json(const DeviceInput& in) {
    nlohmann::ordered_json j;
    if (const auto* k = std::get_if<KeyStep>(&in.data)) {
        j = {{"kind", "key_step"}, {"axis", k->axis == Axis::X ? "x" : "y"}, {"direction", k->direction}, {"step", k->step}};
    } else if (const auto* p = std::get_if<PlanarPointer>(&in.data)) {
        j = {{"kind", "planar_pointer"}, {"dx", p->dx}, {"dy", p->dy}};
    } else {
        const auto& ps = std::get<PoseStream>(in.data);
        nlohmann::ordered_json pose = nlohmann::ordered_json::array();
        for (double v : ps.pose) pose.push_back(v);
        j = {{"kind", "pose_stream"}, {"arm", ps.arm}, {"pose", pose}, {"gripper", ps.gripper}};
    }
    j["timestamp"] = in.timestamp;
    return j;
}

inline DeviceInput device_input_from_json(const nlohmann::json& j) {
    try {
        DeviceInput in;
        in.timestamp = j.value("timestamp", 0.0);
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "key_step") {
            KeyStep k;
            const std::string axis = j.at("axis").get<std::string>();
            if (axis != "x" && axis != "y") throw Error("schema_error", "key_step axis must be x or y");
            k.axis = axis == "x" ? Axis::X : Axis::Y;
            k.direction = j.at("direction").get<int>();
            k.step = j.value("step", 5.0);
            in.data = k;
        } else if (kind == "planar_pointer") {
            in.data = PlanarPointer{j.at("dx").get<double>(), j.at("dy").get<double>()};
        } else if (kind == "pose_stream") {
            PoseStream ps;
            ps.arm = j.at("arm").get<int>();
            const auto& pose = j.at("pose");
            if (!pose.is_array() || pose.size() != 6) throw Error("schema_error", "pose must hold 6 numbers");
            for (std::size_t i = 0; i < 6; ++i) ps.pose[i] = pose[i].get<double>();
            ps.gripper = j.value("gripper", 0.0);
            in.data = ps;
        } else {
            throw Error("schema_error", "unknown device input kind '" + kind + "'");
        }
        return in;
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema_error", std::string("device input: ") + e.what());
    }
}

/// JSON form shared by the event trace and the wire protocol payloads.
inline nlohmann::ordered_json event_to_json(const SessionEvent& e) {
    nlohmann::ordered_json j{{"type", event_name(e)}};
    if (const auto* h = std::get_if<HumanAction>(&e)) {
        if (const auto* a = std::get_if<ActionVector>(&h->input))
            j["action"] = action_to_json(*a);
        else
            j["input"] = device_input_to_json(std::get<DeviceInput>(h->input));
    } else if (const auto* r = std::get_if<Rollback>(&e)) {
        j["node"] = r->node;
    } else if (const auto* s = std::get_if<Reset>(&e)) {
        j["seed"] = s->seed;
    }
    return j;
}

inline SessionEvent event_from_json(const nlohmann::json& j) {
    try {
        const std::string type = j.at("type").get<std::string>();
        if (type == "takeover") return Takeover{};
        if (type == "release") return Release{};
        if (type == "pause") return Pause{};
        if (type == "resume") return Resume{};
        if (type == "rollback") return Rollback{j.at("node").get<std::uint64_t>()};
        if (type == "reset") return Reset{j.at("seed").get<std::uint64_t>()};
        if (type == "device_input") {
            if (j.contains("action")) return HumanAction{action_from_json(j.at("action"))};
            return HumanAction{device_input_from_json(j.at("input"))};
        }
        throw Error("unknown_type", "unknown event type '" + type + "'");
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema_error", std::string("event: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Tick reports and failure detection

struct TickReport {
    std::uint64_t node_id = 0;
    std::optional<std::uint64_t> parent;
    std::uint64_t tick = 0;
    SessionMode mode = SessionMode::Autonomous;
    std::optional<ControlSource> source;  // empty for tree roots
    double overlap = 0.0;
    bool success = false;
    bool in_workspace = true;
    bool failure_signal = false;
    Pose2 t_pose;
    Vec2 pusher;
    Pose2 target;
};

/// True when the last `window` reports show less than `epsilon` of overlap
/// progress (best overlap in the window against its first entry) without
/// success, or when the newest report has the block outside the workspace.
inline bool detect_failure_signal(std::span<const TickReport> history, std::size_t window, double epsilon) {
    if (window == 0 || history.size() < window)
        throw Error("invalid_argument", "failure detection needs at least K reports");
    const auto recent = history.subspan(history.size() - window);
    const TickReport& last = recent.back();
    if (!last.in_workspace) return true;
    if (last.success) return false;
    double best = recent.front().overlap;
    for (const auto& r : recent) best = std::max(best, r.overlap);
    return best - recent.front().overlap < epsilon;
}

// ---------------------------------------------------------------------------
// Session engine

/// One closed-loop session: a forest of trajectory trees (one per reset),
/// a cursor into the current tree, and the control-authority state machine.
/// Every tick and event is appended to a trace that replays the session
/// bit-exactly.
class Session {
public:
    Session(SessionConfig cfg, PolicyFn policy, std::uint64_t seed)
        : cfg_(std::move(cfg)), policy_(std::move(policy)), mapper_(MapperConfig::planar(cfg_.wm.bounds)) {
        cfg_.validate();
        trace_.push_back({{"op", "start"}, {"seed", seed}});
        start_tree(seed);
    }

    const SessionConfig& config() const { return cfg_; }
    SessionMode mode() const { return mode_; }
    std::optional<SessionMode> paused_from() const { return paused_from_; }
    const std::string& diagnostic() const { return diagnostic_; }

    const std::vector<TrajTree>& forest() const { return trees_; }
    std::size_t current_tree() const { return current_; }
    const TrajTree& tree() const { return trees_[current_]; }
    std::uint64_t tree_seed(std::size_t i) const { return seeds_.at(i); }
    std::uint64_t cursor() const { return tree().cursor(); }
    const SceneState& state() const { return state_; }
    Observation observation() const { return observe(state_, cfg_.wm.bounds); }

    const TickReport& report(std::uint64_t node) const {
        auto it = reports_.find(node);
        if (it == reports_.end()) throw Error("unknown_node", "no node with id " + std::to_string(node));
        return it->second;
    }
    const TickReport& last_report() const { return report(cursor()); }

    /// Reports from the root of `node`'s tree down to `node`.
    std::vector<TickReport> path_reports(std::uint64_t node) const {
        std::vector<TickReport> out;
        for (auto id : tree_of(node).path(node)) out.push_back(reports_.at(id));
        return out;
    }

    const std::vector<nlohmann::ordered_json>& trace() const { return trace_; }

    std::string trace_jsonl() const {
        std::string out;
        for (const auto& line : trace_) out += line.dump() + "\n";
        return out;
    }

    /// Advances one control tick in Autonomous or HumanControl.
    TickReport tick() {
        if (mode_ != SessionMode::Autonomous && mode_ != SessionMode::HumanControl)
            throw Error("invalid_mode", std::string("cannot tick in mode ") + to_string(mode_));
        trace_.push_back({{"op", "tick"}});

        const Observation obs = observation();
        ActionVector action;
        ControlSource source;
        if (mode_ == SessionMode::Autonomous) {
            source = ControlSource::Policy;
            action = policy_ ? policy_(obs) : obs.ee_poses;
            if (!action.finite()) {
                paused_from_ = mode_;
                mode_ = SessionMode::Paused;
                diagnostic_ = "policy returned a non-finite action";
                return last_report();
            }
            action = clamp_and_limit(action, obs.ee_poses, mapper_);
        } else {
            source = ControlSource::Human;
            action = pending_.value_or(obs.ee_poses);
            pending_.reset();
        }

        const StepResult r = step(state_, action, cfg_.wm);
        state_ = r.state;
        const std::uint64_t id = next_id_++;
        trees_[current_].append(action, source, state_, r.obs, id);
        TickReport rep = make_report(id);
        rep.source = source;

        const auto eval = evaluate_success(state_, cfg_.task);
        if (eval.success || state_.tick >= cfg_.task.max_ticks || is_terminal(state_, cfg_.wm.bounds))
            mode_ = SessionMode::Terminal;
        rep.mode = mode_;

        if (source == ControlSource::Policy && mode_ != SessionMode::Terminal) {
            // Only judge stretches the policy drove on its own.
            const auto path = path_reports_with(rep);
            const std::size_t k = cfg_.failure_window;
            if (path.size() >= k + 1) {
                bool all_policy = true;
                for (std::size_t i = path.size() - k; i < path.size(); ++i)
                    all_policy = all_policy && path[i].source == ControlSource::Policy;
                if (all_policy) {
                    rep.failure_signal = detect_failure_signal(path, k, cfg_.failure_epsilon);
                    if (rep.failure_signal && !path[path.size() - 2].failure_signal) trees_[current_].mark_failure(id);
                }
            }
        }
        reports_[id] = rep;
        return rep;
    }

    /// Applies an event. Invalid events throw `invalid_event` and leave the
    /// session untouched.
    SessionMode handle(const SessionEvent& ev) {
        auto reject = [&](const std::string& why) -> SessionMode {
            throw Error("invalid_event", std::string(event_name(ev)) + " rejected in mode " + to_string(mode_) +
                                             (why.empty() ? "" : ": " + why));
        };

        std::visit(
            [&](const auto& e) {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, Takeover>) {
                    if (mode_ != SessionMode::Autonomous) reject("");
                    mode_ = SessionMode::HumanControl;
                } else if constexpr (std::is_same_v<E, Release>) {
                    if (mode_ != SessionMode::HumanControl) reject("");
                    pending_.reset();
                    mode_ = SessionMode::Autonomous;
                } else if constexpr (std::is_same_v<E, HumanAction>) {
                    if (mode_ != SessionMode::HumanControl) reject("");
                    const ActionVector cur = observation().ee_poses;
                    if (const auto* a = std::get_if<ActionVector>(&e.input)) {
                        if (!a->finite()) reject("action must be finite");
                        pending_ = clamp_and_limit(*a, cur, mapper_);
                    } else {
                        pending_ = map_input(std::get<DeviceInput>(e.input), cur, mapper_);
                    }
                } else if constexpr (std::is_same_v<E, Rollback>) {
                    if (mode_ == SessionMode::Autonomous) reject("take over or pause first");
                    const std::size_t t = tree_index_of(e.node);
                    if (t == trees_.size()) reject("unknown node " + std::to_string(e.node));
                    current_ = t;
                    state_ = trees_[t].rewind(e.node);
                    pending_.reset();
                    paused_from_.reset();
                    mode_ = SessionMode::HumanControl;
                } else if constexpr (std::is_same_v<E, Pause>) {
                    if (mode_ != SessionMode::Autonomous && mode_ != SessionMode::HumanControl) reject("");
                    paused_from_ = mode_;
                    mode_ = SessionMode::Paused;
                } else if constexpr (std::is_same_v<E, Resume>) {
                    if (mode_ != SessionMode::Paused) reject("");
                    mode_ = *paused_from_;
                    paused_from_.reset();
                    diagnostic_.clear();
                } else if constexpr (std::is_same_v<E, Reset>) {
                    start_tree(e.seed);
                }
            },
            ev);
        trace_.push_back({{"op", "event"}, {"event", event_to_json(ev)}});
        return mode_;
    }

    /// Linearised root-to-leaf episodes for the given leaves (all leaves of
    /// every tree when empty).
    std::vector<Episode> export_episodes(const std::vector<std::uint64_t>& leaves = {}) const {
        std::vector<Episode> out;
        const std::string env = cfg_.wm.label();
        if (leaves.empty()) {
            for (std::size_t t = 0; t < trees_.size(); ++t)
                for (auto leaf : trees_[t].leaves())
                    if (leaf != trees_[t].root()) out.push_back(trees_[t].linearize(leaf, cfg_.task, env, seeds_[t]));
            return out;
        }
        for (auto leaf : leaves) {
            const std::size_t t = tree_index_of(leaf);
            if (t == trees_.size()) throw Error("unknown_node", "no node with id " + std::to_string(leaf));
            out.push_back(trees_[t].linearize(leaf, cfg_.task, env, seeds_[t]));
        }
        return out;
    }

    /// Digest over every tree in creation order.
    std::uint64_t digest() const {
        Fnv1a64 h;
        for (const auto& t : trees_) {
            const std::uint64_t d = t.digest();
            h.update(&d, sizeof d);
        }
        return h.value();
    }

    const TrajTree& tree_of(std::uint64_t node) const {
        const std::size_t t = tree_index_of(node);
        if (t == trees_.size()) throw Error("unknown_node", "no node with id " + std::to_string(node));
        return trees_[t];
    }

private:
    std::size_t tree_index_of(std::uint64_t node) const {
        for (std::size_t t = 0; t < trees_.size(); ++t)
            if (trees_[t].contains(node)) return t;
        return trees_.size();
    }

    void start_tree(std::uint64_t seed) {
        state_ = init_from_start(cfg_.task, seed, cfg_.wm.bounds);
        const std::uint64_t id = next_id_++;
        trees_.emplace_back(state_, observe(state_, cfg_.wm.bounds), id);
        seeds_.push_back(seed);
        current_ = trees_.size() - 1;
        reports_[id] = make_report(id);
        mode_ = SessionMode::Autonomous;
        paused_from_.reset();
        pending_.reset();
        diagnostic_.clear();
    }

    TickReport make_report(std::uint64_t id) const {
        TickReport rep;
        rep.node_id = id;
        rep.parent = trees_[current_].node(id).parent;
        rep.tick = state_.tick;
        rep.mode = mode_;
        const auto eval = evaluate_success(state_, cfg_.task);
        rep.overlap = eval.overlap;
        rep.success = eval.success;
        rep.in_workspace = block_in_workspace(state_, cfg_.wm.bounds);
        rep.t_pose = state_.t_pose;
        rep.pusher = state_.pusher_pos;
        rep.target = state_.target_pose;
        return rep;
    }

    std::vector<TickReport> path_reports_with(const TickReport& fresh) const {
        std::vector<TickReport> out;
        const auto ids = trees_[current_].path(fresh.node_id);
        out.reserve(ids.size());
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) out.push_back(reports_.at(ids[i]));
        out.push_back(fresh);
        return out;
    }

    SessionConfig cfg_;
    PolicyFn policy_;
    MapperConfig mapper_;
    std::vector<TrajTree> trees_;
    std::vector<std::uint64_t> seeds_;
    std::size_t current_ = 0;
    SceneState state_;
    SessionMode mode_ = SessionMode::Autonomous;
    std::optional<SessionMode> paused_from_;
    std::optional<ActionVector> pending_;
    std::string diagnostic_;
    std::map<std::uint64_t, TickReport> reports_;
    std::vector<nlohmann::ordered_json> trace_;
    std::uint64_t next_id_ = 0;
};

/// Rebuilds a session from its trace. The policy must be the one that
/// produced the trace.
inline Session replay_trace(const SessionConfig& cfg, PolicyFn policy, const std::vector<nlohmann::json>& trace) {
    if (trace.empty() || trace.front().value("op", "") != "start")
        throw Error("parse_error", "trace must begin with a start line");
    Session s(cfg, std::move(policy), trace.front().at("seed").get<std::uint64_t>());
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const std::string op = trace[i].value("op", "");
        if (op == "tick")
            s.tick();
        else if (op == "event")
            s.handle(event_from_json(trace[i].at("event")));
        else
            throw Error("parse_error", "trace line " + std::to_string(i + 1) + ": unknown op '" + op + "'");
    }
    return s;
}

inline std::vector<nlohmann::json> parse_trace(const std::string& jsonl) {
    std::vector<nlohmann::json> out;
    std::size_t pos = 0, line = 0;
    while (pos < jsonl.size()) {
        std::size_t end = jsonl.find('\n', pos);
        if (end == std::string::npos) end = jsonl.size();
        ++line;
        const std::string text = jsonl.substr(pos, end - pos);
        pos = end + 1;
        if (text.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(text));
        } catch (const nlohmann::json::exception& e) {
            throw Error("parse_error", "trace line " + std::to_string(line) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Headless rollouts

/// Autonomous ticks from the seed's start state until the session ends.
inline Episode run_autonomous_rollout(const PolicyFn& policy, const TaskSpec& task, std::uint64_t seed,
                                      const WmConfig& wm = {}) {
    SessionConfig cfg;
    cfg.task = task;
    cfg.wm = wm;
    Session s(cfg, policy, seed);
    while (s.mode() == SessionMode::Autonomous) s.tick();
    if (s.mode() == SessionMode::Paused) throw Error("policy_error", s.diagnostic());
    return s.tree().linearize(s.cursor(), task, wm.label(), seed);
}

/// The scripted expert with uniform jitter on its planar target. Each
/// instance owns its noise stream, so a fresh seed gives a fresh operator.
inline PolicyFn jittered_expert(std::uint64_t seed, double jitter_mm, const ExpertConfig& ecfg = {}) {
    auto expert = std::make_shared<ScriptedExpert>(ecfg);
    auto rng = std::make_shared<Rng>(seed);
    return [expert, rng, jitter_mm](const Observation& obs) {
        ActionVector a = expert->act(obs);
        if (jitter_mm > 0.0 && a.planar() != obs.ee_poses.planar()) {
            const Vec2 noise{rng->uniform(-jitter_mm, jitter_mm), rng->uniform(-jitter_mm, jitter_mm)};
            a.set_planar(a.planar() + noise);
        }
        return a;
    };
}

using OperatorFactory = std::function<PolicyFn(std::uint64_t jitter_seed)>;

struct AutoInterventionResult {
    std::vector<Episode> episodes;       // exported leaves, seed order
    std::vector<std::uint64_t> leaves;   // node id of each exported episode
    std::string trace;              // JSONL event trace of the whole session
    std::uint64_t digest = 0;       // forest digest
    std::size_t failures = 0;
    std::size_t corrective_branches = 0;
    std::size_t successful_branches = 0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x632be59bd9b4e019ULL) * 0xbf58476d1ce4e5b9ULL ^ c;
    return splitmix64(x);
}

class AutoOperator {
public:
    AutoOperator(Session& s, const OperatorFactory& make_op, std::uint64_t seed, AutoInterventionResult& out)
        : s_(s), make_op_(make_op), seed_(seed), out_(out) {}

    /// Runs the policy until the episode ends, correcting each failure.
    /// Only the first failure of a seed fans out into B branches.
    void drive(bool may_branch) {
        const auto& cfg = s_.config().auto_op;
        while (s_.mode() == SessionMode::Autonomous) {
            const TickReport rep = s_.tick();
            if (s_.mode() != SessionMode::Autonomous) return;
            if (!rep.failure_signal || !s_.tree().node(rep.node_id).failure_mark) continue;

            ++out_.failures;
            const auto path = s_.path_reports(rep.node_id);
            const std::size_t back = std::min(cfg.rewind_depth, path.size() - 1);
            const std::uint64_t pre = path[path.size() - 1 - back].node_id;
            double pre_max = 0.0;
            for (const auto& r : path) pre_max = std::max(pre_max, r.overlap);

            const std::size_t branches = may_branch ? cfg.branches : 1;
            s_.handle(Takeover{});
            for (std::size_t b = 0; b < branches; ++b) {
                s_.handle(Rollback{pre});
                PolicyFn op = make_op_(mix_seed(seed_, rep.node_id, b));
                for (std::size_t h = 0; h < cfg.max_correction; ++h) {
                    s_.handle(HumanAction{op(s_.observation())});
                    const TickReport r = s_.tick();
                    if (s_.mode() == SessionMode::Terminal || r.overlap > pre_max) break;
                }
                if (s_.mode() == SessionMode::HumanControl) {
                    s_.handle(Release{});
                    drive(false);
                }
            }
            return;
        }
    }

private:
    Session& s_;
    const OperatorFactory& make_op_;
    std::uint64_t seed_;
    AutoInterventionResult& out_;
};

}  // namespace detail

/// Headless stand-in for a human operator. For every seed the policy runs
/// until a failure signal; the session then rewinds R ticks, hands control
/// to the operator for at most H ticks (or until overlap beats the best
/// value seen before the failure), releases, and carries on. The first
/// failure is retried B times from the same node with distinct operator
/// noise. Exported episodes are the finished leaves; seeds with corrections
/// export only their corrected ones.
inline AutoInterventionResult auto_intervention_session(const PolicyFn& policy, const OperatorFactory& make_op,
                                                        const std::vector<std::uint64_t>& seeds,
                                                        const SessionConfig& cfg,
                                                        std::size_t min_corrective_steps = 0,
                                                        std::size_t context = 15) {
    AutoInterventionResult out;
    if (seeds.empty()) return out;
    Session s(cfg, policy, seeds.front());
    std::size_t corrective_steps = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i > 0) s.handle(Reset{seeds[i]});
        detail::AutoOperator op(s, make_op, seeds[i], out);
        op.drive(true);

        const TrajTree& tree = s.tree();
        std::vector<Episode> eps;
        std::vector<std::uint64_t> ids;
        // Leaves abandoned by a rewind stop mid-episode; only finished ones count.
        for (auto leaf : tree.leaves())
            if (s.report(leaf).mode == SessionMode::Terminal) {
                eps.push_back(tree.linearize(leaf, cfg.task, cfg.wm.label(), seeds[i]));
                ids.push_back(leaf);
            }
        const bool corrected = std::any_of(eps.begin(), eps.end(), [](const Episode& e) { return e.has_human(); });
        for (std::size_t k = 0; k < eps.size(); ++k) {
            auto& e = eps[k];
            if (corrected && !e.has_human()) continue;
            if (e.has_human()) {
                ++out.corrective_branches;
                out.successful_branches += e.header.success;
                for (const auto& seg : extract_corrective({e}, context)) corrective_steps += seg.length();
            }
            out.episodes.push_back(std::move(e));
            out.leaves.push_back(ids[k]);
        }
        if (min_corrective_steps > 0 && corrective_steps >= min_corrective_steps) break;
    }
    out.trace = s.trace_jsonl();
    out.digest = s.digest();
    return out;
}

}  // namespace hiwm
