#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hiwm/config.hpp"
#include "hiwm/pipeline.hpp"
#include "hiwm/policy.hpp"
#include "hiwm/protocol.hpp"
#include "hiwm/session.hpp"

namespace hiwm {

/// One client connection as seen by the service. Outgoing messages get
/// this connection's next seq number; sends are serialized.
class Connection {
public:
    using Sink = std::function<void(const std::string& frame)>;

    Connection(std::uint64_t id, Sink sink) : id_(id), sink_(std::move(sink)) {}

    std::uint64_t id() const { return id_; }
    SeqCheck& incoming() { return incoming_; }

    void send(WireMessage m) {
        std::lock_guard lock(mu_);
        if (closed_) return;
        m.seq = ++out_seq_;
        try {
            sink_(encode(m));
        } catch (const std::exception&) {
            closed_ = true;  // transport gone; later sends are dropped
        }
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
    }

private:
    std::uint64_t id_;
    Sink sink_;
    SeqCheck incoming_;
    std::mutex mu_;
    std::uint64_t out_seq_ = 0;
    bool closed_ = false;
};

/// How create_session picks the autonomous policy.
struct PolicySpec {
    std::string kind = "expert";  // expert | random | checkpoint | hold
    std::uint64_t seed = 0;       // random
    std::string path;             // checkpoint

    static PolicySpec from_json(const nlohmann::json& j) {
        PolicySpec p;
        detail::StrictObject o(j, "policy");
        o.read("kind", p.kind);
        o.read("seed", p.seed);
        o.read("path", p.path);
        o.finish();
        if (p.kind != "expert" && p.kind != "random" && p.kind != "checkpoint" && p.kind != "hold")
            throw Error("invalid_config", "policy.kind must be expert, random, checkpoint or hold");
        if (p.kind == "checkpoint" && p.path.empty()) throw Error("invalid_config", "checkpoint policy needs a path");
        return p;
    }

    PolicyFn make(const WorkspaceBounds& b) const {
        if (kind == "expert") return expert_policy();
        if (kind == "random") return random_policy(seed, b);
        if (kind == "checkpoint") return as_policy(load_checkpoint(path).params, b);
        return [](const Observation& obs) { return obs.ee_poses; };
    }
};

struct ServiceOptions {
    std::filesystem::path export_root = "out/server";
};

inline nlohmann::ordered_json tick_update_payload(const Session& s, const TickReport& r) {
    using nlohmann::ordered_json;
    ordered_json distractors = ordered_json::array();
    for (const auto& d : s.state().distractors) distractors.push_back({d.center.x, d.center.y, d.radius});
    return {{"node", {{"id", r.node_id}, {"parent", r.parent ? ordered_json(*r.parent) : ordered_json(nullptr)}}},
            {"tree", s.current_tree()},
            {"tick", r.tick},
            {"mode", to_string(s.mode())},
            {"source", r.source ? ordered_json(to_string(*r.source)) : ordered_json(nullptr)},
            {"overlap", r.overlap},
            {"success", r.success},
            {"in_workspace", r.in_workspace},
            {"failure_signal", r.failure_signal},
            {"failure_mark", s.tree_of(r.node_id).node(r.node_id).failure_mark},
            {"scene",
             {{"t_pose", {r.t_pose.x, r.t_pose.y, r.t_pose.theta}},
              {"pusher", {r.pusher.x, r.pusher.y}},
              {"target", {r.target.x, r.target.y, r.target.theta}},
              {"distractors", distractors}}}};
}

/// Sessions addressed by opaque ids. Every engine has its own lock, so
/// each session has a single writer at a time; connection handlers and the
/// optional pacing thread take turns on it.
class SessionService {
public:
    explicit SessionService(ServiceOptions opts = {}) : opts_(std::move(opts)) {}
    ~SessionService() { shutdown(); }

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    std::shared_ptr<Connection> connect(Connection::Sink sink) {
        return std::make_shared<Connection>(next_conn_.fetch_add(1) + 1, std::move(sink));
    }

    /// Drops the connection's subscriptions and any control authority.
    void disconnect(const std::shared_ptr<Connection>& c) {
        c->close();
        for (auto& e : engines()) {
            std::lock_guard lock(e->mu);
            if (e->authority == c->id()) e->authority.reset();
            std::erase_if(e->subscribers, [&](const std::weak_ptr<Connection>& w) {
                auto p = w.lock();
                return !p || p->id() == c->id();
            });
        }
    }

    /// Decodes one frame and dispatches it. Replies go to `c`; tick updates
    /// go to every subscriber of the session. Never throws for bad input.
    void handle_frame(const std::shared_ptr<Connection>& c, std::string_view frame) {
        WireMessage m;
        try {
            m = decode(frame);
        } catch (const Error& e) {
            const auto seq = peek_seq(frame);
            // A well-numbered frame of unknown type still advances the sequence.
            if (seq && !c->incoming().accept(*seq)) {
                c->send(make_error("bad_seq", "seq " + std::to_string(*seq) + " is out of order", seq));
                return;
            }
            c->send(make_error(e.code(), e.what(), seq));
            return;
        }
        handle_message(c, m);
    }

    void handle_message(const std::shared_ptr<Connection>& c, const WireMessage& m) {
        if (!c->incoming().accept(m.seq)) {
            c->send(make_error("bad_seq",
                               "seq " + std::to_string(m.seq) + " does not exceed " +
                                   std::to_string(*c->incoming().last()),
                               m.seq, m.session));
            return;
        }
        try {
            dispatch(c, m);
        } catch (const Error& e) {
            c->send(make_error(e.code(), e.what(), m.seq, m.session));
        } catch (const std::exception& e) {
            c->send(make_error("internal_error", e.what(), m.seq, m.session));
        }
    }

    std::uint64_t session_digest(const std::string& id) {
        auto e = find(id);
        std::lock_guard lock(e->mu);
        return e->session->digest();
    }

    std::vector<std::string> session_ids() {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        for (const auto& [id, e] : engines_) out.push_back(id);
        return out;
    }

    void shutdown() {
        for (auto& e : engines()) stop_pacer(*e);
    }

private:
    struct Engine {
        std::string id;
        SessionConfig cfg;
        std::unique_ptr<Session> session;
        std::mutex mu;
        std::vector<std::weak_ptr<Connection>> subscribers;
        std::optional<std::uint64_t> authority;  // connection id
        bool paced = false;
        std::thread pacer;
        std::atomic<bool> stop{false};
        std::condition_variable cv;
        std::size_t exports = 0;
    };

    std::vector<std::shared_ptr<Engine>> engines() {
        std::lock_guard lock(mu_);
        std::vector<std::shared_ptr<Engine>> out;
        for (auto& [id, e] : engines_) out.push_back(e);
        return out;
    }

    std::shared_ptr<Engine> find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = engines_.find(id);
        if (it == engines_.end()) throw Error("unknown_session", "no session '" + id + "'");
        return it->second;
    }

    std::shared_ptr<Engine> engine_for(const WireMessage& m) {
        if (!m.session) throw Error("schema_error", m.type + " needs a session id");
        return find(*m.session);
    }

    static void subscribe(Engine& e, const std::shared_ptr<Connection>& c) {
        for (const auto& w : e.subscribers)
            if (auto p = w.lock(); p && p->id() == c->id()) return;
        e.subscribers.push_back(c);
    }

    static void broadcast(Engine& e, const WireMessage& m) {
        for (const auto& w : e.subscribers)
            if (auto p = w.lock()) p->send(m);
    }

    static void publish_tick(Engine& e, const TickReport& r) {
        WireMessage u;
        u.type = "tick_update";
        u.session = e.id;
        u.payload = tick_update_payload(*e.session, r);
        broadcast(e, u);
    }

    /// Authority lapses once the session is no longer under human control.
    static void refresh_authority(Engine& e) {
        const SessionMode m = e.session->mode();
        const bool human = m == SessionMode::HumanControl ||
                           (m == SessionMode::Paused && e.session->paused_from() == SessionMode::HumanControl);
        if (!human) e.authority.reset();
    }

    static void require_authority(Engine& e, const Connection& c) {
        refresh_authority(e);
        if (e.authority && *e.authority != c.id())
            throw Error("not_authorized", "another connection holds control authority");
    }

    void dispatch(const std::shared_ptr<Connection>& c, const WireMessage& m) {
        if (m.type == "hello") {
            nlohmann::json info{{"server", "hiwm"},
                                {"protocol", 1},
                                {"types", std::vector<std::string>(kMessageTypes.begin(), kMessageTypes.end())}};
            if (m.session) {
                auto e = find(*m.session);
                std::lock_guard lock(e->mu);
                subscribe(*e, c);
                info["subscribed"] = *m.session;
            }
            c->send(make_ack(m, info));
        } else if (m.type == "create_session") {
            create_session(c, m);
        } else if (m.type == "tick_update" || m.type == "ack" || m.type == "error") {
            throw Error("unsupported_direction", m.type + " is sent by the server only");
        } else if (m.type == "step") {
            auto e = engine_for(m);
            std::lock_guard lock(e->mu);
            require_authority(*e, *c);
            if (e->paced) throw Error("paced_session", "step is only available on unpaced sessions");
            std::uint64_t n = 1;
            detail::StrictObject o(m.payload, "payload");
            o.read("n", n);
            o.finish();
            std::uint64_t done = 0;
            while (done < n && (e->session->mode() == SessionMode::Autonomous ||
                                e->session->mode() == SessionMode::HumanControl)) {
                publish_tick(*e, e->session->tick());
                ++done;
            }
            refresh_authority(*e);
            c->send(make_ack(m, {{"ticks", done},
                                 {"node", e->session->cursor()},
                                 {"mode", to_string(e->session->mode())}}));
        } else if (m.type == "tree_snapshot") {
            auto e = engine_for(m);
            std::lock_guard lock(e->mu);
            nlohmann::ordered_json trees = nlohmann::ordered_json::array();
            const auto& forest = e->session->forest();
            for (std::size_t i = 0; i < forest.size(); ++i)
                trees.push_back({{"seed", e->session->tree_seed(i)}, {"tree", forest[i].to_json()}});
            WireMessage r;
            r.type = "tree_snapshot";
            r.session = e->id;
            r.payload = {{"reply_to", m.seq},
                         {"digest", hex64(e->session->digest())},
                         {"current_tree", e->session->current_tree()},
                         {"cursor", e->session->cursor()},
                         {"mode", to_string(e->session->mode())},
                         {"trees", trees}};
            c->send(r);
        } else if (m.type == "export_dataset") {
            export_dataset(c, m);
        } else {
            apply_event(c, m);
        }
    }

    void create_session(const std::shared_ptr<Connection>& c, const WireMessage& m) {
        detail::StrictObject o(m.payload, "payload");
        SessionConfig cfg;
        if (const auto* j = o.child("config")) cfg = session_from_json(*j, "config");
        std::uint64_t seed = 0;
        o.read("seed", seed);
        PolicySpec ps;
        if (const auto* j = o.child("policy")) ps = PolicySpec::from_json(*j);
        bool pacing = false;
        o.read("pacing", pacing);
        o.finish();

        auto e = std::make_shared<Engine>();
        e->cfg = cfg;
        e->session = std::make_unique<Session>(cfg, ps.make(cfg.wm.bounds), seed);
        e->paced = pacing;
        {
            std::lock_guard lock(mu_);
            e->id = "s" + std::to_string(++session_counter_);
            engines_[e->id] = e;
        }
        std::lock_guard lock(e->mu);
        subscribe(*e, c);
        WireMessage ack = make_ack(m, {{"session", e->id},
                                       {"node", e->session->cursor()},
                                       {"mode", to_string(e->session->mode())},
                                       {"tick_rate_hz", cfg.tick_rate_hz},
                                       {"pacing", pacing}});
        ack.session = e->id;
        c->send(ack);
        publish_tick(*e, e->session->last_report());
        if (pacing) e->pacer = std::thread([this, e] { pace(e); });
    }

    void pace(std::shared_ptr<Engine> e) {
        const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / e->cfg.tick_rate_hz));
        auto next = std::chrono::steady_clock::now() + period;
        std::unique_lock lock(e->mu);
        while (!e->stop) {
            e->cv.wait_until(lock, next, [&] { return e->stop.load(); });
            if (e->stop) break;
            next += period;
            const SessionMode mode = e->session->mode();
            if (mode != SessionMode::Autonomous && mode != SessionMode::HumanControl) continue;
            try {
                publish_tick(*e, e->session->tick());
            } catch (const std::exception& ex) {
                WireMessage err = make_error("engine_error", ex.what(), std::nullopt, e->id);
                broadcast(*e, err);
            }
        }
    }

    static void stop_pacer(Engine& e) {
        {
            std::lock_guard lock(e.mu);
            e.stop = true;
        }
        e.cv.notify_all();
        if (e.pacer.joinable()) e.pacer.join();
    }

    void apply_event(const std::shared_ptr<Connection>& c, const WireMessage& m) {
        nlohmann::json ev = m.payload;
        ev["type"] = m.type;
        const SessionEvent event = event_from_json(ev);
        auto e = engine_for(m);
        std::lock_guard lock(e->mu);
        require_authority(*e, *c);
        try {
            e->session->handle(event);
        } catch (const Error& err) {
            WireMessage r = make_error(err.code(), err.what(), m.seq, m.session);
            r.payload["mode"] = to_string(e->session->mode());
            c->send(r);
            return;
        }
        if (std::holds_alternative<Takeover>(event) || std::holds_alternative<Rollback>(event))
            e->authority = c->id();
        if (std::holds_alternative<Release>(event) || std::holds_alternative<Reset>(event)) e->authority.reset();
        refresh_authority(*e);
        c->send(make_ack(m, {{"node", e->session->cursor()}, {"mode", to_string(e->session->mode())}}));
        if (std::holds_alternative<Rollback>(event) || std::holds_alternative<Reset>(event))
            publish_tick(*e, e->session->last_report());
    }

    void export_dataset(const std::shared_ptr<Connection>& c, const WireMessage& m) {
        auto e = engine_for(m);
        detail::StrictObject o(m.payload, "payload");
        std::vector<std::uint64_t> leaves;
        o.read("leaves", leaves);
        std::string name;
        o.read("name", name);
        o.finish();
        std::lock_guard lock(e->mu);
        if (name.empty()) name = "export-" + std::to_string(++e->exports);
        if (name.find('/') != std::string::npos || name == "." || name == "..")
            throw Error("schema_error", "export name must be a plain directory name");
        const Dataset ds = session_dataset(e->cfg, e->session->export_episodes(leaves));
        const auto dir = opts_.export_root / e->id / name;
        const DatasetManifest man = write_dataset(dir, ds);
        c->send(make_ack(m, {{"digest", man.digest},
                             {"episodes", man.episodes},
                             {"steps", man.steps()},
                             {"path", dir.string()}}));
    }

    ServiceOptions opts_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Engine>> engines_;
    std::uint64_t session_counter_ = 0;
    std::atomic<std::uint64_t> next_conn_{0};
};

}  // namespace hiwm
