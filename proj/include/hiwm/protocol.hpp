#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hiwm/common.hpp"

namespace hiwm {

/// Message types in the order they appear in docs/protocol.md. `step` is a
/// headless extension that advances an unpaced session by N ticks.
inline constexpr std::array<std::string_view, 15> kMessageTypes{
    "hello",  "create_session", "tick_update",   "takeover",       "release",
    "device_input", "rollback", "reset",         "pause",          "resume",
    "tree_snapshot", "export_dataset", "ack",    "error",          "step"};

inline bool is_message_type(std::string_view t) {
    return std::find(kMessageTypes.begin(), kMessageTypes.end(), t) != kMessageTypes.end();
}

struct WireMessage {
    std::string type;
    std::optional<std::string> session;
    std::uint64_t seq = 0;
    nlohmann::json payload = nlohmann::json::object();

    friend bool operator==(const WireMessage& a, const WireMessage& b) {
        return a.type == b.type && a.session == b.session && a.seq == b.seq && a.payload == b.payload;
    }
};

/// One JSON text per frame, no trailing newline (the stream transport adds
/// its own delimiter).
inline std::string encode(const WireMessage& m) {
    nlohmann::ordered_json j;
    j["type"] = m.type;
    if (m.session) j["session"] = *m.session;
    j["seq"] = m.seq;
    j["payload"] = m.payload;
    return j.dump();
}

/// Errors: malformed_json, schema_error, unknown_type. For unknown types
/// the seq is still recoverable through peek_seq.
inline WireMessage decode(std::string_view frame) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(frame);
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed_json", e.what());
    }
    if (!j.is_object()) throw Error("schema_error", "message must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (k != "type" && k != "session" && k != "seq" && k != "payload")
            throw Error("schema_error", "unexpected field '" + k + "'");
    if (!j.contains("type") || !j["type"].is_string()) throw Error("schema_error", "type must be a string");
    if (!j.contains("seq") || !j["seq"].is_number_unsigned()) throw Error("schema_error", "seq must be an unsigned integer");
    WireMessage m;
    m.type = j["type"].get<std::string>();
    m.seq = j["seq"].get<std::uint64_t>();
    if (j.contains("session") && !j["session"].is_null()) {
        if (!j["session"].is_string()) throw Error("schema_error", "session must be a string");
        m.session = j["session"].get<std::string>();
    }
    if (j.contains("payload")) {
        if (!j["payload"].is_object()) throw Error("schema_error", "payload must be an object");
        m.payload = j["payload"];
    }
    if (!is_message_type(m.type)) throw Error("unknown_type", "unknown message type '" + m.type + "'");
    return m;
}

/// Best-effort seq of an undecodable frame, for error replies.
inline std::optional<std::uint64_t> peek_seq(std::string_view frame) {
    try {
        const auto j = nlohmann::json::parse(frame);
        if (j.is_object() && j.contains("seq") && j["seq"].is_number_unsigned()) return j["seq"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception&) {
    }
    return std::nullopt;
}

/// Enforces strictly increasing seq numbers in one direction.
class SeqCheck {
public:
    /// False (and state unchanged) when `seq` does not exceed the last one.
    bool accept(std::uint64_t seq) {
        if (last_ && seq <= *last_) return false;
        last_ = seq;
        return true;
    }
    std::optional<std::uint64_t> last() const { return last_; }

private:
    std::optional<std::uint64_t> last_;
};

inline WireMessage make_error(const std::string& code, const std::string& message,
                              std::optional<std::uint64_t> in_reply_to = std::nullopt,
                              std::optional<std::string> session = std::nullopt) {
    WireMessage m;
    m.type = "error";
    m.session = std::move(session);
    m.payload = {{"code", code}, {"message", message}};
    if (in_reply_to) m.payload["reply_to"] = *in_reply_to;
    return m;
}

inline WireMessage make_ack(const WireMessage& request, nlohmann::json extra = nlohmann::json::object()) {
    WireMessage m;
    m.type = "ack";
    m.session = request.session;
    m.payload = std::move(extra);
    m.payload["reply_to"] = request.seq;
    m.payload["for"] = request.type;
    return m;
}

}  // namespace hiwm
