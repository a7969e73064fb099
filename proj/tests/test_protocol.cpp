#include <gtest/gtest.h>

#include "hiwm/net.hpp"
#include "hiwm/protocol.hpp"
#include "hiwm/rng.hpp"

using namespace hiwm;

namespace {

std::string code_of(std::string_view frame) {
    try {
        decode(frame);
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

nlohmann::json random_value(Rng& rng, int depth) {
    switch (rng.below(depth > 2 ? 4 : 6)) {
        case 0: return rng.below(1000000);
        case 1: return rng.uniform(-1e6, 1e6);
        case 2: return rng.below(2) == 1;
        case 3: {
            std::string s;
            const auto n = rng.below(12);
            for (std::size_t i = 0; i < n; ++i) s += static_cast<char>(' ' + rng.below(95));
            if (rng.below(4) == 0) s += "\xc3\xa9\n\t\"";
            return s;
        }
        case 4: {
            nlohmann::json a = nlohmann::json::array();
            const auto n = rng.below(4);
            for (std::size_t i = 0; i < n; ++i) a.push_back(random_value(rng, depth + 1));
            return a;
        }
        default: {
            nlohmann::json o = nlohmann::json::object();
            const auto n = rng.below(4);
            for (std::size_t i = 0; i < n; ++i) o["k" + std::to_string(rng.below(50))] = random_value(rng, depth + 1);
            return o;
        }
    }
}

}  // namespace

TEST(Protocol, EveryTypeRoundTrips) {
    std::uint64_t seq = 1;
    for (auto type : kMessageTypes) {
        WireMessage m;
        m.type = std::string(type);
        m.seq = seq++;
        if (seq % 2 == 0) m.session = "s" + std::to_string(seq);
        m.payload = {{"x", 1.5}, {"list", {1, 2, 3}}};
        EXPECT_EQ(decode(encode(m)), m) << type;
    }
    EXPECT_EQ(kMessageTypes.size(), 15u);
}

TEST(Protocol, RandomMessagesRoundTrip) {
    Rng rng(1234);
    for (int i = 0; i < 2000; ++i) {
        WireMessage m;
        m.type = std::string(kMessageTypes[rng.below(kMessageTypes.size())]);
        m.seq = rng.next() >> 12;
        if (rng.below(2)) m.session = "s" + std::to_string(rng.below(100));
        m.payload = nlohmann::json::object();
        const auto n = rng.below(5);
        for (std::size_t k = 0; k < n; ++k) m.payload["f" + std::to_string(k)] = random_value(rng, 0);
        const std::string text = encode(m);
        ASSERT_EQ(text.find('\n'), std::string::npos);  // NDJSON framing stays intact
        ASSERT_EQ(decode(text), m) << text;
    }
}

TEST(Protocol, EncodedFieldOrderIsStable) {
    WireMessage m;
    m.type = "step";
    m.session = "s1";
    m.seq = 4;
    m.payload = {{"n", 2}};
    EXPECT_EQ(encode(m), R"({"type":"step","session":"s1","seq":4,"payload":{"n":2}})");
}

TEST(Protocol, DecodeErrors) {
    EXPECT_EQ(code_of("{not json"), "malformed_json");
    EXPECT_EQ(code_of("[1,2]"), "schema_error");
    EXPECT_EQ(code_of(R"({"seq":1})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"hello"})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"hello","seq":-1})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"hello","seq":1,"extra":0})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"hello","seq":1,"payload":[]})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"hello","seq":1,"session":5})"), "schema_error");
    EXPECT_EQ(code_of(R"({"type":"teleport","seq":1})"), "unknown_type");
    EXPECT_EQ(code_of(R"({"type":"hello","seq":1})"), "");
    EXPECT_EQ(peek_seq(R"({"type":"teleport","seq":9})"), std::optional<std::uint64_t>(9));
    EXPECT_EQ(peek_seq("garbage"), std::nullopt);
}

TEST(Protocol, SeqMustStrictlyIncrease) {
    SeqCheck c;
    EXPECT_TRUE(c.accept(0));
    EXPECT_TRUE(c.accept(5));
    EXPECT_FALSE(c.accept(5));
    EXPECT_FALSE(c.accept(3));
    EXPECT_EQ(c.last(), std::optional<std::uint64_t>(5));
    EXPECT_TRUE(c.accept(6));
}

TEST(Protocol, ErrorAndAckShapes) {
    const WireMessage e = make_error("bad_seq", "late", 7, "s2");
    EXPECT_EQ(e.type, "error");
    EXPECT_EQ(e.payload["code"], "bad_seq");
    EXPECT_EQ(e.payload["reply_to"], 7);
    WireMessage req;
    req.type = "takeover";
    req.seq = 3;
    req.session = "s1";
    const WireMessage a = make_ack(req, {{"mode", "human_control"}});
    EXPECT_EQ(a.session, req.session);
    EXPECT_EQ(a.payload["reply_to"], 3);
    EXPECT_EQ(a.payload["for"], "takeover");
    EXPECT_EQ(a.payload["mode"], "human_control");
}

TEST(WebSocket, AcceptKeyMatchesReferenceExample) {
    // Handshake example from the WebSocket standard.
    EXPECT_EQ(net::ws_accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, FrameHeaderLengths) {
    EXPECT_EQ(net::ws_frame(net::WsOpcode::Text, "hi").size(), 4u);
    EXPECT_EQ(net::ws_frame(net::WsOpcode::Text, std::string(200, 'x')).size(), 204u);
    EXPECT_EQ(net::ws_frame(net::WsOpcode::Text, std::string(70000, 'x')).size(), 70010u);
    EXPECT_EQ(net::ws_frame(net::WsOpcode::Text, "hi", std::array<std::uint8_t, 4>{1, 2, 3, 4}).size(), 8u);
    const std::string f = net::ws_frame(net::WsOpcode::Text, "hi");
    EXPECT_EQ(static_cast<unsigned char>(f[0]), 0x81);
    EXPECT_EQ(f.substr(2), "hi");
}
