#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hiwm/common.hpp"
#include "hiwm/protocol.hpp"
#include "hiwm/service.hpp"

namespace hiwm::net {

// ---------------------------------------------------------------------------
// Sockets

/// Owning file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }
    void shutdown_both() const {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void write_all(std::string_view data) const {
        std::size_t off = 0;
        while (off < data.size()) {
            const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n <= 0) {
                if (n < 0 && errno == EINTR) continue;
                throw Error("io_error", "socket write failed");
            }
            off += static_cast<std::size_t>(n);
        }
    }

    /// Up to `cap` bytes; 0 at end of stream.
    std::size_t read_some(char* buf, std::size_t cap) const {
        for (;;) {
            const ssize_t n = ::recv(fd_, buf, cap, 0);
            if (n >= 0) return static_cast<std::size_t>(n);
            if (errno == EINTR) continue;
            throw Error("io_error", "socket read failed");
        }
    }

private:
    int fd_ = -1;
};

/// Listening socket on host:port (port 0 picks a free one).
inline Socket listen_on(const std::string& host, int port) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw Error("io_error", "socket() failed");
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw Error("invalid_config", "bad IPv4 host " + host);
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw Error("io_error", "cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    if (::listen(s.fd(), 16) != 0) throw Error("io_error", "listen() failed");
    return s;
}

inline int bound_port(const Socket& s) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
}

inline Socket connect_to(const std::string& host, int port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw Error("io_error", "cannot resolve " + host);
    Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
    const int rc = s.valid() ? ::connect(s.fd(), res->ai_addr, res->ai_addrlen) : -1;
    ::freeaddrinfo(res);
    if (rc != 0) throw Error("io_error", "cannot connect to " + host + ":" + std::to_string(port));
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

/// Buffered reader for newline-delimited and length-prefixed input.
class Reader {
public:
    explicit Reader(const Socket& s) : s_(s) {}

    /// Next line without its terminator ("\r\n" or "\n"); false at EOF.
    bool line(std::string& out) {
        for (;;) {
            const auto pos = buf_.find('\n');
            if (pos != std::string::npos) {
                out = buf_.substr(0, pos);
                if (!out.empty() && out.back() == '\r') out.pop_back();
                buf_.erase(0, pos + 1);
                return true;
            }
            if (!fill()) return false;
        }
    }

    /// Exactly n bytes; false at EOF.
    bool exact(std::size_t n, std::string& out) {
        while (buf_.size() < n)
            if (!fill()) return false;
        out = buf_.substr(0, n);
        buf_.erase(0, n);
        return true;
    }

private:
    bool fill() {
        char tmp[4096];
        const std::size_t n = s_.read_some(tmp, sizeof tmp);
        if (n == 0) return false;
        buf_.append(tmp, n);
        return true;
    }

    const Socket& s_;
    std::string buf_;
};

// ---------------------------------------------------------------------------
// WebSocket framing (text frames only, no extensions)

inline constexpr std::string_view kWsGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

/// Sec-WebSocket-Accept value for a client key.
inline std::string ws_accept_key(std::string_view client_key) {
    std::string in(client_key);
    in += kWsGuid;
    unsigned char digest[SHA_DIGEST_LENGTH];
    ::SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
    unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
    const int n = ::EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
    return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

enum class WsOpcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

inline std::string ws_frame(WsOpcode op, std::string_view payload, std::optional<std::array<std::uint8_t, 4>> mask = {}) {
    std::string f;
    f.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
    const std::uint8_t mbit = mask ? 0x80 : 0;
    const std::size_t n = payload.size();
    if (n < 126) {
        f.push_back(static_cast<char>(mbit | n));
    } else if (n <= 0xFFFF) {
        f.push_back(static_cast<char>(mbit | 126));
        f.push_back(static_cast<char>((n >> 8) & 0xFF));
        f.push_back(static_cast<char>(n & 0xFF));
    } else {
        f.push_back(static_cast<char>(mbit | 127));
        for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
    }
    if (mask) {
        f.append(reinterpret_cast<const char*>(mask->data()), 4);
        for (std::size_t i = 0; i < n; ++i) f.push_back(static_cast<char>(payload[i] ^ (*mask)[i % 4]));
    } else {
        f.append(payload);
    }
    return f;
}

struct WsMessage {
    WsOpcode opcode = WsOpcode::Text;
    std::string payload;
};

/// Next complete message (continuations joined, masks removed); false at
/// EOF.
inline bool ws_read(Reader& r, WsMessage& out) {
    std::string data;
    std::optional<WsOpcode> first;
    for (;;) {
        std::string hdr;
        if (!r.exact(2, hdr)) return false;
        const bool fin = static_cast<std::uint8_t>(hdr[0]) & 0x80;
        const auto op = static_cast<WsOpcode>(static_cast<std::uint8_t>(hdr[0]) & 0x0F);
        const bool masked = static_cast<std::uint8_t>(hdr[1]) & 0x80;
        std::uint64_t len = static_cast<std::uint8_t>(hdr[1]) & 0x7F;
        std::string ext;
        if (len == 126) {
            if (!r.exact(2, ext)) return false;
            len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(ext[0])) << 8) | static_cast<std::uint8_t>(ext[1]);
        } else if (len == 127) {
            if (!r.exact(8, ext)) return false;
            len = 0;
            for (char c : ext) len = (len << 8) | static_cast<std::uint8_t>(c);
        }
        if (len > (64u << 20)) throw Error("io_error", "websocket frame too large");
        std::string key, body;
        if (masked && !r.exact(4, key)) return false;
        if (!r.exact(static_cast<std::size_t>(len), body)) return false;
        if (masked)
            for (std::size_t i = 0; i < body.size(); ++i) body[i] = static_cast<char>(body[i] ^ key[i % 4]);

        const bool control = static_cast<std::uint8_t>(op) >= 8;
        if (control) {
            out = {op, std::move(body)};
            return true;
        }
        if (!first) first = op;
        data += body;
        if (fin) {
            out = {*first, std::move(data)};
            return true;
        }
    }
}

// ---------------------------------------------------------------------------
// Servers

/// Accept loop plus one thread per connection. `serve` runs a connection
/// to completion and owns the socket.
class Acceptor {
public:
    using Handler = std::function<void(Socket&)>;

    Acceptor(Socket listener, Handler serve) : listener_(std::move(listener)), serve_(std::move(serve)) {
        port_ = bound_port(listener_);
        thread_ = std::thread([this] { loop(); });
    }
    ~Acceptor() { stop(); }

    int port() const { return port_; }

    void stop() {
        if (stopping_.exchange(true)) return;
        listener_.shutdown_both();
        if (thread_.joinable()) thread_.join();
        std::list<Worker> workers;
        {
            std::lock_guard lock(mu_);
            workers.swap(workers_);
        }
        for (auto& w : workers) w.socket->shutdown_both();
        for (auto& w : workers)
            if (w.thread.joinable()) w.thread.join();
    }

private:
    struct Worker {
        std::shared_ptr<Socket> socket;
        std::thread thread;
    };

    void loop() {
        while (!stopping_) {
            pollfd p{listener_.fd(), POLLIN, 0};
            const int rc = ::poll(&p, 1, 100);
            if (rc <= 0 || stopping_) continue;
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0) continue;
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            auto sock = std::make_shared<Socket>(fd);
            std::lock_guard lock(mu_);
            workers_.push_back({sock, std::thread([this, sock] {
                                    try {
                                        serve_(*sock);
                                    } catch (const std::exception&) {
                                    }
                                    sock->shutdown_both();
                                })});
        }
    }

    Socket listener_;
    Handler serve_;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread thread_;
    std::mutex mu_;
    std::list<Worker> workers_;
};

/// NDJSON on a raw TCP port plus WebSocket on /ws, both backed by one
/// SessionService.
class Server {
public:
    Server(SessionService& service, const std::string& host, int ws_port, int tcp_port) : service_(service) {
        tcp_ = std::make_unique<Acceptor>(listen_on(host, tcp_port), [this](Socket& s) { serve_ndjson(s); });
        ws_ = std::make_unique<Acceptor>(listen_on(host, ws_port), [this](Socket& s) { serve_ws(s); });
    }
    ~Server() { stop(); }

    int ws_port() const { return ws_->port(); }
    int tcp_port() const { return tcp_->port(); }

    void stop() {
        if (tcp_) tcp_->stop();
        if (ws_) ws_->stop();
    }

private:
    void serve_ndjson(Socket& s) {
        auto conn = service_.connect([&s](const std::string& frame) { s.write_all(frame + "\n"); });
        Reader r(s);
        std::string line;
        while (r.line(line)) {
            if (line.empty()) continue;
            service_.handle_frame(conn, line);
        }
        service_.disconnect(conn);
    }

    void serve_ws(Socket& s) {
        Reader r(s);
        std::string request_line, line, key;
        if (!r.line(request_line)) return;
        bool upgrade = false;
        while (r.line(line) && !line.empty()) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string name = line.substr(0, colon), value = line.substr(colon + 1);
            for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            while (!value.empty() && value.front() == ' ') value.erase(0, 1);
            if (name == "sec-websocket-key") key = value;
            if (name == "upgrade") {
                for (auto& ch : value) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                upgrade = value == "websocket";
            }
        }
        const bool path_ok = request_line.rfind("GET /ws ", 0) == 0 || request_line.rfind("GET /ws?", 0) == 0;
        if (!path_ok || !upgrade || key.empty()) {
            s.write_all("HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
            return;
        }
        s.write_all("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                    "Sec-WebSocket-Accept: " + ws_accept_key(key) + "\r\n\r\n");

        std::mutex write_mu;
        auto send_raw = [&](const std::string& bytes) {
            std::lock_guard lock(write_mu);
            s.write_all(bytes);
        };
        auto conn = service_.connect([&](const std::string& frame) { send_raw(ws_frame(WsOpcode::Text, frame)); });
        WsMessage msg;
        while (ws_read(r, msg)) {
            if (msg.opcode == WsOpcode::Close) {
                send_raw(ws_frame(WsOpcode::Close, msg.payload.substr(0, 2)));
                break;
            }
            if (msg.opcode == WsOpcode::Ping) {
                send_raw(ws_frame(WsOpcode::Pong, msg.payload));
                continue;
            }
            if (msg.opcode == WsOpcode::Text || msg.opcode == WsOpcode::Binary) service_.handle_frame(conn, msg.payload);
        }
        service_.disconnect(conn);
    }

    SessionService& service_;
    std::unique_ptr<Acceptor> tcp_;
    std::unique_ptr<Acceptor> ws_;
};

// ---------------------------------------------------------------------------
// Headless clients

/// Common request/response logic: assigns seq numbers, waits for the reply
/// whose reply_to matches, and queues everything else (tick updates).
class ClientBase {
public:
    virtual ~ClientBase() = default;

    std::uint64_t send(WireMessage m) {
        m.seq = ++seq_;
        write_frame(encode(m));
        return m.seq;
    }

    /// Sends and blocks for the matching ack/error/tree_snapshot.
    WireMessage request(WireMessage m) {
        const std::uint64_t seq = send(std::move(m));
        for (;;) {
            WireMessage r = receive();
            const auto it = r.payload.find("reply_to");
            if (it != r.payload.end() && it->is_number_unsigned() && it->get<std::uint64_t>() == seq) return r;
            pending_.push_back(std::move(r));
        }
    }

    WireMessage receive() {
        std::string frame;
        if (!read_frame(frame)) throw Error("io_error", "server closed the connection");
        WireMessage m = decode(frame);
        if (!in_.accept(m.seq)) throw Error("bad_seq", "server seq went backwards");
        return m;
    }

    /// Messages received while waiting for replies, oldest first.
    std::deque<WireMessage>& pending() { return pending_; }

    /// Raw frame for protocol tests; bypasses seq assignment.
    void send_raw(const std::string& frame) { write_frame(frame); }

protected:
    virtual void write_frame(const std::string& frame) = 0;
    virtual bool read_frame(std::string& frame) = 0;

private:
    std::uint64_t seq_ = 0;
    SeqCheck in_;
    std::deque<WireMessage> pending_;
};

class NdjsonClient : public ClientBase {
public:
    NdjsonClient(const std::string& host, int port) : s_(connect_to(host, port)), r_(s_) {}

protected:
    void write_frame(const std::string& frame) override { s_.write_all(frame + "\n"); }
    bool read_frame(std::string& frame) override {
        while (r_.line(frame))
            if (!frame.empty()) return true;
        return false;
    }

private:
    Socket s_;
    Reader r_;
};

class WsClient : public ClientBase {
public:
    WsClient(const std::string& host, int port, const std::string& path = "/ws") : s_(connect_to(host, port)), r_(s_) {
        const std::string key = "aGl3bS1oZWFkbGVzcy1rZXk=";
        s_.write_all("GET " + path + " HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n" +
                     "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
        std::string status, line, accept;
        if (!r_.line(status) || status.find(" 101 ") == std::string::npos)
            throw Error("io_error", "websocket upgrade refused: " + status);
        while (r_.line(line) && !line.empty()) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            std::string name = line.substr(0, colon);
            for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (name == "sec-websocket-accept") {
                accept = line.substr(colon + 1);
                while (!accept.empty() && accept.front() == ' ') accept.erase(0, 1);
            }
        }
        if (accept != ws_accept_key(key)) throw Error("io_error", "bad Sec-WebSocket-Accept");
    }

    ~WsClient() override {
        try {
            s_.write_all(ws_frame(WsOpcode::Close, "", mask_));
        } catch (const std::exception&) {
        }
    }

protected:
    void write_frame(const std::string& frame) override { s_.write_all(ws_frame(WsOpcode::Text, frame, mask_)); }
    bool read_frame(std::string& frame) override {
        WsMessage m;
        while (ws_read(r_, m)) {
            if (m.opcode == WsOpcode::Text) {
                frame = std::move(m.payload);
                return true;
            }
            if (m.opcode == WsOpcode::Close) return false;
        }
        return false;
    }

private:
    Socket s_;
    Reader r_;
    std::array<std::uint8_t, 4> mask_{0x12, 0x34, 0x56, 0x78};
};

// ---------------------------------------------------------------------------
// Trace replay over the wire

struct RemoteReplayResult {
    std::string session;
    std::string digest;  // manifest digest of the export
    std::string path;    // export directory on the server side
    std::string tree_digest;
};

/// Replays a session trace through a protocol client: the start line
/// becomes create_session, runs of tick lines become step messages and
/// events are sent as their own message types. Finally the given leaves
/// are exported under `export_name`.
inline RemoteReplayResult replay_remote(ClientBase& client, const SessionConfig& cfg, const nlohmann::json& policy,
                                        const std::vector<nlohmann::json>& trace,
                                        const std::vector<std::uint64_t>& leaves, const std::string& export_name) {
    auto expect_ack = [](const WireMessage& r) {
        if (r.type == "error")
            throw Error(r.payload.value("code", "remote_error"), r.payload.value("message", std::string("error")));
        return r;
    };
    if (trace.empty() || trace.front().value("op", "") != "start")
        throw Error("parse_error", "trace must begin with a start line");

    WireMessage create;
    create.type = "create_session";
    create.payload = {{"config", session_to_json(cfg)},
                      {"seed", trace.front().at("seed").get<std::uint64_t>()},
                      {"policy", policy},
                      {"pacing", false}};
    const WireMessage ack = expect_ack(client.request(create));
    RemoteReplayResult out;
    out.session = ack.payload.at("session").get<std::string>();

    std::uint64_t run = 0;
    auto flush = [&] {
        if (run == 0) return;
        WireMessage step;
        step.type = "step";
        step.session = out.session;
        step.payload = {{"n", run}};
        const WireMessage r = expect_ack(client.request(step));
        if (r.payload.at("ticks").get<std::uint64_t>() != run)
            throw Error("replay_diverged", "server ran fewer ticks than the trace");
        run = 0;
    };
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const std::string op = trace[i].value("op", "");
        if (op == "tick") {
            ++run;
            continue;
        }
        if (op != "event") throw Error("parse_error", "unknown trace op '" + op + "'");
        flush();
        nlohmann::json ev = trace[i].at("event");
        WireMessage m;
        m.type = ev.at("type").get<std::string>();
        m.session = out.session;
        ev.erase("type");
        m.payload = ev;
        expect_ack(client.request(m));
    }
    flush();
    client.pending().clear();

    WireMessage ex;
    ex.type = "export_dataset";
    ex.session = out.session;
    ex.payload = {{"leaves", leaves}, {"name", export_name}};
    const WireMessage done = expect_ack(client.request(ex));
    out.digest = done.payload.at("digest").get<std::string>();
    out.path = done.payload.at("path").get<std::string>();

    WireMessage snap;
    snap.type = "tree_snapshot";
    snap.session = out.session;
    out.tree_digest = expect_ack(client.request(snap)).payload.at("digest").get<std::string>();
    return out;
}

}  // namespace hiwm::net
