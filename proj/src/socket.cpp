#include "specdec/socket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <thread>

#include "specdec/wire.hpp"

namespace specdec {

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
    throw SpecdecError(what + ": " + std::strerror(errno));
}

void set_common_opts(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    timeval tv{60, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            sys_fail("socket send");
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
}

// false = clean EOF at a frame boundary.
bool read_exact(int fd, std::uint8_t* data, std::size_t n, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            sys_fail("socket recv");
        }
        if (r == 0) {
            if (got == 0 && eof_ok) return false;
            throw MalformedFrameError("socket: peer closed mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

bool read_frame(int fd, std::vector<std::uint8_t>& frame, bool eof_ok) {
    frame.resize(kFrameHeaderBytes);
    if (!read_exact(fd, frame.data(), kFrameHeaderBytes, eof_ok)) return false;
    std::uint32_t body_len = 0;
    for (int i = 0; i < 4; ++i) body_len |= static_cast<std::uint32_t>(frame[1 + i]) << (8 * i);
    frame.resize(kFrameHeaderBytes + body_len);
    read_exact(fd, frame.data() + kFrameHeaderBytes, body_len, false);
    return true;
}

void model_sleep(double ms) {
    if (ms > 0.0) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }
}

void paced_send(int fd, const std::vector<std::uint8_t>& frame, Direction dir,
                const LinkConfig& link) {
    // Model the link by sleeping the analytic transmission time before the
    // bytes hit the (fast) real socket.
    model_sleep(transmit_ms(8ull * frame.size(), dir, link));
    write_all(fd, frame.data(), frame.size());
}

Hello make_hello(const SessionConfig& cfg) {
    Hello h;
    h.mode = static_cast<std::uint8_t>(cfg.mode);
    h.gamma = static_cast<std::uint32_t>(cfg.gamma);
    h.vocab_size = cfg.vocab.size;
    h.b_prob = static_cast<std::uint8_t>(cfg.vocab.b_prob);
    h.seed = cfg.seed;
    h.top_k = cfg.sampling.top_k;
    h.temperature = cfg.sampling.temperature;
    h.n_tokens = static_cast<std::uint32_t>(cfg.n_tokens);
    h.n_rounds = static_cast<std::uint32_t>(cfg.n_rounds);
    h.prompt_hash = token_sequence_hash(cfg.prompt);
    return h;
}

void check_hello(const Hello& mine, const Hello& theirs) {
    if (mine == theirs) return;
    std::string what = "handshake mismatch:";
    if (mine.mode != theirs.mode) what += " mode";
    if (mine.gamma != theirs.gamma) what += " gamma";
    if (mine.vocab_size != theirs.vocab_size) what += " vocab_size";
    if (mine.b_prob != theirs.b_prob) what += " b_prob";
    if (mine.seed != theirs.seed) what += " seed";
    if (mine.top_k != theirs.top_k) what += " top_k";
    if (mine.temperature != theirs.temperature) what += " temperature";
    if (mine.n_tokens != theirs.n_tokens) what += " n_tokens";
    if (mine.n_rounds != theirs.n_rounds) what += " n_rounds";
    if (mine.prompt_hash != theirs.prompt_hash) what += " prompt";
    throw DesyncError(what);
}

bool session_done(const SessionConfig& cfg, std::size_t tokens, std::size_t rounds) {
    if (cfg.n_rounds > 0) return rounds >= static_cast<std::size_t>(cfg.n_rounds);
    return tokens >= static_cast<std::size_t>(cfg.n_tokens);
}

struct FdGuard {
    int fd = -1;
    ~FdGuard() {
        if (fd >= 0) ::close(fd);
    }
};

void validate_socket_cfg(const SessionConfig& cfg) {
    cfg.validate();
    if (cfg.mode == Mode::LlmOnly) {
        throw ConfigError("socket transport: LlmOnly runs entirely on the edge; use sim");
    }
}

void serve_one_session(const SessionConfig& cfg, const LanguageModel& mp, int fd) {
    set_common_opts(fd);

    std::vector<std::uint8_t> frame;
    if (!read_frame(fd, frame, true)) throw DesyncError("edge: peer closed before hello");
    Hello mine = make_hello(cfg);
    check_hello(mine, decode_hello(frame));
    std::vector<std::uint8_t> ack = encode_hello(mine);
    write_all(fd, ack.data(), ack.size());

    ProtocolConfig pc = cfg.protocol();
    EndpointState edge = make_endpoint(Role::Edge, pc, cfg.prompt);
    WireContext ctx{cfg.vocab, static_cast<std::uint32_t>(cfg.gamma)};

    while (read_frame(fd, frame, true)) {
        WireMessage msg = decode(frame, ctx);
        WireMessage reply;
        if (cfg.mode == Mode::Dsd) {
            const auto* up = std::get_if<UplinkDsd>(&msg);
            if (!up) throw DesyncError("edge: expected UplinkDsd");
            reply = edge_round_dsd(edge, mp, *up);
        } else {
            const auto* up = std::get_if<UplinkDssd>(&msg);
            if (!up) throw DesyncError("edge: expected UplinkDssd");
            DssdDownlink down = edge_round_dssd(edge, mp, *up);
            if (auto* tok = std::get_if<DownlinkToken>(&down)) {
                reply = *tok;
            } else {
                reply = std::get<DownlinkDist>(std::move(down));
            }
        }
        model_sleep(mp.latency_ms());  // the verify call
        paced_send(fd, encode(reply, cfg.vocab), Direction::Down, cfg.link);
    }
}

}  // namespace

int socket_listen(std::uint16_t port, std::uint16_t* bound_port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) sys_fail("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd);
        sys_fail("bind");
    }
    if (::listen(fd, 4) < 0) {
        ::close(fd);
        sys_fail("listen");
    }
    if (bound_port) {
        sockaddr_in got{};
        socklen_t len = sizeof(got);
        if (::getsockname(fd, reinterpret_cast<sockaddr*>(&got), &len) < 0) {
            ::close(fd);
            sys_fail("getsockname");
        }
        *bound_port = ntohs(got.sin_port);
    }
    return fd;
}

void serve_edge_socket(const SessionConfig& cfg, const LanguageModel& mp, int listen_fd,
                       int n_sessions) {
    validate_socket_cfg(cfg);
    FdGuard listener{listen_fd};
    for (int s = 0; s < n_sessions; ++s) {
        FdGuard conn{::accept(listen_fd, nullptr, nullptr)};
        if (conn.fd < 0) sys_fail("accept");
        serve_one_session(cfg, mp, conn.fd);
    }
}

SessionTranscript run_device_socket(const SessionConfig& cfg, const LanguageModel& mq,
                                    const std::string& host, std::uint16_t port) {
    validate_socket_cfg(cfg);

    FdGuard conn;
    for (int attempt = 0;; ++attempt) {
        conn.fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (conn.fd < 0) sys_fail("socket");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            throw ConfigError("connect: host must be an IPv4 address, got " + host);
        }
        if (::connect(conn.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) break;
        ::close(conn.fd);
        conn.fd = -1;
        if (attempt >= 100) sys_fail("connect to " + host + ":" + std::to_string(port));
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    set_common_opts(conn.fd);

    auto wall_start = std::chrono::steady_clock::now();
    Hello mine = make_hello(cfg);
    std::vector<std::uint8_t> hello_frame = encode_hello(mine);
    write_all(conn.fd, hello_frame.data(), hello_frame.size());
    std::vector<std::uint8_t> frame;
    if (!read_frame(conn.fd, frame, true)) {
        throw DesyncError("device: peer closed during handshake");
    }
    check_hello(mine, decode_hello(frame));

    SessionTranscript tr;
    tr.mode = cfg.mode;
    VirtualClock clock;
    ProtocolConfig pc = cfg.protocol();
    EndpointState dev = make_endpoint(Role::Device, pc, cfg.prompt);
    WireContext ctx{cfg.vocab, static_cast<std::uint32_t>(cfg.gamma)};

    while (!session_done(cfg, tr.tokens.size(), tr.rounds.size())) {
        RoundStats rs;
        rs.round = dev.round;
        rs.gamma = cfg.gamma;
        std::vector<TokenId> emitted;

        WireMessage up = cfg.mode == Mode::Dsd ? WireMessage{device_round_dsd(dev, mq)}
                                               : WireMessage{device_round_dssd(dev, mq)};
        std::vector<std::uint8_t> up_frame = encode(up, cfg.vocab);
        rs.uplink_bits = payload_bits(up, cfg.vocab);
        model_sleep(cfg.gamma * mq.latency_ms());  // the draft calls
        paced_send(conn.fd, up_frame, Direction::Up, cfg.link);

        if (!read_frame(conn.fd, frame, false)) {
            throw MalformedFrameError("device: missing downlink");
        }
        WireMessage down = decode(frame, ctx);
        rs.downlink_bits = payload_bits(down, cfg.vocab);
        if (cfg.mode == Mode::Dsd) {
            const auto* tok = std::get_if<DownlinkToken>(&down);
            if (!tok) throw DesyncError("device: expected DownlinkToken");
            rs.reject_position = tok->j;
            emitted = device_apply_dsd(dev, *tok);
        } else {
            if (const auto* tok = std::get_if<DownlinkToken>(&down)) {
                rs.reject_position = tok->j;
                emitted = device_apply_dssd(dev, *tok);
            } else if (const auto* dist = std::get_if<DownlinkDist>(&down)) {
                rs.reject_position = dist->j;
                emitted = device_apply_dssd(dev, *dist);
            } else {
                throw DesyncError("device: expected a downlink frame");
            }
        }
        rs.accepted = rs.reject_position - 1;

        // Virtual accounting mirrors the simulator; wall time is real.
        rs.t_draft_ms = cfg.gamma * mq.latency_ms();
        rs.t_verify_ms = cfg.edge_latency_ms;
        rs.t_comm_ms = transmit_ms(rs.uplink_bits, Direction::Up, cfg.link) +
                       transmit_ms(rs.downlink_bits, Direction::Down, cfg.link);
        rs.t_round_ms = rs.t_draft_ms + rs.t_verify_ms + rs.t_comm_ms;
        clock.advance(rs.t_round_ms);

        tr.tokens.insert(tr.tokens.end(), emitted.begin(), emitted.end());
        tr.rounds.push_back(rs);
    }
    tr.total_ms = clock.now_ms;
    tr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                           wall_start)
                     .count();
    return tr;
}

SessionTranscript run_session_socket_loopback(const SessionConfig& cfg, const LanguageModel& mq,
                                              const LanguageModel& mp) {
    validate_socket_cfg(cfg);
    std::uint16_t port = 0;
    int listen_fd = socket_listen(0, &port);

    std::exception_ptr edge_err;
    std::thread edge([&] {
        try {
            serve_edge_socket(cfg, mp, listen_fd, 1);
        } catch (...) {
            edge_err = std::current_exception();
        }
    });

    SessionTranscript tr;
    std::exception_ptr dev_err;
    try {
        // In-process we know the edge model; let the device's virtual clock
        // charge the true verify latency so sim and socket totals agree.
        SessionConfig dev_cfg = cfg;
        dev_cfg.edge_latency_ms = mp.latency_ms();
        tr = run_device_socket(dev_cfg, mq, "127.0.0.1", port);
    } catch (...) {
        dev_err = std::current_exception();
    }
    edge.join();
    if (edge_err) std::rethrow_exception(edge_err);
    if (dev_err) std::rethrow_exception(dev_err);
    return tr;
}

}  // namespace specdec
