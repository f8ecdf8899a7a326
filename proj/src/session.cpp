#include "specdec/session.hpp"

#include <algorithm>

#include "specdec/socket.hpp"
#include "specdec/wire.hpp"

namespace specdec {

void SessionConfig::validate() const {
    if (gamma < 1 && mode != Mode::LlmOnly) throw ConfigError("session: gamma must be >= 1");
    if (n_rounds < 0) throw ConfigError("session: n_rounds must be >= 0");
    if (n_rounds == 0 && n_tokens < 1) {
        throw ConfigError("session: need n_tokens >= 1 or n_rounds >= 1");
    }
    vocab.validate();
    link.validate();
    for (TokenId t : prompt) {
        if (t >= vocab.size) throw ConfigError("session: prompt token outside vocabulary");
    }
}

ProtocolConfig SessionConfig::protocol() const {
    ProtocolConfig pc;
    pc.mode = mode;
    pc.gamma = static_cast<std::uint32_t>(gamma);
    pc.vocab = vocab;
    pc.sampling = sampling;
    pc.seed = seed;
    return pc;
}

double SessionTranscript::tokens_per_round() const {
    if (rounds.empty()) return 0.0;
    return static_cast<double>(tokens.size()) / static_cast<double>(rounds.size());
}

double SessionTranscript::mean_t_comm_ms() const {
    if (rounds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rounds) s += r.t_comm_ms;
    return s / static_cast<double>(rounds.size());
}

double SessionTranscript::mean_uplink_bits() const {
    if (rounds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rounds) s += static_cast<double>(r.uplink_bits);
    return s / static_cast<double>(rounds.size());
}

double SessionTranscript::mean_downlink_bits() const {
    if (rounds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rounds) s += static_cast<double>(r.downlink_bits);
    return s / static_cast<double>(rounds.size());
}

double SessionTranscript::throughput_tps() const {
    if (total_ms <= 0.0) return 0.0;
    return static_cast<double>(tokens.size()) / (total_ms / 1e3);
}

double SessionTranscript::measured_alpha() const {
    std::uint64_t accepted = 0;
    std::uint64_t presented = 0;
    for (const auto& r : rounds) {
        if (r.reject_position == 0) continue;
        bool rejected = r.reject_position <= r.gamma;
        accepted += static_cast<std::uint64_t>(r.accepted);
        presented += static_cast<std::uint64_t>(r.accepted) + (rejected ? 1 : 0);
    }
    if (presented == 0) return 0.0;
    return static_cast<double>(accepted) / static_cast<double>(presented);
}

std::vector<TokenId> make_prompt(std::uint64_t seed, int length, std::uint32_t vocab_size) {
    if (length < 0) throw ConfigError("make_prompt: length must be >= 0");
    if (vocab_size < 2) throw ConfigError("make_prompt: vocab_size must be >= 2");
    std::vector<TokenId> prompt(length);
    for (int i = 0; i < length; ++i) {
        std::uint64_t h = splitmix64(splitmix64(seed ^ 0x70726f6d70ULL) ^ static_cast<std::uint64_t>(i));
        prompt[i] = static_cast<TokenId>(h % vocab_size);
    }
    return prompt;
}

namespace {

bool session_done(const SessionConfig& cfg, std::size_t tokens, std::size_t rounds) {
    if (cfg.n_rounds > 0) return rounds >= static_cast<std::size_t>(cfg.n_rounds);
    return tokens >= static_cast<std::size_t>(cfg.n_tokens);
}

SessionTranscript run_llm_only_sim(const SessionConfig& cfg, const LanguageModel& mp) {
    SessionTranscript tr;
    tr.mode = Mode::LlmOnly;
    VirtualClock clock;
    std::vector<TokenId> prefix = cfg.prompt;

    std::uint64_t pos = 0;
    while (!session_done(cfg, tr.tokens.size(), tr.rounds.size())) {
        Dist p = top_k_filter(mp.next_dist(prefix), cfg.sampling.top_k, cfg.sampling.temperature);
        TokenId t = sample(p, RngStream{cfg.seed, pos, RngRole::BonusDraw}.at(0));
        prefix.push_back(t);
        tr.tokens.push_back(t);

        RoundStats rs;
        rs.round = static_cast<std::uint32_t>(pos);
        rs.t_verify_ms = mp.latency_ms();
        rs.t_round_ms = rs.t_draft_ms + rs.t_verify_ms + rs.t_comm_ms;
        clock.advance(rs.t_round_ms);
        tr.rounds.push_back(rs);
        ++pos;
    }
    tr.total_ms = clock.now_ms;
    return tr;
}

}  // namespace

SessionTranscript run_session_sim(const SessionConfig& cfg, const LanguageModel& mq,
                                  const LanguageModel& mp) {
    cfg.validate();
    if (cfg.mode == Mode::LlmOnly) return run_llm_only_sim(cfg, mp);

    SessionTranscript tr;
    tr.mode = cfg.mode;
    VirtualClock clock;
    ProtocolConfig pc = cfg.protocol();
    EndpointState dev = make_endpoint(Role::Device, pc, cfg.prompt);
    EndpointState edge = make_endpoint(Role::Edge, pc, cfg.prompt);

    while (!session_done(cfg, tr.tokens.size(), tr.rounds.size())) {
        RoundStats rs;
        rs.round = dev.round;
        rs.gamma = cfg.gamma;
        std::vector<TokenId> emitted;

        // The simulator never serializes: endpoints exchange message structs
        // at full precision and the link is charged the analytic frame size.
        if (cfg.mode == Mode::Dsd) {
            UplinkDsd up = device_round_dsd(dev, mq);
            rs.uplink_bits = payload_bits(WireMessage{up}, cfg.vocab);
            DownlinkToken down = edge_round_dsd(edge, mp, up);
            rs.downlink_bits = payload_bits(WireMessage{down}, cfg.vocab);
            rs.reject_position = down.j;
            emitted = device_apply_dsd(dev, down);
        } else {
            UplinkDssd up = device_round_dssd(dev, mq);
            rs.uplink_bits = payload_bits(WireMessage{up}, cfg.vocab);
            DssdDownlink down = edge_round_dssd(edge, mp, up);
            rs.downlink_bits = std::holds_alternative<DownlinkToken>(down)
                                   ? payload_bits(WireMessage{std::get<DownlinkToken>(down)}, cfg.vocab)
                                   : payload_bits(WireMessage{std::get<DownlinkDist>(down)}, cfg.vocab);
            rs.reject_position = std::holds_alternative<DownlinkToken>(down)
                                     ? std::get<DownlinkToken>(down).j
                                     : std::get<DownlinkDist>(down).j;
            emitted = device_apply_dssd(dev, down);
        }
        rs.accepted = rs.reject_position - 1;

        rs.t_draft_ms = cfg.gamma * mq.latency_ms();
        rs.t_verify_ms = mp.latency_ms();
        rs.t_comm_ms = transmit_ms(rs.uplink_bits, Direction::Up, cfg.link) +
                       transmit_ms(rs.downlink_bits, Direction::Down, cfg.link);
        rs.t_round_ms = rs.t_draft_ms + rs.t_verify_ms + rs.t_comm_ms;
        clock.advance(rs.t_round_ms);

        tr.tokens.insert(tr.tokens.end(), emitted.begin(), emitted.end());
        tr.rounds.push_back(rs);
    }
    tr.total_ms = clock.now_ms;
    return tr;
}

SessionTranscript run_session(const SessionConfig& cfg, const LanguageModel& mq,
                              const LanguageModel& mp, TransportKind transport) {
    if (transport == TransportKind::Sim) return run_session_sim(cfg, mq, mp);
    return run_session_socket_loopback(cfg, mq, mp);
}

}  // namespace specdec
