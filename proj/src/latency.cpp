#include "specdec/latency.hpp"

#include <cmath>

namespace specdec {

void LinkConfig::validate() const {
    if (!(up_mbps > 0.0) || !(down_mbps > 0.0)) {
        throw ConfigError("link: rates must be > 0 Mbps");
    }
    if (ntt_ms < 0.0) throw ConfigError("link: ntt_ms must be >= 0");
}

void VirtualClock::advance(double dt_ms) {
    if (dt_ms < 0.0) throw ConfigError("clock: cannot advance backwards");
    now_ms += dt_ms;
}

double transmit_ms(std::uint64_t bits, Direction dir, const LinkConfig& link) {
    link.validate();
    double rate = dir == Direction::Up ? link.up_mbps : link.down_mbps;
    // bits / (Mbit/s) = bits / (rate * 1e3 bits/ms).
    return static_cast<double>(bits) / (rate * 1e3) + link.ntt_ms / 2.0;
}

double sim_transmit(std::uint64_t bits, Direction dir, const LinkConfig& link,
                    VirtualClock& clock) {
    double dt = transmit_ms(bits, dir, link);
    clock.advance(dt);
    return dt;
}

void TimingParams::validate() const {
    if (!(t_slm_ms > 0.0) || !(t_llm_ms > 0.0)) {
        throw ConfigError("timing: model latencies must be > 0");
    }
    if (gamma < 1) throw ConfigError("timing: gamma must be >= 1");
    if (!(alpha >= 0.0) || alpha > 1.0) throw ConfigError("timing: alpha must be in [0, 1]");
    vocab.validate();
    link.validate();
}

double dist_payload_ms(const VocabConfig& vocab, double rate_mbps) {
    if (!(rate_mbps > 0.0)) throw ConfigError("dist_payload_ms: rate must be > 0 Mbps");
    return static_cast<double>(vocab.size) * vocab.b_prob / (rate_mbps * 1e3);
}

double t_comm_dsd(const TimingParams& p) {
    return p.gamma * dist_payload_ms(p.vocab, p.link.up_mbps) + p.link.ntt_ms;
}

double t_comm_dssd_expected(const TimingParams& p) {
    double reject = 1.0 - std::pow(p.alpha, p.gamma);
    return reject * dist_payload_ms(p.vocab, p.link.down_mbps) + p.link.ntt_ms;
}

std::pair<double, double> t_comm_dssd_bounds(const TimingParams& p) {
    return {p.link.ntt_ms, p.link.ntt_ms + dist_payload_ms(p.vocab, p.link.down_mbps)};
}

double t_inf_dsd(const TimingParams& p) {
    return p.gamma * p.t_slm_ms + p.t_llm_ms + t_comm_dsd(p);
}

double t_inf_dssd_expected(const TimingParams& p) {
    return p.gamma * p.t_slm_ms + p.t_llm_ms + t_comm_dssd_expected(p);
}

double expected_tokens_per_round(double alpha, int gamma) {
    if (gamma < 1) throw ConfigError("expected_tokens_per_round: gamma must be >= 1");
    if (!(alpha >= 0.0) || alpha > 1.0) {
        throw ConfigError("expected_tokens_per_round: alpha must be in [0, 1]");
    }
    if (alpha == 1.0) return gamma + 1.0;
    return (1.0 - std::pow(alpha, gamma + 1)) / (1.0 - alpha);
}

double predicted_speedup(Mode mode, const TimingParams& p) {
    p.validate();
    if (mode == Mode::LlmOnly) return 1.0;
    double t_round = mode == Mode::Dsd ? t_inf_dsd(p) : t_inf_dssd_expected(p);
    double tokens = expected_tokens_per_round(p.alpha, p.gamma);
    return tokens * p.t_llm_ms / t_round;
}

std::vector<CommGridCell> comm_grid(std::span<const int> gammas, std::span<const double> alphas,
                                    double payload_ms, double ntt_ms) {
    std::vector<CommGridCell> cells;
    cells.reserve(gammas.size() * alphas.size());
    for (int g : gammas) {
        for (double a : alphas) {
            CommGridCell c;
            c.gamma = g;
            c.alpha = a;
            c.rejection_prob = 1.0 - std::pow(a, g);
            c.t_comm_ms = c.rejection_prob * payload_ms + ntt_ms;
            cells.push_back(c);
        }
    }
    return cells;
}

}  // namespace specdec
