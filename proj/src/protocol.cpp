#include "specdec/protocol.hpp"

#include <algorithm>

namespace specdec {

namespace {

void require(bool cond, const char* what) {
    if (!cond) throw DesyncError(what);
}

void check_token(TokenId t, const VocabConfig& vocab, const char* what) {
    if (t >= vocab.size) throw DesyncError(std::string(what) + ": token outside vocabulary");
}

void check_round(std::uint32_t got, std::uint32_t expect, const char* what) {
    if (got != expect) {
        throw DesyncError(std::string(what) + ": round " + std::to_string(got) + ", expected " +
                          std::to_string(expect));
    }
}

}  // namespace

void ProtocolConfig::validate() const {
    if (mode == Mode::LlmOnly) throw ConfigError("protocol: LlmOnly has no device/edge split");
    if (gamma < 1) throw ConfigError("protocol: gamma must be >= 1");
    if (gamma > 0xffff - 1) throw ConfigError("protocol: gamma exceeds wire range");
    vocab.validate();
    if (sampling.temperature <= 0.0) throw ConfigError("protocol: temperature must be > 0");
}

EndpointState make_endpoint(Role role, const ProtocolConfig& cfg,
                            std::span<const TokenId> prompt) {
    cfg.validate();
    EndpointState st;
    st.role = role;
    st.cfg = cfg;
    st.prefix.assign(prompt.begin(), prompt.end());
    for (TokenId t : st.prefix) check_token(t, cfg.vocab, "make_endpoint");
    return st;
}

// --- Dsd ----------------------------------------------------------------

UplinkDsd device_round_dsd(EndpointState& dev, const LanguageModel& mq) {
    require(dev.role == Role::Device, "device_round_dsd: not a device endpoint");
    require(dev.cfg.mode == Mode::Dsd, "device_round_dsd: endpoint not in Dsd mode");
    require(dev.pending_tokens.empty(), "device_round_dsd: round already in flight");

    DraftRound dr = draft_tokens(mq, dev.prefix, static_cast<int>(dev.cfg.gamma), dev.cfg.seed,
                                 dev.round, dev.cfg.sampling);
    dev.pending_tokens = dr.tokens;

    UplinkDsd up;
    up.round = dev.round;
    up.tokens = std::move(dr.tokens);
    up.dists = std::move(dr.q_dists);
    return up;
}

DownlinkToken edge_round_dsd(EndpointState& edge, const LanguageModel& mp, const UplinkDsd& up) {
    require(edge.role == Role::Edge, "edge_round_dsd: not an edge endpoint");
    require(edge.cfg.mode == Mode::Dsd, "edge_round_dsd: endpoint not in Dsd mode");
    check_round(up.round, edge.round, "edge_round_dsd");
    require(up.tokens.size() == edge.cfg.gamma, "edge_round_dsd: wrong draft count");
    require(up.dists.size() == edge.cfg.gamma, "edge_round_dsd: wrong distribution count");
    for (TokenId t : up.tokens) check_token(t, edge.cfg.vocab, "edge_round_dsd");

    std::vector<double> q_vals(up.tokens.size());
    for (std::size_t i = 0; i < up.tokens.size(); ++i) {
        if (up.dists[i].size() != edge.cfg.vocab.size) {
            throw DesyncError("edge_round_dsd: distribution size != vocab");
        }
        q_vals[i] = up.dists[i][up.tokens[i]];
    }
    std::vector<Dist> pd = target_dists(mp, edge.prefix, up.tokens, edge.cfg.sampling);
    VerifyOutcome out = verify_round(up.tokens, q_vals, pd, up.dists, edge.cfg.seed, edge.round);

    for (int i = 0; i < out.accepted_count; ++i) edge.prefix.push_back(up.tokens[i]);
    edge.prefix.push_back(*out.result_token);

    DownlinkToken down;
    down.round = edge.round;
    down.j = static_cast<std::uint16_t>(out.reject_position);
    down.token = *out.result_token;
    ++edge.round;
    return down;
}

std::vector<TokenId> device_apply_dsd(EndpointState& dev, const DownlinkToken& down) {
    require(dev.role == Role::Device, "device_apply_dsd: not a device endpoint");
    require(dev.cfg.mode == Mode::Dsd, "device_apply_dsd: endpoint not in Dsd mode");
    check_round(down.round, dev.round, "device_apply_dsd");
    require(!dev.pending_tokens.empty(), "device_apply_dsd: no round in flight");
    require(down.j >= 1 && down.j <= dev.cfg.gamma + 1, "device_apply_dsd: j out of range");
    check_token(down.token, dev.cfg.vocab, "device_apply_dsd");

    std::size_t kept = std::min<std::size_t>(down.j - 1, dev.pending_tokens.size());
    std::vector<TokenId> emitted(dev.pending_tokens.begin(),
                                 dev.pending_tokens.begin() + static_cast<long>(kept));
    emitted.push_back(down.token);
    dev.prefix.insert(dev.prefix.end(), emitted.begin(), emitted.end());
    dev.pending_tokens.clear();
    ++dev.round;
    return emitted;
}

// --- Dssd ---------------------------------------------------------------

UplinkDssd device_round_dssd(EndpointState& dev, const LanguageModel& mq) {
    require(dev.role == Role::Device, "device_round_dssd: not a device endpoint");
    require(dev.cfg.mode == Mode::Dssd, "device_round_dssd: endpoint not in Dssd mode");
    require(dev.pending_tokens.empty(), "device_round_dssd: round already in flight");
    require(dev.awaiting_carry == dev.carry.has_value(),
            "device_round_dssd: carry state inconsistent");

    DraftRound dr = draft_tokens(mq, dev.prefix, static_cast<int>(dev.cfg.gamma), dev.cfg.seed,
                                 dev.round, dev.cfg.sampling);
    dev.pending_tokens = dr.tokens;
    dev.pending_q = std::move(dr.q_dists);

    UplinkDssd up;
    up.round = dev.round;
    up.tokens = std::move(dr.tokens);
    up.q_vals = std::move(dr.q_vals);
    up.carry_token = dev.carry;
    dev.carry.reset();
    dev.awaiting_carry = false;
    return up;
}

DssdDownlink edge_round_dssd(EndpointState& edge, const LanguageModel& mp, const UplinkDssd& up) {
    require(edge.role == Role::Edge, "edge_round_dssd: not an edge endpoint");
    require(edge.cfg.mode == Mode::Dssd, "edge_round_dssd: endpoint not in Dssd mode");
    check_round(up.round, edge.round, "edge_round_dssd");
    require(up.tokens.size() == edge.cfg.gamma, "edge_round_dssd: wrong draft count");
    require(up.q_vals.size() == edge.cfg.gamma, "edge_round_dssd: wrong q_val count");
    for (TokenId t : up.tokens) check_token(t, edge.cfg.vocab, "edge_round_dssd");

    // The carry token settles the previous round's rejection; it must be
    // present exactly when that round rejected.
    if (edge.awaiting_carry) {
        require(up.carry_token.has_value(), "edge_round_dssd: missing carry token");
        check_token(*up.carry_token, edge.cfg.vocab, "edge_round_dssd carry");
        edge.prefix.push_back(*up.carry_token);
        edge.awaiting_carry = false;
    } else {
        require(!up.carry_token.has_value(), "edge_round_dssd: unexpected carry token");
    }
    for (double q : up.q_vals) {
        if (!(q > 0.0)) throw InvalidDraftProbError("edge_round_dssd: draft prob must be > 0");
    }

    std::vector<Dist> pd = target_dists(mp, edge.prefix, up.tokens, edge.cfg.sampling);
    VerifyOutcome out =
        verify_round(up.tokens, up.q_vals, pd, {}, edge.cfg.seed, edge.round);

    for (int i = 0; i < out.accepted_count; ++i) edge.prefix.push_back(up.tokens[i]);

    if (out.rejected) {
        // Prefix stays one token short until the carry arrives next round.
        edge.awaiting_carry = true;
        DownlinkDist down;
        down.round = edge.round;
        down.j = static_cast<std::uint16_t>(out.reject_position);
        down.p_dist = std::move(pd[static_cast<std::size_t>(out.reject_position) - 1]);
        ++edge.round;
        return down;
    }
    edge.prefix.push_back(*out.result_token);
    DownlinkToken down;
    down.round = edge.round;
    down.j = static_cast<std::uint16_t>(out.reject_position);  // gamma + 1
    down.token = *out.result_token;
    ++edge.round;
    return down;
}

std::vector<TokenId> device_apply_dssd(EndpointState& dev, const DssdDownlink& down) {
    require(dev.role == Role::Device, "device_apply_dssd: not a device endpoint");
    require(dev.cfg.mode == Mode::Dssd, "device_apply_dssd: endpoint not in Dssd mode");
    require(!dev.pending_tokens.empty(), "device_apply_dssd: no round in flight");

    std::vector<TokenId> emitted;
    if (const auto* tok = std::get_if<DownlinkToken>(&down)) {
        check_round(tok->round, dev.round, "device_apply_dssd");
        // Only a full accept answers with a bare token in Dssd mode.
        require(tok->j == dev.cfg.gamma + 1, "device_apply_dssd: bare token with j <= gamma");
        check_token(tok->token, dev.cfg.vocab, "device_apply_dssd");
        emitted.assign(dev.pending_tokens.begin(), dev.pending_tokens.end());
        emitted.push_back(tok->token);
    } else {
        const auto& dist = std::get<DownlinkDist>(down);
        check_round(dist.round, dev.round, "device_apply_dssd");
        require(dist.j >= 1 && dist.j <= dev.cfg.gamma, "device_apply_dssd: j out of range");
        if (dist.p_dist.size() != dev.cfg.vocab.size) {
            throw DesyncError("device_apply_dssd: distribution size != vocab");
        }
        Dist res = residual(dist.p_dist, dev.pending_q[dist.j - 1]);
        double r = RngStream{dev.cfg.seed, dev.round, RngRole::ResampleDraw}.at(0);
        TokenId x = sample(res, r);
        emitted.assign(dev.pending_tokens.begin(), dev.pending_tokens.begin() + (dist.j - 1));
        emitted.push_back(x);
        dev.carry = x;
        dev.awaiting_carry = true;
    }
    dev.prefix.insert(dev.prefix.end(), emitted.begin(), emitted.end());
    dev.pending_tokens.clear();
    dev.pending_q.clear();
    ++dev.round;
    return emitted;
}

}  // namespace specdec
