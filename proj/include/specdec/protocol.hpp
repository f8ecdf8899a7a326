#pragma once

#include <optional>
#include <variant>

#include "specdec/kernel.hpp"
#include "specdec/model.hpp"
#include "specdec/wire.hpp"

namespace specdec {

// Both endpoints advance in lockstep rounds. Drafting happens on the device;
// verification on the edge. In Dsd mode the edge also resamples (it has the
// draft distributions); in Dssd mode a rejection ships the target distribution
// down and the device resamples, reporting the result as next round's
// carry_token so the edge can finish extending its prefix.

struct ProtocolConfig {
    Mode mode = Mode::Dssd;
    std::uint32_t gamma = 4;
    VocabConfig vocab;
    SamplingConfig sampling;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EndpointState {
    Role role = Role::Device;
    ProtocolConfig cfg;
    std::vector<TokenId> prefix;
    std::uint32_t round = 0;

    // Device: the in-flight round's draft tokens, and (Dssd) distributions.
    std::vector<TokenId> pending_tokens;
    std::vector<Dist> pending_q;

    // Dssd bookkeeping: whether the last completed round rejected, and the
    // device-side resample the edge hasn't seen yet.
    bool awaiting_carry = false;
    std::optional<TokenId> carry;
};

EndpointState make_endpoint(Role role, const ProtocolConfig& cfg,
                            std::span<const TokenId> prompt);

using DssdDownlink = std::variant<DownlinkToken, DownlinkDist>;

// --- Dsd round ---------------------------------------------------------
// Device drafts gamma tokens and ships them with full draft distributions.
UplinkDsd device_round_dsd(EndpointState& dev, const LanguageModel& mq);
// Edge verifies, resamples or draws the bonus locally, extends its prefix and
// answers with the outcome token.
DownlinkToken edge_round_dsd(EndpointState& edge, const LanguageModel& mp,
                             const UplinkDsd& up);
// Device applies the outcome. Returns the tokens newly emitted this round.
std::vector<TokenId> device_apply_dsd(EndpointState& dev, const DownlinkToken& down);

// --- Dssd round --------------------------------------------------------
UplinkDssd device_round_dssd(EndpointState& dev, const LanguageModel& mq);
DssdDownlink edge_round_dssd(EndpointState& edge, const LanguageModel& mp,
                             const UplinkDssd& up);
std::vector<TokenId> device_apply_dssd(EndpointState& dev, const DssdDownlink& down);

}  // namespace specdec
