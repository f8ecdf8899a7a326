#pragma once

#include <cstdint>
#include <optional>
#include <variant>

#include "specdec/core.hpp"

namespace specdec {

// Frame = header {type u8, body_len u32 LE} + body. All integers little
// endian; probabilities are IEEE binary16 or binary32 per VocabConfig::b_prob.
// Every body starts with the round counter so endpoints can detect drift
// before touching payload fields.

constexpr std::uint8_t kFrameUplinkDsd = 0x01;
constexpr std::uint8_t kFrameUplinkDssd = 0x02;
constexpr std::uint8_t kFrameDownlinkToken = 0x03;
constexpr std::uint8_t kFrameDownlinkDist = 0x04;
constexpr std::uint8_t kFrameHello = 0x05;
constexpr std::size_t kFrameHeaderBytes = 5;

// Draft tokens plus their full draft distributions (verification and resample
// both happen at the receiver).
struct UplinkDsd {
    std::uint32_t round = 0;
    std::vector<TokenId> tokens;
    std::vector<Dist> dists;
};

// Draft tokens plus only their drawn probabilities; carry_token reports the
// sender's local resample of the previous round's rejection.
struct UplinkDssd {
    std::uint32_t round = 0;
    std::vector<TokenId> tokens;
    std::vector<double> q_vals;
    std::optional<TokenId> carry_token;
};

// j is the 1-based outcome position: reject position, or gamma+1 for a full
// accept (token is then the bonus token).
struct DownlinkToken {
    std::uint32_t round = 0;
    std::uint16_t j = 0;
    TokenId token = 0;
};

// Rejection at position j plus the target distribution needed to resample.
struct DownlinkDist {
    std::uint32_t round = 0;
    std::uint16_t j = 0;
    Dist p_dist;
};

using WireMessage = std::variant<UplinkDsd, UplinkDssd, DownlinkToken, DownlinkDist>;

struct WireContext {
    VocabConfig vocab;
    std::uint32_t gamma = 0;
};

std::vector<std::uint8_t> encode(const WireMessage& msg, const VocabConfig& vocab);
WireMessage decode(std::span<const std::uint8_t> frame, const WireContext& ctx);

// Body size in bits, computed from the layout without serializing:
//   UplinkDsd      32 + 32*gamma + gamma*|V|*b_prob
//   UplinkDssd     32 + 32*gamma + gamma*b_prob (+32 with a carry token)
//   DownlinkToken  80
//   DownlinkDist   48 + |V|*b_prob
std::uint64_t payload_bits(const WireMessage& msg, const VocabConfig& vocab);

// Probability quantization used on the wire: round-to-nearest into the b_prob
// format, except that a positive probability never quantizes to zero (it
// clamps to the smallest positive value instead, keeping drafted tokens
// verifiable).
std::uint64_t encode_prob_bits(double p, int b_prob);
double decode_prob_bits(std::uint64_t bits, int b_prob);

// Session handshake for real links: both peers must agree on these knobs
// before round 0. Not part of WireMessage; transports exchange it once.
struct Hello {
    std::uint8_t mode = 0;  // Mode enum value
    std::uint32_t gamma = 0;
    std::uint32_t vocab_size = 0;
    std::uint8_t b_prob = 16;
    std::uint64_t seed = 0;
    std::uint32_t top_k = 0;
    double temperature = 1.0;
    std::uint32_t n_tokens = 0;
    std::uint32_t n_rounds = 0;
    std::uint64_t prompt_hash = 0;

    bool operator==(const Hello&) const = default;
};

std::vector<std::uint8_t> encode_hello(const Hello& h);
Hello decode_hello(std::span<const std::uint8_t> frame);

std::uint64_t token_sequence_hash(std::span<const TokenId> tokens);

}  // namespace specdec
