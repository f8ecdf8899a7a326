#include "specdec/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace specdec {

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Reader {
    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw MalformedFrameError("frame: truncated field");
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    void done() const {
        if (pos != buf.size()) throw MalformedFrameError("frame: trailing bytes");
    }
};

std::uint16_t f32_to_f16(float f) {
    std::uint32_t x = std::bit_cast<std::uint32_t>(f);
    std::uint32_t sign = (x >> 16) & 0x8000u;
    std::uint32_t mant = x & 0x007fffffu;
    std::int32_t exp = static_cast<std::int32_t>((x >> 23) & 0xffu) - 127 + 15;
    if (exp >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);
    if (exp <= 0) {
        if (exp < -10) return static_cast<std::uint16_t>(sign);
        mant |= 0x00800000u;
        std::uint32_t shift = static_cast<std::uint32_t>(14 - exp);
        std::uint32_t half = mant >> shift;
        std::uint32_t rem = mant & ((1u << shift) - 1u);
        std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint32_t half = sign | (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13);
    std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(half);
}

float f16_to_f32(std::uint16_t h) {
    std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t out;
    if (exp == 0) {
        if (mant == 0) {
            out = sign;
        } else {
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while (!(mant & 0x400u));
            out = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) |
                  ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 31) {
        out = sign | 0x7f800000u | (mant << 13);
    } else {
        out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

}  // namespace

std::uint64_t encode_prob_bits(double p, int b_prob) {
    if (!std::isfinite(p) || p < 0.0) {
        throw ConfigError("encode_prob_bits: probability must be finite and >= 0");
    }
    if (b_prob == 16) {
        std::uint16_t h = f32_to_f16(static_cast<float>(p));
        if (p > 0.0 && h == 0) h = 0x0001;  // clamp positive underflow
        return h;
    }
    if (b_prob == 32) {
        auto f = static_cast<float>(p);
        std::uint32_t b = std::bit_cast<std::uint32_t>(f);
        if (p > 0.0 && b == 0) b = 0x00000001u;
        return b;
    }
    throw ConfigError("encode_prob_bits: b_prob must be 16 or 32");
}

double decode_prob_bits(std::uint64_t bits, int b_prob) {
    if (b_prob == 16) return f16_to_f32(static_cast<std::uint16_t>(bits));
    if (b_prob == 32) return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
    throw ConfigError("decode_prob_bits: b_prob must be 16 or 32");
}

namespace {

void put_prob(std::vector<std::uint8_t>& out, double p, int b_prob) {
    std::uint64_t bits = encode_prob_bits(p, b_prob);
    if (b_prob == 16) {
        put_u16(out, static_cast<std::uint16_t>(bits));
    } else {
        put_u32(out, static_cast<std::uint32_t>(bits));
    }
}

double read_prob(Reader& r, int b_prob) {
    return decode_prob_bits(b_prob == 16 ? r.u16() : r.u32(), b_prob);
}

void put_dist(std::vector<std::uint8_t>& out, const Dist& d, const VocabConfig& vocab) {
    if (d.size() != vocab.size) throw ConfigError("encode: distribution size != vocab");
    for (double p : d.probs) put_prob(out, p, vocab.b_prob);
}

Dist read_dist(Reader& r, const VocabConfig& vocab) {
    Dist d;
    d.probs.resize(vocab.size);
    for (auto& p : d.probs) p = read_prob(r, vocab.b_prob);
    return d;
}

std::vector<std::uint8_t> frame(std::uint8_t type, std::vector<std::uint8_t> body) {
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + body.size());
    put_u8(out, type);
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& msg, const VocabConfig& vocab) {
    vocab.validate();
    std::vector<std::uint8_t> body;

    if (const auto* up = std::get_if<UplinkDsd>(&msg)) {
        if (up->tokens.size() != up->dists.size() || up->tokens.empty()) {
            throw ConfigError("encode: UplinkDsd needs matching, nonempty tokens/dists");
        }
        body.reserve(4 + 4 * up->tokens.size() +
                     up->tokens.size() * vocab.size * (vocab.b_prob / 8));
        put_u32(body, up->round);
        for (TokenId t : up->tokens) put_u32(body, t);
        for (const Dist& d : up->dists) put_dist(body, d, vocab);
        return frame(kFrameUplinkDsd, std::move(body));
    }
    if (const auto* up = std::get_if<UplinkDssd>(&msg)) {
        if (up->tokens.size() != up->q_vals.size() || up->tokens.empty()) {
            throw ConfigError("encode: UplinkDssd needs matching, nonempty tokens/q_vals");
        }
        put_u32(body, up->round);
        for (TokenId t : up->tokens) put_u32(body, t);
        for (double q : up->q_vals) put_prob(body, q, vocab.b_prob);
        if (up->carry_token) put_u32(body, *up->carry_token);
        return frame(kFrameUplinkDssd, std::move(body));
    }
    if (const auto* down = std::get_if<DownlinkToken>(&msg)) {
        put_u32(body, down->round);
        put_u16(body, down->j);
        put_u32(body, down->token);
        return frame(kFrameDownlinkToken, std::move(body));
    }
    const auto& down = std::get<DownlinkDist>(msg);
    put_u32(body, down.round);
    put_u16(body, down.j);
    put_dist(body, down.p_dist, vocab);
    return frame(kFrameDownlinkDist, std::move(body));
}

WireMessage decode(std::span<const std::uint8_t> data, const WireContext& ctx) {
    ctx.vocab.validate();
    if (data.size() < kFrameHeaderBytes) throw MalformedFrameError("frame: shorter than header");
    std::uint8_t type = data[0];
    std::uint32_t body_len = 0;
    for (int i = 0; i < 4; ++i) body_len |= static_cast<std::uint32_t>(data[1 + i]) << (8 * i);
    if (data.size() != kFrameHeaderBytes + body_len) {
        throw MalformedFrameError("frame: body length mismatch");
    }
    Reader r{data.subspan(kFrameHeaderBytes)};
    const std::uint32_t gamma = ctx.gamma;
    const std::size_t prob_bytes = static_cast<std::size_t>(ctx.vocab.b_prob) / 8;

    switch (type) {
        case kFrameUplinkDsd: {
            if (gamma < 1) throw MalformedFrameError("frame: UplinkDsd needs gamma context");
            std::size_t expect = 4 + 4ull * gamma + 1ull * gamma * ctx.vocab.size * prob_bytes;
            if (body_len != expect) throw MalformedFrameError("frame: UplinkDsd bad body size");
            UplinkDsd up;
            up.round = r.u32();
            up.tokens.resize(gamma);
            for (auto& t : up.tokens) t = r.u32();
            up.dists.reserve(gamma);
            for (std::uint32_t i = 0; i < gamma; ++i) up.dists.push_back(read_dist(r, ctx.vocab));
            r.done();
            return up;
        }
        case kFrameUplinkDssd: {
            if (gamma < 1) throw MalformedFrameError("frame: UplinkDssd needs gamma context");
            std::size_t base = 4 + 4ull * gamma + 1ull * gamma * prob_bytes;
            bool carry = body_len == base + 4;
            if (!carry && body_len != base) {
                throw MalformedFrameError("frame: UplinkDssd bad body size");
            }
            UplinkDssd up;
            up.round = r.u32();
            up.tokens.resize(gamma);
            for (auto& t : up.tokens) t = r.u32();
            up.q_vals.resize(gamma);
            for (auto& q : up.q_vals) q = read_prob(r, ctx.vocab.b_prob);
            if (carry) up.carry_token = r.u32();
            r.done();
            return up;
        }
        case kFrameDownlinkToken: {
            if (body_len != 10) throw MalformedFrameError("frame: DownlinkToken bad body size");
            DownlinkToken down;
            down.round = r.u32();
            down.j = r.u16();
            down.token = r.u32();
            r.done();
            return down;
        }
        case kFrameDownlinkDist: {
            std::size_t expect = 6 + 1ull * ctx.vocab.size * prob_bytes;
            if (body_len != expect) throw MalformedFrameError("frame: DownlinkDist bad body size");
            DownlinkDist down;
            down.round = r.u32();
            down.j = r.u16();
            down.p_dist = read_dist(r, ctx.vocab);
            r.done();
            return down;
        }
        default:
            throw MalformedFrameError("frame: unknown type " + std::to_string(type));
    }
}

std::uint64_t payload_bits(const WireMessage& msg, const VocabConfig& vocab) {
    vocab.validate();
    const auto b = static_cast<std::uint64_t>(vocab.b_prob);
    const auto v = static_cast<std::uint64_t>(vocab.size);
    if (const auto* up = std::get_if<UplinkDsd>(&msg)) {
        auto g = static_cast<std::uint64_t>(up->tokens.size());
        return 32 + 32 * g + g * v * b;
    }
    if (const auto* up = std::get_if<UplinkDssd>(&msg)) {
        auto g = static_cast<std::uint64_t>(up->tokens.size());
        return 32 + 32 * g + g * b + (up->carry_token ? 32 : 0);
    }
    if (std::holds_alternative<DownlinkToken>(msg)) return 80;
    return 48 + v * b;
}

std::vector<std::uint8_t> encode_hello(const Hello& h) {
    std::vector<std::uint8_t> body;
    put_u8(body, h.mode);
    put_u32(body, h.gamma);
    put_u32(body, h.vocab_size);
    put_u8(body, h.b_prob);
    put_u64(body, h.seed);
    put_u32(body, h.top_k);
    put_u64(body, std::bit_cast<std::uint64_t>(h.temperature));
    put_u32(body, h.n_tokens);
    put_u32(body, h.n_rounds);
    put_u64(body, h.prompt_hash);
    return frame(kFrameHello, std::move(body));
}

Hello decode_hello(std::span<const std::uint8_t> data) {
    if (data.size() < kFrameHeaderBytes || data[0] != kFrameHello) {
        throw MalformedFrameError("frame: expected hello");
    }
    std::uint32_t body_len = 0;
    for (int i = 0; i < 4; ++i) body_len |= static_cast<std::uint32_t>(data[1 + i]) << (8 * i);
    if (data.size() != kFrameHeaderBytes + body_len) {
        throw MalformedFrameError("frame: hello body length mismatch");
    }
    Reader r{data.subspan(kFrameHeaderBytes)};
    Hello h;
    h.mode = r.u8();
    h.gamma = r.u32();
    h.vocab_size = r.u32();
    h.b_prob = r.u8();
    h.seed = r.u64();
    h.top_k = r.u32();
    h.temperature = std::bit_cast<double>(r.u64());
    h.n_tokens = r.u32();
    h.n_rounds = r.u32();
    h.prompt_hash = r.u64();
    r.done();
    return h;
}

std::uint64_t token_sequence_hash(std::span<const TokenId> tokens) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (TokenId t : tokens) h = splitmix64(h ^ t);
    h = splitmix64(h ^ tokens.size());
    return h;
}

}  // namespace specdec
