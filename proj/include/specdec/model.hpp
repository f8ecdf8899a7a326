#pragma once

#include "specdec/core.hpp"

namespace specdec {

// A next-token distribution source plus its declared per-call latency. The
// virtual clock charges latency_ms per invocation; next_dist must be pure
// (same prefix -> same distribution) and safe to call from multiple threads.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual Dist next_dist(std::span<const TokenId> prefix) const = 0;
    virtual double latency_ms() const = 0;
    virtual std::uint32_t vocab_size() const = 0;
};

}  // namespace specdec
