#pragma once

#include "specdec/core.hpp"

namespace specdec {

struct LinkConfig {
    double up_mbps = 100.0;
    double down_mbps = 100.0;
    double ntt_ms = 0.0;  // full network round-trip overhead, split evenly per direction

    void validate() const;
};

enum class Direction { Up, Down };

// Deterministic session clock, in milliseconds.
struct VirtualClock {
    double now_ms = 0.0;
    void advance(double dt_ms);
};

// Serialization time of `bits` on one direction of the link plus that
// direction's half of the round-trip overhead.
double transmit_ms(std::uint64_t bits, Direction dir, const LinkConfig& link);

// transmit_ms, charged to the clock.
double sim_transmit(std::uint64_t bits, Direction dir, const LinkConfig& link, VirtualClock& clock);

}  // namespace specdec
