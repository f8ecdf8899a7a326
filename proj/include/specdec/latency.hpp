#pragma once

#include "specdec/core.hpp"
#include "specdec/link.hpp"

namespace specdec {

// Closed-form per-round and per-token predictions for the split decoding
// modes. Times are milliseconds; payloads are |V| * b_prob bits per
// distribution, gamma * 32 bits per token batch treated as negligible here
// (the simulator still charges them).
struct TimingParams {
    double t_slm_ms = 2.0;   // one draft-model call
    double t_llm_ms = 20.0;  // one target-model call (batched verify = one call)
    int gamma = 4;
    double alpha = 0.61;     // per-position acceptance probability
    VocabConfig vocab{50000, 16};
    LinkConfig link{100.0, 100.0, 20.0};

    void validate() const;
};

// Milliseconds to push one full distribution through the given rate.
double dist_payload_ms(const VocabConfig& vocab, double rate_mbps);

// Distribution-bearing uplink: gamma full distributions every round, plus the
// round-trip overhead.
double t_comm_dsd(const TimingParams& p);

// Scalar uplink with distribution downlink only on rejection: expected cost is
// the rejection probability (1 - alpha^gamma) times one downlink distribution,
// plus the round-trip overhead.
double t_comm_dssd_expected(const TimingParams& p);

// [NTT, NTT + one downlink distribution]: the support of the per-round DSSD
// communication time.
std::pair<double, double> t_comm_dssd_bounds(const TimingParams& p);

// Full per-round latencies: gamma drafts + one verify + communication.
double t_inf_dsd(const TimingParams& p);
double t_inf_dssd_expected(const TimingParams& p);

// (1 - alpha^(gamma+1)) / (1 - alpha), continuously extended to gamma+1 at
// alpha == 1: expected tokens emitted per round including the bonus token.
double expected_tokens_per_round(double alpha, int gamma);

// Tokens-per-time ratio against a draft-free target-only decoder (one token
// per t_llm, no communication). LlmOnly returns 1.
double predicted_speedup(Mode mode, const TimingParams& p);

struct CommGridCell {
    int gamma = 0;
    double alpha = 0.0;
    double rejection_prob = 0.0;  // 1 - alpha^gamma
    double t_comm_ms = 0.0;       // expected DSSD communication time
};

// Expected DSSD communication grid over (gamma, alpha), gamma-major. payload_ms
// is the downlink time of one full distribution; ntt_ms the round-trip
// overhead.
std::vector<CommGridCell> comm_grid(std::span<const int> gammas, std::span<const double> alphas,
                                    double payload_ms, double ntt_ms);

}  // namespace specdec
