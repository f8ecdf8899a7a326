#pragma once

#include <optional>

#include "specdec/core.hpp"
#include "specdec/model.hpp"

namespace specdec {

// Probability of keeping a draft token whose draft/target masses are q_val and
// p_val: min{1, p/q}. q_val must be > 0 (the drafter sampled the token, so its
// draft mass cannot be zero).
double accept_prob(double q_val, double p_val);

// r < accept_prob: strict comparison so r in [0,1) accepts with exactly the
// right probability (prob 1 always accepts, prob 0 never does).
bool accept_test(double q_val, double p_val, double r);

// normalize(max(0, p - q)) entrywise. ZeroMassError when p <= q everywhere.
Dist residual(const Dist& p, const Dist& q);

struct VerifyOutcome {
    int accepted_count = 0;   // in [0, gamma]
    int reject_position = 0;  // 1-based; gamma+1 means every draft token passed
    bool rejected = false;
    // Replacement token: resampled on rejection, bonus on full acceptance.
    // Empty when the rejection resample is deferred to the draft side.
    std::optional<TokenId> result_token;
};

// One verification pass over gamma draft tokens. p_dists holds gamma+1 target
// distributions (the last one feeds the bonus token). q_dists either matches
// tokens (resample happens here) or is empty (resample deferred; outcome
// carries no token on rejection). The accept draw for position j is
// RngStream{seed, round, AcceptDraw}.at(j-1) regardless of earlier outcomes,
// so split deployments agree draw-for-draw.
VerifyOutcome verify_round(std::span<const TokenId> tokens,
                           std::span<const double> q_vals,
                           std::span<const Dist> p_dists,
                           std::span<const Dist> q_dists,
                           std::uint64_t seed, std::uint64_t round);

struct DraftRound {
    std::vector<TokenId> tokens;
    std::vector<double> q_vals;
    std::vector<Dist> q_dists;
};

// Samples gamma draft tokens autoregressively. Token i (0-based) uses
// RngStream{seed, round, DraftSample}.at(i) on the filtered draft distribution.
DraftRound draft_tokens(const LanguageModel& mq, std::span<const TokenId> prefix,
                        int gamma, std::uint64_t seed, std::uint64_t round,
                        const SamplingConfig& sampling);

// Target distributions at the prefix and after each draft token: gamma+1 total.
std::vector<Dist> target_dists(const LanguageModel& mp, std::span<const TokenId> prefix,
                               std::span<const TokenId> drafted,
                               const SamplingConfig& sampling);

struct DecodeResult {
    std::vector<TokenId> tokens;  // emitted beyond the prompt
    std::vector<VerifyOutcome> outcomes;
    int rounds = 0;
};

// Single-process draft/verify loop: the ground truth the split protocols must
// reproduce token-for-token. Rounds are numbered from 0; each appends between
// 1 and gamma+1 tokens. Stops at the first round reaching n_tokens.
DecodeResult reference_decode(const LanguageModel& mq, const LanguageModel& mp,
                              std::span<const TokenId> prompt, int gamma,
                              int n_tokens, std::uint64_t seed,
                              const SamplingConfig& sampling = {});

// Marginal law of the token emitted at one position by the accept/resample
// mechanism. Built from the mechanism itself (accept_prob + residual), not
// algebraically reduced, so it doubles as an exactness oracle: the result must
// equal p.
Dist first_token_law(const Dist& p, const Dist& q);

}  // namespace specdec
