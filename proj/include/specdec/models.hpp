#pragma once

#include <iosfwd>
#include <memory>
#include <utility>

#include "specdec/core.hpp"
#include "specdec/model.hpp"

namespace specdec {

// sum_x min(p, q): the per-position acceptance probability when drafts come
// from q and verification targets p.
double overlap_alpha(const Dist& p, const Dist& q);

// Builds a draft distribution q with overlap_alpha(p, q) == alpha_target by
// moving 1 - alpha_target of mass from the largest entries of p onto its
// smallest entry. Throws CalibrationInfeasibleError (carrying the smallest
// achievable alpha) when alpha_target < min(p).
Dist derive_draft_dist(const Dist& p, double alpha_target);

// Table-driven model: context is the last context_order tokens of the prefix,
// looked up exactly; misses fall back to a fixed distribution.
struct TableFixture {
    std::uint32_t vocab = 0;
    int order = 1;
    double latency_ms = 0.0;
    Dist fallback;
    std::vector<std::pair<std::vector<TokenId>, Dist>> entries;
};

std::shared_ptr<LanguageModel> table_model(const TableFixture& fixture);

// Plain-text round-trippable serialization for table fixtures.
void write_table_fixture(std::ostream& os, const TableFixture& fixture);
TableFixture read_table_fixture(std::istream& is);

// Wraps a model, overriding only its declared latency. Lets one distribution
// table serve several timing scenarios without regeneration.
std::shared_ptr<LanguageModel> with_latency(std::shared_ptr<const LanguageModel> inner,
                                            double latency_ms);

// Draft/target pair with a controlled per-position acceptance rate. Contexts
// hash to n_contexts buckets; every bucket's target distribution is drawn
// pseudo-randomly on `support` tokens and its draft distribution is calibrated
// to alpha_target, so acceptance is i.i.d. alpha_target at every position.
struct CalibratedPairConfig {
    double alpha_target = 0.61;
    std::uint32_t vocab_size = 64;
    std::uint32_t n_contexts = 64;
    int context_order = 1;
    std::uint32_t support = 0;  // live tokens per context; 0 = all of them
    std::uint64_t seed = 0;
    double t_slm_ms = 0.0;  // declared draft-model latency
    double t_llm_ms = 0.0;  // declared target-model latency

    void validate() const;
};

struct ModelPair {
    std::shared_ptr<LanguageModel> draft;
    std::shared_ptr<LanguageModel> target;
};

ModelPair calibrated_pair(const CalibratedPairConfig& cfg);

// Empirical acceptance rate: runs `rounds` draft/verify rounds on an evolving
// prefix and returns accepted / presented, where a round presents its accepted
// tokens plus the rejected one (if any).
double measure_alpha(const LanguageModel& mq, const LanguageModel& mp,
                     std::span<const TokenId> prompt, int gamma, int rounds,
                     std::uint64_t seed, const SamplingConfig& sampling = {});

}  // namespace specdec
