#pragma once

#include "specdec/link.hpp"
#include "specdec/model.hpp"
#include "specdec/protocol.hpp"

namespace specdec {

enum class TransportKind { Sim, Socket };

struct SessionConfig {
    Mode mode = Mode::Dssd;
    int gamma = 4;
    int n_tokens = 128;  // stop after the round that reaches this many emitted tokens
    int n_rounds = 0;    // nonzero: run exactly this many rounds instead
    std::uint64_t seed = 1;
    VocabConfig vocab;
    LinkConfig link;
    SamplingConfig sampling;
    std::vector<TokenId> prompt;
    // Declared target-model latency. The socket device charges this to its
    // virtual clock for the verify step (it cannot query the remote model);
    // the loopback runner fills it in from the edge model.
    double edge_latency_ms = 0.0;

    void validate() const;
    ProtocolConfig protocol() const;
};

struct RoundStats {
    std::uint32_t round = 0;
    int gamma = 0;
    int accepted = 0;
    int reject_position = 0;  // 0 when the round has no verify step (LlmOnly)
    std::uint64_t uplink_bits = 0;
    std::uint64_t downlink_bits = 0;
    double t_draft_ms = 0.0;
    double t_verify_ms = 0.0;
    double t_comm_ms = 0.0;
    double t_round_ms = 0.0;  // always t_draft_ms + t_verify_ms + t_comm_ms
};

struct SessionTranscript {
    Mode mode = Mode::Dssd;
    std::vector<TokenId> tokens;  // emitted beyond the prompt
    std::vector<RoundStats> rounds;
    double total_ms = 0.0;  // virtual time; the sum of t_round_ms in round order
    double wall_ms = 0.0;   // real elapsed time (socket transport only)

    double tokens_per_round() const;
    double mean_t_comm_ms() const;
    double mean_uplink_bits() const;
    double mean_downlink_bits() const;
    double throughput_tps() const;  // tokens per virtual second
    // accepted / presented over all verify rounds.
    double measured_alpha() const;
};

// Deterministic prompt fixture: length tokens drawn from the vocabulary.
std::vector<TokenId> make_prompt(std::uint64_t seed, int length, std::uint32_t vocab_size);

// Runs one decoding session under a virtual clock. Per round the clock is
// charged gamma drafts + one verify + both link directions, in one expression,
// so total_ms equals the sum of the per-round times exactly.
SessionTranscript run_session_sim(const SessionConfig& cfg, const LanguageModel& mq,
                                  const LanguageModel& mp);

// Sim, or a real TCP loopback pair (edge thread + device in-process).
SessionTranscript run_session(const SessionConfig& cfg, const LanguageModel& mq,
                              const LanguageModel& mp, TransportKind transport);

}  // namespace specdec
