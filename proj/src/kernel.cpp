#include "specdec/kernel.hpp"

#include <algorithm>
#include <cmath>

namespace specdec {

double accept_prob(double q_val, double p_val) {
    if (!(q_val > 0.0)) {
        throw InvalidDraftProbError("accept_prob: draft mass must be > 0 for a drafted token");
    }
    if (p_val <= 0.0) return 0.0;
    return std::min(1.0, p_val / q_val);
}

bool accept_test(double q_val, double p_val, double r) {
    return r < accept_prob(q_val, p_val);
}

Dist residual(const Dist& p, const Dist& q) {
    if (p.size() != q.size()) throw ConfigError("residual: size mismatch");
    std::vector<double> pos(p.size());
    double mass = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = p.probs[i] - q.probs[i];
        pos[i] = d > 0.0 ? d : 0.0;
        mass += pos[i];
    }
    if (mass <= 0.0) {
        throw ZeroMassError("residual: target nowhere exceeds draft");
    }
    for (double& v : pos) v /= mass;
    return Dist{std::move(pos)};
}

VerifyOutcome verify_round(std::span<const TokenId> tokens,
                           std::span<const double> q_vals,
                           std::span<const Dist> p_dists,
                           std::span<const Dist> q_dists,
                           std::uint64_t seed, std::uint64_t round) {
    const std::size_t gamma = tokens.size();
    if (q_vals.size() != gamma || p_dists.size() != gamma + 1) {
        throw ConfigError("verify_round: need gamma q_vals and gamma+1 p_dists");
    }
    if (!q_dists.empty() && q_dists.size() != gamma) {
        throw ConfigError("verify_round: q_dists must be empty or match tokens");
    }

    RngStream accept_rng{seed, round, RngRole::AcceptDraw};
    VerifyOutcome out;
    for (std::size_t j = 1; j <= gamma; ++j) {
        double p_val = p_dists[j - 1][tokens[j - 1]];
        double r = accept_rng.at(j - 1);
        if (accept_test(q_vals[j - 1], p_val, r)) {
            ++out.accepted_count;
            continue;
        }
        out.rejected = true;
        out.reject_position = static_cast<int>(j);
        if (!q_dists.empty()) {
            Dist res = residual(p_dists[j - 1], q_dists[j - 1]);
            double rr = RngStream{seed, round, RngRole::ResampleDraw}.at(0);
            out.result_token = sample(res, rr);
        }
        return out;
    }
    out.reject_position = static_cast<int>(gamma) + 1;
    double rb = RngStream{seed, round, RngRole::BonusDraw}.at(0);
    out.result_token = sample(p_dists[gamma], rb);
    return out;
}

DraftRound draft_tokens(const LanguageModel& mq, std::span<const TokenId> prefix,
                        int gamma, std::uint64_t seed, std::uint64_t round,
                        const SamplingConfig& sampling) {
    if (gamma < 1) throw ConfigError("draft_tokens: gamma must be >= 1");
    DraftRound dr;
    dr.tokens.reserve(gamma);
    dr.q_vals.reserve(gamma);
    dr.q_dists.reserve(gamma);

    std::vector<TokenId> ctx(prefix.begin(), prefix.end());
    RngStream draft_rng{seed, round, RngRole::DraftSample};
    for (int i = 0; i < gamma; ++i) {
        Dist q = top_k_filter(mq.next_dist(ctx), sampling.top_k, sampling.temperature);
        TokenId x = sample(q, draft_rng.at(static_cast<std::uint64_t>(i)));
        dr.q_vals.push_back(q[x]);
        dr.tokens.push_back(x);
        ctx.push_back(x);
        dr.q_dists.push_back(std::move(q));
    }
    return dr;
}

std::vector<Dist> target_dists(const LanguageModel& mp, std::span<const TokenId> prefix,
                               std::span<const TokenId> drafted,
                               const SamplingConfig& sampling) {
    std::vector<Dist> out;
    out.reserve(drafted.size() + 1);
    std::vector<TokenId> ctx(prefix.begin(), prefix.end());
    out.push_back(top_k_filter(mp.next_dist(ctx), sampling.top_k, sampling.temperature));
    for (TokenId t : drafted) {
        ctx.push_back(t);
        out.push_back(top_k_filter(mp.next_dist(ctx), sampling.top_k, sampling.temperature));
    }
    return out;
}

DecodeResult reference_decode(const LanguageModel& mq, const LanguageModel& mp,
                              std::span<const TokenId> prompt, int gamma,
                              int n_tokens, std::uint64_t seed,
                              const SamplingConfig& sampling) {
    if (n_tokens < 1) throw ConfigError("reference_decode: n_tokens must be >= 1");
    DecodeResult res;
    std::vector<TokenId> prefix(prompt.begin(), prompt.end());

    std::uint64_t round = 0;
    while (static_cast<int>(res.tokens.size()) < n_tokens) {
        DraftRound dr = draft_tokens(mq, prefix, gamma, seed, round, sampling);
        std::vector<Dist> pd = target_dists(mp, prefix, dr.tokens, sampling);
        VerifyOutcome out = verify_round(dr.tokens, dr.q_vals, pd, dr.q_dists, seed, round);

        for (int i = 0; i < out.accepted_count; ++i) {
            prefix.push_back(dr.tokens[i]);
            res.tokens.push_back(dr.tokens[i]);
        }
        prefix.push_back(*out.result_token);
        res.tokens.push_back(*out.result_token);

        res.outcomes.push_back(out);
        ++round;
    }
    res.rounds = static_cast<int>(round);
    return res;
}

Dist first_token_law(const Dist& p, const Dist& q) {
    if (p.size() != q.size()) throw ConfigError("first_token_law: size mismatch");
    std::vector<double> law(p.size(), 0.0);
    double accept_mass = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x) {
        double qx = q.probs[x];
        if (qx > 0.0) {
            law[x] = qx * accept_prob(qx, p.probs[x]);
            accept_mass += law[x];
        }
    }
    double reject_mass = 1.0 - accept_mass;
    if (reject_mass > 0.0) {
        // Residual can still be all-zero when p == q up to rounding; the
        // rejection branch then carries no mass and is dropped.
        double pos_mass = 0.0;
        for (std::size_t x = 0; x < p.size(); ++x) {
            double d = p.probs[x] - q.probs[x];
            if (d > 0.0) pos_mass += d;
        }
        if (pos_mass > 0.0) {
            Dist res = residual(p, q);
            for (std::size_t x = 0; x < p.size(); ++x) {
                law[x] += reject_mass * res.probs[x];
            }
        }
    }
    return Dist{std::move(law)};
}

}  // namespace specdec
