#include "specdec/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "specdec/kernel.hpp"

namespace specdec {

double overlap_alpha(const Dist& p, const Dist& q) {
    if (p.size() != q.size()) throw ConfigError("overlap_alpha: size mismatch");
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) a += std::min(p.probs[i], q.probs[i]);
    return a;
}

Dist derive_draft_dist(const Dist& p, double alpha_target) {
    if (!(alpha_target > 0.0) || alpha_target > 1.0) {
        throw ConfigError("derive_draft_dist: alpha_target must be in (0, 1]");
    }
    const std::size_t n = p.size();
    if (n < 2) throw ConfigError("derive_draft_dist: need at least 2 entries");

    std::vector<double> q(p.probs);
    double delta = 1.0 - alpha_target;
    if (delta <= 0.0) return Dist{std::move(q)};

    // Receiver: smallest entry (lowest index on ties). min(p_r, p_r + delta)
    // stays p_r, so the moved mass never counts toward the overlap.
    std::size_t receiver = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (p.probs[i] < p.probs[receiver]) receiver = i;
    }
    if (alpha_target < p.probs[receiver] - 1e-15) {
        throw CalibrationInfeasibleError(
            "derive_draft_dist: alpha_target below the smallest entry; closest achievable is " +
                std::to_string(p.probs[receiver]),
            p.probs[receiver]);
    }

    // Donors: largest entries first, each drained at most to zero.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (p.probs[a] != p.probs[b]) return p.probs[a] > p.probs[b];
        return a < b;
    });
    double remaining = delta;
    for (std::uint32_t i : order) {
        if (i == receiver) continue;
        if (remaining <= 0.0) break;
        double give = std::min(q[i], remaining);
        q[i] -= give;
        remaining -= give;
    }
    if (remaining > 1e-12) {
        throw CalibrationInfeasibleError(
            "derive_draft_dist: donors exhausted; closest achievable is " +
                std::to_string(alpha_target + remaining),
            alpha_target + remaining);
    }
    q[receiver] += delta;
    return Dist{std::move(q)};
}

namespace {

class TableModel : public LanguageModel {
public:
    explicit TableModel(TableFixture fx) : fx_(std::move(fx)) {
        if (fx_.vocab < 2) throw ConfigError("table_model: vocab must be >= 2");
        if (fx_.order < 0) throw ConfigError("table_model: order must be >= 0");
        check_dist(fx_.fallback);
        for (auto& [ctx, d] : fx_.entries) {
            check_dist(d);
            table_.emplace(ctx, d);
        }
    }

    Dist next_dist(std::span<const TokenId> prefix) const override {
        std::size_t take = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(fx_.order));
        std::vector<TokenId> key(prefix.end() - take, prefix.end());
        auto it = table_.find(key);
        return it != table_.end() ? it->second : fx_.fallback;
    }

    double latency_ms() const override { return fx_.latency_ms; }
    std::uint32_t vocab_size() const override { return fx_.vocab; }

private:
    void check_dist(const Dist& d) const {
        if (d.size() != fx_.vocab) throw ConfigError("table_model: distribution size != vocab");
        if (!d.is_valid()) throw ConfigError("table_model: invalid distribution");
    }

    TableFixture fx_;
    std::map<std::vector<TokenId>, Dist> table_;
};

void write_probs(std::ostream& os, const Dist& d) {
    char buf[32];
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", d.probs[i]);
        os << (i ? " " : "") << buf;
    }
    os << "\n";
}

Dist read_probs(std::istream& is, std::uint32_t vocab) {
    Dist d;
    d.probs.resize(vocab);
    for (std::uint32_t i = 0; i < vocab; ++i) {
        if (!(is >> d.probs[i])) throw ConfigError("table fixture: truncated distribution");
    }
    return d;
}

// Stream-id'd deterministic uniforms for table generation, kept separate from
// RngStream so generation draws can never collide with protocol draws.
double gen_u01(std::uint64_t seed, std::uint64_t stream, std::uint64_t bucket, std::uint64_t i) {
    std::uint64_t h = splitmix64(seed ^ 0x9d5c4a08c1b2e3f4ULL);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ bucket);
    h = splitmix64(h ^ i);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct SparseDist {
    std::vector<TokenId> idx;
    std::vector<double> val;
};

struct CalibratedTables {
    CalibratedPairConfig cfg;
    std::vector<SparseDist> target;
    std::vector<SparseDist> draft;
};

std::uint64_t context_bucket(std::span<const TokenId> prefix, int order, std::uint32_t n_contexts) {
    std::size_t take = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(order));
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::size_t i = prefix.size() - take; i < prefix.size(); ++i) {
        h = splitmix64(h ^ prefix[i]);
    }
    h = splitmix64(h ^ take);
    return h % n_contexts;
}

class CalibratedModel : public LanguageModel {
public:
    CalibratedModel(std::shared_ptr<const CalibratedTables> tables, bool is_draft, double latency)
        : tables_(std::move(tables)), is_draft_(is_draft), latency_(latency) {}

    Dist next_dist(std::span<const TokenId> prefix) const override {
        const auto& cfg = tables_->cfg;
        std::uint64_t b = context_bucket(prefix, cfg.context_order, cfg.n_contexts);
        const SparseDist& s = is_draft_ ? tables_->draft[b] : tables_->target[b];
        Dist d;
        d.probs.assign(cfg.vocab_size, 0.0);
        for (std::size_t i = 0; i < s.idx.size(); ++i) d.probs[s.idx[i]] = s.val[i];
        return d;
    }

    double latency_ms() const override { return latency_; }
    std::uint32_t vocab_size() const override { return tables_->cfg.vocab_size; }

private:
    std::shared_ptr<const CalibratedTables> tables_;
    bool is_draft_;
    double latency_;
};

class LatencyOverride : public LanguageModel {
public:
    LatencyOverride(std::shared_ptr<const LanguageModel> inner, double ms)
        : inner_(std::move(inner)), ms_(ms) {}

    Dist next_dist(std::span<const TokenId> prefix) const override {
        return inner_->next_dist(prefix);
    }
    double latency_ms() const override { return ms_; }
    std::uint32_t vocab_size() const override { return inner_->vocab_size(); }

private:
    std::shared_ptr<const LanguageModel> inner_;
    double ms_;
};

}  // namespace

std::shared_ptr<LanguageModel> table_model(const TableFixture& fixture) {
    return std::make_shared<TableModel>(fixture);
}

void write_table_fixture(std::ostream& os, const TableFixture& fx) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", fx.latency_ms);
    os << "vocab " << fx.vocab << "\n"
       << "order " << fx.order << "\n"
       << "latency_ms " << buf << "\n";
    os << "fallback ";
    write_probs(os, fx.fallback);
    for (const auto& [ctx, d] : fx.entries) {
        os << "ctx " << ctx.size();
        for (TokenId t : ctx) os << " " << t;
        os << " : ";
        write_probs(os, d);
    }
}

TableFixture read_table_fixture(std::istream& is) {
    TableFixture fx;
    std::string word;
    if (!(is >> word) || word != "vocab" || !(is >> fx.vocab)) {
        throw ConfigError("table fixture: expected 'vocab <n>'");
    }
    if (!(is >> word) || word != "order" || !(is >> fx.order)) {
        throw ConfigError("table fixture: expected 'order <n>'");
    }
    if (!(is >> word) || word != "latency_ms" || !(is >> fx.latency_ms)) {
        throw ConfigError("table fixture: expected 'latency_ms <x>'");
    }
    if (!(is >> word) || word != "fallback") {
        throw ConfigError("table fixture: expected 'fallback'");
    }
    fx.fallback = read_probs(is, fx.vocab);
    while (is >> word) {
        if (word != "ctx") throw ConfigError("table fixture: expected 'ctx'");
        std::size_t len = 0;
        if (!(is >> len)) throw ConfigError("table fixture: bad ctx length");
        std::vector<TokenId> ctx(len);
        for (auto& t : ctx) {
            if (!(is >> t)) throw ConfigError("table fixture: truncated ctx");
        }
        if (!(is >> word) || word != ":") throw ConfigError("table fixture: expected ':'");
        fx.entries.emplace_back(std::move(ctx), read_probs(is, fx.vocab));
    }
    return fx;
}

std::shared_ptr<LanguageModel> with_latency(std::shared_ptr<const LanguageModel> inner,
                                            double latency_ms) {
    return std::make_shared<LatencyOverride>(std::move(inner), latency_ms);
}

void CalibratedPairConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("calibrated_pair: vocab_size must be >= 2");
    if (n_contexts < 1) throw ConfigError("calibrated_pair: n_contexts must be >= 1");
    if (context_order < 0) throw ConfigError("calibrated_pair: context_order must be >= 0");
    if (support == 1) throw ConfigError("calibrated_pair: support must be 0 or >= 2");
    if (support > vocab_size) throw ConfigError("calibrated_pair: support exceeds vocab");
    if (!(alpha_target > 0.0) || alpha_target > 1.0) {
        throw ConfigError("calibrated_pair: alpha_target must be in (0, 1]");
    }
    if (t_slm_ms < 0.0 || t_llm_ms < 0.0) {
        throw ConfigError("calibrated_pair: latencies must be >= 0");
    }
}

ModelPair calibrated_pair(const CalibratedPairConfig& cfg) {
    cfg.validate();
    auto tables = std::make_shared<CalibratedTables>();
    tables->cfg = cfg;
    tables->target.resize(cfg.n_contexts);
    tables->draft.resize(cfg.n_contexts);

    const std::uint32_t s = cfg.support == 0 ? cfg.vocab_size : cfg.support;
    for (std::uint32_t b = 0; b < cfg.n_contexts; ++b) {
        // Support: s distinct tokens per bucket.
        std::vector<TokenId> idx;
        if (s == cfg.vocab_size) {
            idx.resize(s);
            std::iota(idx.begin(), idx.end(), 0u);
        } else {
            std::unordered_set<TokenId> seen;
            idx.reserve(s);
            for (std::uint64_t draw = 0; idx.size() < s; ++draw) {
                auto t = static_cast<TokenId>(
                    static_cast<std::uint64_t>(gen_u01(cfg.seed, 1, b, draw) * cfg.vocab_size));
                if (t >= cfg.vocab_size) t = cfg.vocab_size - 1;
                if (seen.insert(t).second) idx.push_back(t);
            }
            std::sort(idx.begin(), idx.end());
        }

        // Target mass: normalized exponential variates on the support.
        std::vector<double> raw(s);
        for (std::uint32_t i = 0; i < s; ++i) {
            raw[i] = -std::log1p(-gen_u01(cfg.seed, 2, b, i));
        }
        Dist p_support = normalize(raw);
        Dist q_support = derive_draft_dist(p_support, cfg.alpha_target);

        auto compact = [&](const Dist& d) {
            SparseDist sd;
            for (std::uint32_t i = 0; i < s; ++i) {
                if (d.probs[i] > 0.0) {
                    sd.idx.push_back(idx[i]);
                    sd.val.push_back(d.probs[i]);
                }
            }
            return sd;
        };
        tables->target[b] = compact(p_support);
        tables->draft[b] = compact(q_support);
    }

    ModelPair pair;
    pair.draft = std::make_shared<CalibratedModel>(tables, true, cfg.t_slm_ms);
    pair.target = std::make_shared<CalibratedModel>(tables, false, cfg.t_llm_ms);
    return pair;
}

double measure_alpha(const LanguageModel& mq, const LanguageModel& mp,
                     std::span<const TokenId> prompt, int gamma, int rounds,
                     std::uint64_t seed, const SamplingConfig& sampling) {
    if (rounds < 1) throw ConfigError("measure_alpha: rounds must be >= 1");
    std::vector<TokenId> prefix(prompt.begin(), prompt.end());
    std::uint64_t accepted = 0;
    std::uint64_t presented = 0;
    for (int r = 0; r < rounds; ++r) {
        auto round = static_cast<std::uint64_t>(r);
        DraftRound dr = draft_tokens(mq, prefix, gamma, seed, round, sampling);
        std::vector<Dist> pd = target_dists(mp, prefix, dr.tokens, sampling);
        VerifyOutcome out = verify_round(dr.tokens, dr.q_vals, pd, dr.q_dists, seed, round);

        accepted += static_cast<std::uint64_t>(out.accepted_count);
        presented += static_cast<std::uint64_t>(out.accepted_count) + (out.rejected ? 1 : 0);
        for (int i = 0; i < out.accepted_count; ++i) prefix.push_back(dr.tokens[i]);
        prefix.push_back(*out.result_token);
    }
    if (presented == 0) throw ConfigError("measure_alpha: no tokens presented");
    return static_cast<double>(accepted) / static_cast<double>(presented);
}

}  // namespace specdec
