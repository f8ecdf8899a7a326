#include "specdec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "specdec/kernel.hpp"
#include "specdec/models.hpp"
#include "specdec/parallel.hpp"

namespace specdec {

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Dsd:
            return "dsd";
        case Mode::Dssd:
            return "dssd";
        case Mode::LlmOnly:
            return "llm";
    }
    return "?";
}

const char* const kReportHeader =
    "mode,gamma,alpha_target,alpha_measured,ntt_ms,up_mbps,down_mbps,"
    "uplink_bytes_per_round,downlink_bytes_per_round,t_comm_ms_measured,"
    "t_comm_ms_predicted,tokens_per_round,throughput_tps,speedup_measured,"
    "speedup_predicted,seed";

void ExperimentConfig::validate() const {
    if (modes.empty() || gammas.empty() || alphas.empty() || ntt_ms_list.empty() ||
        up_mbps_list.empty() || down_mbps_list.empty() || seeds.empty()) {
        throw ConfigError("experiment: every grid list must be non-empty");
    }
    vocab.validate();
    for (int g : gammas) {
        if (g < 1) throw ConfigError("experiment: gamma must be >= 1");
    }
    for (double a : alphas) {
        if (!(a > 0.0) || a > 1.0) throw ConfigError("experiment: alpha must be in (0, 1]");
    }
    for (double ntt : ntt_ms_list) {
        if (ntt < 0.0) throw ConfigError("experiment: ntt_ms must be >= 0");
    }
    for (double r : up_mbps_list) {
        if (!(r > 0.0)) throw ConfigError("experiment: up_mbps must be > 0");
    }
    for (double r : down_mbps_list) {
        if (!(r > 0.0)) throw ConfigError("experiment: down_mbps must be > 0");
    }
    if (!(t_slm_ms > 0.0) || !(t_llm_ms > 0.0)) {
        throw ConfigError("experiment: model latencies must be > 0");
    }
    if (n_rounds < 0) throw ConfigError("experiment: rounds must be >= 0");
    if (n_rounds == 0 && n_tokens < 1) throw ConfigError("experiment: tokens must be >= 1");
    if (prompt_len < 0) throw ConfigError("experiment: prompt length must be >= 0");
    if (sampling.temperature <= 0.0) throw ConfigError("experiment: temperature must be > 0");
    if (threads < 0) throw ConfigError("experiment: threads must be >= 0");
}

namespace {

struct GridPoint {
    Mode mode;
    int gamma;
    double alpha;
    double ntt_ms;
    double up_mbps;
    double down_mbps;
    std::uint64_t seed;
};

std::vector<GridPoint> expand_grid(const ExperimentConfig& cfg) {
    std::vector<GridPoint> pts;
    for (Mode m : cfg.modes)
        for (int g : cfg.gammas)
            for (double a : cfg.alphas)
                for (double ntt : cfg.ntt_ms_list)
                    for (double up : cfg.up_mbps_list)
                        for (double down : cfg.down_mbps_list)
                            for (std::uint64_t s : cfg.seeds) {
                                pts.push_back({m, g, a, ntt, up, down, s});
                            }
    return pts;
}

// Model tables depend only on (alpha, seed) given the fixed vocab/sampling,
// so they are built once, serially, and shared read-only across grid points.
using PairKey = std::pair<double, std::uint64_t>;

std::map<PairKey, ModelPair> build_pairs(const ExperimentConfig& cfg) {
    std::map<PairKey, ModelPair> pairs;
    for (double a : cfg.alphas) {
        for (std::uint64_t s : cfg.seeds) {
            PairKey key{a, s};
            if (pairs.count(key)) continue;
            CalibratedPairConfig mc;
            mc.alpha_target = a;
            mc.vocab_size = cfg.vocab.size;
            mc.n_contexts = 64;
            mc.context_order = 1;
            mc.support = cfg.sampling.top_k == 0
                             ? 0
                             : std::min(cfg.sampling.top_k, cfg.vocab.size);
            mc.seed = s;
            mc.t_slm_ms = cfg.t_slm_ms;
            mc.t_llm_ms = cfg.t_llm_ms;
            pairs.emplace(key, calibrated_pair(mc));
        }
    }
    return pairs;
}

SessionConfig session_for(const ExperimentConfig& cfg, const GridPoint& pt) {
    SessionConfig sc;
    sc.mode = pt.mode;
    sc.gamma = pt.mode == Mode::LlmOnly ? 1 : pt.gamma;
    sc.n_tokens = cfg.n_tokens;
    sc.n_rounds = cfg.n_rounds;
    sc.seed = pt.seed;
    sc.vocab = cfg.vocab;
    sc.link = LinkConfig{pt.up_mbps, pt.down_mbps, pt.ntt_ms};
    sc.sampling = cfg.sampling;
    sc.prompt = make_prompt(pt.seed, cfg.prompt_len, cfg.vocab.size);
    return sc;
}

ReportRow run_point(const ExperimentConfig& cfg, const GridPoint& pt, const ModelPair& pair) {
    SessionConfig sc = session_for(cfg, pt);
    // The baseline mode has no link traffic, so it always runs on the simulator.
    SessionTranscript tr = pt.mode == Mode::LlmOnly
                               ? run_session_sim(sc, *pair.draft, *pair.target)
                               : run_session(sc, *pair.draft, *pair.target, cfg.transport);

    // LLM-only baseline at the same t_llm; link-free by construction, so the
    // simulator serves both transports.
    SessionConfig base = sc;
    base.mode = Mode::LlmOnly;
    SessionTranscript llm = run_session_sim(base, *pair.draft, *pair.target);

    ReportRow row;
    row.mode = pt.mode;
    row.gamma = pt.mode == Mode::LlmOnly ? 0 : pt.gamma;
    row.alpha_target = pt.alpha;
    row.alpha_measured = tr.measured_alpha();
    row.ntt_ms = pt.ntt_ms;
    row.up_mbps = pt.up_mbps;
    row.down_mbps = pt.down_mbps;
    row.uplink_bytes_per_round = tr.mean_uplink_bits() / 8.0;
    row.downlink_bytes_per_round = tr.mean_downlink_bits() / 8.0;
    row.t_comm_ms_measured = tr.mean_t_comm_ms();
    row.tokens_per_round = tr.tokens_per_round();
    row.seed = pt.seed;

    // Sim throughput/speedup live on the virtual clock; socket rows use wall
    // time against the analytic one-token-per-t_llm baseline instead.
    double llm_tps = llm.throughput_tps();
    if (cfg.transport == TransportKind::Sim || pt.mode == Mode::LlmOnly) {
        row.throughput_tps = tr.throughput_tps();
    } else {
        row.throughput_tps =
            tr.wall_ms > 0.0 ? static_cast<double>(tr.tokens.size()) / (tr.wall_ms / 1e3) : 0.0;
    }
    row.speedup_measured = llm_tps > 0.0 ? row.throughput_tps / llm_tps : 0.0;

    if (pt.mode == Mode::LlmOnly) {
        row.t_comm_ms_predicted = 0.0;
        row.speedup_predicted = 1.0;
    } else {
        TimingParams tp;
        tp.t_slm_ms = cfg.t_slm_ms;
        tp.t_llm_ms = cfg.t_llm_ms;
        tp.gamma = pt.gamma;
        tp.alpha = row.alpha_measured;
        tp.vocab = cfg.vocab;
        tp.link = sc.link;
        row.t_comm_ms_predicted =
            pt.mode == Mode::Dsd ? t_comm_dsd(tp) : t_comm_dssd_expected(tp);
        row.speedup_predicted = predicted_speedup(pt.mode, tp);
    }
    return row;
}

void append_csv(std::string& out, const ReportRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
                  "%.10g,%.10g,%llu",
                  mode_name(r.mode), r.gamma, r.alpha_target, r.alpha_measured, r.ntt_ms,
                  r.up_mbps, r.down_mbps, r.uplink_bytes_per_round, r.downlink_bytes_per_round,
                  r.t_comm_ms_measured, r.t_comm_ms_predicted, r.tokens_per_round,
                  r.throughput_tps, r.speedup_measured, r.speedup_predicted,
                  static_cast<unsigned long long>(r.seed));
    out += buf;
    out += '\n';
}

}  // namespace

std::vector<ReportRow> cmd_run(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<GridPoint> pts = expand_grid(cfg);
    std::map<PairKey, ModelPair> pairs = build_pairs(cfg);

    int threads = cfg.threads == 0 ? hardware_threads() : cfg.threads;
    // Socket sessions bind real ports; run them one at a time.
    if (cfg.transport == TransportKind::Socket) threads = 1;

    std::vector<ReportRow> rows(pts.size());
    parallel_for(pts.size(), threads, [&](std::size_t i) {
        const GridPoint& pt = pts[i];
        rows[i] = run_point(cfg, pt, pairs.at(PairKey{pt.alpha, pt.seed}));
    });
    return rows;
}

void write_report(std::ostream& os, std::span<const ReportRow> rows, const std::string& format) {
    if (format == "csv") {
        std::string out(kReportHeader);
        out += '\n';
        for (const auto& r : rows) append_csv(out, r);
        os << out;
        return;
    }
    if (format != "md") throw ConfigError("write_report: format must be csv or md");
    os << "| mode | gamma | alpha_target | alpha_measured | ntt_ms | up_mbps | down_mbps | "
          "up_B/round | down_B/round | t_comm_meas | t_comm_pred | tok/round | tps | "
          "speedup_meas | speedup_pred | seed |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "| %s | %d | %.3g | %.4g | %.4g | %.4g | %.4g | %.6g | %.6g | %.4f | %.4f "
                      "| %.3f | %.2f | %.3f | %.3f | %llu |\n",
                      mode_name(r.mode), r.gamma, r.alpha_target, r.alpha_measured, r.ntt_ms,
                      r.up_mbps, r.down_mbps, r.uplink_bytes_per_round,
                      r.downlink_bytes_per_round, r.t_comm_ms_measured, r.t_comm_ms_predicted,
                      r.tokens_per_round, r.throughput_tps, r.speedup_measured,
                      r.speedup_predicted, static_cast<unsigned long long>(r.seed));
        os << buf;
    }
}

namespace {

// Published reference grid: rejection probability and expected communication
// time (ms) for an 8 ms distribution payload and 20 ms round trip, printed to
// two decimals.
struct Table1Cell {
    double rejection;
    double t_comm_ms;
};

constexpr int kTable1Gammas[] = {2, 4, 6, 8};
constexpr double kTable1Alphas[] = {0.5, 0.6, 0.7, 0.8, 0.9, 0.99};
constexpr Table1Cell kTable1Expected[4][6] = {
    {{0.75, 26.00}, {0.64, 25.12}, {0.51, 24.08}, {0.36, 22.88}, {0.19, 21.52}, {0.02, 20.16}},
    {{0.94, 27.50}, {0.87, 26.96}, {0.76, 26.08}, {0.59, 24.72}, {0.34, 22.75}, {0.04, 20.32}},
    {{0.98, 27.88}, {0.95, 27.63}, {0.88, 27.06}, {0.74, 25.90}, {0.47, 23.75}, {0.06, 20.47}},
    {{1.00, 27.97}, {0.98, 27.87}, {0.94, 27.54}, {0.83, 26.66}, {0.57, 24.56}, {0.08, 20.62}},
};
constexpr double kTable1PayloadMs = 8.0;
constexpr double kTable1NttMs = 20.0;

}  // namespace

int cmd_table1(std::ostream& os, const std::string& format) {
    std::vector<CommGridCell> cells =
        comm_grid(kTable1Gammas, kTable1Alphas, kTable1PayloadMs, kTable1NttMs);

    bool ok = true;
    char buf[256];
    if (format == "md") {
        os << "| gamma \\ alpha | 0.5 | 0.6 | 0.7 | 0.8 | 0.9 | 0.99 |\n";
        os << "|---|---|---|---|---|---|---|\n";
    } else if (format == "csv") {
        os << "gamma,alpha,rejection_prob,t_comm_ms\n";
    } else {
        throw ConfigError("cmd_table1: format must be csv or md");
    }

    for (int gi = 0; gi < 4; ++gi) {
        if (format == "md") os << "| " << kTable1Gammas[gi] << " |";
        for (int ai = 0; ai < 6; ++ai) {
            const CommGridCell& c = cells[static_cast<std::size_t>(gi) * 6 + ai];
            const Table1Cell& want = kTable1Expected[gi][ai];
            if (std::abs(c.t_comm_ms - want.t_comm_ms) > 0.01 ||
                std::abs(c.rejection_prob - want.rejection) > 0.005) {
                ok = false;
            }
            if (format == "md") {
                std::snprintf(buf, sizeof(buf), " %.2f (%.2f ms) |", c.rejection_prob,
                              c.t_comm_ms);
                os << buf;
            } else {
                std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g\n", c.gamma, c.alpha,
                              c.rejection_prob, c.t_comm_ms);
                os << buf;
            }
        }
        if (format == "md") os << "\n";
    }
    if (!ok) os << (format == "md" ? "\n**MISMATCH against the reference grid**\n"
                                   : "# MISMATCH against the reference grid\n");
    return ok ? 0 : 2;
}

namespace {

double u01(std::uint64_t seed, std::uint64_t stream, std::uint64_t i) {
    std::uint64_t h = splitmix64(seed ^ 0x7645a32b9e8dd1c3ULL);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ i);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

Dist random_dist(std::uint32_t n, std::uint64_t seed, std::uint64_t stream) {
    std::vector<double> raw(n);
    for (std::uint32_t i = 0; i < n; ++i) raw[i] = -std::log1p(-u01(seed, stream, i));
    return normalize(raw);
}

// Pair generator for exactness trials. Every third trial masks complementary
// halves of the supports so zero draft/target entries are exercised too.
std::pair<Dist, Dist> trial_pair(std::uint32_t n, std::uint64_t seed, std::uint64_t trial) {
    Dist p = random_dist(n, seed, 2 * trial);
    Dist q = random_dist(n, seed, 2 * trial + 1);
    if (trial % 3 == 2 && n >= 4) {
        std::vector<double> pr = p.probs;
        std::vector<double> qr = q.probs;
        for (std::uint32_t i = 0; i < n / 4; ++i) pr[i] = 0.0;
        for (std::uint32_t i = n - n / 4; i < n; ++i) qr[i] = 0.0;
        p = normalize(pr);
        q = normalize(qr);
    }
    return {p, q};
}

double paper_ratio_prob(double q_val, double p_val) {
    if (p_val <= 0.0) return 1.0;
    return std::min(1.0, q_val / p_val);
}

Dist first_token_law_paper_ratio(const Dist& p, const Dist& q) {
    std::vector<double> law(p.size(), 0.0);
    double accept_mass = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x) {
        double qx = q.probs[x];
        if (qx > 0.0) {
            law[x] = qx * paper_ratio_prob(qx, p.probs[x]);
            accept_mass += law[x];
        }
    }
    double reject_mass = 1.0 - accept_mass;
    if (reject_mass > 0.0) {
        double pos = 0.0;
        for (std::size_t x = 0; x < p.size(); ++x) {
            double d = p.probs[x] - q.probs[x];
            if (d > 0.0) pos += d;
        }
        if (pos > 0.0) {
            Dist res = residual(p, q);
            for (std::size_t x = 0; x < p.size(); ++x) law[x] += reject_mass * res.probs[x];
        }
    }
    return Dist{std::move(law)};
}

}  // namespace

ExactnessReport cmd_verify_exactness(std::uint32_t vocab_size, int trials, int samples,
                                     std::uint64_t seed, bool use_paper_ratio, int threads) {
    if (vocab_size < 2) throw ConfigError("verify_exactness: vocab_size must be >= 2");
    if (trials < 1 || samples < 1) {
        throw ConfigError("verify_exactness: trials and samples must be >= 1");
    }
    if (threads < 0) throw ConfigError("verify_exactness: threads must be >= 0");
    int nthreads = threads == 0 ? hardware_threads() : threads;

    ExactnessReport rep;
    rep.trials = trials;
    rep.samples = samples;
    rep.used_paper_ratio = use_paper_ratio;

    // Analytic: the emitted-token law must reproduce the target exactly.
    std::vector<double> devs(static_cast<std::size_t>(trials), 0.0);
    parallel_for(static_cast<std::size_t>(trials), nthreads, [&](std::size_t t) {
        auto [p, q] = trial_pair(vocab_size, seed, t);
        Dist law = use_paper_ratio ? first_token_law_paper_ratio(p, q) : first_token_law(p, q);
        double dev = 0.0;
        for (std::size_t x = 0; x < p.size(); ++x) {
            dev = std::max(dev, std::abs(law.probs[x] - p.probs[x]));
        }
        devs[t] = dev;
    });
    rep.analytic_max_dev = *std::max_element(devs.begin(), devs.end());
    rep.analytic_pass = rep.analytic_max_dev < 1e-12;

    // Monte Carlo: sample the mechanism end to end and test the first-token
    // histogram against the target.
    Dist p = random_dist(vocab_size, seed, 0xa1);
    Dist q = random_dist(vocab_size, seed, 0xa2);
    Dist res = residual(p, q);
    std::vector<TokenId> emitted(static_cast<std::size_t>(samples));
    parallel_for(static_cast<std::size_t>(samples), nthreads, [&](std::size_t i) {
        TokenId x = sample(q, u01(seed, 0xb1, i));
        double pr = use_paper_ratio ? paper_ratio_prob(q[x], p[x]) : accept_prob(q[x], p[x]);
        if (u01(seed, 0xb2, i) < pr) {
            emitted[i] = x;
        } else {
            emitted[i] = sample(res, u01(seed, 0xb3, i));
        }
    });
    std::vector<std::uint64_t> counts(vocab_size, 0);
    for (TokenId t : emitted) ++counts[t];
    rep.mc = chi_squared_gof(counts, p.probs);
    rep.mc_pass = rep.mc.p_value > 1e-3;
    return rep;
}

void write_exactness_report(std::ostream& os, const ExactnessReport& rep) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "acceptance ratio: %s\n"
                  "analytic identity: max |law - target|_inf = %.3e over %d trials -> %s\n"
                  "monte carlo: chi2 = %.3f (dof %d), p = %.4g over %d samples -> %s\n"
                  "overall: %s\n",
                  rep.used_paper_ratio ? "min{1, q/p} (diagnostic)" : "min{1, p/q}",
                  rep.analytic_max_dev, rep.trials, rep.analytic_pass ? "PASS" : "FAIL",
                  rep.mc.stat, rep.mc.dof, rep.mc.p_value, rep.samples,
                  rep.mc_pass ? "PASS" : "FAIL", rep.pass() ? "PASS" : "FAIL");
    os << buf;
}

SweepResult cmd_sweep_gamma(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.modes.size() != 1 || cfg.alphas.size() != 1 || cfg.ntt_ms_list.size() != 1 ||
        cfg.up_mbps_list.size() != 1 || cfg.down_mbps_list.size() != 1 || cfg.seeds.size() != 1) {
        throw ConfigError("sweep_gamma: fix one mode, alpha, link and seed; sweep only gamma");
    }
    if (cfg.modes[0] == Mode::LlmOnly) {
        throw ConfigError("sweep_gamma: baseline mode has no gamma to sweep");
    }
    SweepResult res;
    res.rows = cmd_run(cfg);
    const ReportRow* best = nullptr;
    for (const auto& r : res.rows) {
        if (!best || r.speedup_measured > best->speedup_measured) best = &r;
    }
    res.best_gamma = best->gamma;
    res.best_speedup = best->speedup_measured;
    return res;
}

}  // namespace specdec
