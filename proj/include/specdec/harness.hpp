#pragma once

#include <iosfwd>
#include <string>

#include "specdec/latency.hpp"
#include "specdec/session.hpp"
#include "specdec/stats.hpp"

namespace specdec {

const char* mode_name(Mode mode);

struct ExperimentConfig {
    std::vector<Mode> modes{Mode::Dssd};
    std::vector<int> gammas{8};
    std::vector<double> alphas{0.61};
    std::vector<double> ntt_ms_list{20.0};
    std::vector<double> up_mbps_list{100.0};
    std::vector<double> down_mbps_list{100.0};
    std::vector<std::uint64_t> seeds{1};
    VocabConfig vocab{50000, 16};
    double t_slm_ms = 2.0;
    double t_llm_ms = 20.0;
    int n_tokens = 128;
    int n_rounds = 0;  // nonzero: fixed round count per session instead
    int prompt_len = 128;
    SamplingConfig sampling{10, 1.0};
    TransportKind transport = TransportKind::Sim;
    int threads = 0;  // 0 = all hardware threads

    void validate() const;
};

// One grid point. Bytes and times are per-round means over the session;
// predicted values evaluate the closed forms at the measured alpha.
struct ReportRow {
    Mode mode = Mode::Dssd;
    int gamma = 0;
    double alpha_target = 0.0;
    double alpha_measured = 0.0;
    double ntt_ms = 0.0;
    double up_mbps = 0.0;
    double down_mbps = 0.0;
    double uplink_bytes_per_round = 0.0;
    double downlink_bytes_per_round = 0.0;
    double t_comm_ms_measured = 0.0;
    double t_comm_ms_predicted = 0.0;
    double tokens_per_round = 0.0;
    double throughput_tps = 0.0;
    double speedup_measured = 0.0;
    double speedup_predicted = 0.0;
    std::uint64_t seed = 0;
};

extern const char* const kReportHeader;

std::vector<ReportRow> cmd_run(const ExperimentConfig& cfg);

void write_report(std::ostream& os, std::span<const ReportRow> rows, const std::string& format);

// Prints the expected-communication grid (gamma in {2,4,6,8} by alpha in
// {0.5..0.99}, 8 ms payload, 20 ms round trip) and checks it against the
// published reference values. Returns 0, or 2 when any cell deviates by more
// than 0.01 ms.
int cmd_table1(std::ostream& os, const std::string& format);

struct ExactnessReport {
    int trials = 0;
    int samples = 0;
    double analytic_max_dev = 0.0;
    bool analytic_pass = false;
    ChiSquaredResult mc;
    bool mc_pass = false;
    bool used_paper_ratio = false;

    bool pass() const { return analytic_pass && mc_pass; }
};

// Analytic identity check (first_token_law == target) over random pairs plus a
// chi-squared Monte Carlo of the sampled first token. use_paper_ratio swaps
// the acceptance ratio for min{1, q/p}, which demonstrably breaks both.
ExactnessReport cmd_verify_exactness(std::uint32_t vocab_size, int trials, int samples,
                                     std::uint64_t seed, bool use_paper_ratio, int threads);

void write_exactness_report(std::ostream& os, const ExactnessReport& report);

struct SweepResult {
    std::vector<ReportRow> rows;
    int best_gamma = 0;
    double best_speedup = 0.0;
};

// Speedup per gamma at one fixed (mode, alpha, link, seed) point; requires all
// non-gamma grid lists to be singletons.
SweepResult cmd_sweep_gamma(const ExperimentConfig& cfg);

}  // namespace specdec
