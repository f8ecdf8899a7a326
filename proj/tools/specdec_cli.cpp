#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "specdec/harness.hpp"
#include "specdec/models.hpp"
#include "specdec/socket.hpp"
#include "specdec/wire.hpp"

namespace {

using namespace specdec;

Mode parse_mode(const std::string& s) {
    if (s == "dsd") return Mode::Dsd;
    if (s == "dssd") return Mode::Dssd;
    if (s == "llm") return Mode::LlmOnly;
    throw ConfigError("mode must be dsd, dssd or llm, got " + s);
}

struct CliOptions {
    std::vector<std::string> modes;
    std::vector<int> gammas;
    std::vector<double> alphas;
    std::vector<double> ntt_ms;
    std::vector<double> up_mbps;
    std::vector<double> down_mbps;
    std::vector<std::uint64_t> seeds;
    std::uint32_t vocab_size = 0;
    int bprob = 0;
    double t_slm_ms = 0.0;
    double t_llm_ms = 0.0;
    int tokens = 0;
    int rounds = -1;
    int prompt_len = -1;
    int threads = -1;
    std::string transport;
    std::string listen;
    std::string connect;
    std::string format = "csv";
    std::string out;
};

void add_experiment_flags(CLI::App* cmd, CliOptions& o) {
    cmd->add_option("--mode", o.modes, "decoding mode: dsd, dssd or llm (repeatable)");
    cmd->add_option("--gamma", o.gammas, "draft tokens per round (repeatable)");
    cmd->add_option("--alpha", o.alphas, "target acceptance rate in (0,1] (repeatable)");
    cmd->add_option("--vocab-size", o.vocab_size, "vocabulary size");
    cmd->add_option("--bprob", o.bprob, "wire bits per probability: 16 or 32");
    cmd->add_option("--up-mbps", o.up_mbps, "uplink rate in Mbps (repeatable)");
    cmd->add_option("--down-mbps", o.down_mbps, "downlink rate in Mbps (repeatable)");
    cmd->add_option("--ntt-ms", o.ntt_ms, "network round-trip overhead in ms (repeatable)");
    cmd->add_option("--t-slm-ms", o.t_slm_ms, "draft model latency per call, ms");
    cmd->add_option("--t-llm-ms", o.t_llm_ms, "target model latency per call, ms");
    cmd->add_option("--tokens", o.tokens, "tokens to generate per session");
    cmd->add_option("--rounds", o.rounds, "run a fixed round count instead of a token count");
    cmd->add_option("--prompt-len", o.prompt_len, "prompt length in tokens");
    cmd->add_option("--seed", o.seeds, "session seed (repeatable)");
    cmd->add_option("--transport", o.transport, "sim or tcp")
        ->check(CLI::IsMember({"sim", "tcp"}));
    cmd->add_option("--listen", o.listen, "serve the edge side on host:port (tcp)");
    cmd->add_option("--connect", o.connect, "run the device side against host:port (tcp)");
    cmd->add_option("--threads", o.threads, "worker threads for grid points (0 = all)");
    cmd->add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "md"}));
    cmd->add_option("--out", o.out, "write the report to a file instead of stdout");
}

ExperimentConfig to_experiment(const CliOptions& o) {
    ExperimentConfig cfg;
    if (!o.modes.empty()) {
        cfg.modes.clear();
        for (const auto& m : o.modes) cfg.modes.push_back(parse_mode(m));
    }
    if (!o.gammas.empty()) cfg.gammas = o.gammas;
    if (!o.alphas.empty()) cfg.alphas = o.alphas;
    if (!o.ntt_ms.empty()) cfg.ntt_ms_list = o.ntt_ms;
    if (!o.up_mbps.empty()) cfg.up_mbps_list = o.up_mbps;
    if (!o.down_mbps.empty()) cfg.down_mbps_list = o.down_mbps;
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (o.vocab_size != 0) cfg.vocab.size = o.vocab_size;
    if (o.bprob != 0) cfg.vocab.b_prob = o.bprob;
    if (o.t_slm_ms != 0.0) cfg.t_slm_ms = o.t_slm_ms;
    if (o.t_llm_ms != 0.0) cfg.t_llm_ms = o.t_llm_ms;
    if (o.tokens != 0) cfg.n_tokens = o.tokens;
    if (o.rounds >= 0) cfg.n_rounds = o.rounds;
    if (o.prompt_len >= 0) cfg.prompt_len = o.prompt_len;
    if (o.threads >= 0) cfg.threads = o.threads;
    if (o.transport == "tcp") cfg.transport = TransportKind::Socket;
    return cfg;
}

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon + 1 >= s.size()) {
        throw ConfigError("expected host:port, got " + s);
    }
    std::string host = s.substr(0, colon);
    int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 0xffff) throw ConfigError("port out of range in " + s);
    if (host.empty() || host == "localhost") host = "127.0.0.1";
    return {host, static_cast<std::uint16_t>(port)};
}

// --listen/--connect run one endpoint of a single grid point in this process.
ModelPair point_models(const ExperimentConfig& cfg) {
    if (cfg.alphas.size() != 1 || cfg.gammas.size() != 1 || cfg.modes.size() != 1 ||
        cfg.seeds.size() != 1 || cfg.ntt_ms_list.size() != 1 || cfg.up_mbps_list.size() != 1 ||
        cfg.down_mbps_list.size() != 1) {
        throw ConfigError("tcp endpoints need a single mode/gamma/alpha/link/seed point");
    }
    CalibratedPairConfig mc;
    mc.alpha_target = cfg.alphas[0];
    mc.vocab_size = cfg.vocab.size;
    mc.n_contexts = 64;
    mc.context_order = 1;
    mc.support =
        cfg.sampling.top_k == 0 ? 0 : std::min(cfg.sampling.top_k, cfg.vocab.size);
    mc.seed = cfg.seeds[0];
    mc.t_slm_ms = cfg.t_slm_ms;
    mc.t_llm_ms = cfg.t_llm_ms;
    return calibrated_pair(mc);
}

SessionConfig point_session(const ExperimentConfig& cfg) {
    SessionConfig sc;
    sc.mode = cfg.modes[0];
    sc.gamma = cfg.gammas[0];
    sc.n_tokens = cfg.n_tokens;
    sc.n_rounds = cfg.n_rounds;
    sc.seed = cfg.seeds[0];
    sc.vocab = cfg.vocab;
    sc.link = LinkConfig{cfg.up_mbps_list[0], cfg.down_mbps_list[0], cfg.ntt_ms_list[0]};
    sc.sampling = cfg.sampling;
    sc.prompt = make_prompt(cfg.seeds[0], cfg.prompt_len, cfg.vocab.size);
    sc.edge_latency_ms = cfg.t_llm_ms;  // virtual accounting on the device side
    return sc;
}

int run_command(const CliOptions& o) {
    ExperimentConfig cfg = to_experiment(o);

    if (!o.listen.empty() && !o.connect.empty()) {
        throw ConfigError("--listen and --connect are mutually exclusive");
    }
    if (!o.listen.empty()) {
        cfg.validate();
        std::uint16_t port = parse_host_port(o.listen).second;  // binds loopback
        ModelPair pair = point_models(cfg);
        SessionConfig sc = point_session(cfg);
        std::uint16_t bound = 0;
        int fd = socket_listen(port, &bound);
        std::printf("listening on 127.0.0.1:%u\n", bound);
        std::fflush(stdout);
        serve_edge_socket(sc, *pair.target, fd, 1);
        std::printf("session served\n");
        return 0;
    }
    if (!o.connect.empty()) {
        cfg.validate();
        auto [host, port] = parse_host_port(o.connect);
        ModelPair pair = point_models(cfg);
        SessionConfig sc = point_session(cfg);
        SessionTranscript tr = run_device_socket(sc, *pair.draft, host, port);
        std::printf("tokens=%zu rounds=%zu virtual_ms=%.4f wall_ms=%.1f token_hash=%016llx\n",
                    tr.tokens.size(), tr.rounds.size(), tr.total_ms, tr.wall_ms,
                    static_cast<unsigned long long>(token_sequence_hash(tr.tokens)));
        return 0;
    }

    std::vector<ReportRow> rows = cmd_run(cfg);
    if (o.out.empty()) {
        write_report(std::cout, rows, o.format);
    } else {
        std::ofstream f(o.out);
        if (!f) throw ConfigError("cannot open output file " + o.out);
        write_report(f, rows, o.format);
    }
    return 0;
}

int sweep_command(const CliOptions& o) {
    ExperimentConfig cfg = to_experiment(o);
    if (o.gammas.empty()) cfg.gammas = {2, 4, 6, 8, 12, 16};
    SweepResult res = cmd_sweep_gamma(cfg);
    if (o.out.empty()) {
        write_report(std::cout, res.rows, o.format);
    } else {
        std::ofstream f(o.out);
        if (!f) throw ConfigError("cannot open output file " + o.out);
        write_report(f, res.rows, o.format);
    }
    std::fprintf(stderr, "best gamma: %d (speedup %.4f)\n", res.best_gamma, res.best_speedup);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split speculative decoding: simulator, protocols and experiment driver"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* run = app.add_subcommand("run", "run the experiment grid and emit report rows");
    add_experiment_flags(run, opt);

    CLI::App* table1 =
        app.add_subcommand("table1", "print and self-check the expected-communication grid");
    std::string t1_format = "md";
    std::string t1_out;
    table1->add_option("--format", t1_format, "md or csv")
        ->check(CLI::IsMember({"csv", "md"}));
    table1->add_option("--out", t1_out, "write to file instead of stdout");

    CLI::App* verify =
        app.add_subcommand("verify-exactness", "check the accept/resample law end to end");
    std::uint32_t v_vocab = 8;
    int v_trials = 1000;
    int v_samples = 100000;
    std::uint64_t v_seed = 1;
    bool v_paper = false;
    int v_threads = 0;
    verify->add_option("--vocab-size", v_vocab, "distribution size");
    verify->add_option("--trials", v_trials, "random pairs for the analytic identity");
    verify->add_option("--samples", v_samples, "Monte Carlo draws");
    verify->add_option("--seed", v_seed, "seed");
    verify->add_option("--threads", v_threads, "worker threads (0 = all)");
    verify->add_flag("--use-paper-ratio", v_paper,
                     "diagnostic: use min{1,q/p} and watch the test fail");

    CLI::App* sweep = app.add_subcommand("sweep-gamma", "speedup vs gamma at one grid point");
    CliOptions sweep_opt;
    add_experiment_flags(sweep, sweep_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return run_command(opt);
        if (table1->parsed()) {
            if (!t1_out.empty()) {
                std::ofstream f(t1_out);
                if (!f) throw specdec::ConfigError("cannot open output file " + t1_out);
                return specdec::cmd_table1(f, t1_format);
            }
            return specdec::cmd_table1(std::cout, t1_format);
        }
        if (verify->parsed()) {
            specdec::ExactnessReport rep =
                specdec::cmd_verify_exactness(v_vocab, v_trials, v_samples, v_seed, v_paper,
                                              v_threads);
            specdec::write_exactness_report(std::cout, rep);
            return rep.pass() ? 0 : 2;
        }
        if (sweep->parsed()) return sweep_command(sweep_opt);
    } catch (const specdec::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
