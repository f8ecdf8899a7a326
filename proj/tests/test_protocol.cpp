#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <variant>
#include <vector>

#include "specdec/core.hpp"
#include "specdec/kernel.hpp"
#include "specdec/models.hpp"
#include "specdec/protocol.hpp"

using namespace specdec;

namespace {

ProtocolConfig make_cfg(Mode mode, std::uint32_t gamma, std::uint32_t vocab,
                        std::uint64_t seed) {
    ProtocolConfig cfg;
    cfg.mode = mode;
    cfg.gamma = gamma;
    cfg.vocab = {vocab, 16};
    cfg.seed = seed;
    return cfg;
}

// Full-accept fixture: draft and target are the same deterministic cycle.
TableFixture cycle_fixture() {
    TableFixture fx;
    fx.vocab = 4;
    fx.order = 1;
    fx.fallback = Dist::uniform(4);
    for (TokenId t = 0; t < 4; ++t) {
        fx.entries.push_back({{t}, Dist::point_mass(4, (t + 1) % 4)});
    }
    return fx;
}

// Reject-at-1 fixture pair: the draft insists on 0, the target on 1.
std::pair<TableFixture, TableFixture> disjoint_fixtures() {
    TableFixture qf;
    qf.vocab = 2;
    qf.order = 1;
    qf.fallback = Dist::point_mass(2, 0);
    TableFixture pf = qf;
    pf.fallback = Dist::point_mass(2, 1);
    return {qf, pf};
}

std::vector<TokenId> run_dsd_loop(const LanguageModel& mq, const LanguageModel& mp,
                                  const ProtocolConfig& cfg, std::span<const TokenId> prompt,
                                  int rounds) {
    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
    std::vector<TokenId> emitted;
    for (int r = 0; r < rounds; ++r) {
        UplinkDsd up = device_round_dsd(dev, mq);
        DownlinkToken down = edge_round_dsd(edge, mp, up);
        std::vector<TokenId> e = device_apply_dsd(dev, down);
        emitted.insert(emitted.end(), e.begin(), e.end());
        // Dsd endpoints agree on the prefix after every round.
        CHECK(dev.prefix == edge.prefix);
    }
    return emitted;
}

std::vector<TokenId> run_dssd_loop(const LanguageModel& mq, const LanguageModel& mp,
                                   const ProtocolConfig& cfg, std::span<const TokenId> prompt,
                                   int rounds) {
    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
    std::vector<TokenId> emitted;
    for (int r = 0; r < rounds; ++r) {
        UplinkDssd up = device_round_dssd(dev, mq);
        DssdDownlink down = edge_round_dssd(edge, mp, up);
        std::vector<TokenId> e = device_apply_dssd(dev, down);
        emitted.insert(emitted.end(), e.begin(), e.end());
        if (dev.awaiting_carry) {
            // Device already holds the resample; the edge sees it next round.
            REQUIRE(dev.carry.has_value());
            std::vector<TokenId> shorter = dev.prefix;
            shorter.pop_back();
            CHECK(shorter == edge.prefix);
            CHECK(dev.prefix.back() == *dev.carry);
        } else {
            CHECK(dev.prefix == edge.prefix);
        }
    }
    return emitted;
}

}  // namespace

TEST_CASE("ProtocolConfig validation") {
    CHECK_THROWS_AS(make_cfg(Mode::LlmOnly, 4, 16, 0).validate(), ConfigError);
    CHECK_THROWS_AS(make_cfg(Mode::Dsd, 0, 16, 0).validate(), ConfigError);
    ProtocolConfig bad_temp = make_cfg(Mode::Dssd, 4, 16, 0);
    bad_temp.sampling.temperature = 0.0;
    CHECK_THROWS_AS(bad_temp.validate(), ConfigError);
    make_cfg(Mode::Dssd, 4, 16, 0).validate();  // fine as-is
}

TEST_CASE("make_endpoint rejects prompts outside the vocabulary") {
    std::vector<TokenId> bad = {3, 99};
    CHECK_THROWS_AS(make_endpoint(Role::Device, make_cfg(Mode::Dsd, 2, 16, 0), bad),
                    DesyncError);
}

TEST_CASE("Dsd round over the full-accept cycle") {
    auto m = table_model(cycle_fixture());
    ProtocolConfig cfg = make_cfg(Mode::Dsd, 3, 4, 11);
    std::vector<TokenId> prompt = {0};

    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);

    UplinkDsd up = device_round_dsd(dev, *m);
    CHECK(up.round == 0);
    CHECK(up.tokens == std::vector<TokenId>{1, 2, 3});
    REQUIRE(up.dists.size() == 3);

    DownlinkToken down = edge_round_dsd(edge, *m, up);
    CHECK(down.j == 4);  // gamma + 1: all drafts accepted
    CHECK(down.token == 0);

    std::vector<TokenId> emitted = device_apply_dsd(dev, down);
    CHECK(emitted == std::vector<TokenId>{1, 2, 3, 0});
    CHECK(dev.prefix == edge.prefix);
    CHECK(dev.round == 1);
    CHECK(edge.round == 1);
}

TEST_CASE("Dssd round trip with rejection and carry settlement") {
    auto [qf, pf] = disjoint_fixtures();
    auto mq = table_model(qf);
    auto mp = table_model(pf);
    ProtocolConfig cfg = make_cfg(Mode::Dssd, 2, 2, 5);
    std::vector<TokenId> prompt = {0};

    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);

    // Round 0: drafts [0,0], rejected at position 1, distribution comes down.
    UplinkDssd up0 = device_round_dssd(dev, *mq);
    CHECK(up0.tokens == std::vector<TokenId>{0, 0});
    CHECK(up0.q_vals == std::vector<double>{1.0, 1.0});
    CHECK_FALSE(up0.carry_token.has_value());

    DssdDownlink down0 = edge_round_dssd(edge, *mp, up0);
    REQUIRE(std::holds_alternative<DownlinkDist>(down0));
    const auto& dd = std::get<DownlinkDist>(down0);
    CHECK(dd.j == 1);
    CHECK(dd.p_dist == Dist::point_mass(2, 1));
    CHECK(edge.awaiting_carry);
    CHECK(edge.prefix == prompt);  // one token short until the carry lands

    std::vector<TokenId> e0 = device_apply_dssd(dev, down0);
    CHECK(e0 == std::vector<TokenId>{1});  // residual is a point mass on 1
    REQUIRE(dev.carry.has_value());
    CHECK(*dev.carry == 1);

    // Round 1: the uplink carries the resample; the edge catches up.
    UplinkDssd up1 = device_round_dssd(dev, *mq);
    REQUIRE(up1.carry_token.has_value());
    CHECK(*up1.carry_token == 1);
    CHECK(up1.round == 1);

    DssdDownlink down1 = edge_round_dssd(edge, *mp, up1);
    std::vector<TokenId> expect_prefix = {0, 1};  // prompt + settled carry + ...
    CHECK(edge.prefix[0] == expect_prefix[0]);
    CHECK(edge.prefix[1] == expect_prefix[1]);
    std::vector<TokenId> e1 = device_apply_dssd(dev, down1);
    CHECK(e1.size() == 1);  // disjoint models always reject at 1
}

TEST_CASE("Dssd full accept answers with a bare token, j = gamma + 1") {
    auto m = table_model(cycle_fixture());
    ProtocolConfig cfg = make_cfg(Mode::Dssd, 3, 4, 2);
    std::vector<TokenId> prompt = {2};

    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);

    UplinkDssd up = device_round_dssd(dev, *m);
    DssdDownlink down = edge_round_dssd(edge, *m, up);
    REQUIRE(std::holds_alternative<DownlinkToken>(down));
    CHECK(std::get<DownlinkToken>(down).j == 4);
    std::vector<TokenId> e = device_apply_dssd(dev, down);
    CHECK(e == std::vector<TokenId>{3, 0, 1, 2});
    CHECK_FALSE(dev.awaiting_carry);
    CHECK(dev.prefix == edge.prefix);
}

TEST_CASE("both split protocols reproduce the reference decoder token-for-token") {
    for (std::uint64_t seed : {1, 7, 23}) {
        for (std::uint32_t gamma : {1u, 3u, 5u}) {
            CalibratedPairConfig pc;
            pc.alpha_target = 0.5;
            pc.vocab_size = 32;
            pc.n_contexts = 16;
            pc.seed = seed * 31 + gamma;
            ModelPair pair = calibrated_pair(pc);
            std::vector<TokenId> prompt = {1, 2, 3};

            DecodeResult ref = reference_decode(*pair.draft, *pair.target, prompt,
                                                static_cast<int>(gamma), 40, seed);

            ProtocolConfig dsd = make_cfg(Mode::Dsd, gamma, 32, seed);
            std::vector<TokenId> via_dsd =
                run_dsd_loop(*pair.draft, *pair.target, dsd, prompt, ref.rounds);
            CHECK(via_dsd == ref.tokens);

            ProtocolConfig dssd = make_cfg(Mode::Dssd, gamma, 32, seed);
            std::vector<TokenId> via_dssd =
                run_dssd_loop(*pair.draft, *pair.target, dssd, prompt, ref.rounds);
            CHECK(via_dssd == ref.tokens);
        }
    }
}

TEST_CASE("round counters must match") {
    auto m = table_model(cycle_fixture());
    ProtocolConfig cfg = make_cfg(Mode::Dsd, 3, 4, 11);
    std::vector<TokenId> prompt = {0};
    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);

    UplinkDsd up = device_round_dsd(dev, *m);
    up.round = 7;
    CHECK_THROWS_AS(edge_round_dsd(edge, *m, up), DesyncError);

    up.round = 0;
    DownlinkToken down = edge_round_dsd(edge, *m, up);
    down.round = 3;
    CHECK_THROWS_AS(device_apply_dsd(dev, down), DesyncError);
}

TEST_CASE("carry presence must match the edge's expectation") {
    auto [qf, pf] = disjoint_fixtures();
    auto mq = table_model(qf);
    auto mp = table_model(pf);
    ProtocolConfig cfg = make_cfg(Mode::Dssd, 2, 2, 5);
    std::vector<TokenId> prompt = {0};

    SUBCASE("unexpected carry in round 0") {
        EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
        EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
        UplinkDssd up = device_round_dssd(dev, *mq);
        up.carry_token = 1;
        CHECK_THROWS_AS(edge_round_dssd(edge, *mp, up), DesyncError);
    }

    SUBCASE("missing carry after a rejection") {
        EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
        EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
        UplinkDssd up0 = device_round_dssd(dev, *mq);
        device_apply_dssd(dev, edge_round_dssd(edge, *mp, up0));  // rejects
        REQUIRE(edge.awaiting_carry);
        UplinkDssd up1 = device_round_dssd(dev, *mq);
        up1.carry_token.reset();
        CHECK_THROWS_AS(edge_round_dssd(edge, *mp, up1), DesyncError);
    }
}

TEST_CASE("a bare token downlink below gamma+1 is a protocol violation") {
    auto m = table_model(cycle_fixture());
    ProtocolConfig cfg = make_cfg(Mode::Dssd, 3, 4, 2);
    std::vector<TokenId> prompt = {2};
    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    device_round_dssd(dev, *m);
    DownlinkToken forged{.round = 0, .j = 2, .token = 1};
    CHECK_THROWS_AS(device_apply_dssd(dev, DssdDownlink{forged}), DesyncError);
}

TEST_CASE("state machine misuse is rejected") {
    auto m = table_model(cycle_fixture());
    ProtocolConfig cfg = make_cfg(Mode::Dsd, 3, 4, 11);
    std::vector<TokenId> prompt = {0};

    EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
    EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);

    // Edge running device code and vice versa.
    CHECK_THROWS_AS(device_round_dsd(edge, *m), DesyncError);
    UplinkDsd up = device_round_dsd(dev, *m);
    CHECK_THROWS_AS(edge_round_dsd(dev, *m, up), DesyncError);

    // Two drafts without an apply in between.
    CHECK_THROWS_AS(device_round_dsd(dev, *m), DesyncError);

    // Apply without a round in flight.
    EndpointState dev2 = make_endpoint(Role::Device, cfg, prompt);
    CHECK_THROWS_AS(device_apply_dsd(dev2, DownlinkToken{.round = 0, .j = 1, .token = 0}),
                    DesyncError);

    // Wrong mode on the endpoint.
    EndpointState dssd_dev = make_endpoint(Role::Device, make_cfg(Mode::Dssd, 3, 4, 11), prompt);
    CHECK_THROWS_AS(device_round_dsd(dssd_dev, *m), DesyncError);
}

TEST_CASE("edge validates uplink content") {
    auto m = table_model(cycle_fixture());
    std::vector<TokenId> prompt = {0};

    SUBCASE("token outside the vocabulary") {
        ProtocolConfig cfg = make_cfg(Mode::Dsd, 3, 4, 11);
        EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
        EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
        UplinkDsd up = device_round_dsd(dev, *m);
        up.tokens[1] = 99;
        CHECK_THROWS_AS(edge_round_dsd(edge, *m, up), DesyncError);
    }

    SUBCASE("wrong draft count") {
        ProtocolConfig cfg = make_cfg(Mode::Dsd, 3, 4, 11);
        EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
        EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
        UplinkDsd up = device_round_dsd(dev, *m);
        up.tokens.pop_back();
        up.dists.pop_back();
        CHECK_THROWS_AS(edge_round_dsd(edge, *m, up), DesyncError);
    }

    SUBCASE("zero draft probability") {
        ProtocolConfig cfg = make_cfg(Mode::Dssd, 3, 4, 11);
        EndpointState dev = make_endpoint(Role::Device, cfg, prompt);
        EndpointState edge = make_endpoint(Role::Edge, cfg, prompt);
        UplinkDssd up = device_round_dssd(dev, *m);
        up.q_vals[0] = 0.0;
        CHECK_THROWS_AS(edge_round_dssd(edge, *m, up), InvalidDraftProbError);
    }
}
