#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "passnet/ppc.hpp"

using namespace passnet;

namespace {

// Chains whose every draw sits exactly at a chosen parameter point.
PosteriorChains degenerate_chains(const ModelParams& params, int n_draws,
                                  const LikelihoodConfig& lik) {
    SimulationConfig sim = testutil::recovery_sim(30);
    Philox rng(1, 1);
    const MatchLog log =
        simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng);
    McmcConfig cfg;
    cfg.chains = 1;
    cfg.warmup = 30;
    cfg.iters = 1;
    cfg.seed = 5;
    cfg.threads = 1;
    PosteriorChains chains = run_mcmc({log}, lik, PriorSpec::preset("prior2"), cfg);

    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(chains.n_params());
    int off = 0;
    for (int j = 0; j < params.omega.size(); ++j) row[off++] = params.omega[j];
    for (int j = 0; j < params.alpha.size(); ++j) row[off++] = params.alpha[j];
    for (int j = 0; j < params.gamma.size(); ++j) row[off++] = params.gamma[j];
    // eta rows stay zero; sigma must be positive for decoding
    row[chains.param_index("sigma[1]")] = 0.1;
    row[chains.param_index("sigma[2]")] = 0.1;
    row[chains.param_index("sigma[3]")] = 0.1;
    chains.draws[0] = row.replicate(n_draws, 1);
    return chains;
}

}  // namespace

TEST_CASE("statistics observed under the truth fall inside their own bands") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    SimulationConfig sim = testutil::recovery_sim(400);
    Philox rng(777, 1);
    const MatchLog observed =
        simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng);

    const PosteriorChains chains = degenerate_chains(testutil::recovery_truth(), 200, lik);
    PpcConfig ppc;
    ppc.n_draws = 150;
    ppc.seed = 99;
    const PpcReport report = posterior_predictive_check(chains, {observed}, lik, ppc);
    CHECK(report.n_draws == 150);
    REQUIRE(report.stats.size() == 2);
    for (const auto& stat : report.stats) {
        CHECK(static_cast<int>(stat.replicated.size()) == 150);
        CHECK(stat.lower < stat.upper);
        CHECK(stat.inside);
        CHECK(stat.lower <= stat.observed);
        CHECK(stat.observed <= stat.upper);
    }
    CHECK(report.stats[0].name != report.stats[1].name);
}

TEST_CASE("a grossly misspecified posterior is flagged outside the bands") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    SimulationConfig sim = testutil::recovery_sim(400);
    Philox rng(778, 1);
    const MatchLog observed =
        simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng);

    ModelParams wrong = testutil::recovery_truth();
    wrong.omega.array() += 2.0;   // far faster passing
    wrong.alpha[0] -= 4.0;        // far lower success rate
    const PosteriorChains chains = degenerate_chains(wrong, 200, lik);
    PpcConfig ppc;
    ppc.n_draws = 100;
    ppc.seed = 7;
    const PpcReport report = posterior_predictive_check(chains, {observed}, lik, ppc);
    for (const auto& stat : report.stats) CHECK_FALSE(stat.inside);
}

TEST_CASE("replication is deterministic in the seed") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    SimulationConfig sim = testutil::recovery_sim(100);
    Philox rng(779, 1);
    const MatchLog observed =
        simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng);
    const PosteriorChains chains = degenerate_chains(testutil::recovery_truth(), 50, lik);
    PpcConfig ppc;
    ppc.n_draws = 40;
    ppc.seed = 123;
    const PpcReport a = posterior_predictive_check(chains, {observed}, lik, ppc);
    const PpcReport b = posterior_predictive_check(chains, {observed}, lik, ppc);
    ppc.seed = 124;
    const PpcReport c = posterior_predictive_check(chains, {observed}, lik, ppc);
    for (std::size_t s = 0; s < a.stats.size(); ++s) {
        CHECK(a.stats[s].replicated == b.stats[s].replicated);
        CHECK(a.stats[s].replicated != c.stats[s].replicated);
    }
}

TEST_CASE("reports serialize to JSON and long-format CSV") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    SimulationConfig sim = testutil::recovery_sim(80);
    Philox rng(780, 1);
    const MatchLog observed =
        simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng);
    const PosteriorChains chains = degenerate_chains(testutil::recovery_truth(), 30, lik);
    PpcConfig ppc;
    ppc.n_draws = 20;
    ppc.seed = 5;
    const PpcReport report = posterior_predictive_check(chains, {observed}, lik, ppc);
    write_ppc(report, "ppc_test.json", "ppc_test.csv");

    std::ifstream jin("ppc_test.json");
    std::string jtext((std::istreambuf_iterator<char>(jin)), std::istreambuf_iterator<char>());
    CHECK(jtext.find("passnet-ppc-1") != std::string::npos);
    CHECK(jtext.find("\"inside\"") != std::string::npos);

    std::ifstream cin("ppc_test.csv");
    std::string header;
    std::getline(cin, header);
    CHECK(header == "statistic,draw,value");
    int rows = 0, observed_rows = 0;
    std::string line;
    while (std::getline(cin, line)) {
        ++rows;
        if (line.find("observed") != std::string::npos) ++observed_rows;
    }
    CHECK(rows == 2 * (20 + 1));  // per statistic: one observed row + 20 draws
    CHECK(observed_rows == 2);
    std::remove("ppc_test.json");
    std::remove("ppc_test.csv");
}
