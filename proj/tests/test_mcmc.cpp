#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "passnet/summary.hpp"

using namespace passnet;

namespace {

std::vector<MatchLog> fit_logs(int passes, std::uint64_t seed) {
    SimulationConfig sim = testutil::recovery_sim(passes);
    sim.goals = {{3.0, 0}, {12.0, 1}};
    Philox rng(seed, 1);
    return {simulate_match(sim, testutil::recovery_truth(), testutil::zero_effects_352(), rng)};
}

McmcConfig quick_cfg(int chains = 2, int warmup = 120, int iters = 150) {
    McmcConfig cfg;
    cfg.chains = chains;
    cfg.warmup = warmup;
    cfg.iters = iters;
    cfg.seed = 31337;
    cfg.threads = 1;
    return cfg;
}

}  // namespace

TEST_CASE("configuration validation") {
    McmcConfig cfg = quick_cfg();
    cfg.validate();
    cfg.chains = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_cfg();
    cfg.iters = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = quick_cfg();
    cfg.thin = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("identical seeds reproduce the chains exactly, different seeds do not") {
    const auto logs = fit_logs(60, 11);
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PriorSpec prior = PriorSpec::preset("prior2");
    const PosteriorChains a = run_mcmc(logs, lik, prior, quick_cfg());
    const PosteriorChains b = run_mcmc(logs, lik, prior, quick_cfg());
    McmcConfig other = quick_cfg();
    other.seed = 31338;
    const PosteriorChains c = run_mcmc(logs, lik, prior, other);
    REQUIRE(a.n_chains() == b.n_chains());
    for (int ch = 0; ch < a.n_chains(); ++ch)
        CHECK((a.draws[ch] - b.draws[ch]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.draws[0] - c.draws[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("thinning keeps every k-th retained draw") {
    const auto logs = fit_logs(40, 12);
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PriorSpec prior = PriorSpec::preset("prior2");
    McmcConfig thin_cfg = quick_cfg(1, 80, 120);
    thin_cfg.thin = 3;
    const PosteriorChains thinned = run_mcmc(logs, lik, prior, thin_cfg);
    CHECK(thinned.n_draws() == 40);
    CHECK(thinned.thin == 3);
}

TEST_CASE("draw layout names every coordinate and decode_draw inverts it") {
    const auto logs = fit_logs(50, 13);
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PosteriorChains chains =
        run_mcmc(logs, lik, PriorSpec::preset("prior2"), quick_cfg(1, 60, 40));
    const CovariateBuilder builder(lik.covariates, lik.formation);
    CHECK(chains.n_params() ==
          builder.rate_dim() + builder.success_dim() + builder.succ_dim() + 3 * 11 + 3 + 3);
    CHECK(chains.param_index("omega[GK]") == 0);
    CHECK(chains.param_index("alpha[intercept]") >= 0);
    CHECK(chains.param_index("gamma[graph_distance]") >= 0);
    CHECK(chains.param_index("sigma[1]") >= 0);
    CHECK(chains.param_index("corr[1,2]") >= 0);
    CHECK(chains.param_index("eta[CF.3]") >= 0);
    CHECK(chains.param_index("bogus") == -1);

    const int row = 17;
    const DrawView view = decode_draw(chains, 0, row, builder);
    CHECK(view.params.omega[0] == chains.draws[0](row, chains.param_index("omega[GK]")));
    CHECK(view.effects.value("CF", 2) == chains.draws[0](row, chains.param_index("eta[CF.3]")));
    CHECK(view.cov.sd[1] == chains.draws[0](row, chains.param_index("sigma[2]")));
    CHECK(view.cov.corr(0, 2) == chains.draws[0](row, chains.param_index("corr[1,3]")));
    view.cov.validate();  // decoded correlation matrix is a valid correlation
}

TEST_CASE("chains save and load losslessly") {
    const auto logs = fit_logs(40, 14);
    const PosteriorChains chains = run_mcmc(logs, testutil::team_scoped_lik(),
                                            PriorSpec::preset("prior2"), quick_cfg(2, 60, 50));
    const std::filesystem::path dir = "chains_roundtrip";
    std::filesystem::remove_all(dir);
    chains.save(dir);
    const PosteriorChains back = PosteriorChains::load(dir);
    CHECK(back.param_names == chains.param_names);
    CHECK(back.unit_labels == chains.unit_labels);
    CHECK(back.seed == chains.seed);
    CHECK(back.warmup == chains.warmup);
    CHECK(back.thin == chains.thin);
    CHECK(back.chain_streams == chains.chain_streams);
    REQUIRE(back.n_chains() == chains.n_chains());
    for (int c = 0; c < chains.n_chains(); ++c)
        CHECK((back.draws[c] - chains.draws[c]).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.final_states.size() == chains.final_states.size());
    for (std::size_t c = 0; c < chains.final_states.size(); ++c) {
        const ChainState& x = chains.final_states[c];
        const ChainState& y = back.final_states[c];
        CHECK((x.eta - y.eta).cwiseAbs().maxCoeff() == 0.0);
        CHECK((x.params.omega - y.params.omega).cwiseAbs().maxCoeff() == 0.0);
        CHECK(x.block_names == y.block_names);
        CHECK(x.block_log_step == y.block_log_step);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("prior-only run samples the fixed-effect prior") {
    // no data: the omega marginal must match N(0, sd^2) roughly even in a
    // short run (the exhaustive distributional check lives in the acceptance
    // suite)
    McmcConfig cfg = quick_cfg(2, 300, 2000);
    const PosteriorChains chains =
        run_mcmc({}, testutil::team_scoped_lik(), PriorSpec::preset("prior1"), cfg);
    const Eigen::VectorXd draws = chains.stacked(chains.param_index("omega[GK]"));
    const double mean = draws.mean();
    const double sd = std::sqrt((draws.array() - mean).square().mean());
    CHECK(std::fabs(mean) < 1.5);
    CHECK(sd > 2.5);
    CHECK(sd < 8.0);
}

TEST_CASE("posterior concentrates on an analytically known rate") {
    // Single position passing forever: with flat-ish priors the omega posterior
    // mean approaches log(events / exposure).
    const auto logs = fit_logs(400, 15);
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    EventData data(logs, lik);
    double exposure = 0.0, count = 0.0;
    for (const auto& pat : data.rate_patterns()) {
        exposure += pat.exposure;
        count += pat.count;
    }
    McmcConfig cfg = quick_cfg(2, 400, 800);
    const PosteriorChains chains = run_mcmc(logs, lik, PriorSpec::preset("prior3"), cfg);
    const PosteriorSummary summary = summarize(chains);
    // all positions share the same truth; pool the per-position intercepts
    // weighted by nothing fancy - each should sit near the pooled MLE
    const double pooled = std::log(count / exposure);
    int close = 0, total = 0;
    const CovariateBuilder builder(lik.covariates, lik.formation);
    for (int j = 0; j < builder.rate_dim() - 2; ++j) {
        const ParamSummary& row = summary.at("omega[" + builder.rate_names()[j] + "]");
        ++total;
        if (row.q025 - 0.2 < pooled && pooled < row.q975 + 0.2) ++close;
    }
    CHECK(close >= total - 2);
}

TEST_CASE("gradient-based proposals agree with random-walk proposals") {
    const auto logs = fit_logs(150, 16);
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PriorSpec prior = PriorSpec::preset("prior2");
    McmcConfig rw = quick_cfg(2, 1000, 3000);
    McmcConfig mala = rw;
    mala.gradient_proposals = true;
    const PosteriorSummary s_rw = summarize(run_mcmc(logs, lik, prior, rw));
    const PosteriorSummary s_mala = summarize(run_mcmc(logs, lik, prior, mala));
    for (const char* name : {"omega[GK]", "omega[CF]", "alpha[air]", "gamma[graph_distance]"}) {
        const ParamSummary& a = s_rw.at(name);
        const ParamSummary& b = s_mala.at(name);
        const double scale = std::max(a.sd, b.sd);
        CHECK(std::fabs(a.mean - b.mean) < 4.0 * scale);
        CHECK(b.sd < 6.0 * a.sd);
        CHECK(a.sd < 6.0 * b.sd);
    }
}

TEST_CASE("online update continues from the saved states and accepts new units") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PriorSpec prior = PriorSpec::preset("prior2");
    const auto first = fit_logs(80, 17);
    const PosteriorChains fit1 = run_mcmc(first, lik, prior, quick_cfg(2, 150, 200));

    auto all = first;
    const auto more = fit_logs(80, 18);
    all.insert(all.end(), more.begin(), more.end());
    McmcConfig upd = quick_cfg(2, 100, 200);
    const PosteriorChains fit2 = update_posterior(fit1, all, lik, prior, upd);
    CHECK(fit2.param_names == fit1.param_names);
    CHECK(fit2.n_draws() == 200);

    // existing-unit effect columns keep their names and positions
    CHECK(fit2.param_index("eta[CF.1]") == fit1.param_index("eta[CF.1]"));
}

TEST_CASE("online update spawns effect rows for units unseen in the first fit") {
    // player-name units: disable the position-tied covariates so a roster can
    // grow between seasons
    LikelihoodConfig lik;
    lik.model_failure_receiver = false;
    lik.formation = load_formation("3-5-2");
    lik.covariates.rate_position_indicators = false;
    lik.covariates.m3_graph_distance = false;
    const PriorSpec prior = PriorSpec::preset("prior2");

    SimulationConfig sim;
    sim.roster = make_roster({"ana", "bea", "cam", "dee"}, {"OPP"});
    sim.mode = StopMode::pass_count;
    sim.pass_count = 60;
    sim.team_scoped = true;
    sim.formation = lik.formation;
    sim.covariates = lik.covariates;
    ModelParams truth;
    truth.omega = Eigen::VectorXd::Zero(2);
    truth.alpha = Eigen::VectorXd::Zero(8);
    truth.alpha[0] = 1.5;
    truth.beta = Eigen::VectorXd::Zero(0);
    truth.gamma = Eigen::VectorXd::Zero(1);
    const RandomEffects eff0 = RandomEffects::zero({"ana", "bea", "cam", "dee", "eve"});
    Philox r1(23, 1);
    const MatchLog first = simulate_match(sim, truth, eff0, r1);
    const PosteriorChains fit1 = run_mcmc({first}, lik, prior, quick_cfg(1, 80, 60));
    CHECK(fit1.param_index("eta[eve.1]") == -1);

    sim.roster = make_roster({"ana", "bea", "cam", "dee", "eve"}, {"OPP"});
    Philox r2(24, 1);
    const MatchLog second = simulate_match(sim, truth, eff0, r2);
    const PosteriorChains fit2 =
        update_posterior(fit1, {first, second}, lik, prior, quick_cfg(1, 80, 60));
    CHECK(fit2.param_index("eta[eve.1]") >= 0);
    CHECK(fit2.param_index("eta[ana.1]") == fit1.param_index("eta[ana.1]"));
    const Eigen::VectorXd eve = fit2.stacked(fit2.param_index("eta[eve.1]"));
    CHECK(eve.size() == 60);
    CHECK((eve.array() != eve[0]).any());  // the new row actually moves
}

TEST_CASE("update with mismatched parameter dimensions is rejected") {
    const LikelihoodConfig lik = testutil::team_scoped_lik();
    const PriorSpec prior = PriorSpec::preset("prior2");
    const auto logs = fit_logs(40, 20);
    const PosteriorChains fit1 = run_mcmc(logs, lik, prior, quick_cfg(1, 60, 50));
    LikelihoodConfig other = lik;
    other.covariates.m2_air = false;  // drops a success covariate
    CHECK_THROWS(update_posterior(fit1, logs, other, prior, quick_cfg(1, 60, 50)));
}
