#pragma once

#include <cmath>

#include "passnet/formation.hpp"
#include "passnet/likelihood.hpp"
#include "passnet/rng.hpp"
#include "passnet/simstudy.hpp"
#include "passnet/simulator.hpp"

namespace testutil {

using namespace passnet;

inline RosterState team_scoped_roster() {
    return make_roster(load_formation("3-5-2").positions, {"OPP"});
}

inline RosterState full_roster() {
    std::vector<std::string> team1 = load_formation("3-5-2").positions;
    std::vector<std::string> team2;
    for (const auto& p : load_formation("4-4-2").positions) team2.push_back("B_" + p);
    return make_roster(team1, team2);
}

// Team-scoped pass-count simulation with the recovery truths.
inline SimulationConfig recovery_sim(int passes) {
    SimulationConfig sim = default_simstudy_config().sim;
    sim.pass_count = passes;
    return sim;
}

inline ModelParams recovery_truth() { return default_simstudy_config().truth; }

inline LikelihoodConfig team_scoped_lik() {
    LikelihoodConfig lik;
    lik.model_failure_receiver = false;
    lik.formation = load_formation("3-5-2");
    return lik;
}

inline RandomEffects zero_effects_352() {
    return RandomEffects::zero(load_formation("3-5-2").positions);
}

// Independent event-by-event likelihood oracle: walks the raw logs and
// multiplies the factor densities directly, with no flattening or pooling.
inline double naive_loglik(const ModelParams& params, const RandomEffects& effects,
                           const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg) {
    auto log1pexp = [](double x) {
        if (x > 35.0) return x;
        if (x < -35.0) return std::exp(x);
        return std::log1p(std::exp(x));
    };
    const CovariateBuilder builder(cfg.covariates, cfg.formation);
    double ll = 0.0;
    for (const auto& log : logs) {
        const RosterState& roster = log.roster;
        ResolvedEffects res = resolve_effects(effects, roster);
        std::vector<int> counts(roster.size(), 0);
        double clock = 0.0;
        auto context = [&](int passer, const MatchEvent* e) {
            PassContext ctx;
            ctx.passer = passer;
            ctx.roster = &roster;
            if (e) {
                ctx.start_x = e->start_x;
                ctx.start_y = e->start_y;
                ctx.end_x = e->end_x;
                ctx.end_y = e->end_y;
                ctx.air = e->air;
            }
            auto [g1, g2] = log.score_at(clock);
            const int team = roster.team_of(passer);
            ctx.goals_for = team == 0 ? g1 : g2;
            ctx.goals_against = team == 0 ? g2 : g1;
            ctx.pass_received = &counts;
            return ctx;
        };
        for (const auto& e : log.events) {
            const CovariateBundle cov = builder.build(context(e.passer, &e));
            const double lambda = holding_rate(params.omega, cov.rate);
            ll += std::log(lambda) - lambda * e.holding_time;
            const double lp = params.alpha.dot(cov.success) + res.eta1[e.passer];
            ll += (e.success ? lp : 0.0) - log1pexp(lp);
            if (e.success) {
                Eigen::VectorXd eta(cov.succ_candidates.size());
                for (std::size_t k = 0; k < cov.succ_candidates.size(); ++k)
                    eta[k] = res.eta3[cov.succ_candidates[k]];
                const Eigen::VectorXd probs = softmax_distribution(params.gamma, cov.succ_cov, eta);
                for (std::size_t k = 0; k < cov.succ_candidates.size(); ++k)
                    if (cov.succ_candidates[k] == e.receiver) ll += std::log(probs[k]);
            } else if (cfg.model_failure_receiver) {
                Eigen::VectorXd eta(cov.fail_candidates.size());
                for (std::size_t k = 0; k < cov.fail_candidates.size(); ++k)
                    eta[k] = res.eta2[cov.fail_candidates[k]];
                const Eigen::VectorXd probs = softmax_distribution(params.beta, cov.fail_cov, eta);
                for (std::size_t k = 0; k < cov.fail_candidates.size(); ++k)
                    if (cov.fail_candidates[k] == e.receiver) ll += std::log(probs[k]);
            }
            counts[e.receiver]++;
            clock += e.holding_time;
        }
        const double remainder = log.stop_time - clock;
        if (const auto holder = log.terminal_holder(); remainder > 0.0 && holder.has_value()) {
            const CovariateBundle cov = builder.build(context(*holder, nullptr));
            ll -= holding_rate(params.omega, cov.rate) * remainder;
        }
    }
    return ll;
}

// Moderate random parameters so linear predictors stay well-scaled.
inline ModelParams random_params(const CovariateBuilder& builder, Philox& rng, double scale = 0.3) {
    auto draw = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = scale * rng.normal();
        return v;
    };
    ModelParams p;
    p.omega = draw(builder.rate_dim());
    p.alpha = draw(builder.success_dim());
    p.beta = draw(builder.fail_dim());
    p.gamma = draw(builder.succ_dim());
    return p;
}

}  // namespace testutil
