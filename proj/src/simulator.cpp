#include "passnet/simulator.hpp"

#include <stdexcept>

namespace passnet {

void SimulationConfig::validate() const {
    roster.validate();
    if (mode == StopMode::wall_clock) {
        if (short_season ? !(stop_time > 0.0) : stop_time < 90.0)
            throw std::invalid_argument("simulate: stop_time must be >= 90 (or > 0 in short_season mode)");
    } else if (pass_count < 1) {
        throw std::invalid_argument("simulate: pass_count must be >= 1");
    }
    if (team_scoped && roster.team2.size() != 1)
        throw std::invalid_argument("simulate: team-scoped roster needs a single opponent sentinel");
}

int init_possession(const RosterState& roster, Philox& rng) {
    if (roster.size() == 0) throw std::invalid_argument("init_possession: empty roster");
    return rng.uniform_int(roster.size());
}

double sample_holding_time(double lambda, Philox& rng) { return rng.exponential(lambda); }

TransitionDraw sample_transition(const CovariateBundle& cov, const ModelParams& params,
                                 const ResolvedEffects& effects, int holder,
                                 const RosterState& roster, Philox& rng) {
    TransitionDraw draw;
    const double p = success_probability(params.alpha, cov.success, effects.eta1[holder]);
    draw.success = rng.bernoulli(p);
    if (draw.success) {
        Eigen::VectorXd eta(cov.succ_candidates.size());
        for (int k = 0; k < static_cast<int>(cov.succ_candidates.size()); ++k)
            eta[k] = effects.eta3[cov.succ_candidates[k]];
        Eigen::VectorXd probs = softmax_distribution(params.gamma, cov.succ_cov, eta);
        draw.receiver = cov.succ_candidates[rng.categorical({probs.data(), static_cast<std::size_t>(probs.size())})];
    } else {
        Eigen::VectorXd eta(cov.fail_candidates.size());
        for (int k = 0; k < static_cast<int>(cov.fail_candidates.size()); ++k)
            eta[k] = effects.eta2[cov.fail_candidates[k]];
        Eigen::VectorXd probs = softmax_distribution(params.beta, cov.fail_cov, eta);
        draw.receiver = cov.fail_candidates[rng.categorical({probs.data(), static_cast<std::size_t>(probs.size())})];
    }
    return draw;
}

MatchLog simulate_match(const SimulationConfig& config, const ModelParams& params,
                        const RandomEffects& effects, Philox& rng) {
    config.validate();
    const RosterState& roster = config.roster;
    const ResolvedEffects resolved = resolve_effects(effects, roster);
    const CovariateBuilder builder(config.covariates, config.formation);

    MatchLog log;
    log.roster = roster;
    log.formation_name = config.formation.name;
    log.team_scoped = config.team_scoped;
    log.goals = config.goals;
    log.stop_time = config.mode == StopMode::wall_clock ? config.stop_time : 0.0;

    PossessionState state;
    state.pass_received.assign(roster.size(), 0);
    state.holder = config.team_scoped
                       ? rng.uniform_int(static_cast<int>(roster.team1.size()))
                       : init_possession(roster, rng);
    log.initial_holder = state.holder;

    const bool geometry = config.covariates.m2_length || config.covariates.m2_forward ||
                          config.covariates.m2_start_half || config.covariates.m2_end_third;
    bool fresh = false;
    int m = 0;
    while (config.mode == StopMode::pass_count ? m < config.pass_count : true) {
        MatchEvent e;
        e.index = m + 1;
        e.fresh_possession = fresh;
        if (geometry) {
            e.start_x = rng.uniform() * 100.0;
            e.start_y = rng.uniform() * 100.0;
            e.end_x = rng.uniform() * 100.0;
            e.end_y = rng.uniform() * 100.0;
        }
        if (config.covariates.m2_air) e.air = rng.bernoulli(config.air_pass_prob);

        auto [g1, g2] = log.score_at(state.clock);
        const int holder_team = roster.team_of(state.holder);
        PassContext ctx;
        ctx.passer = state.holder;
        ctx.roster = &roster;
        ctx.start_x = e.start_x;
        ctx.start_y = e.start_y;
        ctx.end_x = e.end_x;
        ctx.end_y = e.end_y;
        ctx.air = e.air;
        ctx.goals_for = holder_team == 0 ? g1 : g2;
        ctx.goals_against = holder_team == 0 ? g2 : g1;
        ctx.pass_received = &state.pass_received;

        CovariateBundle cov;
        try {
            cov = builder.build(ctx);
            const double lambda = holding_rate(params.omega, cov.rate);
            e.holding_time = sample_holding_time(lambda, rng);
            state.clock += e.holding_time;
            if (config.mode == StopMode::wall_clock && state.clock > config.stop_time)
                break;  // in-flight possession censored at T

            if (config.team_scoped) {
                const double p = success_probability(params.alpha, cov.success, resolved.eta1[state.holder]);
                e.success = rng.bernoulli(p);
                if (e.success) {
                    Eigen::VectorXd eta(cov.succ_candidates.size());
                    for (int k = 0; k < static_cast<int>(cov.succ_candidates.size()); ++k)
                        eta[k] = resolved.eta3[cov.succ_candidates[k]];
                    Eigen::VectorXd probs = softmax_distribution(params.gamma, cov.succ_cov, eta);
                    e.receiver = cov.succ_candidates[rng.categorical(
                        {probs.data(), static_cast<std::size_t>(probs.size())})];
                } else {
                    e.receiver = roster.team2.front().index;  // opponent sentinel
                }
            } else {
                TransitionDraw draw = sample_transition(cov, params, resolved, state.holder, roster, rng);
                e.success = draw.success;
                e.receiver = draw.receiver;
            }
        } catch (const std::exception& ex) {
            throw std::runtime_error("simulate_match: event " + std::to_string(m + 1) + " (holder " +
                                     roster.label_of(state.holder) + "): " + ex.what());
        }

        e.passer = state.holder;
        state.pass_received[e.receiver]++;
        log.events.push_back(e);
        ++m;

        if (config.team_scoped && !e.success) {
            state.holder = rng.uniform_int(static_cast<int>(roster.team1.size()));
            fresh = true;
        } else {
            state.holder = e.receiver;
            fresh = false;
        }
    }

    if (config.mode == StopMode::pass_count) log.stop_time = log.total_holding_time();
    log.validate();
    return log;
}

std::vector<MatchLog> simulate_season(const SimulationConfig& config, const ModelParams& params,
                                      const RandomEffects& effects, int n_matches,
                                      const Philox& base_rng) {
    if (n_matches < 1) throw std::invalid_argument("simulate_season: n_matches must be >= 1");
    std::vector<MatchLog> logs;
    logs.reserve(n_matches);
    for (int k = 0; k < n_matches; ++k) {
        Philox rng = base_rng.derive(k);
        MatchLog log = simulate_match(config, params, effects, rng);
        log.match_id = "m" + std::to_string(k);
        logs.push_back(std::move(log));
    }
    return logs;
}

}  // namespace passnet
