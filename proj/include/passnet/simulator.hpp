#pragma once

#include <cstdint>
#include <vector>

#include "passnet/covariates.hpp"
#include "passnet/event_log.hpp"
#include "passnet/model.hpp"
#include "passnet/rng.hpp"

namespace passnet {

enum class StopMode { wall_clock, pass_count };

struct SimulationConfig {
    RosterState roster;
    StopMode mode = StopMode::wall_clock;
    double stop_time = 90.0;  // wall-clock mode; >= 90 unless short_season
    int pass_count = 0;       // pass-count mode
    bool short_season = false;
    std::uint64_t seed = 0;
    bool team_scoped = false;  // only team1 is modeled; failures cede to a sentinel
    std::vector<ScoreEvent> goals;  // exogenous; never model output
    CovariateConfig covariates;
    FormationGraph formation;
    double air_pass_prob = 0.3;  // synthetic pass-geometry stream

    void validate() const;
};

struct PossessionState {
    int holder = -1;
    double clock = 0.0;
    int goals1 = 0, goals2 = 0;
    std::vector<int> pass_received;  // per roster index, current scope
};

// Uniform over all rostered players.
int init_possession(const RosterState& roster, Philox& rng);

// Inverse-CDF Exponential(lambda) holding time in minutes.
double sample_holding_time(double lambda, Philox& rng);

struct TransitionDraw {
    bool success = false;
    int receiver = -1;
};

// One Bernoulli(success) + categorical(receiver) step given frozen covariates.
TransitionDraw sample_transition(const CovariateBundle& cov, const ModelParams& params,
                                 const ResolvedEffects& effects, int holder,
                                 const RosterState& roster, Philox& rng);

MatchLog simulate_match(const SimulationConfig& config, const ModelParams& params,
                        const RandomEffects& effects, Philox& rng);
// Derived stream per match index; order-independent reproducibility.
std::vector<MatchLog> simulate_season(const SimulationConfig& config, const ModelParams& params,
                                      const RandomEffects& effects, int n_matches,
                                      const Philox& base_rng);

}  // namespace passnet
