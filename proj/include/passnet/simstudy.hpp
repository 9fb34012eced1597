#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "passnet/mcmc.hpp"
#include "passnet/simulator.hpp"

namespace passnet {

struct SimStudyConfig {
    int n_seasons = 20;
    std::uint64_t seed = 0;
    int threads = 0;  // parallel seasons; each season's fit runs single-threaded
    McmcConfig mcmc;
    PriorSpec prior;
    SimulationConfig sim;  // pass-count template; goals are drawn per season
    ModelParams truth;
    CovarianceSpec truth_cov;
    int max_goals = 3;                  // per team, exogenous score timeline
    std::filesystem::path out_dir;      // when set: per-season result files, resumable
};

struct SeasonResult {
    int season = -1;
    bool ok = false;
    std::string error;
    std::vector<double> post_mean, q025, q975;  // per parameter
};

struct SimStudyReport {
    std::vector<std::string> param_names;
    std::vector<double> truth;  // aligned with param_names
    std::vector<SeasonResult> seasons;
    // aggregates over successful seasons
    int n_ok = 0;
    std::vector<double> mean_post_mean, p025, p975;  // posterior-mean distribution
    std::vector<double> coverage;                 // 95% CI coverage per parameter
    double fixed_effect_coverage = 0;             // averaged over fixed effects only
};

// Simulate seasons from the ground truth, fit each one, and summarize how the
// posterior recovers the truth. Individual season failures are recorded, not
// fatal. With out_dir set, finished seasons are skipped on re-runs.
SimStudyReport run_simulation_study(const SimStudyConfig& cfg);

void write_simstudy(const SimStudyReport& report, const std::string& path);

// The bundled fixture: team-scoped 3-5-2 squad, 1000 passes per season, truths
// matching the published recovery experiment.
SimStudyConfig default_simstudy_config();

}  // namespace passnet
