#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "passnet/mcmc.hpp"
#include "passnet/simulator.hpp"

namespace passnet {

struct PpcConfig {
    int n_draws = 200;  // posterior draws used (evenly spaced over the chains)
    std::uint64_t seed = 0;
};

struct PpcStatistic {
    std::string name;
    double observed = 0;
    double lower = 0, upper = 0;  // 2.5% / 97.5% predictive bounds
    bool inside = false;
    std::vector<double> replicated;  // one value per used draw
};

struct PpcReport {
    std::vector<PpcStatistic> stats;
    int n_draws = 0;
};

// For each selected posterior draw, simulate a replicate dataset matching the
// observed one (same rosters, per-match pass counts, score timelines) and
// compare summary statistics against their predictive intervals.
PpcReport posterior_predictive_check(const PosteriorChains& chains,
                                     const std::vector<MatchLog>& observed,
                                     const LikelihoodConfig& cfg, const PpcConfig& ppc);

// JSON report plus a long-format CSV of the replicate statistics for plotting.
void write_ppc(const PpcReport& report, const std::string& json_path,
               const std::string& csv_path);

}  // namespace passnet
