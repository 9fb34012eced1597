#pragma once

#include <string>
#include <vector>

#include "passnet/mcmc.hpp"

namespace passnet {

// Interpolated sample quantile (the common "type 7" definition).
double quantile(std::vector<double> values, double p);

// Effective sample size via the initial-positive-sequence estimator on the
// chain-averaged autocorrelations.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

// Split-R-hat. Constant chains report 1 with the degenerate flag set.
double split_rhat(const std::vector<Eigen::VectorXd>& chains, bool* degenerate = nullptr);

struct ParamSummary {
    std::string name;
    double mean = 0, median = 0, sd = 0;
    double q025 = 0, q975 = 0;
    double ess = 0, rhat = 0;
    bool degenerate = false;  // numerically constant across all chains
};

struct PosteriorSummary {
    std::vector<ParamSummary> params;
    int n_chains = 0, n_draws = 0;

    const ParamSummary& at(const std::string& name) const;  // throws if missing
};

PosteriorSummary summarize(const PosteriorChains& chains);

// JSON report, schema-tagged; stable key order.
void write_summary(const PosteriorSummary& summary, const std::string& path);

}  // namespace passnet
