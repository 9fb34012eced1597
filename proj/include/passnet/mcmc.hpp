#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "passnet/likelihood.hpp"
#include "passnet/prior.hpp"
#include "passnet/rng.hpp"

namespace passnet {

struct McmcConfig {
    int chains = 4;
    int warmup = 2000;
    int iters = 5000;  // retained iterations per chain (before thinning)
    int thin = 1;
    std::uint64_t seed = 0;
    int threads = 0;                  // 0: one thread per chain
    bool gradient_proposals = false;  // Langevin proposals for the fixed-effect blocks

    void validate() const;
};

// One chain's terminal state plus its frozen proposal scales; enough to
// continue sampling when more data arrives.
struct ChainState {
    ModelParams params;
    Eigen::MatrixXd eta;  // n_units x 3
    Eigen::Vector3d log_sd = Eigen::Vector3d::Zero();
    Eigen::Vector3d corr_y = Eigen::Vector3d::Zero();  // unconstrained correlation
    std::vector<std::string> block_names;
    std::vector<double> block_log_step;
    std::vector<Eigen::VectorXd> block_scale;  // per-coordinate proposal factors
};

struct PosteriorChains {
    std::vector<std::string> param_names;
    std::vector<std::string> unit_labels;
    std::vector<Eigen::MatrixXd> draws;  // per chain: n_draws x n_params
    std::vector<std::uint64_t> chain_streams;
    std::uint64_t seed = 0;
    int warmup = 0;
    int thin = 1;
    std::vector<ChainState> final_states;

    int n_chains() const { return static_cast<int>(draws.size()); }
    int n_draws() const { return draws.empty() ? 0 : static_cast<int>(draws.front().rows()); }
    int n_params() const { return static_cast<int>(param_names.size()); }
    int param_index(const std::string& name) const;  // -1 if absent
    Eigen::VectorXd stacked(int param) const;        // all chains concatenated

    // chain_<c>.csv (header = parameter names) plus state.json (seeds, final
    // states, adapted scales).
    void save(const std::filesystem::path& dir) const;
    static PosteriorChains load(const std::filesystem::path& dir);
};

// Adaptive Metropolis-within-Gibbs over the blocks (omega), (alpha), (beta),
// (gamma), per-unit eta rows, and the covariance (log sd, correlation, joint
// sd/eta rescaling). Adaptation runs during warmup only. Accepts empty logs
// (prior-only sampling with units taken from the formation).
PosteriorChains run_mcmc(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg,
                         const PriorSpec& prior, const McmcConfig& mcmc);

// Online update: exact posterior refresh on the full concatenated history,
// warm-started from a previous run's final states. Units absent from the
// previous fit get effect rows drawn from the current-state covariance.
PosteriorChains update_posterior(const PosteriorChains& prev, const std::vector<MatchLog>& all_logs,
                                 const LikelihoodConfig& cfg, const PriorSpec& prior,
                                 const McmcConfig& mcmc);

// Decode one retained draw back into parameters, effects, and covariance
// (inverse of the canonical row layout).
struct DrawView {
    ModelParams params;
    RandomEffects effects;
    CovarianceSpec cov;
};
DrawView decode_draw(const PosteriorChains& chains, int chain, int row,
                     const CovariateBuilder& builder);

}  // namespace passnet
