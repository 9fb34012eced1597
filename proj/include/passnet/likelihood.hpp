#pragma once

#include <string>
#include <vector>

#include "passnet/covariates.hpp"
#include "passnet/event_log.hpp"
#include "passnet/model.hpp"

namespace passnet {

struct LikelihoodConfig {
    // Team-scoped data (one modeled team) drops the failure-receiver factor.
    bool model_failure_receiver = true;
    CovariateConfig covariates;
    FormationGraph formation;
};

struct Gradient {
    Eigen::VectorXd omega, alpha, beta, gamma;
    Eigen::MatrixXd eta;  // n_units x 3

    double max_norm() const;
};

// Match logs flattened into per-factor arrays; covariates are frozen at
// possession start during flattening.
class EventData {
public:
    EventData(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg);

    struct Event {
        double h = 0;
        bool success = false;
        int passer_unit = -1;
        Eigen::VectorXd x1;
        // receiver factor (success events always; failure events only when modeled)
        bool has_receiver_term = false;
        std::vector<int> cand_units;
        std::vector<Eigen::VectorXd> xr;  // x3 (success) or x2 (failure)
        int chosen = -1;                  // index into candidates
    };

    struct RatePattern {
        Eigen::VectorXd c;
        double count = 0;     // number of passes with this pattern
        double exposure = 0;  // summed holding time + censored remainder
    };

    int n_events() const { return static_cast<int>(events_.size()); }
    int n_units() const { return static_cast<int>(unit_labels_.size()); }
    const std::vector<std::string>& unit_labels() const { return unit_labels_; }
    const std::vector<Event>& events() const { return events_; }
    const std::vector<RatePattern>& rate_patterns() const { return rate_patterns_; }
    int rate_dim() const { return p_; }
    int success_dim() const { return d1_; }
    int fail_dim() const { return d2_; }
    int succ_dim() const { return d3_; }
    bool models_failure_receiver() const { return model_failure_receiver_; }

    // Per-factor log-likelihoods (the full conditionals' likelihood parts).
    double loglik_rate(const Eigen::VectorXd& omega) const;
    double loglik_success(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& eta) const;
    double loglik_receiver(bool success_side, const Eigen::VectorXd& coef,
                           const Eigen::MatrixXd& eta) const;

    double log_likelihood(const ModelParams& params, const Eigen::MatrixXd& eta) const;
    Gradient gradient(const ModelParams& params, const Eigen::MatrixXd& eta) const;

private:
    void add_log(const MatchLog& log, const CovariateBuilder& builder,
                 std::vector<int>& season_counts, bool season_scope);
    int unit_of(const std::string& label);
    int pattern_of(const Eigen::VectorXd& c);

    bool model_failure_receiver_ = true;
    int p_ = 0, d1_ = 0, d2_ = 0, d3_ = 0;
    std::vector<std::string> unit_labels_;
    std::unordered_map<std::string, int> unit_index_;
    std::vector<Event> events_;
    std::vector<RatePattern> rate_patterns_;
};

double match_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                            const MatchLog& log, const LikelihoodConfig& cfg);
double season_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                             const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg);
Gradient grad_log_likelihood(const ModelParams& params, const RandomEffects& effects,
                             const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg);

// --- MAP (warm start for MCMC) ----------------------------------------------

struct MapOptions {
    double grad_tol = 1e-6;  // max-norm
    int max_iters = 500;
    double fixed_effect_sd = 10.0;  // Gaussian prior scale
};

enum class MapStatus { converged, max_iters, line_search_failed };

struct MapResult {
    ModelParams params;
    RandomEffects effects;
    double objective = 0;  // penalized log-likelihood at the optimum
    MapStatus status = MapStatus::converged;
    int iterations = 0;
};

// Quasi-Newton ascent on log-likelihood + log-prior with the random-effect
// covariance held fixed at identity (the LKJ mode; sigma pinned at 1 because
// the Exponential mode is degenerate at 0). MCMC handles Sigma fully.
MapResult map_estimate(const std::vector<MatchLog>& logs, const LikelihoodConfig& cfg,
                       const MapOptions& opts = {});

}  // namespace passnet
