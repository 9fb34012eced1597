#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

namespace passnet {

// Largest linear predictor magnitude we accept before declaring the inputs
// mis-scaled. exp(700) is just inside double range.
inline constexpr double kMaxLinearPredictor = 700.0;

struct Player {
    int index = -1;          // dense index into the active roster
    std::string label;       // position or player name, e.g. "GK"
};

struct RosterState {
    std::vector<Player> team1;
    std::vector<Player> team2;
    double effective_from = 0.0;  // minutes

    int size() const { return static_cast<int>(team1.size() + team2.size()); }
    // 0 for team1, 1 for team2; throws on unknown index.
    int team_of(int player_index) const;
    const std::string& label_of(int player_index) const;
    int index_of(const std::string& label) const;  // -1 if unknown
    void validate(bool full_match = false) const;
};

// Roster with indices 0..n1-1 on team1 and n1..n1+n2-1 on team2.
RosterState make_roster(const std::vector<std::string>& team1_labels,
                        const std::vector<std::string>& team2_labels);

// Covariates frozen at possession start for one passer.
struct CovariateBundle {
    Eigen::VectorXd rate;                            // c_i, length p
    Eigen::VectorXd success;                         // x1, length d1
    std::vector<int> fail_candidates;                // opposing-team player indices
    std::vector<Eigen::VectorXd> fail_cov;           // x2 per fail candidate
    std::vector<int> succ_candidates;                // teammate player indices (excl. passer)
    std::vector<Eigen::VectorXd> succ_cov;           // x3 per success candidate
};

struct ModelParams {
    Eigen::VectorXd omega;  // holding-time rate coefficients, length p
    Eigen::VectorXd alpha;  // success-logit coefficients, length d1
    Eigen::VectorXd beta;   // failure-receiver coefficients, length d2
    Eigen::VectorXd gamma;  // success-receiver coefficients, length d3
};

// Per-unit latent 3-vectors (success, failure-receiver, success-receiver
// columns). Units are players or positions; unit_of maps roster labels to rows.
struct RandomEffects {
    Eigen::MatrixXd eta;  // n_units x 3
    std::vector<std::string> unit_labels;
    std::unordered_map<std::string, int> unit_index;

    static RandomEffects zero(const std::vector<std::string>& labels);
    int unit_of(const std::string& label) const;  // throws if missing
    double value(const std::string& label, int component) const;
};

// Sigma = diag(sd) * corr * diag(sd).
struct CovarianceSpec {
    Eigen::Vector3d sd = Eigen::Vector3d::Ones();
    Eigen::Matrix3d corr = Eigen::Matrix3d::Identity();

    Eigen::Matrix3d sigma() const;
    void validate() const;  // sd > 0, corr symmetric unit-diagonal positive definite
};

// --- Kernels -----------------------------------------------------------------

// lambda = exp(omega . c); throws on dimension mismatch or |omega.c| > 700.
double holding_rate(const Eigen::VectorXd& omega, const Eigen::VectorXd& c);

// logistic(alpha . x1 + eta1), numerically stable.
double success_probability(const Eigen::VectorXd& alpha, const Eigen::VectorXd& x1, double eta1);

// Log-sum-exp softmax over candidate linear predictors coef . x[k] + eta[k].
// Returns probabilities aligned with the candidate list.
Eigen::VectorXd softmax_distribution(const Eigen::VectorXd& coef,
                                     const std::vector<Eigen::VectorXd>& x,
                                     const Eigen::VectorXd& eta);

// Full-roster probability vectors: zero outside the legal candidate set.
Eigen::VectorXd failure_pass_distribution(const Eigen::VectorXd& beta,
                                          const CovariateBundle& cov,
                                          const Eigen::VectorXd& eta2_candidates,
                                          int passer, const RosterState& roster);
Eigen::VectorXd success_pass_distribution(const Eigen::VectorXd& gamma,
                                          const CovariateBundle& cov,
                                          const Eigen::VectorXd& eta3_candidates,
                                          int passer, const RosterState& roster);

// --- Generator matrix (short-interval CTMC approximation) -------------------

struct GeneratorMatrix {
    Eigen::MatrixXd q;
    RosterState roster;
};

// Per-player random-effect values resolved against the roster.
struct ResolvedEffects {
    Eigen::VectorXd eta1, eta2, eta3;  // length roster.size()
};

ResolvedEffects resolve_effects(const RandomEffects& effects, const RosterState& roster);

// q_ij = lambda_i P(S=0) P(i->j|S=0) across teams, lambda_i P(S=1) P(i->j|S=1)
// within team, -lambda_i on the diagonal. Covariates are frozen snapshots.
GeneratorMatrix generator_matrix(const ModelParams& params, const ResolvedEffects& effects,
                                 const std::vector<CovariateBundle>& covariates,
                                 const RosterState& roster);

}  // namespace passnet
