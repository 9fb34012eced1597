#include "passnet/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace passnet {

namespace {

double checked_dot(const Eigen::VectorXd& coef, const Eigen::VectorXd& x, const char* where) {
    if (coef.size() != x.size())
        throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                    std::to_string(coef.size()) + " vs " +
                                    std::to_string(x.size()) + ")");
    const double lp = coef.dot(x);
    if (!std::isfinite(lp) || std::fabs(lp) > kMaxLinearPredictor)
        throw std::domain_error(std::string(where) + ": linear predictor out of range (" +
                                std::to_string(lp) + "); check covariate scaling");
    return lp;
}

}  // namespace

int RosterState::team_of(int player_index) const {
    if (player_index >= 0 && player_index < static_cast<int>(team1.size())) return 0;
    if (player_index < size()) return 1;
    throw std::out_of_range("team_of: player index " + std::to_string(player_index));
}

const std::string& RosterState::label_of(int player_index) const {
    if (player_index < 0 || player_index >= size())
        throw std::out_of_range("label_of: player index " + std::to_string(player_index));
    const int n1 = static_cast<int>(team1.size());
    return player_index < n1 ? team1[player_index].label : team2[player_index - n1].label;
}

int RosterState::index_of(const std::string& label) const {
    for (const auto& p : team1)
        if (p.label == label) return p.index;
    for (const auto& p : team2)
        if (p.label == label) return p.index;
    return -1;
}

void RosterState::validate(bool full_match) const {
    if (team1.empty() || team2.empty())
        throw std::invalid_argument("roster: both teams must be non-empty");
    if (full_match && (team1.size() != 11 || team2.size() != 11))
        throw std::invalid_argument("roster: full-match mode requires 11 players per team");
    std::set<int> indices;
    for (const auto& p : team1) indices.insert(p.index);
    for (const auto& p : team2) indices.insert(p.index);
    if (static_cast<int>(indices.size()) != size() || *indices.begin() != 0 ||
        *indices.rbegin() != size() - 1)
        throw std::invalid_argument("roster: player indices must be dense and unique");
    for (const auto& p : team1)
        if (p.label.empty()) throw std::invalid_argument("roster: empty player label");
    for (const auto& p : team2)
        if (p.label.empty()) throw std::invalid_argument("roster: empty player label");
}

RosterState make_roster(const std::vector<std::string>& team1_labels,
                        const std::vector<std::string>& team2_labels) {
    RosterState r;
    int idx = 0;
    for (const auto& l : team1_labels) r.team1.push_back({idx++, l});
    for (const auto& l : team2_labels) r.team2.push_back({idx++, l});
    r.validate();
    return r;
}

RandomEffects RandomEffects::zero(const std::vector<std::string>& labels) {
    RandomEffects e;
    e.unit_labels = labels;
    e.eta = Eigen::MatrixXd::Zero(static_cast<int>(labels.size()), 3);
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) e.unit_index[labels[i]] = i;
    return e;
}

int RandomEffects::unit_of(const std::string& label) const {
    auto it = unit_index.find(label);
    if (it == unit_index.end())
        throw std::invalid_argument("random effects: no unit for label '" + label + "'");
    return it->second;
}

double RandomEffects::value(const std::string& label, int component) const {
    return eta(unit_of(label), component);
}

Eigen::Matrix3d CovarianceSpec::sigma() const {
    return sd.asDiagonal() * corr * sd.asDiagonal();
}

void CovarianceSpec::validate() const {
    if (!(sd.array() > 0.0).all()) throw std::invalid_argument("covariance: sd must be > 0");
    if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        (corr.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12)
        throw std::invalid_argument("covariance: corr must be symmetric with unit diagonal");
    Eigen::LLT<Eigen::Matrix3d> llt(corr);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("covariance: corr is not positive definite");
}

double holding_rate(const Eigen::VectorXd& omega, const Eigen::VectorXd& c) {
    return std::exp(checked_dot(omega, c, "holding_rate"));
}

double success_probability(const Eigen::VectorXd& alpha, const Eigen::VectorXd& x1, double eta1) {
    double lp = checked_dot(alpha, x1, "success_probability") + eta1;
    if (std::fabs(lp) > kMaxLinearPredictor)
        throw std::domain_error("success_probability: linear predictor out of range");
    // stable sigmoid
    if (lp >= 0.0) return 1.0 / (1.0 + std::exp(-lp));
    const double e = std::exp(lp);
    return e / (1.0 + e);
}

Eigen::VectorXd softmax_distribution(const Eigen::VectorXd& coef,
                                     const std::vector<Eigen::VectorXd>& x,
                                     const Eigen::VectorXd& eta) {
    const int n = static_cast<int>(x.size());
    if (n == 0) throw std::invalid_argument("softmax_distribution: empty candidate set");
    if (eta.size() != n) throw std::invalid_argument("softmax_distribution: eta size mismatch");
    Eigen::VectorXd lp(n);
    for (int k = 0; k < n; ++k) lp[k] = checked_dot(coef, x[k], "softmax_distribution") + eta[k];
    const double m = lp.maxCoeff();
    Eigen::VectorXd w = (lp.array() - m).exp();
    return w / w.sum();
}

namespace {

Eigen::VectorXd scatter(const Eigen::VectorXd& probs, const std::vector<int>& candidates, int n) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < static_cast<int>(candidates.size()); ++k) out[candidates[k]] = probs[k];
    return out;
}

}  // namespace

Eigen::VectorXd failure_pass_distribution(const Eigen::VectorXd& beta,
                                          const CovariateBundle& cov,
                                          const Eigen::VectorXd& eta2_candidates,
                                          int passer, const RosterState& roster) {
    if (cov.fail_candidates.empty())
        throw std::invalid_argument("failure_pass_distribution: empty candidate set");
    const int passer_team = roster.team_of(passer);
    for (int j : cov.fail_candidates)
        if (roster.team_of(j) == passer_team)
            throw std::invalid_argument("failure_pass_distribution: candidate on passer's team");
    return scatter(softmax_distribution(beta, cov.fail_cov, eta2_candidates), cov.fail_candidates,
                   roster.size());
}

Eigen::VectorXd success_pass_distribution(const Eigen::VectorXd& gamma,
                                          const CovariateBundle& cov,
                                          const Eigen::VectorXd& eta3_candidates,
                                          int passer, const RosterState& roster) {
    if (cov.succ_candidates.empty())
        throw std::invalid_argument("success_pass_distribution: empty candidate set");
    const int passer_team = roster.team_of(passer);
    for (int j : cov.succ_candidates)
        if (j == passer || roster.team_of(j) != passer_team)
            throw std::invalid_argument(
                "success_pass_distribution: candidate not a teammate of the passer");
    return scatter(softmax_distribution(gamma, cov.succ_cov, eta3_candidates), cov.succ_candidates,
                   roster.size());
}

ResolvedEffects resolve_effects(const RandomEffects& effects, const RosterState& roster) {
    const int n = roster.size();
    ResolvedEffects r{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (int i = 0; i < n; ++i) {
        // unmodeled players (e.g. an opponent sentinel) get zero effects
        auto it = effects.unit_index.find(roster.label_of(i));
        const int u = it == effects.unit_index.end() ? -1 : it->second;
        r.eta1[i] = u < 0 ? 0.0 : effects.eta(u, 0);
        r.eta2[i] = u < 0 ? 0.0 : effects.eta(u, 1);
        r.eta3[i] = u < 0 ? 0.0 : effects.eta(u, 2);
    }
    return r;
}

GeneratorMatrix generator_matrix(const ModelParams& params, const ResolvedEffects& effects,
                                 const std::vector<CovariateBundle>& covariates,
                                 const RosterState& roster) {
    roster.validate();
    const int n = roster.size();
    if (static_cast<int>(covariates.size()) != n)
        throw std::invalid_argument("generator_matrix: need one covariate bundle per player");
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const CovariateBundle& cov = covariates[i];
        const double lambda = holding_rate(params.omega, cov.rate);
        const double p_success = success_probability(params.alpha, cov.success, effects.eta1[i]);

        Eigen::VectorXd eta2(cov.fail_candidates.size());
        for (int k = 0; k < static_cast<int>(cov.fail_candidates.size()); ++k)
            eta2[k] = effects.eta2[cov.fail_candidates[k]];
        Eigen::VectorXd fail = failure_pass_distribution(params.beta, cov, eta2, i, roster);

        Eigen::VectorXd eta3(cov.succ_candidates.size());
        for (int k = 0; k < static_cast<int>(cov.succ_candidates.size()); ++k)
            eta3[k] = effects.eta3[cov.succ_candidates[k]];
        Eigen::VectorXd succ = success_pass_distribution(params.gamma, cov, eta3, i, roster);

        q.row(i) = lambda * ((1.0 - p_success) * fail + p_success * succ);
        q(i, i) = -lambda;
    }
    return {q, roster};
}

}  // namespace passnet
