#include "passnet/covariates.hpp"

#include <cmath>
#include <stdexcept>

namespace passnet {

CovariateBuilder::CovariateBuilder(CovariateConfig cfg, FormationGraph graph)
    : cfg_(cfg), graph_(std::move(graph)), dist_(graph_.distance_matrix()) {
    if (cfg_.rate_position_indicators)
        for (const auto& pos : graph_.positions) rate_names_.push_back(pos);
    if (cfg_.rate_winning) rate_names_.push_back("winning");
    if (cfg_.rate_losing) rate_names_.push_back("losing");

    success_names_.push_back("intercept");
    if (cfg_.m2_length) success_names_.push_back("length");
    if (cfg_.m2_forward) success_names_.push_back("forward");
    if (cfg_.m2_start_half) success_names_.push_back("start_half");
    if (cfg_.m2_end_third) success_names_.push_back("end_third");
    if (cfg_.m2_air) success_names_.push_back("air");
    if (cfg_.m2_winning) success_names_.push_back("winning");
    if (cfg_.m2_losing) success_names_.push_back("losing");

    if (cfg_.m3_graph_distance) succ_names_.push_back("graph_distance");
    if (cfg_.m3_pass_received) succ_names_.push_back("pass_received");
}

CovariateBundle CovariateBuilder::build(const PassContext& ctx) const {
    if (ctx.roster == nullptr) throw std::invalid_argument("build_covariates: missing roster");
    const RosterState& roster = *ctx.roster;
    const int passer = ctx.passer;
    const int passer_team = roster.team_of(passer);
    const std::string& passer_label = roster.label_of(passer);
    const bool winning = ctx.goals_for > ctx.goals_against;
    const bool losing = ctx.goals_for < ctx.goals_against;

    CovariateBundle b;

    b.rate = Eigen::VectorXd::Zero(rate_dim());
    int k = 0;
    if (cfg_.rate_position_indicators) {
        const int pos = graph_.position_index(passer_label);
        if (pos < 0)
            throw std::invalid_argument("build_covariates: passer label '" + passer_label +
                                        "' is not a position of formation " + graph_.name);
        b.rate[pos] = 1.0;
        k += static_cast<int>(graph_.positions.size());
    }
    if (cfg_.rate_winning) b.rate[k++] = winning ? 1.0 : 0.0;
    if (cfg_.rate_losing) b.rate[k++] = losing ? 1.0 : 0.0;

    b.success = Eigen::VectorXd::Zero(success_dim());
    k = 0;
    b.success[k++] = 1.0;
    const bool needs_geometry = cfg_.m2_length || cfg_.m2_forward || cfg_.m2_start_half || cfg_.m2_end_third;
    if (needs_geometry && (!std::isfinite(ctx.start_x) || !std::isfinite(ctx.end_x)))
        throw std::invalid_argument("build_covariates: geometric covariates enabled but geometry missing");
    if (cfg_.m2_length)
        b.success[k++] = std::hypot(ctx.end_x - ctx.start_x, ctx.end_y - ctx.start_y);
    if (cfg_.m2_forward) b.success[k++] = ctx.end_x > ctx.start_x ? 1.0 : 0.0;
    if (cfg_.m2_start_half) b.success[k++] = ctx.start_x > 50.0 ? 1.0 : 0.0;
    if (cfg_.m2_end_third) b.success[k++] = ctx.end_x > 200.0 / 3.0 ? 1.0 : 0.0;
    if (cfg_.m2_air) b.success[k++] = ctx.air ? 1.0 : 0.0;
    if (cfg_.m2_winning) b.success[k++] = winning ? 1.0 : 0.0;
    if (cfg_.m2_losing) b.success[k++] = losing ? 1.0 : 0.0;

    const int passer_pos = graph_.position_index(passer_label);
    for (int j = 0; j < roster.size(); ++j) {
        if (j == passer) continue;
        if (roster.team_of(j) == passer_team) {
            Eigen::VectorXd x3 = Eigen::VectorXd::Zero(succ_dim());
            int c = 0;
            if (cfg_.m3_graph_distance) {
                const int jpos = graph_.position_index(roster.label_of(j));
                if (passer_pos < 0 || jpos < 0)
                    throw std::invalid_argument("build_covariates: graph distance needs position labels");
                x3[c++] = static_cast<double>(dist_[passer_pos][jpos]);
            }
            if (cfg_.m3_pass_received) {
                if (ctx.pass_received == nullptr)
                    throw std::invalid_argument("build_covariates: pass_received counts missing");
                x3[c++] = static_cast<double>((*ctx.pass_received)[j]);
            }
            b.succ_candidates.push_back(j);
            b.succ_cov.push_back(std::move(x3));
        } else {
            b.fail_candidates.push_back(j);
            b.fail_cov.push_back(Eigen::VectorXd::Zero(0));
        }
    }
    return b;
}

}  // namespace passnet
