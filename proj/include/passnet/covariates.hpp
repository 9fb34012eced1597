#pragma once

#include <string>
#include <vector>

#include "passnet/formation.hpp"
#include "passnet/model.hpp"

namespace passnet {

// Covariate modules: M1 drives the holding-time rate, M2 the success logit,
// M3 the success-receiver choice. Failure-receiver covariates are left to
// caller-built bundles (d2 = 0 here); team-scoped data does not model them.
struct CovariateConfig {
    // M1
    bool rate_position_indicators = true;
    bool rate_winning = true;
    bool rate_losing = true;
    // M2 (intercept always included)
    bool m2_length = true;
    bool m2_forward = true;
    bool m2_start_half = true;
    bool m2_end_third = true;
    bool m2_air = true;
    bool m2_winning = true;
    bool m2_losing = true;
    // M3
    bool m3_graph_distance = true;
    bool m3_pass_received = true;
    // "received the ball prior to the m-th pass": reset per match (default) or
    // accumulate across a season.
    bool season_scope_pass_received = false;
};

// State needed to freeze one pass's covariates at possession start.
struct PassContext {
    int passer = -1;
    const RosterState* roster = nullptr;
    double start_x = 0, start_y = 0, end_x = 0, end_y = 0;  // 100x100 pitch, attack toward +x
    bool air = false;
    int goals_for = 0, goals_against = 0;        // passer's team perspective
    const std::vector<int>* pass_received = nullptr;  // per roster index, per chosen scope
};

class CovariateBuilder {
public:
    CovariateBuilder(CovariateConfig cfg, FormationGraph graph);

    CovariateBundle build(const PassContext& ctx) const;

    int rate_dim() const { return static_cast<int>(rate_names_.size()); }
    int success_dim() const { return static_cast<int>(success_names_.size()); }
    int fail_dim() const { return 0; }
    int succ_dim() const { return static_cast<int>(succ_names_.size()); }

    const std::vector<std::string>& rate_names() const { return rate_names_; }
    const std::vector<std::string>& success_names() const { return success_names_; }
    const std::vector<std::string>& succ_names() const { return succ_names_; }
    const CovariateConfig& config() const { return cfg_; }
    const FormationGraph& formation() const { return graph_; }

private:
    CovariateConfig cfg_;
    FormationGraph graph_;
    std::vector<std::vector<int>> dist_;
    std::vector<std::string> rate_names_, success_names_, succ_names_;
};

inline CovariateBundle build_covariates(const PassContext& ctx, const CovariateConfig& cfg,
                                        const FormationGraph& g) {
    return CovariateBuilder(cfg, g).build(ctx);
}

}  // namespace passnet
