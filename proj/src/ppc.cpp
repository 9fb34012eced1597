#include "passnet/ppc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "passnet/summary.hpp"

namespace passnet {

namespace {

struct Stats {
    double mean_holding = 0;
    double success_prop = 0;
};

Stats compute_stats(const std::vector<MatchLog>& logs) {
    double holding = 0;
    long n = 0, succ = 0;
    for (const auto& log : logs)
        for (const auto& e : log.events) {
            holding += e.holding_time;
            ++n;
            succ += e.success ? 1 : 0;
        }
    if (n == 0) throw std::invalid_argument("ppc: observed data has no passes");
    return {holding / n, static_cast<double>(succ) / n};
}

}  // namespace

PpcReport posterior_predictive_check(const PosteriorChains& chains,
                                     const std::vector<MatchLog>& observed,
                                     const LikelihoodConfig& cfg, const PpcConfig& ppc) {
    if (chains.n_draws() == 0) throw std::invalid_argument("ppc: empty posterior");
    if (ppc.n_draws < 2) throw std::invalid_argument("ppc: n_draws must be >= 2");
    const CovariateBuilder builder(cfg.covariates, cfg.formation);
    const Stats obs = compute_stats(observed);

    // exogenous air-pass frequency estimated from the data
    long n_air = 0, n_pass = 0;
    for (const auto& log : observed)
        for (const auto& e : log.events) {
            ++n_pass;
            n_air += e.air ? 1 : 0;
        }
    const double air_prob = n_pass ? static_cast<double>(n_air) / n_pass : 0.0;

    const long total = static_cast<long>(chains.n_chains()) * chains.n_draws();
    const int used = std::min<long>(ppc.n_draws, total);

    std::vector<double> rep_holding, rep_success;
    const Philox base(ppc.seed, 0x9C9Cull);
    for (int j = 0; j < used; ++j) {
        const long flat = (total - 1) * static_cast<long>(j) / (used - 1);
        const int chain = static_cast<int>(flat / chains.n_draws());
        const int row = static_cast<int>(flat % chains.n_draws());
        const DrawView draw = decode_draw(chains, chain, row, builder);

        std::vector<MatchLog> rep;
        Philox rng = base.derive(j);
        for (std::size_t m = 0; m < observed.size(); ++m) {
            if (observed[m].events.empty()) continue;
            SimulationConfig sim;
            sim.roster = observed[m].roster;
            sim.mode = StopMode::pass_count;
            sim.pass_count = static_cast<int>(observed[m].events.size());
            sim.team_scoped = observed[m].team_scoped;
            sim.goals = observed[m].goals;
            sim.covariates = cfg.covariates;
            sim.formation = cfg.formation;
            sim.air_pass_prob = air_prob;
            Philox mrng = rng.derive(m);
            rep.push_back(simulate_match(sim, draw.params, draw.effects, mrng));
        }
        const Stats s = compute_stats(rep);
        rep_holding.push_back(s.mean_holding);
        rep_success.push_back(s.success_prop);
    }

    auto make_stat = [&](const std::string& name, double observed_value,
                         std::vector<double> replicated) {
        PpcStatistic st;
        st.name = name;
        st.observed = observed_value;
        st.lower = quantile(replicated, 0.025);
        st.upper = quantile(replicated, 0.975);
        st.inside = observed_value >= st.lower && observed_value <= st.upper;
        st.replicated = std::move(replicated);
        return st;
    };

    PpcReport report;
    report.n_draws = used;
    report.stats.push_back(make_stat("mean_holding_time", obs.mean_holding, std::move(rep_holding)));
    report.stats.push_back(make_stat("success_proportion", obs.success_prop, std::move(rep_success)));
    return report;
}

void write_ppc(const PpcReport& report, const std::string& json_path, const std::string& csv_path) {
    nlohmann::ordered_json j;
    j["schema"] = "passnet-ppc-1";
    j["n_draws"] = report.n_draws;
    nlohmann::ordered_json stats = nlohmann::ordered_json::array();
    for (const auto& s : report.stats) {
        stats.push_back({{"name", s.name},
                         {"observed", s.observed},
                         {"lower", s.lower},
                         {"upper", s.upper},
                         {"inside", s.inside}});
    }
    j["stats"] = std::move(stats);
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write ppc report to " + json_path);
    out << j.dump(2) << "\n";

    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot write ppc csv to " + csv_path);
    csv << "statistic,draw,value\n";
    for (const auto& s : report.stats) {
        csv << s.name << ",observed," << s.observed << "\n";
        for (std::size_t k = 0; k < s.replicated.size(); ++k)
            csv << s.name << "," << k << "," << s.replicated[k] << "\n";
    }
}

}  // namespace passnet
