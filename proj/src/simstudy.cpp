#include "passnet/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "passnet/summary.hpp"

namespace passnet {

namespace {

using json = nlohmann::ordered_json;

std::vector<double> truth_vector(const SimStudyConfig& cfg,
                                 const std::vector<std::string>& param_names) {
    std::vector<double> truth;
    truth.reserve(param_names.size());
    auto append = [&](const Eigen::VectorXd& v) {
        for (int k = 0; k < v.size(); ++k) truth.push_back(v[k]);
    };
    append(cfg.truth.omega);
    append(cfg.truth.alpha);
    append(cfg.truth.beta);
    append(cfg.truth.gamma);
    const std::size_t n_eta = param_names.size() - truth.size() - 6;
    for (std::size_t k = 0; k < n_eta; ++k) truth.push_back(0.0);
    for (int k = 0; k < 3; ++k) truth.push_back(cfg.truth_cov.sd[k]);
    truth.push_back(cfg.truth_cov.corr(0, 1));
    truth.push_back(cfg.truth_cov.corr(0, 2));
    truth.push_back(cfg.truth_cov.corr(1, 2));
    if (truth.size() != param_names.size())
        throw std::invalid_argument("simstudy: truth dimensions do not match the model");
    return truth;
}

std::filesystem::path season_file(const SimStudyConfig& cfg, int season) {
    return cfg.out_dir / ("season_" + std::to_string(season) + ".json");
}

bool load_season(const SimStudyConfig& cfg, int season, std::size_t n_params, SeasonResult& out) {
    if (cfg.out_dir.empty()) return false;
    std::ifstream in(season_file(cfg, season));
    if (!in) return false;
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        return false;
    }
    if (j.value("schema", "") != "passnet-season-1" || !j.value("ok", false)) return false;
    out.season = season;
    out.ok = true;
    out.post_mean = j["post_mean"].get<std::vector<double>>();
    out.q025 = j["q2.5"].get<std::vector<double>>();
    out.q975 = j["q97.5"].get<std::vector<double>>();
    return out.post_mean.size() == n_params && out.q025.size() == n_params &&
           out.q975.size() == n_params;
}

void store_season(const SimStudyConfig& cfg, const SeasonResult& r) {
    if (cfg.out_dir.empty()) return;
    std::filesystem::create_directories(cfg.out_dir);
    json j;
    j["schema"] = "passnet-season-1";
    j["season"] = r.season;
    j["ok"] = r.ok;
    j["error"] = r.error;
    j["post_mean"] = r.post_mean;
    j["q2.5"] = r.q025;
    j["q97.5"] = r.q975;
    std::ofstream out(season_file(cfg, r.season));
    if (out) out << j.dump(2) << "\n";
}

SeasonResult run_season(const SimStudyConfig& cfg, int season,
                        const std::vector<std::string>& param_names) {
    SeasonResult r;
    r.season = season;
    try {
        Philox rng(cfg.seed, 0x57D1ull);
        rng = rng.derive(season);

        SimulationConfig sim = cfg.sim;
        // exogenous score timeline over the modeled-possession clock
        const CovariateBuilder builder(sim.covariates, sim.formation);
        double mean_holding = 0.0;
        for (const auto& player : sim.roster.team1) {
            PassContext ctx;
            ctx.passer = player.index;
            ctx.roster = &sim.roster;
            std::vector<int> counts(sim.roster.size(), 0);
            ctx.pass_received = &counts;
            mean_holding += 1.0 / std::exp(cfg.truth.omega.dot(builder.build(ctx).rate));
        }
        mean_holding /= static_cast<double>(sim.roster.team1.size());
        const double horizon = mean_holding * sim.pass_count;
        Philox grng = rng.derive(7);
        sim.goals.clear();
        // jittered but structurally fixed timeline: the possessing team scores
        // first, the opponent equalises and goes ahead, so every season spends
        // real exposure tied, winning, and losing and the score coefficients
        // stay data-identified in every fit
        sim.goals.push_back({(0.10 + 0.15 * grng.uniform()) * horizon, 0});
        sim.goals.push_back({(0.35 + 0.15 * grng.uniform()) * horizon, 1});
        sim.goals.push_back({(0.60 + 0.15 * grng.uniform()) * horizon, 1});
        for (int extra = grng.uniform_int(cfg.max_goals + 1); extra > 0; --extra)
            sim.goals.push_back(
                {(0.80 + 0.19 * grng.uniform()) * horizon, grng.uniform_int(2)});
        std::sort(sim.goals.begin(), sim.goals.end(),
                  [](const ScoreEvent& a, const ScoreEvent& b) { return a.time < b.time; });

        RandomEffects effects = RandomEffects::zero([&] {
            std::vector<std::string> labels;
            for (const auto& p : sim.roster.team1) labels.push_back(p.label);
            return labels;
        }());
        if (cfg.truth_cov.sd.maxCoeff() > 0.0) {
            const Eigen::Matrix3d L =
                Eigen::LLT<Eigen::Matrix3d>(cfg.truth_cov.sigma()).matrixL();
            Philox erng = rng.derive(11);
            for (int u = 0; u < effects.eta.rows(); ++u) {
                const Eigen::Vector3d z{erng.normal(), erng.normal(), erng.normal()};
                effects.eta.row(u) = (L * z).transpose();
            }
        }

        Philox srng = rng.derive(1);
        MatchLog log = simulate_match(sim, cfg.truth, effects, srng);
        log.match_id = "season" + std::to_string(season);

        LikelihoodConfig lik;
        lik.model_failure_receiver = !sim.team_scoped;
        lik.covariates = sim.covariates;
        lik.formation = sim.formation;

        McmcConfig mcmc = cfg.mcmc;
        mcmc.seed = cfg.mcmc.seed ^ (0x9E3779B97F4A7C15ull * (season + 1));
        const PosteriorChains chains = run_mcmc({log}, lik, cfg.prior, mcmc);
        const PosteriorSummary summary = summarize(chains);
        if (summary.params.size() != param_names.size())
            throw std::runtime_error("season summary has unexpected parameter count");
        for (const auto& p : summary.params) {
            r.post_mean.push_back(p.mean);
            r.q025.push_back(p.q025);
            r.q975.push_back(p.q975);
        }
        r.ok = true;
    } catch (const std::exception& ex) {
        r.ok = false;
        r.error = ex.what();
        r.post_mean.clear();
        r.q025.clear();
        r.q975.clear();
    }
    return r;
}

}  // namespace

SimStudyReport run_simulation_study(const SimStudyConfig& cfg) {
    if (cfg.n_seasons < 1) throw std::invalid_argument("simstudy: n_seasons must be >= 1");
    // parameter names come from a fit layout on an empty dataset
    LikelihoodConfig lik;
    lik.model_failure_receiver = !cfg.sim.team_scoped;
    lik.covariates = cfg.sim.covariates;
    lik.formation = cfg.sim.formation;
    McmcConfig probe = cfg.mcmc;
    probe.chains = 1;
    probe.warmup = 0;
    probe.iters = 1;
    probe.thin = 1;
    const PosteriorChains layout = run_mcmc({}, lik, cfg.prior, probe);

    SimStudyReport report;
    report.param_names = layout.param_names;
    report.truth = truth_vector(cfg, report.param_names);
    report.seasons.resize(cfg.n_seasons);

    McmcConfig season_mcmc = cfg.mcmc;
    SimStudyConfig worker_cfg = cfg;
    worker_cfg.mcmc = season_mcmc;

    std::atomic<int> next{0};
    auto work = [&] {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= cfg.n_seasons) return;
            SeasonResult r;
            if (load_season(cfg, s, report.param_names.size(), r)) {
                report.seasons[s] = std::move(r);
                continue;
            }
            r = run_season(worker_cfg, s, report.param_names);
            store_season(cfg, r);
            report.seasons[s] = std::move(r);
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    int workers = cfg.threads > 0 ? cfg.threads : static_cast<int>(hw);
    workers = std::min(workers, cfg.n_seasons);
    if (workers <= 1) {
        work();
    } else {
        worker_cfg.mcmc.threads = 1;  // seasons in parallel, chains serial within
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    const std::size_t n_params = report.param_names.size();
    report.mean_post_mean.assign(n_params, 0.0);
    report.p025.assign(n_params, 0.0);
    report.p975.assign(n_params, 0.0);
    report.coverage.assign(n_params, 0.0);
    std::vector<std::vector<double>> means(n_params);
    for (const auto& s : report.seasons) {
        if (!s.ok) continue;
        ++report.n_ok;
        for (std::size_t k = 0; k < n_params; ++k) {
            means[k].push_back(s.post_mean[k]);
            if (s.q025[k] <= report.truth[k] && report.truth[k] <= s.q975[k])
                report.coverage[k] += 1.0;
        }
    }
    if (report.n_ok > 0) {
        double fixed_sum = 0.0;
        int fixed_count = 0;
        for (std::size_t k = 0; k < n_params; ++k) {
            report.coverage[k] /= report.n_ok;
            report.mean_post_mean[k] =
                std::accumulate(means[k].begin(), means[k].end(), 0.0) / report.n_ok;
            report.p025[k] = quantile(means[k], 0.025);
            report.p975[k] = quantile(means[k], 0.975);
            const std::string& name = report.param_names[k];
            if (name.starts_with("omega[") || name.starts_with("alpha[") ||
                name.starts_with("beta[") || name.starts_with("gamma[")) {
                fixed_sum += report.coverage[k];
                ++fixed_count;
            }
        }
        if (fixed_count) report.fixed_effect_coverage = fixed_sum / fixed_count;
    }
    return report;
}

void write_simstudy(const SimStudyReport& report, const std::string& path) {
    json j;
    j["schema"] = "passnet-simstudy-1";
    j["n_seasons"] = static_cast<int>(report.seasons.size());
    j["n_ok"] = report.n_ok;
    j["param_names"] = report.param_names;
    j["truth"] = report.truth;
    j["mean_post_mean"] = report.mean_post_mean;
    j["p2.5"] = report.p025;
    j["p97.5"] = report.p975;
    j["coverage"] = report.coverage;
    j["fixed_effect_coverage"] = report.fixed_effect_coverage;
    json failures = json::array();
    for (const auto& s : report.seasons)
        if (!s.ok) failures.push_back({{"season", s.season}, {"error", s.error}});
    j["failures"] = std::move(failures);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write simstudy report to " + path);
    out << j.dump(2) << "\n";
}

SimStudyConfig default_simstudy_config() {
    SimStudyConfig cfg;
    const FormationGraph formation = load_formation("3-5-2");
    cfg.sim.formation = formation;
    cfg.sim.roster = make_roster(formation.positions, {"OPP"});
    cfg.sim.team_scoped = true;
    cfg.sim.mode = StopMode::pass_count;
    cfg.sim.pass_count = 1000;
    cfg.sim.air_pass_prob = 0.3;

    const int p = static_cast<int>(formation.positions.size()) + 2;
    cfg.truth.omega = Eigen::VectorXd::Zero(p);
    cfg.truth.omega.head(formation.positions.size()).setConstant(-2.70);
    cfg.truth.omega[p - 2] = -0.47;  // winning
    cfg.truth.omega[p - 1] = 0.0;    // losing
    cfg.truth.alpha = Eigen::VectorXd::Zero(8);
    cfg.truth.alpha << 2.00, 0.00, -0.57, 0.00, -0.50, -1.50, 0.00, 0.00;
    cfg.truth.beta = Eigen::VectorXd::Zero(0);
    cfg.truth.gamma = Eigen::VectorXd::Zero(2);
    cfg.truth.gamma << -0.80, 0.00;
    cfg.truth_cov.sd.setZero();
    cfg.truth_cov.corr = Eigen::Matrix3d::Identity();
    return cfg;
}

}  // namespace passnet
