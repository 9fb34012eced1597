#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "passnet/event_log.hpp"
#include "passnet/mcmc.hpp"
#include "passnet/ppc.hpp"
#include "passnet/simstudy.hpp"
#include "passnet/simulator.hpp"
#include "passnet/summary.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace passnet;

namespace {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Global {
    std::uint64_t seed = 0;
    int threads = 0;
    bool json_errors = false;
    std::string out = "out";
};

// FNV-1a over file bytes; used for config/data provenance in manifests.
std::string digest_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount()) {
        for (std::streamsize k = 0; k < in.gcount(); ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 0x100000001B3ull;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a-") + hex;
}

json load_config(const std::string& path, const std::string& expected_schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& ex) {
        throw ValidationError("config " + path + ": " + ex.what());
    }
    if (!expected_schema.empty() && cfg.value("schema", "") != expected_schema)
        throw ValidationError("config " + path + ": expected schema \"" + expected_schema + "\"");
    return cfg;
}

CovariateConfig covariates_from(const json& j) {
    CovariateConfig cfg;
    auto flag = [&](const char* key, bool& field) {
        if (j.contains(key)) field = j.at(key).get<bool>();
    };
    flag("rate_position_indicators", cfg.rate_position_indicators);
    flag("rate_winning", cfg.rate_winning);
    flag("rate_losing", cfg.rate_losing);
    flag("m2_length", cfg.m2_length);
    flag("m2_forward", cfg.m2_forward);
    flag("m2_start_half", cfg.m2_start_half);
    flag("m2_end_third", cfg.m2_end_third);
    flag("m2_air", cfg.m2_air);
    flag("m2_winning", cfg.m2_winning);
    flag("m2_losing", cfg.m2_losing);
    flag("m3_graph_distance", cfg.m3_graph_distance);
    flag("m3_pass_received", cfg.m3_pass_received);
    flag("season_scope_pass_received", cfg.season_scope_pass_received);
    return cfg;
}

McmcConfig mcmc_from(const json& j, const Global& g) {
    McmcConfig cfg;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    if (j.contains("chains")) cfg.chains = j.at("chains").get<int>();
    if (j.contains("warmup")) cfg.warmup = j.at("warmup").get<int>();
    if (j.contains("iters")) cfg.iters = j.at("iters").get<int>();
    if (j.contains("thin")) cfg.thin = j.at("thin").get<int>();
    if (j.contains("gradient_proposals"))
        cfg.gradient_proposals = j.at("gradient_proposals").get<bool>();
    return cfg;
}

Eigen::VectorXd vector_from(const json& j, const std::string& what, long expected = -1) {
    if (!j.is_array()) throw ValidationError(what + " must be an array of numbers");
    Eigen::VectorXd v(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) v[k] = j[k].get<double>();
    if (expected >= 0 && v.size() != expected)
        throw ValidationError(what + " must have length " + std::to_string(expected));
    return v;
}

void write_manifest(const Global& g, const std::string& command, const json& extra,
                    const std::vector<std::string>& outputs) {
    json m;
    m["schema"] = "passnet-manifest-1";
    m["command"] = command;
    m["seed"] = g.seed;
    m["schemas"] = {kEventSchema, "passnet-chains-1", "passnet-summary-1",
                    "passnet-ppc-1", "passnet-simstudy-1"};
    for (auto& [key, value] : extra.items()) m[key] = value;
    m["outputs"] = outputs;
    std::ofstream out(fs::path(g.out) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + g.out);
    out << m.dump(2) << "\n";
}

LikelihoodConfig lik_from(const json& cfg) {
    LikelihoodConfig lik;
    lik.formation = load_formation(cfg.value("formation", "3-5-2"));
    if (cfg.contains("covariates")) lik.covariates = covariates_from(cfg.at("covariates"));
    lik.model_failure_receiver = cfg.value("model_failure_receiver", false);
    return lik;
}

// --- simulate ----------------------------------------------------------------

int cmd_simulate(const Global& g, const std::string& config_path) {
    const json cfg = load_config(config_path, "passnet-sim-config-1");
    SimulationConfig sim;
    sim.formation = load_formation(cfg.value("formation", "3-5-2"));
    std::vector<std::string> team1 = sim.formation.positions;
    std::vector<std::string> team2 = {"OPP"};
    if (cfg.contains("team1")) team1 = cfg.at("team1").get<std::vector<std::string>>();
    if (cfg.contains("team2")) team2 = cfg.at("team2").get<std::vector<std::string>>();
    sim.roster = make_roster(team1, team2);
    sim.team_scoped = cfg.value("team_scoped", true);
    const std::string mode = cfg.value("mode", "pass_count");
    if (mode == "pass_count") {
        sim.mode = StopMode::pass_count;
        sim.pass_count = cfg.value("pass_count", 1000);
    } else if (mode == "wall_clock") {
        sim.mode = StopMode::wall_clock;
        sim.stop_time = cfg.value("stop_time", 90.0);
        sim.short_season = cfg.value("short_season", false);
    } else {
        throw ValidationError("config " + config_path + ": mode must be pass_count or wall_clock");
    }
    sim.air_pass_prob = cfg.value("air_pass_prob", 0.3);
    if (cfg.contains("covariates")) sim.covariates = covariates_from(cfg.at("covariates"));
    if (cfg.contains("goals"))
        for (const auto& goal : cfg.at("goals"))
            sim.goals.push_back({goal.at("time").get<double>(), goal.at("team").get<int>()});

    const CovariateBuilder builder(sim.covariates, sim.formation);
    ModelParams truth;
    if (cfg.contains("truth") && cfg.at("truth").is_object()) {
        const json& t = cfg.at("truth");
        truth.omega = vector_from(t.at("omega"), "truth.omega", builder.rate_dim());
        truth.alpha = vector_from(t.at("alpha"), "truth.alpha", builder.success_dim());
        truth.beta = t.contains("beta") ? vector_from(t.at("beta"), "truth.beta")
                                        : Eigen::VectorXd::Zero(0);
        truth.gamma = vector_from(t.at("gamma"), "truth.gamma", builder.succ_dim());
    } else if (cfg.value("truth", "") == "recovery-defaults") {
        truth = default_simstudy_config().truth;
    } else {
        throw ValidationError("config " + config_path +
                              ": truth must be an object or \"recovery-defaults\"");
    }

    RandomEffects effects = RandomEffects::zero(team1);
    if (cfg.contains("effects"))
        for (auto& [label, row] : cfg.at("effects").items()) {
            const Eigen::VectorXd v = vector_from(row, "effects." + label, 3);
            effects.eta.row(effects.unit_of(label)) = v.transpose();
        }

    const int n_matches = cfg.value("n_matches", 1);
    fs::create_directories(g.out);
    const std::vector<MatchLog> logs =
        simulate_season(sim, truth, effects, n_matches, Philox(g.seed, 0x51Bull));
    std::vector<std::string> outputs;
    for (const auto& log : logs) {
        const std::string name = log.match_id + ".csv";
        write_match_log(log, (fs::path(g.out) / name).string());
        outputs.push_back(name);
    }
    write_manifest(g, "simulate",
                   {{"config_path", config_path}, {"config_digest", digest_file(config_path)}},
                   outputs);
    return 0;
}

// --- fit ---------------------------------------------------------------------

int cmd_fit(const Global& g, const std::string& config_path,
            const std::vector<std::string>& data_paths, const std::string& prior_preset) {
    const json cfg = load_config(config_path, "passnet-fit-config-1");
    const LikelihoodConfig lik = lik_from(cfg);
    const McmcConfig mcmc = mcmc_from(cfg.value("mcmc", json::object()), g);
    const PriorSpec prior = PriorSpec::preset(prior_preset);

    std::vector<MatchLog> logs;
    json data_entries = json::array();
    for (const auto& path : data_paths) {
        auto parsed = parse_event_log(path);
        logs.insert(logs.end(), parsed.begin(), parsed.end());
        data_entries.push_back({{"path", path}, {"digest", digest_file(path)}});
    }

    const PosteriorChains chains = run_mcmc(logs, lik, prior, mcmc);
    fs::create_directories(g.out);
    chains.save(fs::path(g.out) / "chains");
    const PosteriorSummary summary = summarize(chains);
    write_summary(summary, (fs::path(g.out) / "summary.json").string());

    std::vector<std::string> outputs = {"summary.json", "chains/state.json"};
    for (int c = 0; c < chains.n_chains(); ++c)
        outputs.push_back("chains/chain_" + std::to_string(c) + ".csv");
    write_manifest(g, "fit",
                   {{"config_path", config_path},
                    {"config_digest", digest_file(config_path)},
                    {"prior", prior_preset},
                    {"data", data_entries}},
                   outputs);
    return 0;
}

// --- update ------------------------------------------------------------------

int cmd_update(const Global& g, const std::string& prev_dir,
               const std::vector<std::string>& new_data, const std::string& prior_preset) {
    const fs::path prev(prev_dir);
    const json prev_manifest = load_config((prev / "manifest.json").string(), "passnet-manifest-1");
    if (!prev_manifest.contains("config_path") || !prev_manifest.contains("data"))
        throw ValidationError("previous manifest lacks fit provenance: " + prev_dir);

    // lineage: the previous run's data files must be unchanged
    std::vector<MatchLog> logs;
    for (const auto& entry : prev_manifest.at("data")) {
        const std::string path = entry.at("path").get<std::string>();
        const std::string recorded = entry.at("digest").get<std::string>();
        const std::string actual = digest_file(path);
        if (actual != recorded)
            throw ValidationError("lineage mismatch for " + path + ": manifest has " + recorded +
                                  ", file is " + actual);
        auto parsed = parse_event_log(path);
        logs.insert(logs.end(), parsed.begin(), parsed.end());
    }
    const json fit_cfg =
        load_config(prev_manifest.at("config_path").get<std::string>(), "passnet-fit-config-1");
    const LikelihoodConfig lik = lik_from(fit_cfg);
    const McmcConfig mcmc = mcmc_from(fit_cfg.value("mcmc", json::object()), g);
    const PriorSpec prior = PriorSpec::preset(prior_preset);

    json data_entries = prev_manifest.at("data");
    for (const auto& path : new_data) {
        auto parsed = parse_event_log(path);
        logs.insert(logs.end(), parsed.begin(), parsed.end());
        data_entries.push_back({{"path", path}, {"digest", digest_file(path)}});
    }

    const PosteriorChains prev_chains = PosteriorChains::load(prev / "chains");
    const PosteriorChains chains = update_posterior(prev_chains, logs, lik, prior, mcmc);
    fs::create_directories(g.out);
    chains.save(fs::path(g.out) / "chains");
    write_summary(summarize(chains), (fs::path(g.out) / "summary.json").string());

    std::vector<std::string> outputs = {"summary.json", "chains/state.json"};
    for (int c = 0; c < chains.n_chains(); ++c)
        outputs.push_back("chains/chain_" + std::to_string(c) + ".csv");
    write_manifest(g, "update",
                   {{"config_path", prev_manifest.at("config_path")},
                    {"config_digest", prev_manifest.at("config_digest")},
                    {"prev_dir", prev_dir},
                    {"prev_digest", digest_file(prev / "manifest.json")},
                    {"prior", prior_preset},
                    {"data", data_entries}},
                   outputs);
    return 0;
}

// --- summarize ---------------------------------------------------------------

int cmd_summarize(const Global& g, const std::string& run_dir) {
    const PosteriorChains chains = PosteriorChains::load(fs::path(run_dir) / "chains");
    const PosteriorSummary summary = summarize(chains);
    fs::create_directories(g.out);
    write_summary(summary, (fs::path(g.out) / "summary.json").string());
    std::cout << "parameter,median,q2.5,q97.5,ess,rhat\n";
    for (const auto& p : summary.params)
        std::cout << p.name << "," << p.median << "," << p.q025 << "," << p.q975 << "," << p.ess
                  << "," << p.rhat << "\n";
    write_manifest(g, "summarize",
                   {{"prev_dir", run_dir},
                    {"prev_digest", digest_file(fs::path(run_dir) / "manifest.json")}},
                   {"summary.json"});
    return 0;
}

// --- ppc ---------------------------------------------------------------------

int cmd_ppc(const Global& g, const std::string& run_dir,
            const std::vector<std::string>& data_paths, int n_draws) {
    const fs::path prev(run_dir);
    const PosteriorChains chains = PosteriorChains::load(prev / "chains");
    const json prev_manifest = load_config((prev / "manifest.json").string(), "passnet-manifest-1");
    const json fit_cfg =
        load_config(prev_manifest.at("config_path").get<std::string>(), "passnet-fit-config-1");
    const LikelihoodConfig lik = lik_from(fit_cfg);

    std::vector<MatchLog> logs;
    for (const auto& path : data_paths) {
        auto parsed = parse_event_log(path);
        logs.insert(logs.end(), parsed.begin(), parsed.end());
    }
    PpcConfig ppc;
    ppc.seed = g.seed;
    ppc.n_draws = n_draws;
    const PpcReport report = posterior_predictive_check(chains, logs, lik, ppc);
    fs::create_directories(g.out);
    write_ppc(report, (fs::path(g.out) / "ppc.json").string(),
              (fs::path(g.out) / "ppc.csv").string());
    write_manifest(g, "ppc",
                   {{"prev_dir", run_dir},
                    {"prev_digest", digest_file(prev / "manifest.json")}},
                   {"ppc.json", "ppc.csv"});
    return 0;
}

// --- simstudy ----------------------------------------------------------------

int cmd_simstudy(const Global& g, const std::string& config_path) {
    SimStudyConfig cfg = default_simstudy_config();
    json raw = json::object();
    std::string digest = "builtin-defaults";
    if (!config_path.empty()) {
        raw = load_config(config_path, "passnet-simstudy-config-1");
        digest = digest_file(config_path);
    }
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    cfg.n_seasons = raw.value("n_seasons", cfg.n_seasons);
    cfg.sim.pass_count = raw.value("passes", cfg.sim.pass_count);
    cfg.max_goals = raw.value("max_goals", cfg.max_goals);
    if (raw.contains("mcmc")) cfg.mcmc = mcmc_from(raw.at("mcmc"), g);
    cfg.mcmc.seed = g.seed;
    if (raw.contains("prior")) cfg.prior = PriorSpec::preset(raw.at("prior").get<std::string>());
    fs::create_directories(g.out);
    cfg.out_dir = fs::path(g.out) / "seasons";

    const SimStudyReport report = run_simulation_study(cfg);
    write_simstudy(report, (fs::path(g.out) / "study.json").string());
    {
        std::ofstream csv(fs::path(g.out) / "percentiles.csv");
        csv << "parameter,truth,mean_post_mean,p2.5,p97.5,coverage\n";
        for (std::size_t k = 0; k < report.param_names.size(); ++k)
            csv << report.param_names[k] << "," << report.truth[k] << ","
                << report.mean_post_mean[k] << "," << report.p025[k] << "," << report.p975[k]
                << "," << report.coverage[k] << "\n";
    }
    std::vector<std::string> outputs = {"study.json", "percentiles.csv"};
    for (const auto& s : report.seasons)
        outputs.push_back("seasons/season_" + std::to_string(s.season) + ".json");
    write_manifest(g, "simstudy", {{"config_path", config_path}, {"config_digest", digest}},
                   outputs);
    return 0;
}

int fail(const Global& g, int code, const std::string& message) {
    if (g.json_errors) {
        json err{{"error", message}, {"code", code}};
        std::cerr << err.dump() << "\n";
    } else {
        std::cerr << "error: " << message << "\n";
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ball-possession process toolkit: simulation, inference, and diagnostics"};
    app.require_subcommand(1);
    Global g;
    app.add_option("--seed", g.seed, "Random seed (64-bit)");
    app.add_option("--threads", g.threads, "Worker threads (0 = hardware)");
    app.add_flag("--json", g.json_errors, "Machine-readable error JSON on stderr");
    app.add_option("--out", g.out, "Output directory");

    std::string config_path, prev_dir, prior_preset = "prior2";
    std::vector<std::string> data_paths;
    int ppc_draws = 200;

    auto* simulate = app.add_subcommand("simulate", "Generate event logs from a truth config");
    simulate->add_option("--config", config_path, "Simulation config (JSON)")->required();

    auto* fit = app.add_subcommand("fit", "Posterior sampling from event logs");
    fit->add_option("--config", config_path, "Fit config (JSON)")->required();
    fit->add_option("--data", data_paths, "Event-log files")->required();
    fit->add_option("--prior", prior_preset, "Prior preset: prior1 | prior2 | prior3");

    auto* update = app.add_subcommand("update", "Refresh a fit with newly arrived logs");
    update->add_option("--prev", prev_dir, "Previous run directory")->required();
    update->add_option("--data", data_paths, "New event-log files");
    update->add_option("--prior", prior_preset, "Prior preset: prior1 | prior2 | prior3");

    auto* summarize_cmd = app.add_subcommand("summarize", "Summaries from stored chains");
    summarize_cmd->add_option("--prev", prev_dir, "Run directory with chains")->required();

    auto* ppc = app.add_subcommand("ppc", "Posterior predictive checks");
    ppc->add_option("--prev", prev_dir, "Run directory with chains")->required();
    ppc->add_option("--data", data_paths, "Observed event-log files")->required();
    ppc->add_option("--draws", ppc_draws, "Posterior draws to use");

    auto* simstudy = app.add_subcommand("simstudy", "Parameter-recovery simulation study");
    simstudy->add_option("--config", config_path, "Study config (JSON); defaults when omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        return fail(g, 1, e.what());
    }

    try {
        if (simulate->parsed()) return cmd_simulate(g, config_path);
        if (fit->parsed()) return cmd_fit(g, config_path, data_paths, prior_preset);
        if (update->parsed()) return cmd_update(g, prev_dir, data_paths, prior_preset);
        if (summarize_cmd->parsed()) return cmd_summarize(g, prev_dir);
        if (ppc->parsed()) return cmd_ppc(g, prev_dir, data_paths, ppc_draws);
        if (simstudy->parsed()) return cmd_simstudy(g, config_path);
    } catch (const ValidationError& e) {
        return fail(g, 1, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(g, 1, e.what());
    } catch (const std::exception& e) {
        return fail(g, 2, e.what());
    }
    return fail(g, 1, "no subcommand");
}
