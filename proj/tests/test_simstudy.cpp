#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"

using namespace passnet;

namespace {

SimStudyConfig tiny_config() {
    SimStudyConfig cfg = default_simstudy_config();
    cfg.n_seasons = 3;
    cfg.seed = 4242;
    cfg.threads = 1;
    cfg.sim.pass_count = 120;
    cfg.mcmc.chains = 2;
    cfg.mcmc.warmup = 120;
    cfg.mcmc.iters = 150;
    cfg.mcmc.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("the bundled study fixture matches the published recovery setup") {
    const SimStudyConfig cfg = default_simstudy_config();
    CHECK(cfg.n_seasons == 20);
    CHECK(cfg.sim.team_scoped);
    CHECK(cfg.sim.mode == StopMode::pass_count);
    CHECK(cfg.sim.pass_count == 1000);
    CHECK(cfg.sim.roster.team1.size() == 11);
    CHECK(cfg.sim.roster.team2.size() == 1);
    CHECK(cfg.truth.omega.size() == 13);
    CHECK(cfg.truth.omega[0] == -2.70);
    CHECK(cfg.truth.omega[11] == -0.47);  // winning
    CHECK(cfg.truth.omega[12] == 0.0);    // losing
    CHECK(cfg.truth.alpha[0] == 2.00);
    CHECK(cfg.truth.alpha[5] == -1.50);   // air pass
    CHECK(cfg.truth.gamma[0] == -0.80);   // graph distance
    CHECK(cfg.truth_cov.sd.maxCoeff() == 0.0);  // recovery truth has no effect noise
}

TEST_CASE("a tiny study recovers per-season results and aggregates") {
    const SimStudyConfig cfg = tiny_config();
    const SimStudyReport report = run_simulation_study(cfg);
    CHECK(report.n_ok == 3);
    REQUIRE(report.seasons.size() == 3);
    const std::size_t n_params = report.param_names.size();
    CHECK(report.truth.size() == n_params);
    CHECK(report.mean_post_mean.size() == n_params);
    CHECK(report.p025.size() == n_params);
    CHECK(report.p975.size() == n_params);
    CHECK(report.coverage.size() == n_params);
    for (const auto& season : report.seasons) {
        CHECK(season.ok);
        CHECK(season.post_mean.size() == n_params);
        CHECK(season.q025.size() == n_params);
        CHECK(season.q975.size() == n_params);
        for (std::size_t j = 0; j < n_params; ++j) {
            CHECK(season.q025[j] <= season.post_mean[j] + 1e-12);
            CHECK(season.post_mean[j] <= season.q975[j] + 1e-12);
        }
    }
    for (double c : report.coverage) {
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
    CHECK(report.fixed_effect_coverage > 0.0);
    // seasons see different data: their posterior means differ
    CHECK(report.seasons[0].post_mean[0] != report.seasons[1].post_mean[0]);
}

TEST_CASE("studies are resumable and corrupt season files are regenerated") {
    SimStudyConfig cfg = tiny_config();
    cfg.out_dir = "simstudy_resume";
    std::filesystem::remove_all(cfg.out_dir);
    const SimStudyReport first = run_simulation_study(cfg);
    REQUIRE(std::filesystem::exists(cfg.out_dir / "season_0.json"));
    const auto mtime0 = std::filesystem::last_write_time(cfg.out_dir / "season_0.json");

    // a rerun reuses every season file and reproduces the report exactly
    const SimStudyReport second = run_simulation_study(cfg);
    CHECK(std::filesystem::last_write_time(cfg.out_dir / "season_0.json") == mtime0);
    REQUIRE(second.seasons.size() == first.seasons.size());
    for (std::size_t s = 0; s < first.seasons.size(); ++s)
        CHECK(second.seasons[s].post_mean == first.seasons[s].post_mean);
    CHECK(second.coverage == first.coverage);

    // a corrupt file is recomputed, landing on the same deterministic result
    {
        std::ofstream out(cfg.out_dir / "season_1.json");
        out << "{not json";
    }
    const SimStudyReport third = run_simulation_study(cfg);
    CHECK(third.seasons[1].ok);
    CHECK(third.seasons[1].post_mean == first.seasons[1].post_mean);
    std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("parallel and serial season execution agree") {
    SimStudyConfig serial = tiny_config();
    SimStudyConfig parallel = tiny_config();
    parallel.threads = 3;
    const SimStudyReport a = run_simulation_study(serial);
    const SimStudyReport b = run_simulation_study(parallel);
    REQUIRE(a.seasons.size() == b.seasons.size());
    for (std::size_t s = 0; s < a.seasons.size(); ++s) {
        CHECK(a.seasons[s].post_mean == b.seasons[s].post_mean);
        CHECK(a.seasons[s].q975 == b.seasons[s].q975);
    }
}

TEST_CASE("study reports serialize with truth and coverage") {
    SimStudyConfig cfg = tiny_config();
    cfg.n_seasons = 1;
    const SimStudyReport report = run_simulation_study(cfg);
    write_simstudy(report, "simstudy_test.json");
    std::ifstream in("simstudy_test.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("passnet-simstudy-1") != std::string::npos);
    CHECK(text.find("coverage") != std::string::npos);
    CHECK(text.find("omega[GK]") != std::string::npos);
    std::remove("simstudy_test.json");
}
