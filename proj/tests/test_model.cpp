#include <doctest.h>

#include <cmath>

#include "helpers.hpp"

using namespace passnet;

TEST_CASE("holding rate is exp of the linear predictor") {
    Eigen::VectorXd omega(3), c(3);
    omega << -2.70, 0.5, 1.0;
    c << 1, 0, 0;
    CHECK(holding_rate(omega, c) == doctest::Approx(0.06720551273974976).epsilon(1e-15));
    c << 1, -0.5, -0.39;
    CHECK(holding_rate(omega, c) == doctest::Approx(0.03543695772159864).epsilon(1e-14));
    Eigen::VectorXd wrong(2);
    CHECK_THROWS_AS(holding_rate(omega, wrong), std::invalid_argument);
    Eigen::VectorXd big = Eigen::VectorXd::Constant(3, 400.0);
    CHECK_THROWS_AS(holding_rate(big, Eigen::VectorXd::Ones(3)), std::domain_error);
}

TEST_CASE("success probability is the stable logistic") {
    Eigen::VectorXd alpha(2), x(2);
    alpha << 3.0, 0.34;
    x << 1, 1;
    CHECK(success_probability(alpha, x, 0.0) == doctest::Approx(0.965775842307604).epsilon(1e-14));
    alpha << 0.5, 0.0;
    CHECK(success_probability(alpha, x, 0.0) == doctest::Approx(0.6224593312018546).epsilon(1e-14));
    // extreme predictors saturate without overflow
    alpha << 600.0, 0.0;
    CHECK(success_probability(alpha, x, 0.0) == doctest::Approx(1.0));
    alpha << -600.0, 0.0;
    CHECK(success_probability(alpha, x, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("success probability increases in the random effect") {
    Eigen::VectorXd alpha(1), x(1);
    alpha << 0.3;
    x << 1;
    double prev = 0.0;
    for (double eta = -3.0; eta <= 3.0; eta += 0.5) {
        const double p = success_probability(alpha, x, eta);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("softmax over two candidates with predictor gap 0.98") {
    Eigen::VectorXd coef(1);
    coef << 0.98;
    std::vector<Eigen::VectorXd> x{Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)};
    const Eigen::VectorXd probs = softmax_distribution(coef, x, Eigen::VectorXd::Zero(2));
    CHECK(probs[0] == doctest::Approx(0.7271082163411295).epsilon(1e-14));
    CHECK(probs[1] == doctest::Approx(0.2728917836588705).epsilon(1e-14));
    CHECK(probs.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("softmax with graph distances 1,1,2 at coefficient -0.8") {
    Eigen::VectorXd gamma(1);
    gamma << -0.8;
    std::vector<Eigen::VectorXd> x(3, Eigen::VectorXd::Ones(1));
    x[2][0] = 2.0;
    const Eigen::VectorXd probs = softmax_distribution(gamma, x, Eigen::VectorXd::Zero(3));
    CHECK(probs[0] == doctest::Approx(0.4082750886671592).epsilon(1e-14));
    CHECK(probs[1] == doctest::Approx(0.4082750886671592).epsilon(1e-14));
    CHECK(probs[2] == doctest::Approx(0.18344982266568144).epsilon(1e-14));
}

TEST_CASE("softmax is invariant to a constant shift of the effects") {
    Philox rng(11, 0);
    Eigen::VectorXd coef(2);
    coef << 0.4, -1.1;
    std::vector<Eigen::VectorXd> x;
    Eigen::VectorXd eta(5);
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd v(2);
        v << rng.normal(), rng.normal();
        x.push_back(v);
        eta[k] = rng.normal();
    }
    const Eigen::VectorXd p0 = softmax_distribution(coef, x, eta);
    const Eigen::VectorXd p1 =
        softmax_distribution(coef, x, eta + Eigen::VectorXd::Constant(5, 123.0));
    CHECK((p0 - p1).cwiseAbs().maxCoeff() < 1e-12);
}

namespace {

// Random frozen covariate bundles for every player of a roster.
std::vector<CovariateBundle> random_bundles(const RosterState& roster, Philox& rng, int p, int d1,
                                            int d2, int d3) {
    std::vector<CovariateBundle> out;
    auto vec = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = 0.4 * rng.normal();
        return v;
    };
    for (int i = 0; i < roster.size(); ++i) {
        CovariateBundle b;
        b.rate = vec(p);
        b.success = vec(d1);
        for (int j = 0; j < roster.size(); ++j) {
            if (j == i) continue;
            if (roster.team_of(j) == roster.team_of(i)) {
                b.succ_candidates.push_back(j);
                b.succ_cov.push_back(vec(d3));
            } else {
                b.fail_candidates.push_back(j);
                b.fail_cov.push_back(vec(d2));
            }
        }
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace

TEST_CASE("generator matrix rows sum to zero with -lambda diagonals") {
    Philox rng(2024, 0);
    const RosterState roster = make_roster({"a1", "a2", "a3"}, {"b1", "b2", "b3"});
    for (int rep = 0; rep < 50; ++rep) {
        const auto bundles = random_bundles(roster, rng, 3, 2, 2, 2);
        ModelParams params;
        auto vec = [&](int dim) {
            Eigen::VectorXd v(dim);
            for (int k = 0; k < dim; ++k) v[k] = 0.4 * rng.normal();
            return v;
        };
        params.omega = vec(3);
        params.alpha = vec(2);
        params.beta = vec(2);
        params.gamma = vec(2);
        ResolvedEffects effects{Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(6),
                                Eigen::VectorXd::Zero(6)};
        for (int i = 0; i < 6; ++i) {
            effects.eta1[i] = 0.3 * rng.normal();
            effects.eta2[i] = 0.3 * rng.normal();
            effects.eta3[i] = 0.3 * rng.normal();
        }
        const GeneratorMatrix gen = generator_matrix(params, effects, bundles, roster);
        for (int i = 0; i < 6; ++i) {
            CHECK(std::fabs(gen.q.row(i).sum()) <= 1e-12);
            CHECK(gen.q(i, i) == -holding_rate(params.omega, bundles[i].rate));
            for (int j = 0; j < 6; ++j)
                if (i != j) CHECK(gen.q(i, j) >= 0.0);
        }
    }
}

TEST_CASE("generator with zero parameters is symmetric over candidates") {
    Philox rng(1, 0);
    std::vector<std::string> a, b;
    for (int k = 0; k < 11; ++k) {
        a.push_back("a" + std::to_string(k));
        b.push_back("b" + std::to_string(k));
    }
    const RosterState roster = make_roster(a, b);
    std::vector<CovariateBundle> bundles;
    for (int i = 0; i < 22; ++i) {
        CovariateBundle bun;
        bun.rate = Eigen::VectorXd::Zero(1);
        bun.success = Eigen::VectorXd::Zero(1);
        for (int j = 0; j < 22; ++j) {
            if (j == i) continue;
            if (roster.team_of(j) == roster.team_of(i)) {
                bun.succ_candidates.push_back(j);
                bun.succ_cov.push_back(Eigen::VectorXd::Zero(1));
            } else {
                bun.fail_candidates.push_back(j);
                bun.fail_cov.push_back(Eigen::VectorXd::Zero(1));
            }
        }
        bundles.push_back(std::move(bun));
    }
    ModelParams params;
    params.omega = Eigen::VectorXd::Zero(1);
    params.alpha = Eigen::VectorXd::Zero(1);
    params.beta = Eigen::VectorXd::Zero(1);
    params.gamma = Eigen::VectorXd::Zero(1);
    ResolvedEffects effects{Eigen::VectorXd::Zero(22), Eigen::VectorXd::Zero(22),
                            Eigen::VectorXd::Zero(22)};
    const GeneratorMatrix gen = generator_matrix(params, effects, bundles, roster);
    for (int i = 0; i < 22; ++i) {
        CHECK(gen.q(i, i) == doctest::Approx(-1.0).epsilon(1e-15));
        for (int j = 0; j < 22; ++j) {
            if (i == j) continue;
            const bool same = roster.team_of(i) == roster.team_of(j);
            CHECK(gen.q(i, j) == doctest::Approx(same ? 0.05 : 0.5 / 11.0).epsilon(1e-13));
        }
    }
}

TEST_CASE("covariance spec validation") {
    CovarianceSpec cov;
    cov.validate();
    CHECK((cov.sigma() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
    cov.sd << 2, 1, 0.5;
    cov.corr << 1, 0.3, 0.1, 0.3, 1, -0.2, 0.1, -0.2, 1;
    cov.validate();
    const Eigen::Matrix3d sigma = cov.sigma();
    CHECK(sigma(0, 0) == doctest::Approx(4.0));
    CHECK(sigma(0, 1) == doctest::Approx(2.0 * 1.0 * 0.3));
    cov.sd[0] = -1;
    CHECK_THROWS_AS(cov.validate(), std::invalid_argument);
    cov.sd[0] = 1;
    cov.corr(0, 1) = 0.99;  // asymmetric
    CHECK_THROWS_AS(cov.validate(), std::invalid_argument);
}
