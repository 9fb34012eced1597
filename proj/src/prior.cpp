#include "passnet/prior.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace passnet {

PriorSpec PriorSpec::preset(const std::string& name) {
    PriorSpec spec;
    if (name == "prior1")
        spec.fixed_effect_sd = 5.0;
    else if (name == "prior2")
        spec.fixed_effect_sd = 10.0;
    else if (name == "prior3")
        spec.fixed_effect_sd = 15.0;
    else
        throw std::invalid_argument("unknown prior preset: " + name);
    return spec;
}

double log_gaussian_prior(const Eigen::VectorXd& v, double sd) {
    if (!(sd > 0.0)) throw std::invalid_argument("log_gaussian_prior: sd must be positive");
    const double n = static_cast<double>(v.size());
    return -0.5 * n * std::log(2.0 * std::numbers::pi) - n * std::log(sd) -
           0.5 * v.squaredNorm() / (sd * sd);
}

double log_mvn3(const Eigen::Vector3d& x, const Eigen::Matrix3d& sigma) {
    const Eigen::LLT<Eigen::Matrix3d> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("log_mvn3: covariance not positive definite");
    const Eigen::Matrix3d L = llt.matrixL();
    const double logdet = 2.0 * std::log(L(0, 0) * L(1, 1) * L(2, 2));
    const Eigen::Vector3d z = L.triangularView<Eigen::Lower>().solve(x);
    return -1.5 * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * z.squaredNorm();
}

double log_lkj(const Eigen::Matrix3d& corr, double shape) {
    const double det = corr.determinant();
    if (!(det > 0.0)) throw std::invalid_argument("log_lkj: correlation matrix not positive definite");
    return (shape - 1.0) * std::log(det);
}

double log_prior(const ModelParams& params, const RandomEffects& effects,
                 const CovarianceSpec& cov, const PriorSpec& prior) {
    cov.validate();
    double lp = log_gaussian_prior(params.omega, prior.fixed_effect_sd) +
                log_gaussian_prior(params.alpha, prior.fixed_effect_sd) +
                log_gaussian_prior(params.beta, prior.fixed_effect_sd) +
                log_gaussian_prior(params.gamma, prior.fixed_effect_sd);
    lp += log_lkj(cov.corr, prior.lkj_shape);
    for (int k = 0; k < 3; ++k)
        lp += std::log(prior.scale_rate) - prior.scale_rate * cov.sd[k];
    const Eigen::Matrix3d sigma = cov.sigma();
    for (int i = 0; i < effects.eta.rows(); ++i)
        lp += log_mvn3(effects.eta.row(i).transpose(), sigma);
    return lp;
}

// r12 = tanh(y0), r23 = tanh(y1); y2 is the partial correlation of components
// 1 and 3 given 2, so positive definiteness holds for every y.
Eigen::Matrix3d CorrTransform::corr(const Eigen::Vector3d& y) {
    const double r12 = std::tanh(y[0]);
    const double r23 = std::tanh(y[1]);
    const double r13_2 = std::tanh(y[2]);
    const double rho13 = r13_2 * std::sqrt((1.0 - r12 * r12) * (1.0 - r23 * r23)) + r12 * r23;
    Eigen::Matrix3d c = Eigen::Matrix3d::Identity();
    c(0, 1) = c(1, 0) = r12;
    c(1, 2) = c(2, 1) = r23;
    c(0, 2) = c(2, 0) = rho13;
    return c;
}

Eigen::Vector3d CorrTransform::unconstrained(const Eigen::Matrix3d& corr) {
    const double r12 = corr(0, 1);
    const double r23 = corr(1, 2);
    const double denom = std::sqrt((1.0 - r12 * r12) * (1.0 - r23 * r23));
    if (!(denom > 0.0))
        throw std::invalid_argument("CorrTransform: correlation on the boundary");
    const double r13_2 = (corr(0, 2) - r12 * r23) / denom;
    if (!(std::fabs(r12) < 1.0 && std::fabs(r23) < 1.0 && std::fabs(r13_2) < 1.0))
        throw std::invalid_argument("CorrTransform: matrix not positive definite");
    return {std::atanh(r12), std::atanh(r23), std::atanh(r13_2)};
}

double CorrTransform::log_jacobian(const Eigen::Vector3d& y) {
    // d rho/d r is triangular: rho12, rho23 map one-to-one and
    // d rho13 / d r13;2 = sqrt((1-r12^2)(1-r23^2)); each tanh contributes 1-r^2.
    double lj = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double r = std::tanh(y[k]);
        lj += std::log1p(-r * r);
    }
    const double r12 = std::tanh(y[0]);
    const double r23 = std::tanh(y[1]);
    lj += 0.5 * (std::log1p(-r12 * r12) + std::log1p(-r23 * r23));
    return lj;
}

namespace {

// Marsaglia-Tsang, extended to shape < 1 by boosting.
double sample_gamma(double shape, Philox& rng) {
    if (shape < 1.0) {
        const double u = rng.uniform();
        return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

double sample_beta(double a, double b, Philox& rng) {
    const double x = sample_gamma(a, rng);
    const double y = sample_gamma(b, rng);
    return x / (x + y);
}

}  // namespace

PriorDraw sample_prior(const PriorSpec& prior, const CovariateBuilder& builder,
                       const std::vector<std::string>& unit_labels, Philox& rng) {
    PriorDraw draw;
    auto gauss_vec = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = prior.fixed_effect_sd * rng.normal();
        return v;
    };
    draw.params.omega = gauss_vec(builder.rate_dim());
    draw.params.alpha = gauss_vec(builder.success_dim());
    draw.params.beta = gauss_vec(builder.fail_dim());
    draw.params.gamma = gauss_vec(builder.succ_dim());

    for (int k = 0; k < 3; ++k) draw.cov.sd[k] = rng.exponential(prior.scale_rate);
    // Vine: level-1 partials ~ 2 Beta(shape + 1/2, shape + 1/2) - 1, the
    // level-2 partial ~ 2 Beta(shape, shape) - 1 for a 3x3 LKJ(shape) matrix.
    Eigen::Vector3d y;
    const double b1 = prior.lkj_shape + 0.5;
    y[0] = std::atanh(2.0 * sample_beta(b1, b1, rng) - 1.0);
    y[1] = std::atanh(2.0 * sample_beta(b1, b1, rng) - 1.0);
    y[2] = std::atanh(2.0 * sample_beta(prior.lkj_shape, prior.lkj_shape, rng) - 1.0);
    draw.cov.corr = CorrTransform::corr(y);

    draw.effects = RandomEffects::zero(unit_labels);
    const Eigen::Matrix3d L = Eigen::LLT<Eigen::Matrix3d>(draw.cov.sigma()).matrixL();
    for (int i = 0; i < draw.effects.eta.rows(); ++i) {
        const Eigen::Vector3d z{rng.normal(), rng.normal(), rng.normal()};
        draw.effects.eta.row(i) = (L * z).transpose();
    }
    return draw;
}

double CorrTransform::log_det_corr(const Eigen::Vector3d& y) {
    // det = (1-r12^2)(1-r23^2)(1-r13;2^2) in the vine factorization
    double ld = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double r = std::tanh(y[k]);
        ld += std::log1p(-r * r);
    }
    return ld;
}

}  // namespace passnet
