#pragma once

#include <string>

#include "passnet/covariates.hpp"
#include "passnet/model.hpp"
#include "passnet/rng.hpp"

namespace passnet {

// Gaussian fixed effects, LKJ correlation, Exponential scales.
struct PriorSpec {
    double fixed_effect_sd = 10.0;
    double lkj_shape = 2.0;
    double scale_rate = 1.0;

    // "prior1" / "prior2" / "prior3": fixed-effect sd 5 / 10 / 15.
    static PriorSpec preset(const std::string& name);
};

double log_prior(const ModelParams& params, const RandomEffects& effects,
                 const CovarianceSpec& cov, const PriorSpec& prior);

// Pieces (used by the sampler's block targets).
double log_gaussian_prior(const Eigen::VectorXd& v, double sd);
double log_mvn3(const Eigen::Vector3d& x, const Eigen::Matrix3d& sigma);
// Non-normalized LKJ log-density: (shape - 1) * log det(corr).
double log_lkj(const Eigen::Matrix3d& corr, double shape);

// Unconstrained parameterization of a 3x3 correlation matrix via vine partial
// correlations r = tanh(y); every y maps to a positive-definite matrix.
struct CorrTransform {
    static Eigen::Matrix3d corr(const Eigen::Vector3d& y);
    static Eigen::Vector3d unconstrained(const Eigen::Matrix3d& corr);
    // log |d(rho_12, rho_13, rho_23) / d(y_0, y_1, y_2)|
    static double log_jacobian(const Eigen::Vector3d& y);
    static double log_det_corr(const Eigen::Vector3d& y);
};

// One full model configuration drawn from the prior (vine construction for the
// LKJ correlation; coefficient dimensions follow the covariate builder).
struct PriorDraw {
    ModelParams params;
    CovarianceSpec cov;
    RandomEffects effects;
};
PriorDraw sample_prior(const PriorSpec& prior, const CovariateBuilder& builder,
                       const std::vector<std::string>& unit_labels, Philox& rng);

}  // namespace passnet
