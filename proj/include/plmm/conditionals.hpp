#pragma once

#include <vector>

#include <Eigen/Dense>

#include "plmm/model.hpp"
#include "plmm/stochastics.hpp"

namespace plmm {

/// Per-cluster summaries of the clustering covariates under the current allocation.
struct ClusterSufficientStats {
	std::vector<int> count;
	std::vector<Eigen::VectorXd> mean;
	std::vector<Eigen::MatrixXd> scatter;               // sum (u - mean)(u - mean)^T
	std::vector<std::vector<Eigen::VectorXd>> cat_counts;  // [cluster][covariate] level counts
};

ClusterSufficientStats compute_cluster_stats(const DesignViews &views, const std::vector<int> &z);

struct NiwParams {
	Eigen::VectorXd mean;
	double kappa = 0.0;
	double dof = 0.0;
	Eigen::MatrixXd scale;
};

/// NIW posterior for cluster c under the zero-mean prior NIW(0, lambda0, nu0, phi0).
NiwParams niw_posterior(const ClusterSufficientStats &stats, int c, const Hyperparameters &hyper);

struct GaussianMoments {
	Eigen::VectorXd mean;
	Eigen::MatrixXd cov;
};

struct GammaParams {
	double shape = 0.0;
	double rate = 0.0;
};

// Block a

std::vector<AssignmentParams> update_assignment_params(const ClusterSufficientStats &stats,
                                                       const Hyperparameters &hyper, RngStream &rng);

// Block b

/// beta | y, Z, sigma^2, eta, W_int with every gamma_c integrated out.
GaussianMoments beta_marginal_moments(const DesignViews &views, const ParameterState &state,
                                      const Hyperparameters &hyper);

/// gamma_c | y, Z, beta, sigma^2, eta, W_int; the prior N(0, W_int) when cluster c is empty.
GaussianMoments gamma_conditional_moments(const DesignViews &views, const ParameterState &state,
                                          const Eigen::VectorXd &beta, int cluster);

struct BetaGamma {
	Eigen::VectorXd beta;
	std::vector<Eigen::VectorXd> gamma;
};

/// Joint draw: beta from its gamma-marginal conditional, then every gamma_c given beta.
BetaGamma update_beta_gamma_joint(const DesignViews &views, const ParameterState &state,
                                  const Hyperparameters &hyper, RngStream &rng);

/// Posterior of the error precision. The fixed-effect prior N(0, sigma^2 / lambda I) ties beta
/// to sigma^2, so beta contributes p_fe / 2 to the shape and lambda |beta|^2 / 2 to the rate.
GammaParams sigma_precision_posterior(const DesignViews &views, const ParameterState &state,
                                      const Hyperparameters &hyper);
double update_sigma(const DesignViews &views, const ParameterState &state, const Hyperparameters &hyper,
                    RngStream &rng);

/// eta_j | y, Z, beta, sigma^2, gamma, W_re.
GaussianMoments random_effect_moments(const DesignViews &views, const ParameterState &state, int individual);
std::vector<Eigen::VectorXd> update_random_effects(const DesignViews &views, const ParameterState &state,
                                                   RngStream &rng);

PsdMatrix update_wre(const std::vector<Eigen::VectorXd> &eta, const Hyperparameters &hyper, RngStream &rng);
PsdMatrix update_wint(const std::vector<Eigen::VectorXd> &gamma, const Hyperparameters &hyper, RngStream &rng);

// Block c

/// Unnormalized log allocation weights of observation i over all clusters.
Eigen::VectorXd allocation_log_weights(const DesignViews &views, const ParameterState &state, int obs);
std::vector<int> update_allocations(const DesignViews &views, const ParameterState &state, RngStream &rng);

struct StickDraw {
	Eigen::VectorXd sticks;
	Eigen::VectorXd weights;
};

/// V_c ~ Beta(1 + n_c, zeta + sum_{l>c} n_l) for c < C, V_C = 1.
StickDraw update_weights(const std::vector<int> &z, double zeta, int clusters, RngStream &rng);

/// zeta ~ Gamma(a_zeta + C - 1, rate 1/b_zeta - sum_{c<C} log(1 - V_c)).
GammaParams concentration_posterior(const Eigen::VectorXd &sticks, const Hyperparameters &hyper);
double update_concentration(const Eigen::VectorXd &sticks, const Hyperparameters &hyper, RngStream &rng);

} // namespace plmm
