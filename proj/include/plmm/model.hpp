#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plmm/stochastics.hpp"

namespace plmm {

/// Repeated-measures observations: outcome, regression covariates and clustering covariates.
///
/// Individuals and categories are 0-based internally. Every individual owns at least one
/// observation and every categorical code lies in [0, cat_levels[j]).
struct LongitudinalDataset {
	std::vector<int> individual_of;   // g(i)
	int n_individuals = 0;
	Eigen::VectorXd time;
	Eigen::VectorXd y;
	Eigen::MatrixXd x;                // n x p_x, may include generated columns (intercept, splines)
	std::vector<std::string> x_names;
	Eigen::MatrixXd u_cont;           // n x q_cont
	std::vector<std::string> u_cont_names;
	Eigen::MatrixXi u_cat;            // n x l
	std::vector<int> cat_levels;
	std::vector<std::string> u_cat_names;

	Eigen::Index n() const noexcept { return y.size(); }
	int m() const noexcept { return n_individuals; }

	/// Throws DataError on any broken invariant.
	void validate() const;
};

/// Column roles and structural choices of the model.
struct ModelSpec {
	std::vector<int> fe_cols;
	std::vector<int> re_cols;
	std::vector<int> int_cols;
	int truncation = 30;              // C, maximum number of clusters
	bool standardize_u = true;        // z-score continuous clustering covariates
	bool standardize_x = false;       // z-score non-constant regression covariates

	void validate(Eigen::Index p_x) const;
	bool operator==(const ModelSpec &) const = default;
};

/// Prior hyperparameters. Gamma priors on precisions use (shape, rate); the concentration
/// prior keeps the (shape, scale) form and is converted where it is sampled.
struct Hyperparameters {
	double lambda = 0.01;             // beta ~ N(0, sigma^2 / lambda I)
	double a_sigma = 1.0;             // 1/sigma^2 ~ Gamma(a_sigma, b_sigma)
	double b_sigma = 1.0;
	PsdMatrix psi_re;
	double nu_re = 0.0;
	PsdMatrix psi_int;
	double nu_int = 0.0;
	double lambda0 = 0.01;            // (mu_c, Sigma_c) ~ NIW(0, lambda0, nu0, phi0)
	double nu0 = 0.0;
	PsdMatrix phi0;
	double alpha_dir = 1.0;           // symmetric Dirichlet concentration for categorical covariates
	double a_zeta = 1.0;              // zeta ~ Gamma(shape a_zeta, scale b_zeta)
	double b_zeta = 1.0;

	static Hyperparameters defaults(int dim_re, int dim_int, int q_cont);
	void validate(int dim_re, int dim_int, int q_cont) const;
};

struct ModelDims {
	int n = 0;
	int m = 0;
	int p_fe = 0;
	int p_re = 0;
	int p_int = 0;
	int q_cont = 0;
	std::vector<int> cat_levels;
	int clusters = 0;

	bool operator==(const ModelDims &) const = default;
};

/// Per-column affine map x' = (x - center) / scale.
struct Standardization {
	Eigen::VectorXd center;
	Eigen::VectorXd scale;
	Eigen::VectorXd constant_value;  // value of constant columns, NaN otherwise

	static Standardization identity(Eigen::Index cols);
	/// Coefficients of a design made of `cols` (indices into the standardized matrix), mapped
	/// back to the original scale. Shifts are absorbed by the first constant column when present.
	Eigen::VectorXd to_original(const Eigen::VectorXd &coef, const std::vector<int> &cols) const;
	Eigen::VectorXd to_standardized(const Eigen::VectorXd &coef, const std::vector<int> &cols) const;
};

/// Design matrices and index blocks derived from a dataset and a spec.
struct DesignViews {
	ModelDims dims;
	Eigen::VectorXd y;
	Eigen::MatrixXd fe;
	Eigen::MatrixXd re;
	Eigen::MatrixXd interaction;
	Eigen::MatrixXd u_cont;
	Eigen::MatrixXi u_cat;
	std::vector<int> individual_of;
	std::vector<std::vector<int>> individual_rows;
	Standardization u_scaling;
	Standardization x_scaling;
	ModelSpec spec;
};

DesignViews build_design_views(const LongitudinalDataset &data, const ModelSpec &spec);

/// Row indices of each cluster under allocation z (labels 0..clusters-1).
std::vector<std::vector<int>> cluster_rows(const std::vector<int> &z, int clusters);
std::vector<int> cluster_counts(const std::vector<int> &z, int clusters);

struct AssignmentParams {
	Eigen::VectorXd mu;
	PsdMatrix sigma;
	std::vector<Eigen::VectorXd> phi;  // one simplex per categorical covariate
};

/// One complete draw of every sampled quantity. Allocations are 0-based here and 1-based in
/// every persisted or printed form.
struct ParameterState {
	Eigen::VectorXd beta;
	double sigma2 = 1.0;
	std::vector<Eigen::VectorXd> gamma;
	PsdMatrix w_int;
	std::vector<Eigen::VectorXd> eta;
	PsdMatrix w_re;
	std::vector<AssignmentParams> theta_u;
	std::vector<int> z;
	Eigen::VectorXd sticks;            // V, last entry fixed at 1
	Eigen::VectorXd weights;           // pi
	double zeta = 1.0;

	int non_empty_clusters() const;
};

/// pi_c = V_c prod_{l<c} (1 - V_l)
Eigen::VectorXd stick_weights(const Eigen::VectorXd &sticks);

/// Flat encoding of a ParameterState for a fixed set of dimensions.
struct StateLayout {
	ModelDims dims;

	Eigen::Index size() const;
	Eigen::Index theta_u_size() const;  // per cluster
	std::vector<double> flatten(const ParameterState &s) const;
	ParameterState unflatten(const std::vector<double> &values, const std::vector<int> &z) const;
};

/// Lloyd's k-means seeded by k-means++; ties go to the lowest centroid index.
std::vector<int> kmeans(const Eigen::MatrixXd &points, int k, RngStream &rng, int max_iter = 100);

/// Starting state: k-means allocations with k = min(C, 10), zero regression effects,
/// sigma^2 = var(y), covariances at their prior means, one NIW posterior sweep for theta_u,
/// uniform weights and zeta at its prior mean.
ParameterState init_state(const DesignViews &views, const Hyperparameters &hyper, RngStream &rng);

} // namespace plmm
