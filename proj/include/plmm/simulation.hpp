#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plmm/gibbs.hpp"
#include "plmm/model.hpp"

namespace plmm {

/// Clamped B-spline basis with uniformly spaced internal knots, evaluated by Cox-de Boor.
/// Row i holds the n_basis basis values at times(i); the right end of the domain is included.
Eigen::MatrixXd bspline_basis(const Eigen::VectorXd &times, int degree, int n_basis, double lower, double upper);

/// Centroids on {-1, 0, 1}^2, ordered (-1,-1), (-1,0), (-1,1), (0,-1), ..., (1,1).
std::vector<Eigen::Vector2d> grid_centroids();

inline constexpr std::uint64_t kTrueBetaSeed = 1729;

struct ScenarioConfig {
	int m = 1000;
	int waves = 3;
	int scenario = 1;
	double within_sd = 0.2;
	double correlation = 0.7;        // scenario 2
	double quadrant_weight = 0.1;    // scenario 2, clusters (-1,1) and (1,-1)
	std::array<double, 9> gamma_intercepts{-4, -1, 2, -3, 0, 3, -2, 1, 4};
	std::array<double, 9> gamma_slopes{-1.67, 1.60, 0.45, 0.05, -2.56, 1.19, 0.77, 0.06, 0.13};
	std::vector<double> beta;        // intercept, x1..x4; drawn from N(0,1) with kTrueBetaSeed when empty
	double w_re_scale = 0.5;
	double sigma2 = 1.0;
	int spline_degree = 2;
	int spline_basis = 3;
	std::uint64_t seed = 1;

	void validate() const;
	bool operator==(const ScenarioConfig &) const = default;
};

struct GroundTruth {
	std::vector<int> labels;  // 1..9 per observation
	std::vector<Eigen::Vector2d> centroids;
	std::vector<Eigen::Matrix2d> covariances;
	Eigen::VectorXd weights;
	Eigen::VectorXd beta;
	Eigen::MatrixXd gamma;    // 9 x 2 (intercept, slope on x1)
	Eigen::MatrixXd w_re;
	double sigma2 = 1.0;
	std::vector<Eigen::VectorXd> eta;
	int spline_degree = 2;
	int spline_basis = 3;
	double spline_lower = 1.0;
	double spline_upper = 4.0;
};

/// True fixed effects: the configured values, or N(0,1) draws from kTrueBetaSeed.
Eigen::VectorXd true_beta(const ScenarioConfig &cfg);

/// X columns: intercept, x1 (continuous, per individual), x2 (binary, per individual),
/// x3 (continuous), x4 (binary), spline_1..spline_k. U columns: u1, u2.
struct Scenario {
	LongitudinalDataset data;
	GroundTruth truth;
};

Scenario generate_scenario(const ScenarioConfig &cfg);

/// Model roles for a generated scenario: fixed effects on intercept and x1..x4, spline random
/// effects, cluster intercept and x1 slope.
ModelSpec scenario_spec(const LongitudinalDataset &data, int truncation);

/// Density argmax under the true centroids and covariances with equal weights (1-based labels).
std::vector<int> benchmark_true_centroids(const LongitudinalDataset &data, const GroundTruth &truth);
std::vector<int> benchmark_true_assignment(const GroundTruth &truth);

/// The outcome model refit with allocations frozen at `labels` (1-based, values 1..9).
ChainStore fit_with_fixed_labels(const LongitudinalDataset &data, const ModelSpec &spec, const Hyperparameters &hyper,
                                 const RunConfig &run, const std::vector<int> &labels);

struct StudyOptions {
	int truncation = 30;
	int subset_cap = 10000;
	double kept_fraction = 0.8;
	int k_max = 30;
};

struct StudyRow {
	int replicate = 0;  // 1-based
	std::string method;
	std::string metric;
	double value = 0.0;
};

struct StudySummaryRow {
	std::string method;
	std::string metric;
	double min = 0.0;
	double q25 = 0.0;
	double median = 0.0;
	double q75 = 0.0;
	double max = 0.0;
	double mean = 0.0;
};

struct StudyReport {
	std::vector<StudyRow> rows;
	std::vector<StudySummaryRow> summary;

	std::vector<double> values(const std::string &method, const std::string &metric) const;
};

/// Repeats generate -> fit -> postprocess -> evaluate for `n_reps` seeds derived from cfg.seed.
StudyReport run_replication_study(const ScenarioConfig &cfg, int n_reps, const RunConfig &run,
                                  const Hyperparameters &hyper, const StudyOptions &options = {});

/// Hyperparameter defaults for a scenario design.
Hyperparameters scenario_hyperparameters(const LongitudinalDataset &data, const ModelSpec &spec);

} // namespace plmm
