#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plmm/gibbs.hpp"

namespace plmm {

/// A complete draw of every parameter (and allocation) from the prior.
ParameterState sample_prior(const ModelDims &dims, const Hyperparameters &hyper, RngStream &rng);

/// Replaces y, U_cont and U_cat in `views` by a draw from the likelihood at `state`.
void simulate_data(DesignViews &views, const ParameterState &state, RngStream &rng);

struct GirConfig {
	int n_obs = 30;
	int m = 10;
	int clusters = 4;
	int q_cont = 2;
	std::vector<int> cat_levels{3};
	int draws = 20000;
	std::uint64_t seed = 7;
	double z_threshold = 4.0;
};

struct GirStatistic {
	std::string name;
	double marginal_mean = 0.0;
	double successive_mean = 0.0;
	double z = 0.0;
};

struct GirReport {
	std::vector<GirStatistic> statistics;
	double max_abs_z = 0.0;
	bool passed = false;
};

/// Small fixed design (intercept plus one covariate, random intercept, cluster intercept and slope)
/// for the sampler-validation harness.
DesignViews gir_toy_views(const GirConfig &cfg);

/// Proper, moment-bearing priors for the harness.
Hyperparameters gir_hyperparameters(const ModelDims &dims);

/// Marginal-conditional versus successive-conditional comparison of the joint distribution of
/// parameters and data. `blocks` allows a corrupted sampler to be checked as a negative control.
GirReport getting_it_right(const GirConfig &cfg, const GibbsBlocks &blocks = {});

/// Default blocks except that the error-precision draw uses half the correct rate.
GibbsBlocks corrupted_sigma_blocks();

} // namespace plmm
