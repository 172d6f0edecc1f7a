#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plmm/gibbs.hpp"
#include "plmm/model.hpp"
#include "plmm/simulation.hpp"

namespace plmm::cli {

/// Names of the CSV columns and of the design built from them.
///
/// The regression matrix is laid out as `intercept`, the `x` columns in order, then
/// `spline_1..spline_k` when the reserved name `spline` appears in a role list.
struct DataLayout {
	std::string id_column = "id";
	std::string time_column = "time";
	std::string outcome = "y";
	std::vector<std::string> x;
	std::vector<std::string> u_cont;
	std::vector<std::string> u_cat;
	std::vector<std::string> fe{"intercept"};
	std::vector<std::string> re{"intercept"};
	std::vector<std::string> interaction{"intercept"};
	int spline_degree = 2;
	int spline_basis = 3;
	std::optional<double> spline_lower;
	std::optional<double> spline_upper;

	bool uses_spline() const;
	std::vector<std::string> x_names() const;
	ModelSpec role_indices(int truncation, bool standardize_u, bool standardize_x) const;
	bool operator==(const DataLayout &) const = default;
};

struct PostprocessSettings {
	int subset = 10000;
	double kept_fraction = 0.8;
	int k_max = 30;
	double level = 0.95;           // fixed effects and cluster parameters
	double contrast_level = 0.90;
	int reference = 1;
	double min_size_fraction = 0.01;
	std::uint64_t subset_seed = 11;
	bool operator==(const PostprocessSettings &) const = default;
};

struct SimulationSettings {
	ScenarioConfig scenario;
	int reps = 25;
	bool operator==(const SimulationSettings &) const = default;
};

struct Config {
	DataLayout layout;
	ModelSpec spec;
	Hyperparameters hyper;
	RunConfig run;
	PostprocessSettings post;
	SimulationSettings sim;
};

/// Strict `key = value` parser with sections [model] [priors] [run] [postprocess] [simulation].
/// `#` starts a comment; lists are comma separated; matrices are a scalar (times identity) or
/// a row-major list. Omitted priors take their defaults for the declared dimensions.
Config parse_config_text(const std::string &text);
Config parse_config(const std::filesystem::path &path);

/// Every effective setting, in a form that parses back to the same configuration.
std::string emit_config(const Config &cfg);

/// Configuration matching the columns written by the scenario generator.
Config scenario_config(const ScenarioConfig &scenario);

} // namespace plmm::cli
