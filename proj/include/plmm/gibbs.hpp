#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "plmm/chain_store.hpp"
#include "plmm/conditionals.hpp"
#include "plmm/model.hpp"

namespace plmm {

struct RunConfig {
	int iterations = 15000;
	int burn_in = 5000;
	int thin = 1;
	std::uint64_t seed = 1;
	int n_chains = 1;
	bool record_loglik = false;
	int progress_every = 0;  // 0 disables progress lines

	void validate() const;
	bool operator==(const RunConfig &) const = default;
};

/// The sampler blocks, replaceable one by one (used by the sampler-validation harness).
struct GibbsBlocks {
	std::function<std::vector<AssignmentParams>(const ClusterSufficientStats &, const Hyperparameters &, RngStream &)>
		assignment = update_assignment_params;
	std::function<BetaGamma(const DesignViews &, const ParameterState &, const Hyperparameters &, RngStream &)>
		beta_gamma = update_beta_gamma_joint;
	std::function<double(const DesignViews &, const ParameterState &, const Hyperparameters &, RngStream &)> sigma =
		update_sigma;
	std::function<std::vector<Eigen::VectorXd>(const DesignViews &, const ParameterState &, RngStream &)>
		random_effects = update_random_effects;
	std::function<PsdMatrix(const std::vector<Eigen::VectorXd> &, const Hyperparameters &, RngStream &)> wre =
		update_wre;
	std::function<PsdMatrix(const std::vector<Eigen::VectorXd> &, const Hyperparameters &, RngStream &)> wint =
		update_wint;
	std::function<std::vector<int>(const DesignViews &, const ParameterState &, RngStream &)> allocations =
		update_allocations;
	std::function<StickDraw(const std::vector<int> &, double, int, RngStream &)> weights = update_weights;
	std::function<double(const Eigen::VectorXd &, const Hyperparameters &, RngStream &)> concentration =
		update_concentration;
};

struct ChainOptions {
	GibbsBlocks blocks;
	bool freeze_allocations = false;            // keep Z at its initial value
	std::optional<std::vector<int>> initial_z;  // 0-based
	std::optional<ParameterState> initial_state;
	std::ostream *progress = nullptr;
};

/// One full sweep a) -> b) -> c). Errors are rethrown naming the block.
void gibbs_step(const DesignViews &views, const Hyperparameters &hyper, ParameterState &state, RngStream &rng,
                const GibbsBlocks &blocks = {}, bool update_z = true);

/// log p(y, U | Z, parameters) at the current state.
double complete_log_likelihood(const DesignViews &views, const ParameterState &state);

ChainStore run_chain(const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
                     const ChainOptions &options = {}, std::uint64_t chain_index = 0);
ChainStore run_chain(const LongitudinalDataset &data, const ModelSpec &spec, const Hyperparameters &hyper,
                     const RunConfig &cfg);

/// Runs cfg.n_chains independent chains, one worker thread each.
std::vector<ChainStore> run_chains(const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
                                   const ChainOptions &options = {});

/// Extends a stored chain to `total_iterations` from its saved state and RNG position; the result
/// equals a single run of `total_iterations` with the same seed.
void continue_chain(ChainStore &chain, const DesignViews &views, const Hyperparameters &hyper, int total_iterations,
                    const ChainOptions &options = {});

/// Canonical text of everything that defines the target distribution; hashed into the chain metadata.
std::string model_fingerprint(const DesignViews &views, const Hyperparameters &hyper);

struct TraceSummary {
	std::string name;
	std::size_t length = 0;
	double mean = 0.0;
	double sd = 0.0;
	double lag1 = 0.0;
	double ess = 0.0;
};

struct DiagnosticsReport {
	TraceSummary zeta;
	TraceSummary sigma2;
	TraceSummary nclus;
};

double autocorrelation(const std::vector<double> &x, std::size_t lag);
/// Geyer's initial positive sequence estimator; a constant trace has ESS equal to its length.
double effective_sample_size(const std::vector<double> &x);
TraceSummary summarize_trace(const std::string &name, const std::vector<double> &x);
DiagnosticsReport diagnostics(const ChainStore &chain);

} // namespace plmm
