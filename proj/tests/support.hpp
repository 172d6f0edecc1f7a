#pragma once

#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plmm/chain_store.hpp"
#include "plmm/gibbs.hpp"
#include "plmm/model.hpp"
#include "plmm/simulation.hpp"

namespace test {

inline std::filesystem::path temp_dir(const std::string &name) {
	const auto dir = std::filesystem::temp_directory_path() / ("plmm_test_" + name);
	std::filesystem::remove_all(dir);
	std::filesystem::create_directories(dir);
	return dir;
}

/// n observations spread over m individuals, x = [1, N(0,1)], one continuous U column.
inline plmm::LongitudinalDataset small_dataset(int n, int m, int q, std::uint64_t seed) {
	plmm::RngStream rng(seed, 99);
	plmm::LongitudinalDataset d;
	d.n_individuals = m;
	d.time.resize(n);
	d.y.resize(n);
	d.x.resize(n, 2);
	d.u_cont.resize(n, q);
	d.u_cat.resize(n, 0);
	d.x_names = {"intercept", "x1"};
	for (int k = 0; k < q; ++k) d.u_cont_names.push_back("u" + std::to_string(k + 1));
	for (int i = 0; i < n; ++i) {
		d.individual_of.push_back(i % m);
		d.time(i) = i / m;
		d.x(i, 0) = 1.0;
		d.x(i, 1) = rng.normal();
		d.y(i) = rng.normal() * 2.0;
		for (int k = 0; k < q; ++k) d.u_cont(i, k) = rng.normal() + (i % 3);
	}
	return d;
}

/// A short chain on a small simulated scenario.
inline plmm::ChainStore small_chain(std::uint64_t seed = 5, int iterations = 300, int burn_in = 100) {
	plmm::ScenarioConfig sc;
	sc.m = 60;
	sc.seed = seed;
	const plmm::Scenario s = plmm::generate_scenario(sc);
	const plmm::ModelSpec spec = plmm::scenario_spec(s.data, 12);
	plmm::RunConfig run;
	run.iterations = iterations;
	run.burn_in = burn_in;
	run.seed = seed;
	return plmm::run_chain(s.data, spec, plmm::scenario_hyperparameters(s.data, spec), run);
}

/// Relabels draw h of a chain by `perm` (old label -> new label, 0-based), moving every
/// cluster-indexed block with it.
inline void permute_draw(plmm::ChainStore &chain, std::size_t h, const std::vector<int> &perm) {
	const int clusters = chain.dims.clusters;
	auto move_blocks = [&](plmm::BlockTable &t) {
		const std::size_t width = t.cols / static_cast<std::size_t>(clusters);
		std::vector<double> row(t.row(h), t.row(h) + t.cols);
		double *dst = t.data.data() + h * t.cols;
		for (int c = 0; c < clusters; ++c) {
			std::copy(row.begin() + static_cast<std::ptrdiff_t>(c * width),
			          row.begin() + static_cast<std::ptrdiff_t>((c + 1) * width),
			          dst + static_cast<std::size_t>(perm[static_cast<std::size_t>(c)]) * width);
		}
	};
	move_blocks(chain.gamma);
	move_blocks(chain.theta_u);
	move_blocks(chain.sticks);
	std::int64_t *z = chain.alloc.data.data() + h * chain.alloc.cols;
	for (std::size_t i = 0; i < chain.alloc.cols; ++i) z[i] = perm[static_cast<std::size_t>(z[i] - 1)] + 1;
}

inline std::vector<int> random_permutation(int n, std::mt19937_64 &gen) {
	std::vector<int> p(static_cast<std::size_t>(n));
	std::iota(p.begin(), p.end(), 0);
	std::shuffle(p.begin(), p.end(), gen);
	return p;
}

} // namespace test
