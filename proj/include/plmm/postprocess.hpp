#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plmm/chain_store.hpp"

namespace plmm {

/// Co-clustering frequencies over a fixed observation subset.
struct SimilarityMatrix {
	std::vector<int> subset_ids;  // 0-based observation indices, increasing
	Eigen::MatrixXd s;
	std::size_t draws_used = 0;

	Eigen::MatrixXd dissimilarity() const;
};

/// Sorted random subset of size min(cap, n); all observations when n <= cap.
std::vector<int> choose_subset(int n, int cap, RngStream &rng);

/// First kept draw of the trailing `fraction` of a chain.
std::size_t tail_start(std::size_t draws, double fraction);

/// Streams allocations [first_draw, draws) from `source` and averages pairwise co-assignment.
SimilarityMatrix build_similarity(AllocationSource &source, const std::vector<int> &subset_ids,
                                  std::size_t first_draw = 0);
SimilarityMatrix build_similarity(const ChainStore &chain, const std::vector<int> &subset_ids,
                                  std::size_t first_draw = 0);

// Binary symmetric-matrix file: "PLMMSIM\0", u32 version, u64 dim, u64 draws used, dim i64 subset
// ids, then dim*dim little-endian doubles.
void write_similarity(const std::filesystem::path &file, const SimilarityMatrix &s);
SimilarityMatrix read_similarity(const std::filesystem::path &file);

struct PamResult {
	std::vector<int> labels;   // 0..k-1, numbered by increasing medoid index
	std::vector<int> medoids;  // row indices into D, increasing
	double cost = 0.0;
	std::vector<double> cost_trace;  // after BUILD, then after each accepted swap
};

/// Partitioning Around Medoids: greedy BUILD followed by best-improvement SWAP until no single
/// medoid exchange lowers the total dissimilarity. Ties go to the lowest medoid index.
PamResult pam(const Eigen::MatrixXd &d, int k);

/// Mean silhouette width of a labelling; singleton clusters contribute 0.
double average_silhouette(const Eigen::MatrixXd &d, const std::vector<int> &labels);

struct KSelection {
	int k = 0;
	std::vector<double> silhouette;  // index k - 2
	PamResult best;
};

/// k maximizing the average silhouette over 2..min(k_max, n-1); ties go to the smallest k.
KSelection select_k(const Eigen::MatrixXd &d, int k_max);

struct RepresentativeClustering {
	std::vector<int> subset_ids;
	std::vector<int> labels;   // 1..k
	int k = 0;
	std::vector<int> medoids;  // observation indices
	std::vector<int> sizes;
	std::vector<double> silhouette;
	std::string rule = "pam, k chosen by maximal average silhouette, D = 1 - S";
};

RepresentativeClustering representative_clustering(const SimilarityMatrix &sim, int k_max = 30);
RepresentativeClustering representative_clustering(const SimilarityMatrix &sim, const PamResult &fit);

/// Representative clusters holding fewer than `fraction` of the subset.
std::vector<int> small_clusters(const RepresentativeClustering &rep, double fraction);

enum class ClusterParam { gamma, mu, sigma, phi };

struct IntervalSummary {
	bool empty = true;
	std::size_t pooled = 0;  // number of pooled values
	Eigen::VectorXd mean;
	Eigen::VectorXd lower;
	Eigen::VectorXd upper;
};

struct ClusterSummary {
	ClusterParam param = ClusterParam::gamma;
	double level = 0.95;
	std::vector<IntervalSummary> clusters;        // index = representative label - 1
	std::vector<Eigen::MatrixXd> per_draw_means;  // per cluster, draws x dim
	std::vector<bool> excluded;
};

/// Per-draw, per-chain-label value of a cluster parameter; may transform to another scale.
using ClusterValueFn = std::function<Eigen::VectorXd(const ChainStore &, std::size_t draw, int label)>;

ClusterValueFn cluster_value(ClusterParam param);

/// Pools {param^(h)_{Z^(h)_i} : kept draws h, subset observations i with Z*_i = c} per representative
/// cluster. Level 0 yields means only. Weighted type-7 quantiles reproduce the expanded pool exactly.
ClusterSummary aggregate_cluster_params(const ChainStore &chain, AllocationSource &alloc,
                                        const RepresentativeClustering &rep, ClusterParam param, double level,
                                        std::size_t first_draw = 0, const ClusterValueFn &value = {});
ClusterSummary aggregate_cluster_params(const ChainStore &chain, const RepresentativeClustering &rep,
                                        ClusterParam param, double level, std::size_t first_draw = 0);

struct Contrast {
	int cluster = 0;  // representative label
	Eigen::VectorXd mean;
	Eigen::VectorXd lower;
	Eigen::VectorXd upper;
};

/// Differences of per-draw representative-cluster means against `reference` (a label in 1..k).
std::vector<Contrast> cluster_effect_contrasts(const ClusterSummary &summary, int reference, double level);

/// Mean and equal-tailed interval per column of a draws x dim table, over rows >= first_draw.
IntervalSummary summarize_draws(const BlockTable &table, double level, std::size_t first_draw = 0);

/// Type-7 quantile of the multiset where values[i] appears weights[i] times.
double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double prob);

} // namespace plmm
