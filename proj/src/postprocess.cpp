#include "plmm/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "plmm/errors.hpp"

namespace plmm {

namespace fs = std::filesystem;

Eigen::MatrixXd SimilarityMatrix::dissimilarity() const {
	return Eigen::MatrixXd::Ones(s.rows(), s.cols()) - s;
}

std::vector<int> choose_subset(int n, int cap, RngStream &rng) {
	if (n < 0 || cap < 1) {
		throw ParameterError("subset size must be positive");
	}
	std::vector<int> ids(static_cast<std::size_t>(n));
	std::iota(ids.begin(), ids.end(), 0);
	if (n <= cap) {
		return ids;
	}
	// partial Fisher-Yates
	for (int k = 0; k < cap; ++k) {
		const int j = k + static_cast<int>(rng.uniform() * static_cast<double>(n - k));
		std::swap(ids[static_cast<std::size_t>(k)], ids[static_cast<std::size_t>(std::min(j, n - 1))]);
	}
	ids.resize(static_cast<std::size_t>(cap));
	std::sort(ids.begin(), ids.end());
	return ids;
}

std::size_t tail_start(std::size_t draws, double fraction) {
	if (!(fraction > 0.0) || fraction > 1.0) {
		throw ParameterError("kept fraction must lie in (0, 1]");
	}
	const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(draws)));
	return draws - std::min(draws, std::max<std::size_t>(keep, 1));
}

SimilarityMatrix build_similarity(AllocationSource &source, const std::vector<int> &subset_ids,
                                  std::size_t first_draw) {
	const std::size_t draws = source.draws();
	if (draws == 0 || first_draw >= draws) {
		throw Error("similarity needs at least one kept draw");
	}
	const auto n = static_cast<Eigen::Index>(subset_ids.size());
	for (int id : subset_ids) {
		if (id < 0 || static_cast<std::size_t>(id) >= source.observations()) {
			throw ParameterError("subset observation " + std::to_string(id + 1) + " out of range");
		}
	}
	SimilarityMatrix out;
	out.subset_ids = subset_ids;
	out.s = Eigen::MatrixXd::Zero(n, n);  // strictly lower triangle holds co-assignment counts
	std::vector<int> z;
	std::vector<std::vector<Eigen::Index>> groups;
	for (std::size_t h = first_draw; h < draws; ++h) {
		source.read(h, z);
		for (auto &g : groups) g.clear();
		for (Eigen::Index a = 0; a < n; ++a) {
			const auto label = static_cast<std::size_t>(z[static_cast<std::size_t>(subset_ids[static_cast<std::size_t>(a)])]);
			if (label >= groups.size()) groups.resize(label + 1);
			groups[label].push_back(a);
		}
		for (const auto &g : groups) {
			for (std::size_t x = 0; x < g.size(); ++x) {
				double *col = out.s.col(g[x]).data();
				for (std::size_t y = x + 1; y < g.size(); ++y) col[g[y]] += 1.0;
			}
		}
	}
	out.draws_used = draws - first_draw;
	const double inv = 1.0 / static_cast<double>(out.draws_used);
	for (Eigen::Index a = 0; a < n; ++a) {
		out.s(a, a) = 1.0;
		for (Eigen::Index b = a + 1; b < n; ++b) {
			const double v = out.s(b, a) * inv;
			out.s(b, a) = v;
			out.s(a, b) = v;
		}
	}
	return out;
}

SimilarityMatrix build_similarity(const ChainStore &chain, const std::vector<int> &subset_ids,
                                  std::size_t first_draw) {
	MemoryAllocationSource source(chain);
	return build_similarity(source, subset_ids, first_draw);
}

namespace {

constexpr char kSimMagic[8] = {'P', 'L', 'M', 'M', 'S', 'I', 'M', '\0'};

template <typename T>
void put_raw(std::ostream &out, T v) {
	out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get_raw(std::istream &in) {
	T v{};
	in.read(reinterpret_cast<char *>(&v), sizeof(T));
	return v;
}

} // namespace

void write_similarity(const fs::path &file, const SimilarityMatrix &s) {
	static_assert(std::endian::native == std::endian::little, "similarity files are little-endian");
	std::ofstream out(file, std::ios::binary | std::ios::trunc);
	if (!out) {
		throw Error("cannot write " + file.string());
	}
	out.write(kSimMagic, sizeof(kSimMagic));
	put_raw<std::uint32_t>(out, 1);
	put_raw<std::uint64_t>(out, s.subset_ids.size());
	put_raw<std::uint64_t>(out, s.draws_used);
	for (int id : s.subset_ids) put_raw<std::int64_t>(out, id);
	out.write(reinterpret_cast<const char *>(s.s.data()), static_cast<std::streamsize>(s.s.size() * sizeof(double)));
	if (!out) {
		throw Error("failed writing " + file.string());
	}
}

SimilarityMatrix read_similarity(const fs::path &file) {
	std::ifstream in(file, std::ios::binary);
	char magic[8];
	in.read(magic, sizeof(magic));
	if (!in || std::memcmp(magic, kSimMagic, sizeof(magic)) != 0) {
		throw DataError(file.string() + ": not a similarity file");
	}
	if (get_raw<std::uint32_t>(in) != 1) {
		throw DataError(file.string() + ": unsupported similarity version");
	}
	SimilarityMatrix s;
	const auto dim = get_raw<std::uint64_t>(in);
	s.draws_used = get_raw<std::uint64_t>(in);
	for (std::uint64_t k = 0; k < dim; ++k) s.subset_ids.push_back(static_cast<int>(get_raw<std::int64_t>(in)));
	s.s.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
	in.read(reinterpret_cast<char *>(s.s.data()), static_cast<std::streamsize>(s.s.size() * sizeof(double)));
	if (!in) {
		throw DataError(file.string() + ": truncated similarity file");
	}
	return s;
}

namespace {

struct Nearest {
	std::vector<int> first;   // position in medoid list
	std::vector<double> d1;
	std::vector<double> d2;
};

Nearest nearest_medoids(const Eigen::MatrixXd &d, const std::vector<int> &medoids) {
	const Eigen::Index n = d.rows();
	Nearest nr;
	nr.first.assign(static_cast<std::size_t>(n), 0);
	nr.d1.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
	nr.d2.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
	for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
		const auto col = d.col(medoids[mi]);
		for (Eigen::Index o = 0; o < n; ++o) {
			const auto oo = static_cast<std::size_t>(o);
			const double v = col(o);
			if (v < nr.d1[oo]) {
				nr.d2[oo] = nr.d1[oo];
				nr.d1[oo] = v;
				nr.first[oo] = static_cast<int>(mi);
			} else if (v < nr.d2[oo]) {
				nr.d2[oo] = v;
			}
		}
	}
	return nr;
}

double total_cost(const Nearest &nr) { return std::accumulate(nr.d1.begin(), nr.d1.end(), 0.0); }

} // namespace

PamResult pam(const Eigen::MatrixXd &d, int k) {
	const Eigen::Index n = d.rows();
	if (d.cols() != n) {
		throw ParameterError("dissimilarity matrix must be square");
	}
	if (k < 1 || k >= n) {
		throw ParameterError("PAM needs 1 <= k < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
	}
	// BUILD
	std::vector<int> medoids;
	std::vector<char> is_medoid(static_cast<std::size_t>(n), 0);
	{
		Eigen::Index best = 0;
		double best_sum = std::numeric_limits<double>::infinity();
		for (Eigen::Index i = 0; i < n; ++i) {
			const double s = d.col(i).sum();
			if (s < best_sum) {
				best_sum = s;
				best = i;
			}
		}
		medoids.push_back(static_cast<int>(best));
		is_medoid[static_cast<std::size_t>(best)] = 1;
	}
	Eigen::VectorXd dn = d.col(medoids[0]);
	while (static_cast<int>(medoids.size()) < k) {
		Eigen::Index best = -1;
		double best_gain = -1.0;
		for (Eigen::Index i = 0; i < n; ++i) {
			if (is_medoid[static_cast<std::size_t>(i)]) continue;
			const double gain = (dn - d.col(i)).cwiseMax(0.0).sum();
			if (gain > best_gain) {
				best_gain = gain;
				best = i;
			}
		}
		medoids.push_back(static_cast<int>(best));
		is_medoid[static_cast<std::size_t>(best)] = 1;
		dn = dn.cwiseMin(d.col(best));
	}
	std::sort(medoids.begin(), medoids.end());

	PamResult result;
	Nearest nr = nearest_medoids(d, medoids);
	result.cost_trace.push_back(total_cost(nr));
	const double tol = 1e-12 * (1.0 + result.cost_trace.back());

	// SWAP, best improvement per pass with cached nearest / second-nearest distances
	std::vector<double> removal(static_cast<std::size_t>(k));
	std::vector<double> delta(static_cast<std::size_t>(k));
	for (int pass = 0; pass < 100 * k + 100; ++pass) {
		std::fill(removal.begin(), removal.end(), 0.0);
		for (Eigen::Index o = 0; o < n; ++o) {
			const auto oo = static_cast<std::size_t>(o);
			removal[static_cast<std::size_t>(nr.first[oo])] += nr.d2[oo] - nr.d1[oo];
		}
		double best_delta = 0.0;
		int best_m = -1;
		Eigen::Index best_c = -1;
		for (Eigen::Index c = 0; c < n; ++c) {
			if (is_medoid[static_cast<std::size_t>(c)]) continue;
			delta = removal;
			double acc = 0.0;
			const auto col = d.col(c);
			for (Eigen::Index o = 0; o < n; ++o) {
				const auto oo = static_cast<std::size_t>(o);
				const double doc = col(o);
				const auto mi = static_cast<std::size_t>(nr.first[oo]);
				if (doc < nr.d1[oo]) {
					acc += doc - nr.d1[oo];
					delta[mi] += nr.d1[oo] - nr.d2[oo];
				} else if (doc < nr.d2[oo]) {
					delta[mi] += doc - nr.d2[oo];
				}
			}
			for (int mi = 0; mi < k; ++mi) {
				const double v = delta[static_cast<std::size_t>(mi)] + acc;
				if (v < best_delta - tol) {
					best_delta = v;
					best_m = mi;
					best_c = c;
				}
			}
		}
		if (best_m < 0) {
			break;
		}
		is_medoid[static_cast<std::size_t>(medoids[static_cast<std::size_t>(best_m)])] = 0;
		is_medoid[static_cast<std::size_t>(best_c)] = 1;
		medoids[static_cast<std::size_t>(best_m)] = static_cast<int>(best_c);
		std::sort(medoids.begin(), medoids.end());
		nr = nearest_medoids(d, medoids);
		result.cost_trace.push_back(total_cost(nr));
	}
	result.medoids = medoids;
	result.labels = nr.first;
	result.cost = result.cost_trace.back();
	return result;
}

double average_silhouette(const Eigen::MatrixXd &d, const std::vector<int> &labels) {
	const Eigen::Index n = d.rows();
	if (static_cast<Eigen::Index>(labels.size()) != n) {
		throw ParameterError("labelling length does not match the dissimilarity matrix");
	}
	const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
	std::vector<int> size(static_cast<std::size_t>(k), 0);
	for (int l : labels) ++size[static_cast<std::size_t>(l)];
	double total = 0.0;
	std::vector<double> sums(static_cast<std::size_t>(k));
	for (Eigen::Index i = 0; i < n; ++i) {
		const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
		if (size[own] <= 1) continue;
		std::fill(sums.begin(), sums.end(), 0.0);
		const auto col = d.col(i);
		for (Eigen::Index j = 0; j < n; ++j) sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += col(j);
		const double a = sums[own] / (size[own] - 1);
		double b = std::numeric_limits<double>::infinity();
		for (std::size_t c = 0; c < sums.size(); ++c) {
			if (c != own && size[c] > 0) b = std::min(b, sums[c] / size[c]);
		}
		if (!std::isfinite(b)) continue;
		const double denom = std::max(a, b);
		if (denom > 0.0) total += (b - a) / denom;
	}
	return n > 0 ? total / static_cast<double>(n) : 0.0;
}

KSelection select_k(const Eigen::MatrixXd &d, int k_max) {
	if (k_max < 2) {
		throw ParameterError("k_max must be at least 2");
	}
	const int upper = std::min<int>(k_max, static_cast<int>(d.rows()) - 1);
	if (upper < 2) {
		throw ParameterError("need at least three observations to choose k");
	}
	KSelection sel;
	double best = -std::numeric_limits<double>::infinity();
	for (int k = 2; k <= upper; ++k) {
		PamResult fit = pam(d, k);
		const double s = average_silhouette(d, fit.labels);
		sel.silhouette.push_back(s);
		if (s > best + 1e-12) {
			best = s;
			sel.k = k;
			sel.best = std::move(fit);
		}
	}
	return sel;
}

RepresentativeClustering representative_clustering(const SimilarityMatrix &sim, const PamResult &fit) {
	RepresentativeClustering rep;
	rep.subset_ids = sim.subset_ids;
	rep.k = static_cast<int>(fit.medoids.size());
	rep.sizes.assign(static_cast<std::size_t>(rep.k), 0);
	for (int l : fit.labels) {
		rep.labels.push_back(l + 1);
		++rep.sizes[static_cast<std::size_t>(l)];
	}
	for (int m : fit.medoids) rep.medoids.push_back(sim.subset_ids[static_cast<std::size_t>(m)]);
	return rep;
}

RepresentativeClustering representative_clustering(const SimilarityMatrix &sim, int k_max) {
	const Eigen::MatrixXd d = sim.dissimilarity();
	const KSelection sel = select_k(d, k_max);
	RepresentativeClustering rep = representative_clustering(sim, sel.best);
	rep.silhouette = sel.silhouette;
	return rep;
}

std::vector<int> small_clusters(const RepresentativeClustering &rep, double fraction) {
	std::vector<int> out;
	const double threshold = fraction * static_cast<double>(rep.labels.size());
	for (int c = 0; c < rep.k; ++c) {
		if (static_cast<double>(rep.sizes[static_cast<std::size_t>(c)]) < threshold) out.push_back(c + 1);
	}
	return out;
}

ClusterValueFn cluster_value(ClusterParam param) {
	return [param](const ChainStore &chain, std::size_t h, int label) -> Eigen::VectorXd {
		const ModelDims &dm = chain.dims;
		const auto l = static_cast<std::size_t>(label);
		if (param == ClusterParam::gamma) {
			const auto p = static_cast<std::size_t>(dm.p_int);
			return Eigen::Map<const Eigen::VectorXd>(chain.gamma.row(h) + l * p, dm.p_int);
		}
		const auto width = static_cast<std::size_t>(StateLayout{dm}.theta_u_size());
		const double *base = chain.theta_u.row(h) + l * width;
		const auto q = static_cast<std::size_t>(dm.q_cont);
		switch (param) {
		case ClusterParam::mu:
			return Eigen::Map<const Eigen::VectorXd>(base, dm.q_cont);
		case ClusterParam::sigma:
			return Eigen::Map<const Eigen::VectorXd>(base + q, dm.q_cont * dm.q_cont);
		default:
			return Eigen::Map<const Eigen::VectorXd>(base + q + q * q, static_cast<Eigen::Index>(width - q - q * q));
		}
	};
}

double weighted_quantile(std::vector<std::pair<double, double>> vw, double prob) {
	if (vw.empty()) {
		throw ParameterError("quantile of an empty pool");
	}
	std::sort(vw.begin(), vw.end());
	double total = 0.0;
	for (const auto &e : vw) total += e.second;
	const double h = (total - 1.0) * prob;
	const double lo = std::floor(h);
	auto value_at = [&vw](double index) {
		double cum = 0.0;
		for (const auto &e : vw) {
			cum += e.second;
			if (index < cum) return e.first;
		}
		return vw.back().first;
	};
	const double a = value_at(lo);
	const double b = value_at(std::min(lo + 1.0, total - 1.0));
	return a + (h - lo) * (b - a);
}

ClusterSummary aggregate_cluster_params(const ChainStore &chain, AllocationSource &alloc,
                                        const RepresentativeClustering &rep, ClusterParam param, double level,
                                        std::size_t first_draw, const ClusterValueFn &value) {
	if (!(level >= 0.0) || level >= 1.0) {
		throw ParameterError("credible level must lie in [0, 1)");
	}
	const std::size_t draws = chain.draws();
	if (draws == 0 || first_draw >= draws || alloc.draws() != draws) {
		throw Error("aggregation needs kept draws with matching allocations");
	}
	if (rep.labels.size() != rep.subset_ids.size()) {
		throw ParameterError("representative clustering is inconsistent");
	}
	const ClusterValueFn fn = value ? value : cluster_value(param);
	const int k = rep.k;
	const int clusters = chain.dims.clusters;
	ClusterSummary out;
	out.param = param;
	out.level = level;
	out.clusters.resize(static_cast<std::size_t>(k));
	out.per_draw_means.resize(static_cast<std::size_t>(k));
	out.excluded.assign(static_cast<std::size_t>(k), false);

	// pooled (value, weight) per cluster and coordinate
	std::vector<std::vector<std::vector<std::pair<double, double>>>> pool(static_cast<std::size_t>(k));
	std::vector<std::vector<int>> counts(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(clusters)));
	std::vector<int> z;
	const std::size_t used = draws - first_draw;
	Eigen::Index dim = -1;
	for (std::size_t h = first_draw; h < draws; ++h) {
		alloc.read(h, z);
		for (auto &c : counts) std::fill(c.begin(), c.end(), 0);
		for (std::size_t a = 0; a < rep.subset_ids.size(); ++a) {
			++counts[static_cast<std::size_t>(rep.labels[a] - 1)][static_cast<std::size_t>(z[static_cast<std::size_t>(rep.subset_ids[a])])];
		}
		for (int c = 0; c < k; ++c) {
			const auto cc = static_cast<std::size_t>(c);
			const int size = rep.sizes[cc];
			if (size == 0) continue;
			Eigen::VectorXd sum;
			for (int l = 0; l < clusters; ++l) {
				const int w = counts[cc][static_cast<std::size_t>(l)];
				if (w == 0) continue;
				const Eigen::VectorXd v = fn(chain, h, l);
				if (dim < 0) {
					dim = v.size();
				}
				if (sum.size() == 0) sum = Eigen::VectorXd::Zero(dim);
				sum += w * v;
				if (pool[cc].empty()) pool[cc].resize(static_cast<std::size_t>(dim));
				for (Eigen::Index j = 0; j < dim; ++j) pool[cc][static_cast<std::size_t>(j)].emplace_back(v(j), w);
			}
			if (out.per_draw_means[cc].size() == 0) out.per_draw_means[cc] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(used), dim);
			out.per_draw_means[cc].row(static_cast<Eigen::Index>(h - first_draw)) = (sum / size).transpose();
		}
	}
	for (int c = 0; c < k; ++c) {
		const auto cc = static_cast<std::size_t>(c);
		IntervalSummary &s = out.clusters[cc];
		if (rep.sizes[cc] == 0 || pool[cc].empty()) {
			continue;
		}
		s.empty = false;
		s.pooled = used * static_cast<std::size_t>(rep.sizes[cc]);
		s.mean = out.per_draw_means[cc].colwise().mean().transpose();
		if (level > 0.0) {
			s.lower.resize(dim);
			s.upper.resize(dim);
			for (Eigen::Index j = 0; j < dim; ++j) {
				s.lower(j) = weighted_quantile(pool[cc][static_cast<std::size_t>(j)], 0.5 * (1.0 - level));
				s.upper(j) = weighted_quantile(pool[cc][static_cast<std::size_t>(j)], 0.5 * (1.0 + level));
			}
		}
	}
	return out;
}

ClusterSummary aggregate_cluster_params(const ChainStore &chain, const RepresentativeClustering &rep,
                                        ClusterParam param, double level, std::size_t first_draw) {
	MemoryAllocationSource source(chain);
	return aggregate_cluster_params(chain, source, rep, param, level, first_draw);
}

namespace {

IntervalSummary columns_summary(const Eigen::MatrixXd &rows, double level) {
	IntervalSummary s;
	s.empty = rows.rows() == 0;
	s.pooled = static_cast<std::size_t>(rows.rows());
	if (s.empty) return s;
	s.mean = rows.colwise().mean().transpose();
	if (level > 0.0) {
		s.lower.resize(rows.cols());
		s.upper.resize(rows.cols());
		for (Eigen::Index j = 0; j < rows.cols(); ++j) {
			std::vector<std::pair<double, double>> vw;
			for (Eigen::Index h = 0; h < rows.rows(); ++h) vw.emplace_back(rows(h, j), 1.0);
			s.lower(j) = weighted_quantile(vw, 0.5 * (1.0 - level));
			s.upper(j) = weighted_quantile(std::move(vw), 0.5 * (1.0 + level));
		}
	}
	return s;
}

} // namespace

std::vector<Contrast> cluster_effect_contrasts(const ClusterSummary &summary, int reference, double level) {
	const int k = static_cast<int>(summary.clusters.size());
	if (reference < 1 || reference > k) {
		throw ParameterError("reference cluster " + std::to_string(reference) + " does not exist");
	}
	const auto ref = static_cast<std::size_t>(reference - 1);
	if (summary.clusters[ref].empty) {
		throw ParameterError("reference cluster " + std::to_string(reference) + " is empty");
	}
	std::vector<Contrast> out;
	for (int c = 0; c < k; ++c) {
		const auto cc = static_cast<std::size_t>(c);
		if (cc == ref || summary.clusters[cc].empty || summary.excluded[cc]) continue;
		const IntervalSummary s = columns_summary(summary.per_draw_means[cc] - summary.per_draw_means[ref], level);
		out.push_back({c + 1, s.mean, s.lower, s.upper});
	}
	return out;
}

IntervalSummary summarize_draws(const BlockTable &table, double level, std::size_t first_draw) {
	if (first_draw >= table.rows) {
		throw Error("no draws to summarize");
	}
	Eigen::MatrixXd rows(static_cast<Eigen::Index>(table.rows - first_draw), static_cast<Eigen::Index>(table.cols));
	for (std::size_t h = first_draw; h < table.rows; ++h) {
		for (std::size_t j = 0; j < table.cols; ++j) rows(static_cast<Eigen::Index>(h - first_draw), static_cast<Eigen::Index>(j)) = table.at(h, j);
	}
	return columns_summary(rows, level);
}

} // namespace plmm
