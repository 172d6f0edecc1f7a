#include "plmm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "plmm/errors.hpp"
#include "plmm/metrics.hpp"
#include "plmm/postprocess.hpp"

namespace plmm {

Eigen::MatrixXd bspline_basis(const Eigen::VectorXd &times, int degree, int n_basis, double lower, double upper) {
	if (degree < 0 || n_basis < degree + 1) {
		throw ParameterError("B-spline basis needs n_basis >= degree + 1");
	}
	if (!(upper > lower)) {
		throw ParameterError("B-spline domain must have positive length");
	}
	const int n_knots = n_basis + degree + 1;
	const int internal = n_basis - degree - 1;
	std::vector<double> knots(static_cast<std::size_t>(n_knots));
	for (int k = 0; k <= degree; ++k) {
		knots[static_cast<std::size_t>(k)] = lower;
		knots[static_cast<std::size_t>(n_knots - 1 - k)] = upper;
	}
	for (int k = 1; k <= internal; ++k) {
		knots[static_cast<std::size_t>(degree + k)] = lower + (upper - lower) * k / (internal + 1);
	}
	Eigen::MatrixXd out = Eigen::MatrixXd::Zero(times.size(), n_basis);
	std::vector<double> n0(static_cast<std::size_t>(n_knots - 1));
	for (Eigen::Index r = 0; r < times.size(); ++r) {
		const double t = times(r);
		if (!(t >= lower && t <= upper)) {
			throw ParameterError("time " + std::to_string(t) + " lies outside the spline domain");
		}
		// degree-0 indicators; the right end belongs to the last non-empty span
		std::fill(n0.begin(), n0.end(), 0.0);
		for (int i = 0; i + 1 < n_knots; ++i) {
			const double a = knots[static_cast<std::size_t>(i)];
			const double b = knots[static_cast<std::size_t>(i + 1)];
			if (a < b && ((t >= a && t < b) || (t == upper && b == upper))) {
				n0[static_cast<std::size_t>(i)] = 1.0;
				break;
			}
		}
		std::vector<double> cur = n0;
		for (int p = 1; p <= degree; ++p) {
			std::vector<double> next(static_cast<std::size_t>(n_knots - 1 - p), 0.0);
			for (int i = 0; i + p + 1 < n_knots; ++i) {
				const auto ii = static_cast<std::size_t>(i);
				const double left_den = knots[ii + static_cast<std::size_t>(p)] - knots[ii];
				const double right_den = knots[ii + static_cast<std::size_t>(p) + 1] - knots[ii + 1];
				double v = 0.0;
				if (left_den > 0.0) v += (t - knots[ii]) / left_den * cur[ii];
				if (right_den > 0.0) v += (knots[ii + static_cast<std::size_t>(p) + 1] - t) / right_den * cur[ii + 1];
				next[ii] = v;
			}
			cur = std::move(next);
		}
		for (int i = 0; i < n_basis; ++i) out(r, i) = cur[static_cast<std::size_t>(i)];
	}
	return out;
}

std::vector<Eigen::Vector2d> grid_centroids() {
	std::vector<Eigen::Vector2d> c;
	for (int a = -1; a <= 1; ++a) {
		for (int b = -1; b <= 1; ++b) c.emplace_back(a, b);
	}
	return c;
}

void ScenarioConfig::validate() const {
	if (m < 1 || waves < 1) {
		throw SpecError("scenario needs at least one individual and one wave");
	}
	if (scenario != 1 && scenario != 2) {
		throw SpecError("scenario must be 1 or 2");
	}
	if (!(within_sd > 0.0) || !(w_re_scale > 0.0) || !(sigma2 > 0.0)) {
		throw SpecError("scenario variance parameters must be positive");
	}
	if (!(correlation > -1.0 && correlation < 1.0)) {
		throw SpecError("scenario correlation must lie in (-1, 1)");
	}
	if (!(quadrant_weight > 0.0)) {
		throw SpecError("quadrant weight must be positive");
	}
	if (!beta.empty() && beta.size() != 5) {
		throw SpecError("true beta needs 5 entries (intercept, x1..x4)");
	}
	if (spline_degree < 0 || spline_basis < spline_degree + 1) {
		throw SpecError("spline basis needs at least degree + 1 functions");
	}
}

Eigen::VectorXd true_beta(const ScenarioConfig &cfg) {
	if (!cfg.beta.empty()) {
		return Eigen::Map<const Eigen::VectorXd>(cfg.beta.data(), static_cast<Eigen::Index>(cfg.beta.size()));
	}
	RngStream rng(kTrueBetaSeed, 0);
	return rng.normal_vector(5);
}

Scenario generate_scenario(const ScenarioConfig &cfg) {
	cfg.validate();
	Scenario sc;
	GroundTruth &t = sc.truth;
	t.centroids = grid_centroids();
	Eigen::Matrix2d cov = Eigen::Matrix2d::Identity() * cfg.within_sd * cfg.within_sd;
	t.weights = Eigen::VectorXd::Ones(9);
	if (cfg.scenario == 2) {
		cov(0, 1) = cov(1, 0) = cfg.correlation * cfg.within_sd * cfg.within_sd;
		t.weights(2) *= cfg.quadrant_weight;  // (-1, 1)
		t.weights(6) *= cfg.quadrant_weight;  // (1, -1)
	}
	t.weights /= t.weights.sum();
	t.covariances.assign(9, cov);
	t.beta = true_beta(cfg);
	t.gamma.resize(9, 2);
	for (int c = 0; c < 9; ++c) {
		t.gamma(c, 0) = cfg.gamma_intercepts[static_cast<std::size_t>(c)];
		t.gamma(c, 1) = cfg.gamma_slopes[static_cast<std::size_t>(c)];
	}
	t.w_re = Eigen::MatrixXd::Identity(cfg.spline_basis, cfg.spline_basis) * cfg.w_re_scale;
	t.sigma2 = cfg.sigma2;
	t.spline_degree = cfg.spline_degree;
	t.spline_basis = cfg.spline_basis;
	t.spline_lower = 1.0;
	t.spline_upper = cfg.waves + 1.0;

	const int n = cfg.m * cfg.waves;
	const int kb = cfg.spline_basis;
	LongitudinalDataset &d = sc.data;
	d.n_individuals = cfg.m;
	d.time.resize(n);
	d.y.resize(n);
	d.x.resize(n, 5 + kb);
	d.u_cont.resize(n, 2);
	d.u_cat.resize(n, 0);
	d.x_names = {"intercept", "x1", "x2", "x3", "x4"};
	for (int k = 0; k < kb; ++k) d.x_names.push_back("spline_" + std::to_string(k + 1));
	d.u_cont_names = {"u1", "u2"};

	RngStream rng(cfg.seed, 0x51u);
	const PsdMatrix w_re(t.w_re, "scenario W_re");
	const PsdMatrix u_cov(cov, "scenario cluster covariance");
	const Eigen::Matrix2d u_chol = u_cov.lower();
	int i = 0;
	for (int j = 0; j < cfg.m; ++j) {
		const double x1 = rng.normal();
		const double x2 = rng.uniform() < 0.5 ? 1.0 : 0.0;
		const Eigen::VectorXd eta = sample_mvn(Eigen::VectorXd::Zero(kb), w_re, rng);
		t.eta.push_back(eta);
		for (int w = 1; w <= cfg.waves; ++w, ++i) {
			const double time = w + rng.uniform();
			const double x3 = rng.normal();
			const double x4 = rng.uniform() < 0.5 ? 1.0 : 0.0;
			const int c = sample_categorical(t.weights, rng);
			const Eigen::Vector2d u = t.centroids[static_cast<std::size_t>(c)] + u_chol * rng.normal_vector(2);
			d.individual_of.push_back(j);
			d.time(i) = time;
			d.x.row(i).head(5) << 1.0, x1, x2, x3, x4;
			d.x.row(i).tail(kb) = bspline_basis(Eigen::VectorXd::Constant(1, time), cfg.spline_degree, kb,
			                                    t.spline_lower, t.spline_upper)
			                          .row(0);
			d.u_cont.row(i) = u.transpose();
			const double mean = d.x.row(i).head(5).dot(t.beta) + d.x.row(i).tail(kb).dot(eta) + t.gamma(c, 0) +
			                    t.gamma(c, 1) * x1;
			d.y(i) = mean + std::sqrt(cfg.sigma2) * rng.normal();
			t.labels.push_back(c + 1);
		}
	}
	d.validate();
	return sc;
}

ModelSpec scenario_spec(const LongitudinalDataset &data, int truncation) {
	ModelSpec spec;
	spec.fe_cols = {0, 1, 2, 3, 4};
	for (int k = 5; k < data.x.cols(); ++k) spec.re_cols.push_back(k);
	spec.int_cols = {0, 1};
	spec.truncation = truncation;
	return spec;
}

Hyperparameters scenario_hyperparameters(const LongitudinalDataset &data, const ModelSpec &spec) {
	return Hyperparameters::defaults(static_cast<int>(spec.re_cols.size()), static_cast<int>(spec.int_cols.size()),
	                                 static_cast<int>(data.u_cont.cols()));
}

std::vector<int> benchmark_true_centroids(const LongitudinalDataset &data, const GroundTruth &truth) {
	std::vector<PsdMatrix> covs;
	for (const auto &c : truth.covariances) covs.emplace_back(c, "benchmark covariance");
	std::vector<int> labels;
	for (Eigen::Index i = 0; i < data.n(); ++i) {
		const Eigen::VectorXd u = data.u_cont.row(i).transpose();
		int best = 0;
		double best_ld = -std::numeric_limits<double>::infinity();
		for (std::size_t c = 0; c < truth.centroids.size(); ++c) {
			const double ld = log_mvn_density(u, truth.centroids[c], covs[c]);
			if (ld > best_ld) {
				best_ld = ld;
				best = static_cast<int>(c);
			}
		}
		labels.push_back(best + 1);
	}
	return labels;
}

std::vector<int> benchmark_true_assignment(const GroundTruth &truth) { return truth.labels; }

ChainStore fit_with_fixed_labels(const LongitudinalDataset &data, const ModelSpec &spec, const Hyperparameters &hyper,
                                 const RunConfig &run, const std::vector<int> &labels) {
	ModelSpec fixed = spec;
	fixed.truncation = std::max(2, *std::max_element(labels.begin(), labels.end()));
	const DesignViews views = build_design_views(data, fixed);
	ChainOptions options;
	options.freeze_allocations = true;
	std::vector<int> z;
	for (int l : labels) z.push_back(l - 1);
	options.initial_z = z;
	return run_chain(views, hyper, run, options);
}

std::vector<double> StudyReport::values(const std::string &method, const std::string &metric) const {
	std::vector<double> out;
	for (const auto &r : rows) {
		if (r.method == method && r.metric == metric) out.push_back(r.value);
	}
	return out;
}

namespace {

double quantile7(std::vector<double> v, double p) {
	std::sort(v.begin(), v.end());
	const double h = (static_cast<double>(v.size()) - 1.0) * p;
	const auto lo = static_cast<std::size_t>(std::floor(h));
	const std::size_t hi = std::min(lo + 1, v.size() - 1);
	return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct FitMetrics {
	double rmse_interacting;
	double rmse_non_interacting;
	double rmse_wre;
};

FitMetrics fit_metrics(const ChainStore &chain, const GroundTruth &truth) {
	const IntervalSummary beta = summarize_draws(chain.beta, 0.0);
	const IntervalSummary wre = summarize_draws(chain.wre, 0.0);
	const auto p = static_cast<Eigen::Index>(std::sqrt(static_cast<double>(chain.wre.cols)));
	const Eigen::MatrixXd wre_hat = Eigen::Map<const Eigen::MatrixXd>(wre.mean.data(), p, p);
	FitMetrics f{};
	f.rmse_interacting = relative_rmse(beta.mean.head(2), truth.beta.head(2));
	f.rmse_non_interacting = relative_rmse(beta.mean.tail(3), truth.beta.tail(3));
	f.rmse_wre = relative_rmse(wre_hat, truth.w_re);
	return f;
}

} // namespace

StudyReport run_replication_study(const ScenarioConfig &cfg, int n_reps, const RunConfig &run,
                                  const Hyperparameters &hyper, const StudyOptions &options) {
	if (n_reps < 1) {
		throw SpecError("a study needs at least one replicate");
	}
	StudyReport report;
	for (int r = 1; r <= n_reps; ++r) {
		try {
			ScenarioConfig rc = cfg;
			rc.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(r));
			RunConfig rr = run;
			rr.seed = mix_seed(run.seed, static_cast<std::uint64_t>(r));
			const Scenario sc = generate_scenario(rc);
			const ModelSpec spec = scenario_spec(sc.data, options.truncation);
			auto add = [&report, r](const std::string &method, const std::string &metric, double v) {
				report.rows.push_back({r, method, metric, v});
			};

			RngStream subset_rng(rr.seed, 0x5B);
			const std::vector<int> subset = choose_subset(static_cast<int>(sc.data.n()), options.subset_cap, subset_rng);
			std::vector<int> truth_subset;
			for (int id : subset) truth_subset.push_back(sc.truth.labels[static_cast<std::size_t>(id)]);

			const ChainStore chain = run_chain(build_design_views(sc.data, spec), hyper, rr);
			const SimilarityMatrix sim = build_similarity(chain, subset, tail_start(chain.draws(), options.kept_fraction));
			const RepresentativeClustering rep = representative_clustering(sim, options.k_max);
			add("profile_lmm", "ari", adjusted_rand_index(rep.labels, truth_subset));
			add("profile_lmm", "purity", purity(rep.labels, truth_subset));
			add("profile_lmm", "n_clusters", rep.k);
			const FitMetrics fm = fit_metrics(chain, sc.truth);
			add("profile_lmm", "rel_rmse_beta_interacting", fm.rmse_interacting);
			add("profile_lmm", "rel_rmse_beta_non_interacting", fm.rmse_non_interacting);
			add("profile_lmm", "rel_rmse_wre", fm.rmse_wre);

			const std::pair<std::string, std::vector<int>> benchmarks[] = {
				{"true_centroids", benchmark_true_centroids(sc.data, sc.truth)},
				{"true_assignment", benchmark_true_assignment(sc.truth)},
			};
			for (const auto &[name, labels] : benchmarks) {
				std::vector<int> sub;
				for (int id : subset) sub.push_back(labels[static_cast<std::size_t>(id)]);
				add(name, "ari", adjusted_rand_index(sub, truth_subset));
				add(name, "purity", purity(sub, truth_subset));
				std::vector<int> distinct = labels;
				std::sort(distinct.begin(), distinct.end());
				add(name, "n_clusters",
				    static_cast<double>(std::unique(distinct.begin(), distinct.end()) - distinct.begin()));
				const FitMetrics bm = fit_metrics(fit_with_fixed_labels(sc.data, spec, hyper, rr, labels), sc.truth);
				add(name, "rel_rmse_beta_interacting", bm.rmse_interacting);
				add(name, "rel_rmse_beta_non_interacting", bm.rmse_non_interacting);
				add(name, "rel_rmse_wre", bm.rmse_wre);
			}
		} catch (const Error &e) {
			throw NumericalError("replicate " + std::to_string(r) + ": " + e.what());
		}
	}
	std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
	std::vector<std::pair<std::string, std::string>> order;
	for (const auto &row : report.rows) {
		const auto key = std::make_pair(row.method, row.metric);
		if (!groups.count(key)) order.push_back(key);
		groups[key].push_back(row.value);
	}
	for (const auto &key : order) {
		const auto &v = groups[key];
		StudySummaryRow s;
		s.method = key.first;
		s.metric = key.second;
		s.min = *std::min_element(v.begin(), v.end());
		s.max = *std::max_element(v.begin(), v.end());
		s.q25 = quantile7(v, 0.25);
		s.median = quantile7(v, 0.5);
		s.q75 = quantile7(v, 0.75);
		double sum = 0.0;
		for (double x : v) sum += x;
		s.mean = sum / static_cast<double>(v.size());
		report.summary.push_back(s);
	}
	return report;
}

} // namespace plmm
