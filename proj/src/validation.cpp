#include "plmm/validation.hpp"

#include <cmath>
#include <functional>

#include "plmm/errors.hpp"

namespace plmm {

ParameterState sample_prior(const ModelDims &dims, const Hyperparameters &hyper, RngStream &rng) {
	ParameterState s;
	s.sigma2 = 1.0 / sample_gamma(hyper.a_sigma, hyper.b_sigma, rng);
	s.beta = rng.normal_vector(dims.p_fe) * std::sqrt(s.sigma2 / hyper.lambda);
	s.w_int = sample_inverse_wishart(hyper.psi_int, hyper.nu_int, rng, "prior W_int");
	for (int c = 0; c < dims.clusters; ++c) {
		s.gamma.push_back(sample_mvn(Eigen::VectorXd::Zero(dims.p_int), s.w_int, rng));
	}
	s.w_re = sample_inverse_wishart(hyper.psi_re, hyper.nu_re, rng, "prior W_re");
	for (int j = 0; j < dims.m; ++j) {
		s.eta.push_back(sample_mvn(Eigen::VectorXd::Zero(dims.p_re), s.w_re, rng));
	}
	for (int c = 0; c < dims.clusters; ++c) {
		AssignmentParams t;
		if (dims.q_cont > 0) {
			t.sigma = sample_inverse_wishart(hyper.phi0, hyper.nu0, rng, "prior Sigma_c");
			t.mu = t.sigma.lower() * rng.normal_vector(dims.q_cont) / std::sqrt(hyper.lambda0);
		}
		for (int levels : dims.cat_levels) {
			t.phi.push_back(sample_dirichlet(Eigen::VectorXd::Constant(levels, hyper.alpha_dir), rng));
		}
		s.theta_u.push_back(std::move(t));
	}
	s.zeta = sample_gamma(hyper.a_zeta, 1.0 / hyper.b_zeta, rng);
	s.sticks.resize(dims.clusters);
	for (int c = 0; c + 1 < dims.clusters; ++c) {
		s.sticks(c) = sample_beta(1.0, s.zeta, rng);
	}
	s.sticks(dims.clusters - 1) = 1.0;
	s.weights = stick_weights(s.sticks);
	s.z.resize(static_cast<std::size_t>(dims.n));
	for (int &zi : s.z) {
		zi = sample_categorical(s.weights, rng);
	}
	return s;
}

void simulate_data(DesignViews &views, const ParameterState &state, RngStream &rng) {
	const int n = views.dims.n;
	for (int i = 0; i < n; ++i) {
		const auto c = static_cast<std::size_t>(state.z[static_cast<std::size_t>(i)]);
		const double mean = views.fe.row(i).dot(state.beta) +
		                    views.re.row(i).dot(state.eta[static_cast<std::size_t>(views.individual_of[static_cast<std::size_t>(i)])]) +
		                    views.interaction.row(i).dot(state.gamma[c]);
		views.y(i) = mean + std::sqrt(state.sigma2) * rng.normal();
		const auto &t = state.theta_u[c];
		if (views.dims.q_cont > 0) {
			views.u_cont.row(i) = sample_mvn(t.mu, t.sigma, rng).transpose();
		}
		for (std::size_t j = 0; j < t.phi.size(); ++j) {
			views.u_cat(i, static_cast<Eigen::Index>(j)) = sample_categorical(t.phi[j], rng);
		}
	}
}

DesignViews gir_toy_views(const GirConfig &cfg) {
	if (cfg.n_obs < 1 || cfg.m < 1 || cfg.m > cfg.n_obs) {
		throw SpecError("toy design needs 1 <= m <= n");
	}
	RngStream rng(cfg.seed, 0xD351);
	LongitudinalDataset data;
	data.n_individuals = cfg.m;
	data.time.resize(cfg.n_obs);
	data.y = Eigen::VectorXd::Zero(cfg.n_obs);
	data.x.resize(cfg.n_obs, 2);
	for (int i = 0; i < cfg.n_obs; ++i) {
		data.individual_of.push_back(i % cfg.m);
		data.time(i) = i / cfg.m;
		data.x(i, 0) = 1.0;
		data.x(i, 1) = rng.normal();
	}
	data.x_names = {"intercept", "x1"};
	data.u_cont = Eigen::MatrixXd::Zero(cfg.n_obs, cfg.q_cont);
	for (int k = 0; k < cfg.q_cont; ++k) data.u_cont_names.push_back("u" + std::to_string(k + 1));
	data.u_cat = Eigen::MatrixXi::Zero(cfg.n_obs, static_cast<Eigen::Index>(cfg.cat_levels.size()));
	data.cat_levels = cfg.cat_levels;
	for (std::size_t k = 0; k < cfg.cat_levels.size(); ++k) data.u_cat_names.push_back("c" + std::to_string(k + 1));
	ModelSpec spec;
	spec.fe_cols = {0, 1};
	spec.re_cols = {0};
	spec.int_cols = {0, 1};
	spec.truncation = cfg.clusters;
	spec.standardize_u = false;
	return build_design_views(data, spec);
}

Hyperparameters gir_hyperparameters(const ModelDims &dims) {
	Hyperparameters h = Hyperparameters::defaults(dims.p_re, dims.p_int, dims.q_cont);
	h.lambda = 1.0;
	h.a_sigma = 6.0;
	h.b_sigma = 5.0;
	h.nu_re = dims.p_re + 6.0;
	h.psi_re = PsdMatrix::identity(dims.p_re, 5.0);
	h.nu_int = dims.p_int + 6.0;
	h.psi_int = PsdMatrix::identity(dims.p_int, 5.0);
	h.lambda0 = 1.0;
	h.nu0 = dims.q_cont + 6.0;
	if (dims.q_cont > 0) h.phi0 = PsdMatrix::identity(dims.q_cont, 5.0);
	h.alpha_dir = 1.0;
	h.a_zeta = 2.0;
	h.b_zeta = 1.0;
	return h;
}

namespace {

struct NamedStatistic {
	std::string name;
	std::function<double(const DesignViews &, const ParameterState &)> value;
};

std::vector<NamedStatistic> gir_statistics(const ModelDims &dims) {
	std::vector<NamedStatistic> s = {
		{"beta_1", [](const DesignViews &, const ParameterState &p) { return p.beta(0); }},
		{"beta_1^2", [](const DesignViews &, const ParameterState &p) { return p.beta(0) * p.beta(0); }},
		{"beta_2", [](const DesignViews &, const ParameterState &p) { return p.beta(p.beta.size() - 1); }},
		{"sigma2", [](const DesignViews &, const ParameterState &p) { return p.sigma2; }},
		{"log_sigma2", [](const DesignViews &, const ParameterState &p) { return std::log(p.sigma2); }},
		{"zeta", [](const DesignViews &, const ParameterState &p) { return p.zeta; }},
		{"W_re[1,1]", [](const DesignViews &, const ParameterState &p) { return p.w_re.matrix()(0, 0); }},
		{"W_int[1,1]", [](const DesignViews &, const ParameterState &p) { return p.w_int.matrix()(0, 0); }},
		{"W_int[1,2]", [](const DesignViews &, const ParameterState &p) {
			 const auto &m = p.w_int.matrix();
			 return m(0, m.cols() - 1);
		 }},
		{"eta_1[1]", [](const DesignViews &, const ParameterState &p) { return p.eta[0](0); }},
		{"gamma_{Z_1}[1]", [](const DesignViews &, const ParameterState &p) {
			 return p.gamma[static_cast<std::size_t>(p.z[0])](0);
		 }},
		{"non_empty_clusters",
		 [](const DesignViews &, const ParameterState &p) { return static_cast<double>(p.non_empty_clusters()); }},
		{"same_cluster(1,2)",
		 [](const DesignViews &, const ParameterState &p) { return p.z[0] == p.z[1] ? 1.0 : 0.0; }},
		{"pi_{Z_1}", [](const DesignViews &, const ParameterState &p) {
			 return p.weights(p.z[0]);
		 }},
		{"mean_y", [](const DesignViews &v, const ParameterState &) { return v.y.mean(); }},
		{"var_y", [](const DesignViews &v, const ParameterState &) {
			 return (v.y.array() - v.y.mean()).square().mean();
		 }},
	};
	if (dims.q_cont > 0) {
		s.push_back({"mu_{Z_1}[1]", [](const DesignViews &, const ParameterState &p) {
			             return p.theta_u[static_cast<std::size_t>(p.z[0])].mu(0);
		             }});
		s.push_back({"Sigma_{Z_1}[1,1]", [](const DesignViews &, const ParameterState &p) {
			             return p.theta_u[static_cast<std::size_t>(p.z[0])].sigma.matrix()(0, 0);
		             }});
	}
	if (!dims.cat_levels.empty()) {
		s.push_back({"phi_{Z_1}[1]", [](const DesignViews &, const ParameterState &p) {
			             return p.theta_u[static_cast<std::size_t>(p.z[0])].phi[0](0);
		             }});
	}
	return s;
}

double mean_of(const std::vector<double> &x) {
	double s = 0.0;
	for (double v : x) s += v;
	return s / static_cast<double>(x.size());
}

double variance_of(const std::vector<double> &x, double mean) {
	double s = 0.0;
	for (double v : x) s += (v - mean) * (v - mean);
	return s / static_cast<double>(x.size() - 1);
}

} // namespace

GirReport getting_it_right(const GirConfig &cfg, const GibbsBlocks &blocks) {
	if (cfg.draws < 2) {
		throw SpecError("getting-it-right needs at least two draws per simulator");
	}
	DesignViews views = gir_toy_views(cfg);
	const Hyperparameters hyper = gir_hyperparameters(views.dims);
	const auto stats = gir_statistics(views.dims);
	const std::size_t k = stats.size();
	std::vector<std::vector<double>> mc(k), sc(k);

	RngStream mc_rng(cfg.seed, 1);
	for (int h = 0; h < cfg.draws; ++h) {
		const ParameterState s = sample_prior(views.dims, hyper, mc_rng);
		simulate_data(views, s, mc_rng);
		for (std::size_t j = 0; j < k; ++j) mc[j].push_back(stats[j].value(views, s));
	}

	RngStream sc_rng(cfg.seed, 2);
	ParameterState state = sample_prior(views.dims, hyper, sc_rng);
	simulate_data(views, state, sc_rng);
	for (int h = 0; h < cfg.draws; ++h) {
		gibbs_step(views, hyper, state, sc_rng, blocks, true);
		simulate_data(views, state, sc_rng);
		for (std::size_t j = 0; j < k; ++j) sc[j].push_back(stats[j].value(views, state));
	}

	GirReport report;
	for (std::size_t j = 0; j < k; ++j) {
		GirStatistic g;
		g.name = stats[j].name;
		g.marginal_mean = mean_of(mc[j]);
		g.successive_mean = mean_of(sc[j]);
		const double var_mc = variance_of(mc[j], g.marginal_mean);
		const double var_sc = variance_of(sc[j], g.successive_mean);
		const double se2 = var_mc / static_cast<double>(mc[j].size()) + var_sc / effective_sample_size(sc[j]);
		g.z = se2 > 0.0 ? (g.marginal_mean - g.successive_mean) / std::sqrt(se2) : 0.0;
		report.max_abs_z = std::max(report.max_abs_z, std::abs(g.z));
		report.statistics.push_back(g);
	}
	report.passed = report.max_abs_z < cfg.z_threshold;
	return report;
}

GibbsBlocks corrupted_sigma_blocks() {
	GibbsBlocks blocks;
	blocks.sigma = [](const DesignViews &views, const ParameterState &state, const Hyperparameters &hyper,
	                  RngStream &rng) {
		const GammaParams g = sigma_precision_posterior(views, state, hyper);
		return 1.0 / sample_gamma(g.shape, 0.5 * g.rate, rng);
	};
	return blocks;
}

} // namespace plmm
