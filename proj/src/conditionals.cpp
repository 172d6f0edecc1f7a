#include "plmm/conditionals.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "plmm/errors.hpp"

namespace plmm {

namespace {

Eigen::MatrixXd cholesky_lower(const Eigen::MatrixXd &m, const std::string &site) {
	Eigen::LLT<Eigen::MatrixXd> llt(m);
	if (llt.info() != Eigen::Success) {
		throw FactorizationError(site, "matrix is not positive definite");
	}
	return llt.matrixL();
}

// Posterior of theta ~ N(0, L L^T) observed through r = X theta + N(0, sigma2 I), expressed
// with X^T X and X^T r only: with M = sigma2 I + L^T X^T X L,
//   mean = L M^{-1} L^T X^T r,   cov = sigma2 L M^{-1} L^T.
// This is the Woodbury form of W X^T (sigma2 I + X W X^T)^{-1} r and never builds an n x n matrix.
struct LatentPosterior {
	Eigen::VectorXd mean;
	Eigen::MatrixXd prior_factor;  // L
	Eigen::MatrixXd scaled_chol;   // lower Cholesky of M / sigma2

	Eigen::MatrixXd cov() const {
		const Eigen::MatrixXd t = scaled_chol.triangularView<Eigen::Lower>().solve(prior_factor.transpose());
		return t.transpose() * t;
	}

	Eigen::VectorXd sample(RngStream &rng) const {
		const Eigen::VectorXd z = rng.normal_vector(mean.size());
		const Eigen::VectorXd w = scaled_chol.transpose().triangularView<Eigen::Upper>().solve(z);
		return mean + prior_factor * w;
	}
};

LatentPosterior latent_posterior(const Eigen::MatrixXd &xtx, const Eigen::VectorXd &xtr, const Eigen::MatrixXd &factor,
                                 double sigma2, const std::string &site) {
	Eigen::MatrixXd m = factor.transpose() * xtx * factor;
	m.diagonal().array() += sigma2;
	m = 0.5 * (m + m.transpose());
	LatentPosterior post;
	post.prior_factor = factor;
	Eigen::LLT<Eigen::MatrixXd> llt(m);
	if (llt.info() != Eigen::Success) {
		throw FactorizationError(site, "marginal covariance is not positive definite");
	}
	post.mean = factor * llt.solve(factor.transpose() * xtr);
	post.scaled_chol = cholesky_lower(m / sigma2, site);
	return post;
}

// Rows of a matrix restricted to an index set.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd &x, const std::vector<int> &rows) {
	Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
	for (std::size_t k = 0; k < rows.size(); ++k) {
		out.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
	}
	return out;
}

Eigen::VectorXd random_effect_contribution(const DesignViews &views, const ParameterState &state) {
	Eigen::VectorXd out(views.dims.n);
	for (int i = 0; i < views.dims.n; ++i) {
		out(i) = views.re.row(i).dot(state.eta[static_cast<std::size_t>(views.individual_of[static_cast<std::size_t>(i)])]);
	}
	return out;
}

Eigen::VectorXd interaction_contribution(const DesignViews &views, const ParameterState &state) {
	Eigen::VectorXd out(views.dims.n);
	for (int i = 0; i < views.dims.n; ++i) {
		out(i) = views.interaction.row(i).dot(state.gamma[static_cast<std::size_t>(state.z[static_cast<std::size_t>(i)])]);
	}
	return out;
}

LatentPosterior gamma_posterior(const DesignViews &views, const ParameterState &state, const Eigen::VectorXd &beta,
                                const std::vector<int> &rows, int cluster) {
	const Eigen::MatrixXd g = take_rows(views.interaction, rows);
	const Eigen::VectorXd re = random_effect_contribution(views, state);
	Eigen::VectorXd r(static_cast<Eigen::Index>(rows.size()));
	for (std::size_t k = 0; k < rows.size(); ++k) {
		const int i = rows[k];
		r(static_cast<Eigen::Index>(k)) = views.y(i) - re(i) - views.fe.row(i).dot(beta);
	}
	return latent_posterior(g.transpose() * g, g.transpose() * r, state.w_int.lower(), state.sigma2,
	                        "b) interaction effects, cluster " + std::to_string(cluster + 1));
}

} // namespace

ClusterSufficientStats compute_cluster_stats(const DesignViews &views, const std::vector<int> &z) {
	const int clusters = views.dims.clusters;
	const int q = views.dims.q_cont;
	ClusterSufficientStats st;
	st.count.assign(static_cast<std::size_t>(clusters), 0);
	st.mean.assign(static_cast<std::size_t>(clusters), Eigen::VectorXd::Zero(q));
	st.scatter.assign(static_cast<std::size_t>(clusters), Eigen::MatrixXd::Zero(q, q));
	st.cat_counts.resize(static_cast<std::size_t>(clusters));
	for (auto &per_cluster : st.cat_counts) {
		for (int levels : views.dims.cat_levels) {
			per_cluster.push_back(Eigen::VectorXd::Zero(levels));
		}
	}
	for (std::size_t i = 0; i < z.size(); ++i) {
		const auto c = static_cast<std::size_t>(z[i]);
		++st.count[c];
		st.mean[c] += views.u_cont.row(static_cast<Eigen::Index>(i)).transpose();
		for (std::size_t j = 0; j < views.dims.cat_levels.size(); ++j) {
			st.cat_counts[c][j](views.u_cat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) += 1.0;
		}
	}
	for (int c = 0; c < clusters; ++c) {
		if (st.count[static_cast<std::size_t>(c)] > 0) {
			st.mean[static_cast<std::size_t>(c)] /= st.count[static_cast<std::size_t>(c)];
		}
	}
	if (q > 0) {
		for (std::size_t i = 0; i < z.size(); ++i) {
			const auto c = static_cast<std::size_t>(z[i]);
			const Eigen::VectorXd d = views.u_cont.row(static_cast<Eigen::Index>(i)).transpose() - st.mean[c];
			st.scatter[c].noalias() += d * d.transpose();
		}
	}
	return st;
}

NiwParams niw_posterior(const ClusterSufficientStats &stats, int c, const Hyperparameters &hyper) {
	const auto cc = static_cast<std::size_t>(c);
	const double n = stats.count[cc];
	NiwParams post;
	post.kappa = hyper.lambda0 + n;
	post.dof = hyper.nu0 + n;
	post.mean = n * stats.mean[cc] / post.kappa;
	post.scale = hyper.phi0.matrix() + stats.scatter[cc] +
	             (hyper.lambda0 * n / post.kappa) * stats.mean[cc] * stats.mean[cc].transpose();
	return post;
}

std::vector<AssignmentParams> update_assignment_params(const ClusterSufficientStats &stats,
                                                       const Hyperparameters &hyper, RngStream &rng) {
	const std::size_t clusters = stats.count.size();
	std::vector<AssignmentParams> out(clusters);
	for (std::size_t c = 0; c < clusters; ++c) {
		AssignmentParams &t = out[c];
		if (stats.mean[c].size() > 0) {
			const NiwParams post = niw_posterior(stats, static_cast<int>(c), hyper);
			const std::string site = "a) assignment parameters, cluster " + std::to_string(c + 1);
			t.sigma = sample_inverse_wishart(PsdMatrix(post.scale, site), post.dof, rng, site);
			t.mu = post.mean + t.sigma.lower() * rng.normal_vector(post.mean.size()) / std::sqrt(post.kappa);
		}
		for (const auto &counts : stats.cat_counts[c]) {
			t.phi.push_back(sample_dirichlet(counts.array() + hyper.alpha_dir, rng));
		}
	}
	return out;
}

GaussianMoments beta_marginal_moments(const DesignViews &views, const ParameterState &state,
                                      const Hyperparameters &hyper) {
	const int p = views.dims.p_fe;
	const double s2 = state.sigma2;
	const Eigen::MatrixXd &factor = state.w_int.lower();
	const Eigen::VectorXd re = random_effect_contribution(views, state);
	Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(p, p) * (hyper.lambda / s2);
	Eigen::VectorXd h = Eigen::VectorXd::Zero(p);
	const auto rows = cluster_rows(state.z, views.dims.clusters);
	for (std::size_t c = 0; c < rows.size(); ++c) {
		if (rows[c].empty()) {
			continue;
		}
		const Eigen::MatrixXd f = take_rows(views.fe, rows[c]);
		const Eigen::MatrixXd g = take_rows(views.interaction, rows[c]);
		Eigen::VectorXd r(f.rows());
		for (std::size_t k = 0; k < rows[c].size(); ++k) {
			r(static_cast<Eigen::Index>(k)) = views.y(rows[c][k]) - re(rows[c][k]);
		}
		// F^T V_c^{-1} F and F^T V_c^{-1} r with V_c = s2 I + G W G^T, via Woodbury
		const Eigen::MatrixXd ftk = f.transpose() * g * factor;
		const Eigen::VectorXd ktr = factor.transpose() * (g.transpose() * r);
		Eigen::MatrixXd m = factor.transpose() * (g.transpose() * g) * factor;
		m.diagonal().array() += s2;
		Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (m + m.transpose()));
		if (llt.info() != Eigen::Success) {
			throw FactorizationError("b) fixed effects, V_c for cluster " + std::to_string(c + 1),
			                         "matrix is not positive definite");
		}
		precision += (f.transpose() * f - ftk * llt.solve(ftk.transpose())) / s2;
		h += (f.transpose() * r - ftk * llt.solve(ktr)) / s2;
	}
	precision = 0.5 * (precision + precision.transpose());
	Eigen::LLT<Eigen::MatrixXd> llt(precision);
	if (llt.info() != Eigen::Success) {
		throw FactorizationError("b) fixed effects", "posterior precision is not positive definite");
	}
	GaussianMoments out;
	out.mean = llt.solve(h);
	out.cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
	return out;
}

GaussianMoments gamma_conditional_moments(const DesignViews &views, const ParameterState &state,
                                          const Eigen::VectorXd &beta, int cluster) {
	std::vector<int> rows;
	for (std::size_t i = 0; i < state.z.size(); ++i) {
		if (state.z[i] == cluster) {
			rows.push_back(static_cast<int>(i));
		}
	}
	if (rows.empty()) {
		return {Eigen::VectorXd::Zero(views.dims.p_int), state.w_int.matrix()};
	}
	const LatentPosterior post = gamma_posterior(views, state, beta, rows, cluster);
	return {post.mean, post.cov()};
}

BetaGamma update_beta_gamma_joint(const DesignViews &views, const ParameterState &state,
                                  const Hyperparameters &hyper, RngStream &rng) {
	const GaussianMoments bm = beta_marginal_moments(views, state, hyper);
	BetaGamma out;
	const Eigen::MatrixXd b_chol = cholesky_lower(bm.cov, "b) fixed effects");
	out.beta = bm.mean + b_chol * rng.normal_vector(bm.mean.size());

	const auto rows = cluster_rows(state.z, views.dims.clusters);
	out.gamma.resize(rows.size());
	for (std::size_t c = 0; c < rows.size(); ++c) {
		if (rows[c].empty()) {
			out.gamma[c] = sample_mvn(Eigen::VectorXd::Zero(views.dims.p_int), state.w_int, rng);
		} else {
			out.gamma[c] = gamma_posterior(views, state, out.beta, rows[c], static_cast<int>(c)).sample(rng);
		}
	}
	return out;
}

GammaParams sigma_precision_posterior(const DesignViews &views, const ParameterState &state,
                                      const Hyperparameters &hyper) {
	const Eigen::VectorXd re = random_effect_contribution(views, state);
	const Eigen::VectorXd yint = interaction_contribution(views, state);
	double ssr = 0.0;
	for (int i = 0; i < views.dims.n; ++i) {
		const double r = views.y(i) - views.fe.row(i).dot(state.beta) - re(i) - yint(i);
		ssr += r * r;
	}
	GammaParams post;
	post.shape = hyper.a_sigma + 0.5 * (views.dims.n + views.dims.p_fe);
	post.rate = hyper.b_sigma + 0.5 * ssr + 0.5 * hyper.lambda * state.beta.squaredNorm();
	return post;
}

double update_sigma(const DesignViews &views, const ParameterState &state, const Hyperparameters &hyper,
                    RngStream &rng) {
	const GammaParams post = sigma_precision_posterior(views, state, hyper);
	return 1.0 / sample_gamma(post.shape, post.rate, rng);
}

GaussianMoments random_effect_moments(const DesignViews &views, const ParameterState &state, int individual) {
	const auto &rows = views.individual_rows[static_cast<std::size_t>(individual)];
	const Eigen::MatrixXd x = take_rows(views.re, rows);
	const Eigen::VectorXd yint = interaction_contribution(views, state);
	Eigen::VectorXd r(x.rows());
	for (std::size_t k = 0; k < rows.size(); ++k) {
		const int i = rows[k];
		r(static_cast<Eigen::Index>(k)) = views.y(i) - yint(i) - views.fe.row(i).dot(state.beta);
	}
	const LatentPosterior post = latent_posterior(x.transpose() * x, x.transpose() * r, state.w_re.lower(),
	                                              state.sigma2, "b) random effects, individual " + std::to_string(individual + 1));
	return {post.mean, post.cov()};
}

std::vector<Eigen::VectorXd> update_random_effects(const DesignViews &views, const ParameterState &state,
                                                   RngStream &rng) {
	const int p = views.dims.p_re;
	const Eigen::VectorXd yint = interaction_contribution(views, state);
	std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(views.dims.m));
	for (int j = 0; j < views.dims.m; ++j) {
		const auto &rows = views.individual_rows[static_cast<std::size_t>(j)];
		Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
		Eigen::VectorXd xtr = Eigen::VectorXd::Zero(p);
		for (int i : rows) {
			const Eigen::VectorXd xi = views.re.row(i).transpose();
			xtx.noalias() += xi * xi.transpose();
			xtr += xi * (views.y(i) - yint(i) - views.fe.row(i).dot(state.beta));
		}
		out[static_cast<std::size_t>(j)] =
			latent_posterior(xtx, xtr, state.w_re.lower(), state.sigma2,
			                 "b) random effects, individual " + std::to_string(j + 1))
				.sample(rng);
	}
	return out;
}

PsdMatrix update_wre(const std::vector<Eigen::VectorXd> &eta, const Hyperparameters &hyper, RngStream &rng) {
	Eigen::MatrixXd scale = hyper.psi_re.matrix();
	for (const auto &e : eta) {
		scale.noalias() += e * e.transpose();
	}
	const std::string site = "b) random-effect covariance";
	return sample_inverse_wishart(PsdMatrix(scale, site), hyper.nu_re + static_cast<double>(eta.size()), rng, site);
}

PsdMatrix update_wint(const std::vector<Eigen::VectorXd> &gamma, const Hyperparameters &hyper, RngStream &rng) {
	Eigen::MatrixXd scale = hyper.psi_int.matrix();
	for (const auto &g : gamma) {
		scale.noalias() += g * g.transpose();
	}
	const std::string site = "b) interaction covariance";
	return sample_inverse_wishart(PsdMatrix(scale, site), hyper.nu_int + static_cast<double>(gamma.size()), rng, site);
}

namespace {

struct AllocationContext {
	Eigen::VectorXd log_pi;
	std::vector<Eigen::MatrixXd> sigma_inv_lower;  // L_c^{-1}
	Eigen::VectorXd log_norm;                        // -0.5 (q log 2 pi + log det Sigma_c)
	std::vector<std::vector<Eigen::VectorXd>> log_phi;
	double log_noise_norm;
};

AllocationContext allocation_context(const DesignViews &views, const ParameterState &state) {
	const int clusters = views.dims.clusters;
	const int q = views.dims.q_cont;
	AllocationContext ctx;
	ctx.log_pi = state.weights.array().log();
	ctx.log_norm = Eigen::VectorXd::Zero(clusters);
	ctx.sigma_inv_lower.resize(static_cast<std::size_t>(clusters));
	ctx.log_phi.resize(static_cast<std::size_t>(clusters));
	for (int c = 0; c < clusters; ++c) {
		const auto &t = state.theta_u[static_cast<std::size_t>(c)];
		if (q > 0) {
			ctx.sigma_inv_lower[static_cast<std::size_t>(c)] =
				t.sigma.lower().triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(q, q));
			ctx.log_norm(c) = -0.5 * (q * std::log(2.0 * M_PI) + t.sigma.log_det());
		}
		for (const auto &phi : t.phi) {
			ctx.log_phi[static_cast<std::size_t>(c)].push_back(phi.array().log());
		}
	}
	ctx.log_noise_norm = -0.5 * std::log(2.0 * M_PI * state.sigma2);
	return ctx;
}

Eigen::VectorXd log_weights_for(const DesignViews &views, const ParameterState &state, const AllocationContext &ctx,
                                int i) {
	const int clusters = views.dims.clusters;
	const int q = views.dims.q_cont;
	const double base = views.fe.row(i).dot(state.beta) +
	                    views.re.row(i).dot(state.eta[static_cast<std::size_t>(views.individual_of[static_cast<std::size_t>(i)])]);
	Eigen::VectorXd lw(clusters);
	for (int c = 0; c < clusters; ++c) {
		const auto cc = static_cast<std::size_t>(c);
		const double r = views.y(i) - base - views.interaction.row(i).dot(state.gamma[cc]);
		double v = ctx.log_pi(c) + ctx.log_noise_norm - 0.5 * r * r / state.sigma2;
		if (q > 0) {
			const Eigen::VectorXd w = ctx.sigma_inv_lower[cc].triangularView<Eigen::Lower>() *
			                          (views.u_cont.row(i).transpose() - state.theta_u[cc].mu);
			v += ctx.log_norm(c) - 0.5 * w.squaredNorm();
		}
		for (std::size_t j = 0; j < ctx.log_phi[cc].size(); ++j) {
			v += ctx.log_phi[cc][j](views.u_cat(i, static_cast<Eigen::Index>(j)));
		}
		lw(c) = v;
	}
	return lw;
}

} // namespace

Eigen::VectorXd allocation_log_weights(const DesignViews &views, const ParameterState &state, int obs) {
	return log_weights_for(views, state, allocation_context(views, state), obs);
}

std::vector<int> update_allocations(const DesignViews &views, const ParameterState &state, RngStream &rng) {
	const AllocationContext ctx = allocation_context(views, state);
	std::vector<int> z(static_cast<std::size_t>(views.dims.n));
	for (int i = 0; i < views.dims.n; ++i) {
		const Eigen::VectorXd lw = log_weights_for(views, state, ctx, i);
		try {
			z[static_cast<std::size_t>(i)] = sample_log_categorical(lw, rng);
		} catch (const NumericalError &e) {
			throw NumericalError("c) allocations, observation " + std::to_string(i + 1) + ": " + e.what());
		}
	}
	return z;
}

StickDraw update_weights(const std::vector<int> &z, double zeta, int clusters, RngStream &rng) {
	const auto counts = cluster_counts(z, clusters);
	StickDraw out;
	out.sticks.resize(clusters);
	long tail = static_cast<long>(z.size());
	for (int c = 0; c < clusters - 1; ++c) {
		tail -= counts[static_cast<std::size_t>(c)];
		out.sticks(c) = sample_beta(1.0 + counts[static_cast<std::size_t>(c)], zeta + static_cast<double>(tail), rng);
	}
	out.sticks(clusters - 1) = 1.0;
	out.weights = stick_weights(out.sticks);
	return out;
}

GammaParams concentration_posterior(const Eigen::VectorXd &sticks, const Hyperparameters &hyper) {
	const Eigen::Index clusters = sticks.size();
	double log_remaining = 0.0;
	for (Eigen::Index c = 0; c + 1 < clusters; ++c) {
		const double v = std::min(sticks(c), 1.0 - 1e-12);
		log_remaining += std::log1p(-v);
	}
	GammaParams post;
	post.shape = hyper.a_zeta + static_cast<double>(clusters) - 1.0;
	post.rate = 1.0 / hyper.b_zeta - log_remaining;
	return post;
}

double update_concentration(const Eigen::VectorXd &sticks, const Hyperparameters &hyper, RngStream &rng) {
	const GammaParams post = concentration_posterior(sticks, hyper);
	return sample_gamma(post.shape, post.rate, rng);
}

} // namespace plmm
