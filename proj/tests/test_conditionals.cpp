#include <doctest.h>

#include <cmath>

#include "plmm/conditionals.hpp"
#include "plmm/errors.hpp"
#include "support.hpp"

namespace {

struct Toy {
	plmm::DesignViews views;
	plmm::ParameterState state;
	plmm::Hyperparameters hyper;
};

// n = 10 observations of 4 individuals, C = 3 with cluster 3 empty.
Toy make_toy() {
	Toy t;
	auto d = test::small_dataset(10, 4, 1, 21);
	plmm::ModelSpec s;
	s.fe_cols = {0, 1};
	s.re_cols = {0, 1};
	s.int_cols = {0, 1};
	s.truncation = 3;
	s.standardize_u = false;
	t.views = plmm::build_design_views(d, s);
	t.hyper = plmm::Hyperparameters::defaults(2, 2, 1);
	t.hyper.lambda = 0.4;
	plmm::ParameterState &st = t.state;
	plmm::RngStream rng(4);
	st.z = {0, 0, 1, 1, 1, 0, 0, 1, 1, 0};
	st.beta = rng.normal_vector(2);
	st.sigma2 = 0.6;
	Eigen::MatrixXd wi(2, 2), wr(2, 2);
	wi << 1.5, 0.3, 0.3, 0.8;
	wr << 0.9, 0.2, 0.2, 0.5;
	st.w_int = plmm::PsdMatrix(wi);
	st.w_re = plmm::PsdMatrix(wr);
	for (int c = 0; c < 3; ++c) st.gamma.push_back(rng.normal_vector(2));
	for (int j = 0; j < 4; ++j) st.eta.push_back(rng.normal_vector(2));
	return t;
}

struct Joint {
	Eigen::VectorXd mean;
	Eigen::MatrixXd cov;
};

// Dense posterior of (beta, gamma_1..gamma_C) given everything else: a single linear-Gaussian
// model with design [X_fe, D_1, ..., D_C], D_c the interaction rows of cluster c.
Joint beta_gamma_joint(const Toy &t) {
	const auto &v = t.views;
	const auto &st = t.state;
	const int n = v.dims.n, p = v.dims.p_fe, q = v.dims.p_int, c_max = v.dims.clusters;
	const int dim = p + c_max * q;
	Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, dim);
	Eigen::VectorXd r(n);
	for (int i = 0; i < n; ++i) {
		a.row(i).head(p) = v.fe.row(i);
		a.row(i).segment(p + st.z[i] * q, q) = v.interaction.row(i);
		r(i) = v.y(i) - v.re.row(i).dot(st.eta[static_cast<std::size_t>(v.individual_of[i])]);
	}
	Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(dim, dim);
	prior.topLeftCorner(p, p) = Eigen::MatrixXd::Identity(p, p) * t.hyper.lambda / st.sigma2;
	const Eigen::MatrixXd wi = st.w_int.matrix().inverse();
	for (int c = 0; c < c_max; ++c) prior.block(p + c * q, p + c * q, q, q) = wi;
	const Eigen::MatrixXd prec = a.transpose() * a / st.sigma2 + prior;
	Joint j;
	j.cov = prec.inverse();
	j.mean = j.cov * a.transpose() * r / st.sigma2;
	return j;
}

Joint random_effects_joint(const Toy &t) {
	const auto &v = t.views;
	const auto &st = t.state;
	const int n = v.dims.n, p = v.dims.p_re, m = v.dims.m;
	Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, m * p);
	Eigen::VectorXd r(n);
	for (int i = 0; i < n; ++i) {
		a.row(i).segment(v.individual_of[i] * p, p) = v.re.row(i);
		r(i) = v.y(i) - v.fe.row(i).dot(st.beta) - v.interaction.row(i).dot(st.gamma[static_cast<std::size_t>(st.z[i])]);
	}
	Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(m * p, m * p);
	for (int j = 0; j < m; ++j) prior.block(j * p, j * p, p, p) = st.w_re.matrix().inverse();
	Joint out;
	out.cov = (a.transpose() * a / st.sigma2 + prior).inverse();
	out.mean = out.cov * a.transpose() * r / st.sigma2;
	return out;
}

double max_abs(const Eigen::MatrixXd &m) { return m.cwiseAbs().maxCoeff(); }

// Mean and variance of each coordinate within 3 Monte Carlo standard errors of the oracle.
void check_draws(const std::vector<Eigen::VectorXd> &draws, const Eigen::VectorXd &mean, const Eigen::VectorXd &var) {
	const auto n = static_cast<double>(draws.size());
	Eigen::VectorXd s = Eigen::VectorXd::Zero(mean.size()), s2 = s;
	for (const auto &d : draws) {
		s += d;
		s2 += d.cwiseProduct(d);
	}
	const Eigen::VectorXd m = s / n;
	const Eigen::VectorXd v = s2 / n - m.cwiseProduct(m);
	for (Eigen::Index k = 0; k < mean.size(); ++k) {
		CHECK(std::abs(m(k) - mean(k)) < 3.0 * std::sqrt(var(k) / n));
		CHECK(std::abs(v(k) - var(k)) < 3.0 * var(k) * std::sqrt(2.0 / n));
	}
}

constexpr int kDraws = 100000;

} // namespace

TEST_SUITE("conditionals") {

TEST_CASE("beta marginal moments match the dense joint Gaussian") {
	const Toy t = make_toy();
	const Joint j = beta_gamma_joint(t);
	const auto bm = plmm::beta_marginal_moments(t.views, t.state, t.hyper);
	CHECK(max_abs(bm.mean - j.mean.head(2)) < 1e-8);
	CHECK(max_abs(bm.cov - j.cov.topLeftCorner(2, 2)) < 1e-8);
}

TEST_CASE("gamma given beta matches Gaussian conditioning of the joint") {
	const Toy t = make_toy();
	const Joint j = beta_gamma_joint(t);
	Eigen::VectorXd beta(2);
	beta << 0.3, -0.8;
	const Eigen::MatrixXd sbb = j.cov.topLeftCorner(2, 2);
	for (int c = 0; c < 3; ++c) {
		const Eigen::MatrixXd sgb = j.cov.block(2 + 2 * c, 0, 2, 2);
		const Eigen::MatrixXd sgg = j.cov.block(2 + 2 * c, 2 + 2 * c, 2, 2);
		const Eigen::VectorXd mean = j.mean.segment(2 + 2 * c, 2) + sgb * sbb.inverse() * (beta - j.mean.head(2));
		const Eigen::MatrixXd cov = sgg - sgb * sbb.inverse() * sgb.transpose();
		const auto gm = plmm::gamma_conditional_moments(t.views, t.state, beta, c);
		CHECK(max_abs(gm.mean - mean) < 1e-8);
		CHECK(max_abs(gm.cov - cov) < 1e-8);
	}
	// the empty cluster falls back to its prior
	const auto empty = plmm::gamma_conditional_moments(t.views, t.state, beta, 2);
	CHECK(empty.mean.isZero());
	CHECK(max_abs(empty.cov - t.state.w_int.matrix()) < 1e-12);
}

TEST_CASE("joint beta-gamma draws have the joint posterior moments") {
	const Toy t = make_toy();
	const Joint j = beta_gamma_joint(t);
	plmm::RngStream rng(31);
	std::vector<Eigen::VectorXd> draws;
	draws.reserve(kDraws);
	for (int k = 0; k < kDraws; ++k) {
		const auto bg = plmm::update_beta_gamma_joint(t.views, t.state, t.hyper, rng);
		Eigen::VectorXd v(8);
		v << bg.beta, bg.gamma[0], bg.gamma[1], bg.gamma[2];
		draws.push_back(v);
	}
	check_draws(draws, j.mean, j.cov.diagonal());
}

TEST_CASE("random effects match the dense joint Gaussian") {
	const Toy t = make_toy();
	const Joint j = random_effects_joint(t);
	for (int ind = 0; ind < 4; ++ind) {
		const auto rm = plmm::random_effect_moments(t.views, t.state, ind);
		CHECK(max_abs(rm.mean - j.mean.segment(2 * ind, 2)) < 1e-8);
		CHECK(max_abs(rm.cov - j.cov.block(2 * ind, 2 * ind, 2, 2)) < 1e-8);
		// individuals are independent given the rest
		if (ind > 0) CHECK(max_abs(j.cov.block(0, 2 * ind, 2, 2)) < 1e-12);
	}
	plmm::RngStream rng(32);
	std::vector<Eigen::VectorXd> draws;
	draws.reserve(kDraws);
	for (int k = 0; k < kDraws; ++k) {
		const auto eta = plmm::update_random_effects(t.views, t.state, rng);
		Eigen::VectorXd v(8);
		v << eta[0], eta[1], eta[2], eta[3];
		draws.push_back(v);
	}
	check_draws(draws, j.mean, j.cov.diagonal());
}

TEST_CASE("NIW update matches grid integration of prior times likelihood") {
	Toy t = make_toy();
	t.hyper.lambda0 = 0.5;
	t.hyper.nu0 = 3.0;
	t.hyper.phi0 = plmm::PsdMatrix::identity(1, 0.8);
	const auto stats = plmm::compute_cluster_stats(t.views, t.state.z);
	for (int c = 0; c < 2; ++c) {
		std::vector<double> u;
		for (int i = 0; i < 10; ++i)
			if (t.state.z[i] == c) u.push_back(t.views.u_cont(i, 0));
		double center = 0.0;
		for (double x : u) center += x / static_cast<double>(u.size());

		// grid over s = log sigma^2 and mu = center + z sqrt(sigma^2 / lambda0)
		const int ns = 1600, nz = 1000;
		const double s_lo = -9.0, s_hi = 9.0, z_lo = -16.0, z_hi = 16.0;
		const double hs = (s_hi - s_lo) / ns, hz = (z_hi - z_lo) / nz;
		std::vector<double> logd;
		std::vector<double> mu_at, s2_at;
		double peak = -std::numeric_limits<double>::infinity();
		for (int a = 0; a <= ns; ++a) {
			const double s = s_lo + a * hs, s2 = std::exp(s);
			for (int b = 0; b <= nz; ++b) {
				const double mu = center + (z_lo + b * hz) * std::sqrt(s2 / t.hyper.lambda0);
				double ll = 0.0;
				for (double x : u) ll += -0.5 * std::log(s2) - 0.5 * (x - mu) * (x - mu) / s2;
				ll += -0.5 * std::log(s2) - 0.5 * t.hyper.lambda0 * mu * mu / s2;  // mu | sigma^2
				ll += -0.5 * (t.hyper.nu0 + 2.0) * s - 0.5 * 0.8 / s2;             // IW(0.8, nu0), dim 1
				ll += s + 0.5 * s;                                                  // Jacobians
				const double w = (a == 0 || a == ns ? 0.5 : 1.0) * (b == 0 || b == nz ? 0.5 : 1.0);
				logd.push_back(ll + std::log(w));
				mu_at.push_back(mu);
				s2_at.push_back(s2);
				peak = std::max(peak, ll);
			}
		}
		double z0 = 0.0, e_mu = 0.0, e_mu2 = 0.0, e_s2 = 0.0;
		for (std::size_t k = 0; k < logd.size(); ++k) {
			const double w = std::exp(logd[k] - peak);
			z0 += w;
			e_mu += w * mu_at[k];
			e_mu2 += w * mu_at[k] * mu_at[k];
			e_s2 += w * s2_at[k];
		}
		e_mu /= z0;
		e_mu2 /= z0;
		e_s2 /= z0;

		const auto post = plmm::niw_posterior(stats, c, t.hyper);
		const double closed_s2 = post.scale(0, 0) / (post.dof - 2.0);
		CHECK(std::abs(post.mean(0) - e_mu) < 1e-8);
		CHECK(std::abs(closed_s2 - e_s2) < 1e-8);
		CHECK(std::abs(post.mean(0) * post.mean(0) + closed_s2 / post.kappa - e_mu2) < 1e-8);

		plmm::RngStream rng(40 + c);
		double m_mu = 0.0, m_s2 = 0.0, v_mu = 0.0, v_s2 = 0.0;
		for (int k = 0; k < kDraws; ++k) {
			const auto draw = plmm::update_assignment_params(stats, t.hyper, rng);
			const double mu = draw[static_cast<std::size_t>(c)].mu(0), s2 = draw[static_cast<std::size_t>(c)].sigma.matrix()(0, 0);
			m_mu += mu;
			m_s2 += s2;
			v_mu += mu * mu;
			v_s2 += s2 * s2;
		}
		m_mu /= kDraws;
		m_s2 /= kDraws;
		v_mu = v_mu / kDraws - m_mu * m_mu;
		v_s2 = v_s2 / kDraws - m_s2 * m_s2;
		CHECK(std::abs(m_mu - e_mu) < 3.0 * std::sqrt(v_mu / kDraws));
		CHECK(std::abs(m_s2 - e_s2) < 3.0 * std::sqrt(v_s2 / kDraws));
	}
}

TEST_CASE("NIW update includes the prior-mean shrinkage term") {
	Toy t = make_toy();
	const auto stats = plmm::compute_cluster_stats(t.views, t.state.z);
	const auto post = plmm::niw_posterior(stats, 0, t.hyper);
	double sum = 0.0, sq = 0.0;
	int n = 0;
	for (int i = 0; i < 10; ++i) {
		if (t.state.z[i] != 0) continue;
		sum += t.views.u_cont(i, 0);
		sq += t.views.u_cont(i, 0) * t.views.u_cont(i, 0);
		++n;
	}
	// phi0 + sum u^2 - kappa_n mean_n^2 is the same quantity written without centering
	const double kappa = t.hyper.lambda0 + n;
	const double expected = t.hyper.phi0.matrix()(0, 0) + sq - sum * sum / kappa;
	CHECK(post.scale(0, 0) == doctest::Approx(expected).epsilon(1e-12));
	CHECK(post.kappa == kappa);
	CHECK(post.dof == t.hyper.nu0 + n);
	// an empty cluster keeps the prior
	const auto empty = plmm::niw_posterior(stats, 2, t.hyper);
	CHECK(empty.mean.isZero());
	CHECK(empty.scale == t.hyper.phi0.matrix());
}

TEST_CASE("bivariate NIW draws have the posterior means") {
	auto d = test::small_dataset(10, 4, 2, 5);
	plmm::ModelSpec s;
	s.fe_cols = {0};
	s.re_cols = {0};
	s.int_cols = {0};
	s.truncation = 2;
	s.standardize_u = false;
	const auto v = plmm::build_design_views(d, s);
	auto h = plmm::Hyperparameters::defaults(1, 1, 2);
	h.nu0 = 6.0;
	const std::vector<int> z{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
	const auto stats = plmm::compute_cluster_stats(v, z);
	const auto post = plmm::niw_posterior(stats, 0, h);
	const Eigen::MatrixXd e_sigma = post.scale / (post.dof - 3.0);
	plmm::RngStream rng(50);
	Eigen::VectorXd m_mu = Eigen::VectorXd::Zero(2);
	Eigen::MatrixXd m_sigma = Eigen::MatrixXd::Zero(2, 2);
	for (int k = 0; k < kDraws; ++k) {
		const auto draw = plmm::update_assignment_params(stats, h, rng);
		m_mu += draw[0].mu / kDraws;
		m_sigma += draw[0].sigma.matrix() / kDraws;
	}
	for (int k = 0; k < 2; ++k) {
		CHECK(std::abs(m_mu(k) - post.mean(k)) < 3.0 * std::sqrt(e_sigma(k, k) / post.kappa / kDraws));
		// Var(Sigma_kk) = 2 S_kk^2 / ((dof - 3)^2 (dof - 5)) for the inverse Wishart in dimension 2
		const double sd = std::sqrt(2.0 * post.scale(k, k) * post.scale(k, k) /
		                            ((post.dof - 3.0) * (post.dof - 3.0) * (post.dof - 5.0)));
		CHECK(std::abs(m_sigma(k, k) - e_sigma(k, k)) < 3.0 * sd / std::sqrt(kDraws));
	}
}

TEST_CASE("categorical profile update matches grid integration") {
	auto d = test::small_dataset(10, 4, 1, 6);
	d.u_cat.resize(10, 1);
	for (int i = 0; i < 10; ++i) d.u_cat(i, 0) = (i % 4 == 0) ? 1 : 0;
	d.cat_levels = {2};
	d.u_cat_names = {"c"};
	plmm::ModelSpec s;
	s.fe_cols = {0};
	s.re_cols = {0};
	s.int_cols = {0};
	s.truncation = 2;
	const auto v = plmm::build_design_views(d, s);
	auto h = plmm::Hyperparameters::defaults(1, 1, 1);
	h.alpha_dir = 1.5;
	const std::vector<int> z(10, 0);
	const auto stats = plmm::compute_cluster_stats(v, z);
	// p = logistic(t); density of t proportional to p^(a + n1) (1 - p)^(a + n0)
	const double n1 = 3.0, n0 = 7.0;
	double z0 = 0.0, e_p = 0.0;
	for (int k = 0; k <= 40000; ++k) {
		const double tt = -40.0 + k * 0.002;
		const double p = 1.0 / (1.0 + std::exp(-tt));
		const double w = std::exp((h.alpha_dir + n1) * std::log(p) + (h.alpha_dir + n0) * std::log1p(-p));
		z0 += w;
		e_p += w * p;
	}
	e_p /= z0;
	CHECK(std::abs(e_p - (h.alpha_dir + n1) / (2 * h.alpha_dir + 10.0)) < 1e-10);
	plmm::RngStream rng(60);
	double m = 0.0;
	for (int k = 0; k < kDraws; ++k) m += plmm::update_assignment_params(stats, h, rng)[0].phi[0](1) / kDraws;
	const double var = e_p * (1 - e_p) / (2 * h.alpha_dir + 10.0 + 1.0);
	CHECK(std::abs(m - e_p) < 3.0 * std::sqrt(var / kDraws));
}

TEST_CASE("error precision posterior ties beta to sigma^2") {
	plmm::LongitudinalDataset d = test::small_dataset(4, 2, 1, 1);
	d.y << 1.0, -1.0, 1.0, -1.0;
	plmm::ModelSpec s;
	s.fe_cols = {0};
	s.re_cols = {0};
	s.int_cols = {0};
	s.truncation = 2;
	const auto v = plmm::build_design_views(d, s);
	plmm::Hyperparameters h = plmm::Hyperparameters::defaults(1, 1, 1);
	h.a_sigma = 1.0;
	h.b_sigma = 1.0;
	plmm::ParameterState st;
	st.beta = Eigen::VectorXd::Zero(1);
	st.gamma = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
	st.eta = {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
	st.z = {0, 0, 1, 1};
	const auto g = plmm::sigma_precision_posterior(v, st, h);
	CHECK(g.shape == 3.5);
	CHECK(g.rate == 3.0);
	plmm::RngStream rng(70);
	double m = 0.0;
	for (int k = 0; k < kDraws; ++k) m += plmm::update_sigma(v, st, h, rng) / kDraws;
	// inverse gamma(3.5, 3): mean 1.2, variance 0.96
	CHECK(std::abs(m - 1.2) < 3.0 * std::sqrt(0.96 / kDraws));
	st.beta(0) = 2.0;
	h.lambda = 0.5;
	const auto g2 = plmm::sigma_precision_posterior(v, st, h);
	// residuals become -1, -3, -1, -3 and the prior adds lambda beta^2 / 2
	CHECK(g2.rate == doctest::Approx(1.0 + 0.5 * 20.0 + 0.5 * 0.5 * 4.0));
}

TEST_CASE("stick-breaking and concentration updates") {
	const std::vector<int> z{0, 0, 0, 1, 2, 2};
	plmm::RngStream rng(80);
	const double zeta = 1.5;
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
	for (int k = 0; k < kDraws; ++k) {
		const auto sd = plmm::update_weights(z, zeta, 4, rng);
		REQUIRE(sd.sticks(3) == 1.0);
		REQUIRE(std::abs(sd.weights.sum() - 1.0) < 1e-12);
		mean += sd.sticks / kDraws;
	}
	// V_c ~ Beta(1 + n_c, zeta + n_{>c})
	const double a[3] = {4.0, 2.0, 3.0};
	const double b[3] = {zeta + 3.0, zeta + 2.0, zeta};
	for (int c = 0; c < 3; ++c) {
		const double mu = a[c] / (a[c] + b[c]);
		const double var = a[c] * b[c] / ((a[c] + b[c]) * (a[c] + b[c]) * (a[c] + b[c] + 1));
		CHECK(std::abs(mean(c) - mu) < 3.0 * std::sqrt(var / kDraws));
	}
	Eigen::VectorXd sticks(4);
	sticks << 0.5, 0.2, 1.0, 1.0;
	plmm::Hyperparameters h;
	h.a_zeta = 2.0;
	h.b_zeta = 0.5;
	const auto g = plmm::concentration_posterior(sticks, h);
	CHECK(g.shape == 5.0);
	// V = 1 before the last stick is clamped to 1 - 1e-12
	CHECK(g.rate == doctest::Approx(2.0 - std::log(0.5) - std::log(0.8) - std::log(1e-12)));
}

TEST_CASE("allocation weights match the direct density product") {
	Toy t = make_toy();
	plmm::RngStream rng(90);
	t.state.theta_u = plmm::update_assignment_params(plmm::compute_cluster_stats(t.views, t.state.z), t.hyper, rng);
	t.state.weights = Eigen::VectorXd(3);
	t.state.weights << 0.5, 0.3, 0.2;
	for (int i = 0; i < 10; ++i) {
		const Eigen::VectorXd lw = plmm::allocation_log_weights(t.views, t.state, i);
		for (int c = 0; c < 3; ++c) {
			const double mean = t.views.fe.row(i).dot(t.state.beta) +
			                    t.views.re.row(i).dot(t.state.eta[static_cast<std::size_t>(t.views.individual_of[i])]) +
			                    t.views.interaction.row(i).dot(t.state.gamma[static_cast<std::size_t>(c)]);
			const auto &th = t.state.theta_u[static_cast<std::size_t>(c)];
			const double s2 = th.sigma.matrix()(0, 0);
			const double u = t.views.u_cont(i, 0);
			const double expected = std::log(t.state.weights(c)) - 0.5 * std::log(2 * M_PI * t.state.sigma2) -
			                        0.5 * std::pow(t.views.y(i) - mean, 2) / t.state.sigma2 -
			                        0.5 * std::log(2 * M_PI * s2) - 0.5 * std::pow(u - th.mu(0), 2) / s2;
			CHECK(lw(c) == doctest::Approx(expected).epsilon(1e-12));
		}
	}
	t.state.weights.setZero();
	try {
		plmm::update_allocations(t.views, t.state, rng);
		FAIL("expected a numerical error");
	} catch (const plmm::NumericalError &e) {
		CHECK(std::string(e.what()).find("observation 1") != std::string::npos);
	}
}

TEST_CASE("covariance updates use every cluster and individual") {
	plmm::Hyperparameters h = plmm::Hyperparameters::defaults(1, 1, 1);
	std::vector<Eigen::VectorXd> g(5, Eigen::VectorXd::Constant(1, 2.0));
	plmm::RngStream rng(95);
	double m = 0.0;
	for (int k = 0; k < kDraws; ++k) m += plmm::update_wint(g, h, rng).matrix()(0, 0) / kDraws;
	// IW(1 + 5 * 4, 3 + 5) in dimension 1: mean 21 / 6
	const double var = 2.0 * 21.0 * 21.0 / (36.0 * 4.0);
	CHECK(std::abs(m - 21.0 / 6.0) < 3.0 * std::sqrt(var / kDraws));
}

}
