#include <doctest.h>

#include <cmath>

#include "plmm/errors.hpp"
#include "plmm/stochastics.hpp"

namespace {

struct Moments {
	double mean = 0.0;
	double var = 0.0;
};

template <typename F>
Moments moments(int draws, F &&f) {
	double s = 0.0, s2 = 0.0;
	for (int k = 0; k < draws; ++k) {
		const double v = f();
		s += v;
		s2 += v * v;
	}
	Moments m;
	m.mean = s / draws;
	m.var = s2 / draws - m.mean * m.mean;
	return m;
}

// |sample mean - mu| within 3 Monte Carlo standard errors
void check_mean(const Moments &m, double mu, double var, int draws) {
	CHECK(std::abs(m.mean - mu) < 3.0 * std::sqrt(var / draws));
}

} // namespace

TEST_SUITE("stochastics") {

TEST_CASE("streams are reproducible and restorable") {
	plmm::RngStream a(42, 3), b(42, 3), c(42, 4);
	for (int k = 0; k < 10; ++k) CHECK(a.normal() == b.normal());
	CHECK(a.uniform() != c.uniform());
	const std::string state = a.save_state();
	const double next = a.normal();
	const double next_u = a.uniform();
	plmm::RngStream r(0, 0);
	r.restore_state(state);
	CHECK(r.normal() == next);
	CHECK(r.uniform() == next_u);
	CHECK_THROWS_AS(r.restore_state("junk"), plmm::ParameterError);
	CHECK(plmm::mix_seed(1, 2) != plmm::mix_seed(2, 1));
	plmm::RngStream s1 = a.substream(1), s2 = a.substream(2);
	CHECK(s1.uniform() != s2.uniform());
}

TEST_CASE("uniform draws stay in the open unit interval") {
	plmm::RngStream rng(1);
	for (int k = 0; k < 100000; ++k) {
		const double u = rng.uniform();
		REQUIRE(u > 0.0);
		REQUIRE(u < 1.0);
	}
}

TEST_CASE("gamma and beta moments") {
	plmm::RngStream rng(7);
	const int n = 100000;
	for (double shape : {0.3, 1.0, 4.5}) {
		const double rate = 2.0;
		const auto m = moments(n, [&] { return plmm::sample_gamma(shape, rate, rng); });
		check_mean(m, shape / rate, shape / (rate * rate), n);
		CHECK(m.var == doctest::Approx(shape / (rate * rate)).epsilon(0.03));
	}
	const auto lg = moments(n, [&] { return std::exp(plmm::sample_log_gamma(0.01, rng)); });
	check_mean(lg, 0.01, 0.01, n);
	const auto b = moments(n, [&] { return plmm::sample_beta(2.0, 5.0, rng); });
	check_mean(b, 2.0 / 7.0, 10.0 / (49.0 * 8.0), n);
	CHECK_THROWS_AS(plmm::sample_gamma(-1.0, 1.0, rng), plmm::ParameterError);
	CHECK_THROWS_AS(plmm::sample_beta(1.0, 0.0, rng), plmm::ParameterError);
}

TEST_CASE("dirichlet and categorical draws") {
	plmm::RngStream rng(8);
	const int n = 100000;
	Eigen::VectorXd alpha(3);
	alpha << 1.0, 2.0, 3.0;
	Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
	for (int k = 0; k < n; ++k) {
		const Eigen::VectorXd p = plmm::sample_dirichlet(alpha, rng);
		REQUIRE(std::abs(p.sum() - 1.0) < 1e-12);
		mean += p / n;
	}
	for (int c = 0; c < 3; ++c) {
		const double mu = alpha(c) / 6.0;
		CHECK(std::abs(mean(c) - mu) < 3.0 * std::sqrt(mu * (1 - mu) / 7.0 / n));
	}
	Eigen::VectorXd w(4);
	w << 0.1, 0.0, 0.6, 0.3;
	Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
	for (int k = 0; k < n; ++k) freq(plmm::sample_categorical(w, rng)) += 1.0 / n;
	CHECK(freq(1) == 0.0);
	CHECK(std::abs(freq(2) - 0.6) < 3.0 * std::sqrt(0.24 / n));
	Eigen::VectorXd lw(3);
	lw << -1000.0, -std::numeric_limits<double>::infinity(), -1000.0 + std::log(3.0);
	Eigen::VectorXd lf = Eigen::VectorXd::Zero(3);
	for (int k = 0; k < n; ++k) lf(plmm::sample_log_categorical(lw, rng)) += 1.0 / n;
	CHECK(lf(1) == 0.0);
	CHECK(std::abs(lf(2) - 0.75) < 3.0 * std::sqrt(0.1875 / n));
	const Eigen::VectorXd dead = Eigen::VectorXd::Constant(2, -std::numeric_limits<double>::infinity());
	CHECK_THROWS_AS(plmm::sample_log_categorical(dead, rng), plmm::NumericalError);
}

TEST_CASE("multivariate normal and inverse Wishart moments") {
	plmm::RngStream rng(9);
	Eigen::MatrixXd s(2, 2);
	s << 2.0, 0.6, 0.6, 1.0;
	const plmm::PsdMatrix cov(s);
	Eigen::VectorXd mu(2);
	mu << 1.0, -1.0;
	const int n = 100000;
	Eigen::VectorXd m1 = Eigen::VectorXd::Zero(2);
	Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(2, 2);
	Eigen::MatrixXd iw = Eigen::MatrixXd::Zero(2, 2);
	for (int k = 0; k < n; ++k) {
		const Eigen::VectorXd x = plmm::sample_mvn(mu, cov, rng);
		m1 += x / n;
		m2 += (x - mu) * (x - mu).transpose() / n;
		iw += plmm::sample_inverse_wishart(cov, 8.0, rng).matrix() / n;
	}
	CHECK(std::abs(m1(0) - 1.0) < 3.0 * std::sqrt(2.0 / n));
	CHECK(m2(0, 1) == doctest::Approx(0.6).epsilon(0.03));
	const Eigen::MatrixXd expected = s / (8.0 - 2.0 - 1.0);
	CHECK(iw(0, 0) == doctest::Approx(expected(0, 0)).epsilon(0.02));
	CHECK(iw(0, 1) == doctest::Approx(expected(0, 1)).epsilon(0.04));
	CHECK(iw(1, 1) == doctest::Approx(expected(1, 1)).epsilon(0.02));
}

TEST_CASE("positive definite matrices") {
	Eigen::MatrixXd s(2, 2);
	s << 4.0, 2.0, 2.0, 3.0;
	const plmm::PsdMatrix p(s);
	CHECK((p.lower() * p.lower().transpose() - s).norm() < 1e-12);
	CHECK(p.log_det() == doctest::Approx(std::log(8.0)));
	CHECK((p.inverse() * s - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-12);
	Eigen::VectorXd x(2);
	x << 1.0, 2.0;
	CHECK(p.mahalanobis(x, Eigen::VectorXd::Zero(2)) == doctest::Approx(x.dot(s.inverse() * x)));
	CHECK(plmm::log_mvn_density(x, Eigen::VectorXd::Zero(2), p) ==
	      doctest::Approx(-std::log(2.0 * M_PI) - 0.5 * std::log(8.0) - 0.5 * x.dot(s.inverse() * x)));
	CHECK(plmm::log_normal_density(1.0, 0.0, 4.0) == doctest::Approx(-0.5 * std::log(8.0 * M_PI) - 0.125));

	Eigen::MatrixXd bad(2, 2);
	bad << 1.0, 2.0, 2.0, 1.0;
	CHECK_THROWS_AS(plmm::PsdMatrix(bad, "test site"), plmm::FactorizationError);
	try {
		plmm::PsdMatrix(bad, "test site");
	} catch (const plmm::FactorizationError &e) {
		CHECK(e.site() == "test site");
	}
	Eigen::MatrixXd asym(2, 2);
	asym << 1.0, 0.5, 0.0, 1.0;
	CHECK_THROWS(plmm::PsdMatrix{asym});
	// a singular matrix is rescued by the single jitter
	Eigen::MatrixXd singular(2, 2);
	singular << 1.0, 1.0, 1.0, 1.0;
	CHECK_NOTHROW(plmm::PsdMatrix{singular});
}

}
