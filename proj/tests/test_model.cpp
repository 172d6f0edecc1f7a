#include <doctest.h>

#include "plmm/errors.hpp"
#include "plmm/metrics.hpp"
#include "plmm/model.hpp"
#include "support.hpp"

TEST_SUITE("model") {

TEST_CASE("dataset validation names the broken row") {
	auto d = test::small_dataset(6, 2, 1, 1);
	CHECK_NOTHROW(d.validate());
	d.individual_of[4] = 5;
	try {
		d.validate();
		FAIL("expected a data error");
	} catch (const plmm::DataError &e) {
		CHECK(e.row() == 5);
	}
	auto e = test::small_dataset(6, 3, 1, 1);
	e.individual_of = {0, 0, 1, 1, 0, 1};
	CHECK_THROWS_AS(e.validate(), plmm::DataError);
	auto f = test::small_dataset(6, 2, 1, 1);
	f.y(2) = std::nan("");
	CHECK_THROWS_AS(f.validate(), plmm::DataError);
}

TEST_CASE("spec validation") {
	plmm::ModelSpec s;
	s.fe_cols = {0};
	s.re_cols = {0};
	s.int_cols = {1};
	CHECK_NOTHROW(s.validate(2));
	s.truncation = 1;
	CHECK_THROWS_AS(s.validate(2), plmm::SpecError);
	s.truncation = 5;
	s.int_cols = {2};
	CHECK_THROWS_AS(s.validate(2), plmm::SpecError);
}

TEST_CASE("design views select and standardize columns") {
	auto d = test::small_dataset(20, 5, 2, 3);
	plmm::ModelSpec s;
	s.fe_cols = {0, 1};
	s.re_cols = {0};
	s.int_cols = {1};
	s.truncation = 4;
	const auto v = plmm::build_design_views(d, s);
	CHECK(v.dims.n == 20);
	CHECK(v.dims.m == 5);
	CHECK(v.dims.p_fe == 2);
	CHECK(v.dims.q_cont == 2);
	CHECK(v.dims.clusters == 4);
	CHECK(v.fe.col(1) == d.x.col(1));
	CHECK(v.interaction.col(0) == d.x.col(1));
	for (int k = 0; k < 2; ++k) {
		CHECK(std::abs(v.u_cont.col(k).mean()) < 1e-12);
		const double var = (v.u_cont.col(k).array() - v.u_cont.col(k).mean()).square().sum() / 19.0;
		CHECK(var == doctest::Approx(1.0));
	}
	CHECK(v.individual_rows[2] == std::vector<int>{2, 7, 12, 17});

	s.standardize_x = true;
	const auto w = plmm::build_design_views(d, s);
	CHECK(w.fe.col(0) == d.x.col(0));  // constant columns are left alone
	Eigen::VectorXd coef(2);
	coef << 0.7, -1.3;
	const Eigen::VectorXd orig = w.x_scaling.to_original(coef, s.fe_cols);
	CHECK((w.fe * coef - d.x * orig).norm() < 1e-10);
	CHECK((w.x_scaling.to_standardized(orig, s.fe_cols) - coef).norm() < 1e-12);
}

TEST_CASE("stick weights") {
	Eigen::VectorXd v(4);
	v << 0.5, 0.5, 0.2, 1.0;
	const Eigen::VectorXd pi = plmm::stick_weights(v);
	CHECK(pi(0) == 0.5);
	CHECK(pi(1) == 0.25);
	CHECK(pi(2) == doctest::Approx(0.05));
	CHECK(pi.sum() == doctest::Approx(1.0));
}

TEST_CASE("state layout flattens and restores every parameter") {
	auto d = test::small_dataset(24, 6, 2, 4);
	d.u_cat.resize(24, 1);
	for (int i = 0; i < 24; ++i) d.u_cat(i, 0) = i % 3;
	d.cat_levels = {3};
	d.u_cat_names = {"c"};
	plmm::ModelSpec s;
	s.fe_cols = {0, 1};
	s.re_cols = {0, 1};
	s.int_cols = {0};
	s.truncation = 5;
	const auto v = plmm::build_design_views(d, s);
	plmm::RngStream rng(2);
	const auto h = plmm::Hyperparameters::defaults(2, 1, 2);
	const plmm::ParameterState st = plmm::init_state(v, h, rng);
	const plmm::StateLayout layout{v.dims};
	const auto flat = layout.flatten(st);
	CHECK(static_cast<Eigen::Index>(flat.size()) == layout.size());
	CHECK(layout.theta_u_size() == 2 + 4 + 3);
	const auto back = layout.unflatten(flat, st.z);
	CHECK(layout.flatten(back) == flat);
	CHECK(back.zeta == st.zeta);
	CHECK(back.w_re.matrix() == st.w_re.matrix());
	CHECK(back.theta_u[2].phi[0] == st.theta_u[2].phi[0]);
	CHECK(back.weights.sum() == doctest::Approx(1.0));
}

TEST_CASE("initial state") {
	auto d = test::small_dataset(30, 10, 2, 5);
	plmm::ModelSpec s;
	s.fe_cols = {0, 1};
	s.re_cols = {0};
	s.int_cols = {0, 1};
	s.truncation = 6;
	const auto v = plmm::build_design_views(d, s);
	plmm::RngStream rng(3);
	const auto st = plmm::init_state(v, plmm::Hyperparameters::defaults(1, 2, 2), rng);
	CHECK(st.z.size() == 30);
	CHECK(*std::max_element(st.z.begin(), st.z.end()) < 6);
	CHECK(st.beta.isZero());
	CHECK(st.gamma.size() == 6);
	CHECK(st.eta.size() == 10);
	CHECK(st.sticks(5) == 1.0);
	const double var = (d.y.array() - d.y.mean()).square().sum() / 29.0;
	CHECK(st.sigma2 == doctest::Approx(var));
}

TEST_CASE("k-means recovers separated groups") {
	Eigen::MatrixXd pts(30, 2);
	plmm::RngStream rng(6);
	std::vector<int> truth;
	for (int i = 0; i < 30; ++i) {
		const int g = i % 3;
		pts(i, 0) = 10.0 * g + 0.1 * rng.normal();
		pts(i, 1) = 0.1 * rng.normal();
		truth.push_back(g);
	}
	plmm::RngStream krng(1);
	const auto z = plmm::kmeans(pts, 3, krng);
	CHECK(plmm::adjusted_rand_index(z, truth) == 1.0);
}

}
