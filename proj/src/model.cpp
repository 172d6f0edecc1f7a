#include "plmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "plmm/conditionals.hpp"
#include "plmm/errors.hpp"

namespace plmm {

namespace {

struct ColumnMoments {
	double mean;
	double sd;
};

ColumnMoments column_moments(const Eigen::VectorXd &col) {
	const double n = static_cast<double>(col.size());
	const double mean = col.mean();
	if (col.size() < 2) {
		return {mean, 0.0};
	}
	const double ss = (col.array() - mean).square().sum();
	return {mean, std::sqrt(ss / (n - 1.0))};
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd &x, const std::vector<int> &cols) {
	Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
	for (std::size_t k = 0; k < cols.size(); ++k) {
		out.col(static_cast<Eigen::Index>(k)) = x.col(cols[k]);
	}
	return out;
}

Standardization standardize_columns(Eigen::MatrixXd &x, bool apply) {
	Standardization st = Standardization::identity(x.cols());
	for (Eigen::Index k = 0; k < x.cols(); ++k) {
		const Eigen::VectorXd col = x.col(k);
		const auto mom = column_moments(col);
		const bool constant = x.rows() > 0 && (col.array() == col(0)).all();
		if (constant) {
			st.constant_value(k) = col(0);
			continue;
		}
		if (apply && mom.sd > 0.0) {
			st.center(k) = mom.mean;
			st.scale(k) = mom.sd;
			x.col(k) = (col.array() - mom.mean) / mom.sd;
		}
	}
	return st;
}

} // namespace

void LongitudinalDataset::validate() const {
	const Eigen::Index n_obs = y.size();
	if (n_obs == 0) {
		throw DataError("dataset has no observations");
	}
	if (static_cast<Eigen::Index>(individual_of.size()) != n_obs || time.size() != n_obs ||
	    x.rows() != n_obs || u_cont.rows() != n_obs || u_cat.rows() != n_obs) {
		throw DataError("dataset blocks disagree on the number of observations");
	}
	if (static_cast<Eigen::Index>(x_names.size()) != x.cols() ||
	    static_cast<Eigen::Index>(u_cont_names.size()) != u_cont.cols() ||
	    static_cast<Eigen::Index>(u_cat_names.size()) != u_cat.cols() ||
	    static_cast<Eigen::Index>(cat_levels.size()) != u_cat.cols()) {
		throw DataError("dataset column names do not match column counts");
	}
	std::vector<int> owned(static_cast<std::size_t>(std::max(n_individuals, 0)), 0);
	for (Eigen::Index i = 0; i < n_obs; ++i) {
		const int j = individual_of[static_cast<std::size_t>(i)];
		if (j < 0 || j >= n_individuals) {
			throw DataError("individual index out of range", static_cast<long>(i + 1));
		}
		++owned[static_cast<std::size_t>(j)];
	}
	for (int j = 0; j < n_individuals; ++j) {
		if (owned[static_cast<std::size_t>(j)] == 0) {
			throw DataError("individual " + std::to_string(j + 1) + " owns no observation");
		}
	}
	if (!y.allFinite() || !time.allFinite() || !x.allFinite() || !u_cont.allFinite()) {
		throw DataError("dataset contains missing or non-finite values");
	}
	for (Eigen::Index k = 0; k < u_cat.cols(); ++k) {
		if (cat_levels[static_cast<std::size_t>(k)] < 1) {
			throw DataError("categorical covariate " + u_cat_names[static_cast<std::size_t>(k)] + " has no levels");
		}
		for (Eigen::Index i = 0; i < n_obs; ++i) {
			const int code = u_cat(i, k);
			if (code < 0 || code >= cat_levels[static_cast<std::size_t>(k)]) {
				throw DataError("category code out of range in " + u_cat_names[static_cast<std::size_t>(k)],
				                static_cast<long>(i + 1));
			}
		}
	}
}

void ModelSpec::validate(Eigen::Index p_x) const {
	auto check = [p_x](const std::vector<int> &cols, const char *role, bool required) {
		if (required && cols.empty()) {
			throw SpecError(std::string(role) + " columns must not be empty");
		}
		for (int c : cols) {
			if (c < 0 || c >= p_x) {
				throw SpecError(std::string(role) + " column index " + std::to_string(c) + " out of range");
			}
		}
	};
	check(fe_cols, "fixed-effect", true);
	check(re_cols, "random-effect", true);
	check(int_cols, "interaction", true);
	if (truncation < 2) {
		throw SpecError("truncation level C must be at least 2");
	}
}

Hyperparameters Hyperparameters::defaults(int dim_re, int dim_int, int q_cont) {
	Hyperparameters h;
	h.psi_re = PsdMatrix::identity(dim_re);
	h.nu_re = dim_re + 2.0;
	h.psi_int = PsdMatrix::identity(dim_int);
	h.nu_int = dim_int + 2.0;
	if (q_cont > 0) {
		h.phi0 = PsdMatrix::identity(q_cont, 0.1);
	}
	h.nu0 = q_cont + 2.0;
	return h;
}

void Hyperparameters::validate(int dim_re, int dim_int, int q_cont) const {
	auto positive = [](double v, const char *name) {
		if (!(v > 0.0) || !std::isfinite(v)) {
			throw SpecError(std::string("hyperparameter ") + name + " must be positive");
		}
	};
	positive(lambda, "lambda");
	positive(a_sigma, "a_sigma");
	positive(b_sigma, "b_sigma");
	positive(lambda0, "lambda0");
	positive(alpha_dir, "alpha_dir");
	positive(a_zeta, "a_zeta");
	positive(b_zeta, "b_zeta");
	if (psi_re.dim() != dim_re || psi_int.dim() != dim_int) {
		throw SpecError("inverse-Wishart scale dimensions do not match the model");
	}
	if (!(nu_re > dim_re - 1.0)) {
		throw SpecError("nu_re must exceed dim(W_re) - 1");
	}
	if (!(nu_int > dim_int - 1.0)) {
		throw SpecError("nu_int must exceed dim(W_int) - 1");
	}
	if (q_cont > 0) {
		if (phi0.dim() != q_cont) {
			throw SpecError("phi0 dimension does not match the continuous clustering covariates");
		}
		if (!(nu0 > q_cont - 1.0)) {
			throw SpecError("nu0 must exceed q_cont - 1");
		}
	}
}

Standardization Standardization::identity(Eigen::Index cols) {
	Standardization st;
	st.center = Eigen::VectorXd::Zero(cols);
	st.scale = Eigen::VectorXd::Ones(cols);
	st.constant_value = Eigen::VectorXd::Constant(cols, std::numeric_limits<double>::quiet_NaN());
	return st;
}

Eigen::VectorXd Standardization::to_original(const Eigen::VectorXd &coef, const std::vector<int> &cols) const {
	Eigen::VectorXd out(coef.size());
	double shift = 0.0;
	int anchor = -1;
	for (std::size_t k = 0; k < cols.size(); ++k) {
		const auto kk = static_cast<Eigen::Index>(k);
		const int c = cols[k];
		out(kk) = coef(kk) / scale(c);
		shift += coef(kk) * center(c) / scale(c);
		if (anchor < 0 && !std::isnan(constant_value(c)) && constant_value(c) != 0.0) {
			anchor = static_cast<int>(k);
		}
	}
	if (anchor >= 0) {
		out(anchor) -= shift / constant_value(cols[static_cast<std::size_t>(anchor)]);
	}
	return out;
}

Eigen::VectorXd Standardization::to_standardized(const Eigen::VectorXd &coef, const std::vector<int> &cols) const {
	Eigen::VectorXd out(coef.size());
	double shift = 0.0;
	int anchor = -1;
	for (std::size_t k = 0; k < cols.size(); ++k) {
		const auto kk = static_cast<Eigen::Index>(k);
		const int c = cols[k];
		out(kk) = coef(kk) * scale(c);
		shift += coef(kk) * center(c);
		if (anchor < 0 && !std::isnan(constant_value(c)) && constant_value(c) != 0.0) {
			anchor = static_cast<int>(k);
		}
	}
	if (anchor >= 0) {
		out(anchor) += shift / constant_value(cols[static_cast<std::size_t>(anchor)]);
	}
	return out;
}

DesignViews build_design_views(const LongitudinalDataset &data, const ModelSpec &spec) {
	data.validate();
	spec.validate(data.x.cols());
	if (data.u_cont.cols() == 0 && data.u_cat.cols() == 0) {
		throw SpecError("at least one clustering covariate is required");
	}
	DesignViews v;
	v.spec = spec;
	v.y = data.y;
	Eigen::MatrixXd x = data.x;
	v.x_scaling = standardize_columns(x, spec.standardize_x);
	v.fe = select_columns(x, spec.fe_cols);
	v.re = select_columns(x, spec.re_cols);
	v.interaction = select_columns(x, spec.int_cols);
	v.u_cont = data.u_cont;
	v.u_scaling = standardize_columns(v.u_cont, spec.standardize_u);
	v.u_cat = data.u_cat;
	v.individual_of = data.individual_of;
	v.individual_rows.assign(static_cast<std::size_t>(data.m()), {});
	for (std::size_t i = 0; i < data.individual_of.size(); ++i) {
		v.individual_rows[static_cast<std::size_t>(data.individual_of[i])].push_back(static_cast<int>(i));
	}
	v.dims.n = static_cast<int>(data.n());
	v.dims.m = data.m();
	v.dims.p_fe = static_cast<int>(spec.fe_cols.size());
	v.dims.p_re = static_cast<int>(spec.re_cols.size());
	v.dims.p_int = static_cast<int>(spec.int_cols.size());
	v.dims.q_cont = static_cast<int>(data.u_cont.cols());
	v.dims.cat_levels = data.cat_levels;
	v.dims.clusters = spec.truncation;
	return v;
}

std::vector<std::vector<int>> cluster_rows(const std::vector<int> &z, int clusters) {
	std::vector<std::vector<int>> rows(static_cast<std::size_t>(clusters));
	for (std::size_t i = 0; i < z.size(); ++i) {
		rows[static_cast<std::size_t>(z[i])].push_back(static_cast<int>(i));
	}
	return rows;
}

std::vector<int> cluster_counts(const std::vector<int> &z, int clusters) {
	std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
	for (int c : z) {
		++counts[static_cast<std::size_t>(c)];
	}
	return counts;
}

int ParameterState::non_empty_clusters() const {
	const int clusters = static_cast<int>(gamma.size());
	const auto counts = cluster_counts(z, clusters);
	return static_cast<int>(std::count_if(counts.begin(), counts.end(), [](int k) { return k > 0; }));
}

Eigen::VectorXd stick_weights(const Eigen::VectorXd &sticks) {
	Eigen::VectorXd pi(sticks.size());
	double remaining = 1.0;
	for (Eigen::Index c = 0; c < sticks.size(); ++c) {
		pi(c) = sticks(c) * remaining;
		remaining *= 1.0 - sticks(c);
	}
	return pi;
}

Eigen::Index StateLayout::theta_u_size() const {
	Eigen::Index k = dims.q_cont + dims.q_cont * dims.q_cont;
	for (int levels : dims.cat_levels) {
		k += levels;
	}
	return k;
}

Eigen::Index StateLayout::size() const {
	const Eigen::Index c = dims.clusters;
	return dims.p_fe + 1 + c * dims.p_int + dims.p_int * dims.p_int + static_cast<Eigen::Index>(dims.m) * dims.p_re +
	       dims.p_re * dims.p_re + c * theta_u_size() + c + 1;
}

std::vector<double> StateLayout::flatten(const ParameterState &s) const {
	std::vector<double> out;
	out.reserve(static_cast<std::size_t>(size()));
	auto push_vec = [&out](const Eigen::VectorXd &v) { out.insert(out.end(), v.data(), v.data() + v.size()); };
	auto push_mat = [&out](const Eigen::MatrixXd &m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
	push_vec(s.beta);
	out.push_back(s.sigma2);
	for (const auto &g : s.gamma) push_vec(g);
	push_mat(s.w_int.matrix());
	for (const auto &e : s.eta) push_vec(e);
	push_mat(s.w_re.matrix());
	for (const auto &t : s.theta_u) {
		push_vec(t.mu);
		if (dims.q_cont > 0) push_mat(t.sigma.matrix());
		for (const auto &p : t.phi) push_vec(p);
	}
	push_vec(s.sticks);
	out.push_back(s.zeta);
	return out;
}

ParameterState StateLayout::unflatten(const std::vector<double> &values, const std::vector<int> &z) const {
	if (static_cast<Eigen::Index>(values.size()) != size()) {
		throw DataError("state vector has " + std::to_string(values.size()) + " entries, expected " +
		                std::to_string(size()));
	}
	std::size_t pos = 0;
	auto take_vec = [&](Eigen::Index len) {
		Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data() + pos, len);
		pos += static_cast<std::size_t>(len);
		return v;
	};
	auto take_mat = [&](Eigen::Index d) {
		Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(values.data() + pos, d, d);
		pos += static_cast<std::size_t>(d * d);
		return m;
	};
	ParameterState s;
	s.beta = take_vec(dims.p_fe);
	s.sigma2 = values[pos++];
	for (int c = 0; c < dims.clusters; ++c) s.gamma.push_back(take_vec(dims.p_int));
	s.w_int = PsdMatrix(take_mat(dims.p_int), "restore W_int");
	for (int j = 0; j < dims.m; ++j) s.eta.push_back(take_vec(dims.p_re));
	s.w_re = PsdMatrix(take_mat(dims.p_re), "restore W_re");
	for (int c = 0; c < dims.clusters; ++c) {
		AssignmentParams t;
		t.mu = take_vec(dims.q_cont);
		if (dims.q_cont > 0) t.sigma = PsdMatrix(take_mat(dims.q_cont), "restore Sigma_c");
		for (int levels : dims.cat_levels) t.phi.push_back(take_vec(levels));
		s.theta_u.push_back(std::move(t));
	}
	s.sticks = take_vec(dims.clusters);
	s.zeta = values[pos++];
	s.weights = stick_weights(s.sticks);
	s.z = z;
	return s;
}

std::vector<int> kmeans(const Eigen::MatrixXd &points, int k, RngStream &rng, int max_iter) {
	const Eigen::Index n = points.rows();
	if (n == 0 || k < 1) {
		throw SpecError("k-means needs at least one point and one cluster");
	}
	k = static_cast<int>(std::min<Eigen::Index>(k, n));
	std::vector<Eigen::VectorXd> centers;
	centers.push_back(points.row(static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n))).transpose());
	Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
	while (static_cast<int>(centers.size()) < k) {
		for (Eigen::Index i = 0; i < n; ++i) {
			nearest(i) = std::min(nearest(i), (points.row(i).transpose() - centers.back()).squaredNorm());
		}
		if (!(nearest.sum() > 0.0)) {
			break;  // fewer distinct points than k
		}
		centers.push_back(points.row(sample_categorical(nearest, rng)).transpose());
	}
	const int kk = static_cast<int>(centers.size());
	std::vector<int> labels(static_cast<std::size_t>(n), -1);
	for (int iter = 0; iter < max_iter; ++iter) {
		bool changed = false;
		for (Eigen::Index i = 0; i < n; ++i) {
			int best = 0;
			double best_d = std::numeric_limits<double>::infinity();
			for (int c = 0; c < kk; ++c) {
				const double d = (points.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
				if (d < best_d) {
					best_d = d;
					best = c;
				}
			}
			if (labels[static_cast<std::size_t>(i)] != best) {
				labels[static_cast<std::size_t>(i)] = best;
				changed = true;
			}
		}
		if (!changed) {
			break;
		}
		std::vector<Eigen::VectorXd> sums(static_cast<std::size_t>(kk), Eigen::VectorXd::Zero(points.cols()));
		std::vector<int> counts(static_cast<std::size_t>(kk), 0);
		for (Eigen::Index i = 0; i < n; ++i) {
			const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
			sums[c] += points.row(i).transpose();
			++counts[c];
		}
		for (int c = 0; c < kk; ++c) {
			if (counts[static_cast<std::size_t>(c)] > 0) {
				centers[static_cast<std::size_t>(c)] = sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
			}
		}
	}
	return labels;
}

ParameterState init_state(const DesignViews &views, const Hyperparameters &hyper, RngStream &rng) {
	const ModelDims &d = views.dims;
	if (d.n == 0) {
		throw SpecError("cannot initialize a chain on an empty dataset");
	}
	ParameterState s;
	// clustering features: continuous block plus one-hot categorical codes
	Eigen::Index width = d.q_cont;
	for (int levels : d.cat_levels) width += levels;
	Eigen::MatrixXd features = Eigen::MatrixXd::Zero(d.n, width);
	features.leftCols(d.q_cont) = views.u_cont;
	Eigen::Index offset = d.q_cont;
	for (std::size_t j = 0; j < d.cat_levels.size(); ++j) {
		for (int i = 0; i < d.n; ++i) {
			features(i, offset + views.u_cat(i, static_cast<Eigen::Index>(j))) = 1.0;
		}
		offset += d.cat_levels[j];
	}
	s.z = kmeans(features, std::min(d.clusters, 10), rng);

	s.beta = Eigen::VectorXd::Zero(d.p_fe);
	if (d.n > 1) {
		s.sigma2 = (views.y.array() - views.y.mean()).square().sum() / (d.n - 1.0);
	}
	if (!(s.sigma2 > 0.0)) {
		s.sigma2 = 1.0;
	}
	s.gamma.assign(static_cast<std::size_t>(d.clusters), Eigen::VectorXd::Zero(d.p_int));
	s.eta.assign(static_cast<std::size_t>(d.m), Eigen::VectorXd::Zero(d.p_re));
	auto prior_mean = [](const PsdMatrix &psi, double nu) {
		const double denom = nu - static_cast<double>(psi.dim()) - 1.0;
		return denom > 0.0 ? PsdMatrix(psi.matrix() / denom, "init prior mean") : psi;
	};
	s.w_re = prior_mean(hyper.psi_re, hyper.nu_re);
	s.w_int = prior_mean(hyper.psi_int, hyper.nu_int);

	s.sticks.resize(d.clusters);
	for (int c = 0; c < d.clusters; ++c) {
		s.sticks(c) = 1.0 / static_cast<double>(d.clusters - c);
	}
	s.weights = stick_weights(s.sticks);
	s.zeta = hyper.a_zeta * hyper.b_zeta;

	const auto stats = compute_cluster_stats(views, s.z);
	s.theta_u = update_assignment_params(stats, hyper, rng);
	return s;
}

} // namespace plmm
