#include "plmm/stochastics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "plmm/errors.hpp"

namespace plmm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
	x += 0x9E3779B97F4A7C15ULL;
	x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
	x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
	return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
	std::seed_seq seq{
		static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
		static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
	return std::mt19937_64(seq);
}

void require_positive(double v, const char *what) {
	if (!(v > 0.0) || !std::isfinite(v)) {
		throw ParameterError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
	}
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
	: seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t index) const {
	return RngStream(seed_, mix_seed(stream_id_, index + 1));
}

double RngStream::uniform() {
	// 53 random bits, shifted off zero
	return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
	return normal_(engine_);
}

Eigen::VectorXd RngStream::normal_vector(Eigen::Index dim) {
	Eigen::VectorXd z(dim);
	for (Eigen::Index i = 0; i < dim; ++i) {
		z(i) = normal();
	}
	return z;
}

std::string RngStream::save_state() const {
	std::ostringstream os;
	os << seed_ << ' ' << stream_id_ << ' ' << engine_ << ' ' << normal_;
	return os.str();
}

void RngStream::restore_state(const std::string &state) {
	std::istringstream is(state);
	is >> seed_ >> stream_id_ >> engine_ >> normal_;
	if (!is) {
		throw ParameterError("malformed RNG state");
	}
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
	return splitmix64(seed ^ splitmix64(salt));
}

PsdMatrix::PsdMatrix(const Eigen::MatrixXd &m, std::string_view site) {
	if (m.rows() != m.cols() || m.rows() == 0) {
		throw FactorizationError(std::string(site), "matrix must be square and non-empty");
	}
	if (!m.allFinite()) {
		throw FactorizationError(std::string(site), "matrix has non-finite entries");
	}
	const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
	if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
		throw FactorizationError(std::string(site), "matrix is not symmetric");
	}
	matrix_ = 0.5 * (m + m.transpose());
	Eigen::LLT<Eigen::MatrixXd> llt(matrix_);
	if (llt.info() != Eigen::Success) {
		const double jitter = 1e-10 * matrix_.trace() / static_cast<double>(matrix_.rows());
		if (jitter > 0.0) {
			matrix_.diagonal().array() += jitter;
			llt.compute(matrix_);
		}
		if (jitter <= 0.0 || llt.info() != Eigen::Success) {
			throw FactorizationError(std::string(site), "matrix is not positive definite");
		}
	}
	lower_ = llt.matrixL();
	if ((lower_.diagonal().array() <= 0.0).any()) {
		throw FactorizationError(std::string(site), "matrix is not positive definite");
	}
}

PsdMatrix PsdMatrix::identity(Eigen::Index dim, double scale) {
	return PsdMatrix(Eigen::MatrixXd::Identity(dim, dim) * scale, "identity");
}

double PsdMatrix::log_det() const {
	return 2.0 * lower_.diagonal().array().log().sum();
}

Eigen::MatrixXd PsdMatrix::inverse() const {
	const Eigen::MatrixXd linv = lower_.triangularView<Eigen::Lower>().solve(
		Eigen::MatrixXd::Identity(dim(), dim()));
	return linv.transpose() * linv;
}

Eigen::VectorXd PsdMatrix::solve(const Eigen::VectorXd &b) const {
	const Eigen::VectorXd w = lower_.triangularView<Eigen::Lower>().solve(b);
	return lower_.transpose().triangularView<Eigen::Upper>().solve(w);
}

double PsdMatrix::mahalanobis(const Eigen::VectorXd &x, const Eigen::VectorXd &mean) const {
	const Eigen::VectorXd w = lower_.triangularView<Eigen::Lower>().solve(x - mean);
	return w.squaredNorm();
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd &mean, const PsdMatrix &cov, RngStream &rng) {
	if (mean.size() != cov.dim()) {
		throw ParameterError("sample_mvn: mean has dimension " + std::to_string(mean.size()) +
		                     " but covariance has dimension " + std::to_string(cov.dim()));
	}
	return mean + cov.lower() * rng.normal_vector(mean.size());
}

PsdMatrix sample_inverse_wishart(const PsdMatrix &scale, double dof, RngStream &rng, std::string_view site) {
	const Eigen::Index p = scale.dim();
	if (!(dof > static_cast<double>(p) - 1.0)) {
		throw ParameterError("inverse-Wishart degrees of freedom " + std::to_string(dof) +
		                     " must exceed dim - 1 = " + std::to_string(p - 1));
	}
	// Bartlett factor A of a Wishart(I, dof) draw
	Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
	for (Eigen::Index i = 0; i < p; ++i) {
		const double chi2 = 2.0 * sample_gamma(0.5 * (dof - static_cast<double>(i)), 1.0, rng);
		a(i, i) = std::sqrt(chi2);
		for (Eigen::Index j = 0; j < i; ++j) {
			a(i, j) = rng.normal();
		}
	}
	// With scale = L L^T, the inverse-Wishart draw is T T^T where T = L A^{-T}.
	const Eigen::MatrixXd a_inv_t = a.transpose().triangularView<Eigen::Upper>().solve(
		Eigen::MatrixXd::Identity(p, p));
	const Eigen::MatrixXd t = scale.lower() * a_inv_t;
	return PsdMatrix(t * t.transpose(), site);
}

double sample_gamma(double shape, double rate, RngStream &rng) {
	require_positive(shape, "gamma shape");
	require_positive(rate, "gamma rate");
	std::gamma_distribution<double> dist(shape, 1.0 / rate);
	return dist(rng.engine());
}

double sample_log_gamma(double shape, RngStream &rng) {
	require_positive(shape, "gamma shape");
	if (shape >= 1.0) {
		std::gamma_distribution<double> dist(shape, 1.0);
		return std::log(dist(rng.engine()));
	}
	// G(a) = G(a + 1) * U^{1/a}
	std::gamma_distribution<double> dist(shape + 1.0, 1.0);
	return std::log(dist(rng.engine())) + std::log(rng.uniform()) / shape;
}

double sample_beta(double a, double b, RngStream &rng) {
	require_positive(a, "beta a");
	require_positive(b, "beta b");
	const double la = sample_log_gamma(a, rng);
	const double lb = sample_log_gamma(b, rng);
	const double hi = std::max(la, lb);
	const double log_total = hi + std::log(std::exp(la - hi) + std::exp(lb - hi));
	return std::exp(la - log_total);
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd &alpha, RngStream &rng) {
	if (alpha.size() == 0) {
		throw ParameterError("dirichlet concentration must be non-empty");
	}
	Eigen::VectorXd logs(alpha.size());
	for (Eigen::Index k = 0; k < alpha.size(); ++k) {
		logs(k) = sample_log_gamma(alpha(k), rng);
	}
	const double hi = logs.maxCoeff();
	Eigen::VectorXd out = (logs.array() - hi).exp();
	out /= out.sum();
	return out;
}

int sample_categorical(const Eigen::VectorXd &weights, RngStream &rng) {
	double total = 0.0;
	for (Eigen::Index c = 0; c < weights.size(); ++c) {
		if (!(weights(c) >= 0.0) || !std::isfinite(weights(c))) {
			throw ParameterError("categorical weights must be finite and non-negative");
		}
		total += weights(c);
	}
	if (!(total > 0.0)) {
		throw ParameterError("categorical weights sum to zero");
	}
	const double target = rng.uniform() * total;
	double acc = 0.0;
	int last_positive = 0;
	for (Eigen::Index c = 0; c < weights.size(); ++c) {
		if (weights(c) > 0.0) {
			last_positive = static_cast<int>(c);
			acc += weights(c);
			if (target < acc) {
				return static_cast<int>(c);
			}
		}
	}
	return last_positive;
}

int sample_log_categorical(const Eigen::VectorXd &log_weights, RngStream &rng) {
	double hi = -std::numeric_limits<double>::infinity();
	for (Eigen::Index c = 0; c < log_weights.size(); ++c) {
		if (std::isnan(log_weights(c))) {
			throw NumericalError("log-weight is NaN at component " + std::to_string(c));
		}
		hi = std::max(hi, log_weights(c));
	}
	if (!std::isfinite(hi)) {
		throw NumericalError("all log-weights are -inf");
	}
	const Eigen::VectorXd w = (log_weights.array() - hi).exp();
	return sample_categorical(w, rng);
}

double log_normal_density(double x, double mean, double variance) {
	const double r = x - mean;
	return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + r * r / variance);
}

double log_mvn_density(const Eigen::VectorXd &x, const Eigen::VectorXd &mean, const PsdMatrix &cov) {
	const double d = static_cast<double>(x.size());
	return -0.5 * (d * std::log(2.0 * std::numbers::pi) + cov.log_det() + cov.mahalanobis(x, mean));
}

} // namespace plmm
