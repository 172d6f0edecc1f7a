#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace plmm {

/// Seedable pseudo-random stream.
///
/// A stream is identified by (seed, stream id); two streams built from the same pair and
/// consumed by the same call sequence produce bitwise-identical variates. The engine state
/// can be saved and restored so an interrupted chain continues exactly where it stopped.
class RngStream {
public:
	explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0);

	std::uint64_t seed() const noexcept { return seed_; }
	std::uint64_t stream_id() const noexcept { return stream_id_; }

	/// Independent child stream; children with distinct `index` never overlap in practice.
	RngStream substream(std::uint64_t index) const;

	double uniform();       // (0, 1)
	double normal();        // N(0, 1)
	Eigen::VectorXd normal_vector(Eigen::Index dim);

	std::mt19937_64 &engine() noexcept { return engine_; }

	std::string save_state() const;
	void restore_state(const std::string &state);

private:
	std::uint64_t seed_;
	std::uint64_t stream_id_;
	std::mt19937_64 engine_;
	std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mixes two 64-bit words into one; used to derive per-chain and per-replicate seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// Symmetric positive-definite matrix with its Cholesky factor.
///
/// Construction symmetrizes the input (after checking asymmetry is below 1e-10 relative)
/// and factorizes it. A single jitter of 1e-10 * trace / dim is tried before giving up;
/// failures raise FactorizationError carrying `site`.
class PsdMatrix {
public:
	PsdMatrix() = default;
	explicit PsdMatrix(const Eigen::MatrixXd &m, std::string_view site = "psd-matrix");

	static PsdMatrix identity(Eigen::Index dim, double scale = 1.0);

	Eigen::Index dim() const noexcept { return matrix_.rows(); }
	const Eigen::MatrixXd &matrix() const noexcept { return matrix_; }
	/// Lower-triangular L with matrix() = L L^T.
	const Eigen::MatrixXd &lower() const noexcept { return lower_; }
	double log_det() const;
	Eigen::MatrixXd inverse() const;
	Eigen::VectorXd solve(const Eigen::VectorXd &b) const;
	/// (x - mean)^T M^{-1} (x - mean)
	double mahalanobis(const Eigen::VectorXd &x, const Eigen::VectorXd &mean) const;

private:
	Eigen::MatrixXd matrix_;
	Eigen::MatrixXd lower_;
};

/// N(mean, cov) via the Cholesky factor of cov.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd &mean, const PsdMatrix &cov, RngStream &rng);

/// IW(scale, dof) as the inverse of a Bartlett-decomposed Wishart(scale^{-1}, dof) draw.
PsdMatrix sample_inverse_wishart(const PsdMatrix &scale, double dof, RngStream &rng,
                                 std::string_view site = "inverse-wishart");

/// Gamma with shape/rate parameterization (mean shape / rate).
double sample_gamma(double shape, double rate, RngStream &rng);

/// log of a Gamma(shape, 1) variate, accurate for very small shapes.
double sample_log_gamma(double shape, RngStream &rng);

double sample_beta(double a, double b, RngStream &rng);

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd &alpha, RngStream &rng);

/// Index drawn with probability weights[c] / sum(weights).
int sample_categorical(const Eigen::VectorXd &weights, RngStream &rng);

/// Index drawn from unnormalized log-weights (max-subtracted before exponentiation).
/// Throws NumericalError when every entry is -inf or any is NaN.
int sample_log_categorical(const Eigen::VectorXd &log_weights, RngStream &rng);

double log_normal_density(double x, double mean, double variance);
double log_mvn_density(const Eigen::VectorXd &x, const Eigen::VectorXd &mean, const PsdMatrix &cov);

} // namespace plmm
