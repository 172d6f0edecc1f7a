#include "plmm/metrics.hpp"

#include <algorithm>
#include <map>

#include "plmm/errors.hpp"

namespace plmm {

namespace {

std::vector<int> relabel(const std::vector<int> &labels, int &count) {
	std::map<int, int> ids;
	std::vector<int> out;
	out.reserve(labels.size());
	for (int l : labels) {
		const auto it = ids.emplace(l, static_cast<int>(ids.size())).first;
		out.push_back(it->second);
	}
	count = static_cast<int>(ids.size());
	return out;
}

Eigen::MatrixXd contingency(const std::vector<int> &a, const std::vector<int> &b) {
	if (a.size() != b.size()) {
		throw ParameterError("label vectors differ in length (" + std::to_string(a.size()) + " vs " +
		                     std::to_string(b.size()) + ")");
	}
	int ka = 0;
	int kb = 0;
	const auto ra = relabel(a, ka);
	const auto rb = relabel(b, kb);
	Eigen::MatrixXd t = Eigen::MatrixXd::Zero(ka, kb);
	for (std::size_t i = 0; i < ra.size(); ++i) t(ra[i], rb[i]) += 1.0;
	return t;
}

double pairs(double x) { return 0.5 * x * (x - 1.0); }

} // namespace

double adjusted_rand_index(const std::vector<int> &a, const std::vector<int> &b) {
	const Eigen::MatrixXd t = contingency(a, b);
	const double n = static_cast<double>(a.size());
	double index = 0.0;
	for (Eigen::Index i = 0; i < t.size(); ++i) index += pairs(t.data()[i]);
	double sa = 0.0;
	for (Eigen::Index i = 0; i < t.rows(); ++i) sa += pairs(t.row(i).sum());
	double sb = 0.0;
	for (Eigen::Index j = 0; j < t.cols(); ++j) sb += pairs(t.col(j).sum());
	const double total = pairs(n);
	if (total == 0.0) {
		return 1.0;
	}
	const double expected = sa * sb / total;
	const double max_index = 0.5 * (sa + sb);
	if (max_index == expected) {
		return 1.0;  // both partitions trivial and identical in structure
	}
	return (index - expected) / (max_index - expected);
}

double purity(const std::vector<int> &pred, const std::vector<int> &truth) {
	const Eigen::MatrixXd t = contingency(pred, truth);
	if (pred.empty()) {
		throw ParameterError("purity of an empty labelling");
	}
	return t.rowwise().maxCoeff().sum() / static_cast<double>(pred.size());
}

double relative_rmse(const Eigen::MatrixXd &estimate, const Eigen::MatrixXd &truth) {
	if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
		throw ParameterError("estimate and truth shapes differ");
	}
	const double norm = truth.norm();
	if (!(norm > 0.0)) {
		throw ParameterError("relative error against a zero truth");
	}
	return (estimate - truth).norm() / norm;
}

} // namespace plmm
