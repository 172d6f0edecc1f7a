#pragma once

#include <vector>

#include <Eigen/Dense>

namespace plmm {

/// Hubert-Arabie adjusted Rand index. Labels are arbitrary integers.
double adjusted_rand_index(const std::vector<int> &a, const std::vector<int> &b);

/// Fraction of observations carrying the majority true class of their predicted cluster.
double purity(const std::vector<int> &pred, const std::vector<int> &truth);

/// |estimate - truth| / |truth| in the Euclidean (vectors) or Frobenius (matrices) norm.
double relative_rmse(const Eigen::MatrixXd &estimate, const Eigen::MatrixXd &truth);

} // namespace plmm
