#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plmm/cli/config.hpp"
#include "plmm/model.hpp"

namespace plmm::cli {

struct IngestedData {
	LongitudinalDataset data;
	std::vector<std::string> id_labels;                    // individual j has label id_labels[j]
	std::vector<std::vector<std::string>> category_labels;  // per categorical covariate, code -> label
	double spline_lower = 0.0;
	double spline_upper = 0.0;
};

/// Spline domain used when the layout leaves it open: [floor(min time), ceil(max time)].
std::pair<double, double> spline_domain(const DataLayout &layout, const Eigen::VectorXd &time);

/// Reads a comma-separated file with a header row. Rows are numbered as file lines, the header
/// being row 1. Ids are mapped to individuals and categorical values to codes in order of first
/// appearance.
IngestedData ingest_csv(const std::filesystem::path &file, const DataLayout &layout);
IngestedData ingest_csv_text(const std::string &text, const DataLayout &layout);

/// Writes id, time, y, the non-generated x columns and the clustering covariates. Doubles are
/// printed in shortest round-trip form, so ingesting the file reproduces the values exactly.
void write_dataset_csv(const std::filesystem::path &file, const LongitudinalDataset &data,
                       const std::vector<std::string> &id_labels = {});

/// Split one CSV record; double quotes enclose fields containing commas.
std::vector<std::string> split_csv_line(const std::string &line);

} // namespace plmm::cli
