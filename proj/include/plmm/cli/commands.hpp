#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "plmm/cli/config.hpp"
#include "plmm/postprocess.hpp"
#include "plmm/validation.hpp"

namespace plmm::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericalError = 3 };

/// Exit code for an exception escaping a subcommand.
int exit_code_for(const std::exception &e);

/// Chain directories written by `fit`: `chain` for a single chain, `chain_1..K` otherwise.
std::vector<std::filesystem::path> fit_command(const Config &cfg, const std::filesystem::path &data,
                                               const std::filesystem::path &out, std::ostream *progress = nullptr);

struct PostprocessResult {
	RepresentativeClustering representative;
	std::vector<int> excluded;  // representative labels below the size threshold
	IntervalSummary fixed_effects;
	ClusterSummary cluster_effects;
	std::vector<Contrast> contrasts;
};

PostprocessResult postprocess_command(const Config &cfg, const std::filesystem::path &chain_dir,
                                      const std::filesystem::path &out);

/// Writes data.csv, truth.csv, truth.json and a config.ini ready for `fit`.
void simulate_command(const Config &cfg, const std::filesystem::path &out);

void study_command(const Config &cfg, const std::filesystem::path &out, std::ostream *progress = nullptr);

/// Runs the sampler-validation harness and its negative control; true when the harness passes
/// and the control is detected.
bool validate_command(const GirConfig &gir, const std::filesystem::path &out, std::ostream &log);

/// Command-line entry point. Exit codes: 0 success, 1 usage or configuration error, 2 data error,
/// 3 numerical failure. Failures also write `error.json` into the output directory when one is given.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace plmm::cli
