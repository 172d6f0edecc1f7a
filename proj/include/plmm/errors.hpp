#pragma once

#include <stdexcept>
#include <string>

namespace plmm {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Distribution parameter outside its support.
class ParameterError : public Error {
public:
	using Error::Error;
};

/// Cholesky failure; `site` names the Gibbs block or update that produced the matrix.
class FactorizationError : public Error {
public:
	FactorizationError(std::string site, const std::string &what)
		: Error(site + ": " + what), site_(std::move(site)) {}
	const std::string &site() const noexcept { return site_; }

private:
	std::string site_;
};

/// Inconsistent model specification (bad column index, C < 2, empty data).
class SpecError : public Error {
public:
	using Error::Error;
};

/// Malformed input data; `row` is 1-based and 0 when not applicable.
class DataError : public Error {
public:
	DataError(const std::string &what, long row = 0)
		: Error(row > 0 ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
	long row() const noexcept { return row_; }

private:
	long row_;
};

/// Configuration file or command-line problem; `line` is 1-based and 0 when not applicable.
class ConfigError : public Error {
public:
	ConfigError(const std::string &what, int line = 0)
		: Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
	int line() const noexcept { return line_; }

private:
	int line_;
};

/// Non-finite or degenerate numerical state reached during sampling.
class NumericalError : public Error {
public:
	using Error::Error;
};

} // namespace plmm
