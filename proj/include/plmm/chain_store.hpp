#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "plmm/model.hpp"

namespace plmm {

/// Dense row-major table; one row per kept draw.
template <typename T>
struct Table {
	std::size_t rows = 0;
	std::size_t cols = 0;
	std::vector<T> data;

	Table() = default;
	explicit Table(std::size_t columns) : cols(columns) {}

	void append(const T *row) {
		data.insert(data.end(), row, row + cols);
		++rows;
	}
	const T *row(std::size_t r) const { return data.data() + r * cols; }
	T at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

	bool operator==(const Table &) const = default;
};

using BlockTable = Table<double>;
using IntTable = Table<std::int64_t>;

/// Text key-value metadata written as `key=value` lines in key order.
struct ChainMeta {
	std::map<std::string, std::string> entries;

	void set(const std::string &key, const std::string &value) { entries[key] = value; }
	void set(const std::string &key, double value);
	void set(const std::string &key, std::int64_t value);
	bool has(const std::string &key) const { return entries.count(key) > 0; }
	const std::string &get(const std::string &key) const;
	double get_double(const std::string &key) const;
	std::int64_t get_int(const std::string &key) const;
	std::vector<double> get_doubles(const std::string &key) const;
	std::vector<int> get_ints(const std::string &key) const;

	bool operator==(const ChainMeta &) const = default;
};

std::string join_numbers(const std::vector<double> &values);
std::string join_numbers(const std::vector<int> &values);
/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

/// Kept draws and traces of one chain, plus what is needed to resume it.
struct ChainStore {
	ChainMeta meta;
	ModelDims dims;

	std::vector<double> trace_zeta;
	std::vector<std::int64_t> trace_nclus;
	std::vector<double> trace_loglik;  // empty unless requested

	BlockTable beta;
	BlockTable sigma2;
	BlockTable gamma;    // C * p_int, cluster-major
	BlockTable eta;      // m * p_re, individual-major
	BlockTable wre;      // p_re * p_re
	BlockTable wint;     // p_int * p_int
	BlockTable theta_u;  // C * (q + q^2 + sum levels), cluster-major
	BlockTable sticks;   // C
	IntTable alloc;      // n, 1-based labels

	// state after the last completed iteration
	std::vector<double> resume_state;
	std::vector<int> resume_alloc;
	std::string rng_state;

	explicit ChainStore(const ModelDims &d = {});

	std::size_t draws() const { return trace_zeta.size(); }
	void append(const ParameterState &s, double loglik, bool record_loglik);
	/// Kept draw h rebuilt as a full state (allocations 0-based).
	ParameterState draw(std::size_t h) const;
	std::vector<int> allocation(std::size_t h) const;

	void save(const std::filesystem::path &dir) const;
	static ChainStore load(const std::filesystem::path &dir, bool with_alloc = true);
	/// Human-readable copies of the scalar traces and small blocks.
	void export_csv(const std::filesystem::path &dir) const;
};

/// Sequential access to kept allocation vectors, 0-based labels.
class AllocationSource {
public:
	virtual ~AllocationSource() = default;
	virtual std::size_t draws() const = 0;
	virtual std::size_t observations() const = 0;
	virtual void read(std::size_t h, std::vector<int> &z) = 0;
};

class MemoryAllocationSource : public AllocationSource {
public:
	explicit MemoryAllocationSource(const ChainStore &chain) : chain_(chain) {}
	std::size_t draws() const override { return chain_.alloc.rows; }
	std::size_t observations() const override { return chain_.alloc.cols; }
	void read(std::size_t h, std::vector<int> &z) override;

private:
	const ChainStore &chain_;
};

/// Reads rows of an `alloc` file on demand without loading the full history.
class FileAllocationSource : public AllocationSource {
public:
	explicit FileAllocationSource(const std::filesystem::path &file);
	std::size_t draws() const override { return rows_; }
	std::size_t observations() const override { return cols_; }
	void read(std::size_t h, std::vector<int> &z) override;

private:
	std::ifstream in_;
	std::size_t rows_ = 0;
	std::size_t cols_ = 0;
	std::streamoff data_offset_ = 0;
	std::vector<std::int64_t> buffer_;
};

// Binary block files: "PLMMCHN\0", u32 version, u32 dtype (1 f64, 2 i64), u64 rows, u64 cols,
// then little-endian row-major values.
inline constexpr std::uint32_t kChainFormatVersion = 1;

void write_table(const std::filesystem::path &file, const BlockTable &t);
void write_table(const std::filesystem::path &file, const IntTable &t);
BlockTable read_double_table(const std::filesystem::path &file);
IntTable read_int_table(const std::filesystem::path &file);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string &text);

} // namespace plmm
