#include "plmm/chain_store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "plmm/errors.hpp"

namespace plmm {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'P', 'L', 'M', 'M', 'C', 'H', 'N', '\0'};
constexpr std::uint32_t kDtypeF64 = 1;
constexpr std::uint32_t kDtypeI64 = 2;
constexpr std::size_t kHeaderBytes = 8 + 4 + 4 + 8 + 8;

template <typename T>
T to_little(T v) {
	if constexpr (std::endian::native == std::endian::big) {
		unsigned char bytes[sizeof(T)];
		std::memcpy(bytes, &v, sizeof(T));
		std::reverse(bytes, bytes + sizeof(T));
		std::memcpy(&v, bytes, sizeof(T));
	}
	return v;
}

template <typename T>
void put(std::ostream &out, T v) {
	v = to_little(v);
	out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::istream &in) {
	T v{};
	in.read(reinterpret_cast<char *>(&v), sizeof(T));
	return to_little(v);
}

template <typename T>
void write_any(const fs::path &file, const Table<T> &t, std::uint32_t dtype) {
	std::ofstream out(file, std::ios::binary | std::ios::trunc);
	if (!out) {
		throw Error("cannot write " + file.string());
	}
	out.write(kMagic, sizeof(kMagic));
	put<std::uint32_t>(out, kChainFormatVersion);
	put<std::uint32_t>(out, dtype);
	put<std::uint64_t>(out, t.rows);
	put<std::uint64_t>(out, t.cols);
	if constexpr (std::endian::native == std::endian::little) {
		out.write(reinterpret_cast<const char *>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(T)));
	} else {
		for (T v : t.data) put<T>(out, v);
	}
	if (!out) {
		throw Error("failed writing " + file.string());
	}
}

struct Header {
	std::uint32_t dtype;
	std::uint64_t rows;
	std::uint64_t cols;
};

Header read_header(std::istream &in, const fs::path &file) {
	char magic[8];
	in.read(magic, sizeof(magic));
	if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
		throw DataError(file.string() + ": not a chain block file");
	}
	const auto version = get<std::uint32_t>(in);
	if (version != kChainFormatVersion) {
		throw DataError(file.string() + ": unsupported format version " + std::to_string(version));
	}
	Header h{};
	h.dtype = get<std::uint32_t>(in);
	h.rows = get<std::uint64_t>(in);
	h.cols = get<std::uint64_t>(in);
	if (!in) {
		throw DataError(file.string() + ": truncated header");
	}
	return h;
}

template <typename T>
Table<T> read_any(const fs::path &file, std::uint32_t dtype) {
	std::ifstream in(file, std::ios::binary);
	if (!in) {
		throw DataError("cannot open " + file.string());
	}
	const Header h = read_header(in, file);
	if (h.dtype != dtype) {
		throw DataError(file.string() + ": unexpected value type");
	}
	Table<T> t(h.cols);
	t.rows = h.rows;
	t.data.resize(h.rows * h.cols);
	in.read(reinterpret_cast<char *>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(T)));
	if (!in) {
		throw DataError(file.string() + ": truncated data");
	}
	for (T &v : t.data) v = to_little(v);
	return t;
}

BlockTable column_table(const std::vector<double> &v) {
	BlockTable t(1);
	t.rows = v.size();
	t.data = v;
	return t;
}

IntTable column_table(const std::vector<std::int64_t> &v) {
	IntTable t(1);
	t.rows = v.size();
	t.data = v;
	return t;
}

std::vector<std::string> split(const std::string &s, char sep) {
	std::vector<std::string> out;
	if (s.empty()) return out;
	std::stringstream ss(s);
	std::string item;
	while (std::getline(ss, item, sep)) out.push_back(item);
	return out;
}

double parse_double(const std::string &s, const std::string &context) {
	double v = 0.0;
	const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
		throw DataError("malformed number '" + s + "' in " + context);
	}
	return v;
}

std::int64_t parse_int(const std::string &s, const std::string &context) {
	std::int64_t v = 0;
	const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
		throw DataError("malformed integer '" + s + "' in " + context);
	}
	return v;
}

} // namespace

std::string format_double(double v) {
	char buf[64];
	const auto res = std::to_chars(buf, buf + sizeof(buf), v);
	return std::string(buf, res.ptr);
}

std::string join_numbers(const std::vector<double> &values) {
	std::string out;
	for (std::size_t k = 0; k < values.size(); ++k) {
		if (k) out += ',';
		out += format_double(values[k]);
	}
	return out;
}

std::string join_numbers(const std::vector<int> &values) {
	std::string out;
	for (std::size_t k = 0; k < values.size(); ++k) {
		if (k) out += ',';
		out += std::to_string(values[k]);
	}
	return out;
}

void ChainMeta::set(const std::string &key, double value) { entries[key] = format_double(value); }
void ChainMeta::set(const std::string &key, std::int64_t value) { entries[key] = std::to_string(value); }

const std::string &ChainMeta::get(const std::string &key) const {
	const auto it = entries.find(key);
	if (it == entries.end()) {
		throw DataError("chain metadata lacks '" + key + "'");
	}
	return it->second;
}

double ChainMeta::get_double(const std::string &key) const { return parse_double(get(key), "meta " + key); }
std::int64_t ChainMeta::get_int(const std::string &key) const { return parse_int(get(key), "meta " + key); }

std::vector<double> ChainMeta::get_doubles(const std::string &key) const {
	std::vector<double> out;
	for (const auto &s : split(get(key), ',')) out.push_back(parse_double(s, "meta " + key));
	return out;
}

std::vector<int> ChainMeta::get_ints(const std::string &key) const {
	std::vector<int> out;
	for (const auto &s : split(get(key), ',')) out.push_back(static_cast<int>(parse_int(s, "meta " + key)));
	return out;
}

ChainStore::ChainStore(const ModelDims &d) : dims(d) {
	const StateLayout layout{d};
	beta = BlockTable(static_cast<std::size_t>(d.p_fe));
	sigma2 = BlockTable(1);
	gamma = BlockTable(static_cast<std::size_t>(d.clusters * d.p_int));
	eta = BlockTable(static_cast<std::size_t>(d.m * d.p_re));
	wre = BlockTable(static_cast<std::size_t>(d.p_re * d.p_re));
	wint = BlockTable(static_cast<std::size_t>(d.p_int * d.p_int));
	theta_u = BlockTable(static_cast<std::size_t>(d.clusters * layout.theta_u_size()));
	sticks = BlockTable(static_cast<std::size_t>(d.clusters));
	alloc = IntTable(static_cast<std::size_t>(d.n));
}

void ChainStore::append(const ParameterState &s, double loglik, bool record_loglik) {
	const StateLayout layout{dims};
	const std::vector<double> flat = layout.flatten(s);
	const double *p = flat.data();
	auto take = [&p](BlockTable &t) {
		t.append(p);
		p += t.cols;
	};
	take(beta);
	take(sigma2);
	take(gamma);
	take(wint);
	take(eta);
	take(wre);
	take(theta_u);
	take(sticks);
	trace_zeta.push_back(*p);
	trace_nclus.push_back(s.non_empty_clusters());
	if (record_loglik) {
		trace_loglik.push_back(loglik);
	}
	std::vector<std::int64_t> z(s.z.size());
	std::transform(s.z.begin(), s.z.end(), z.begin(), [](int c) { return static_cast<std::int64_t>(c) + 1; });
	alloc.append(z.data());
}

std::vector<int> ChainStore::allocation(std::size_t h) const {
	std::vector<int> z(alloc.cols);
	const std::int64_t *row = alloc.row(h);
	for (std::size_t i = 0; i < alloc.cols; ++i) z[i] = static_cast<int>(row[i] - 1);
	return z;
}

ParameterState ChainStore::draw(std::size_t h) const {
	if (h >= draws()) {
		throw Error("draw index " + std::to_string(h) + " out of range");
	}
	std::vector<double> flat;
	auto add = [&flat, h](const BlockTable &t) { flat.insert(flat.end(), t.row(h), t.row(h) + t.cols); };
	add(beta);
	add(sigma2);
	add(gamma);
	add(wint);
	add(eta);
	add(wre);
	add(theta_u);
	add(sticks);
	flat.push_back(trace_zeta[h]);
	return StateLayout{dims}.unflatten(flat, alloc.rows > h ? allocation(h) : std::vector<int>{});
}

void ChainStore::save(const fs::path &dir) const {
	fs::create_directories(dir);
	ChainMeta m = meta;
	m.set("n", static_cast<std::int64_t>(dims.n));
	m.set("m", static_cast<std::int64_t>(dims.m));
	m.set("p_fe", static_cast<std::int64_t>(dims.p_fe));
	m.set("p_re", static_cast<std::int64_t>(dims.p_re));
	m.set("p_int", static_cast<std::int64_t>(dims.p_int));
	m.set("q_cont", static_cast<std::int64_t>(dims.q_cont));
	m.set("cat_levels", join_numbers(dims.cat_levels));
	m.set("clusters", static_cast<std::int64_t>(dims.clusters));
	m.set("kept_draws", static_cast<std::int64_t>(draws()));
	m.set("format_version", static_cast<std::int64_t>(kChainFormatVersion));
	{
		std::ofstream out(dir / "meta", std::ios::trunc);
		for (const auto &[k, v] : m.entries) out << k << '=' << v << '\n';
		if (!out) throw Error("cannot write " + (dir / "meta").string());
	}
	write_table(dir / "trace_zeta", column_table(trace_zeta));
	write_table(dir / "trace_nclus", column_table(trace_nclus));
	if (!trace_loglik.empty()) {
		write_table(dir / "trace_loglik", column_table(trace_loglik));
	}
	write_table(dir / "beta", beta);
	write_table(dir / "sigma2", sigma2);
	write_table(dir / "gamma", gamma);
	write_table(dir / "eta", eta);
	write_table(dir / "wre", wre);
	write_table(dir / "wint", wint);
	write_table(dir / "theta_u", theta_u);
	write_table(dir / "sticks", sticks);
	write_table(dir / "alloc", alloc);
	if (!resume_state.empty()) {
		BlockTable rs(resume_state.size());
		rs.append(resume_state.data());
		write_table(dir / "resume_state", rs);
		IntTable ra(resume_alloc.size());
		std::vector<std::int64_t> z(resume_alloc.begin(), resume_alloc.end());
		ra.append(z.data());
		write_table(dir / "resume_alloc", ra);
		std::ofstream out(dir / "rng_state", std::ios::trunc);
		out << rng_state;
	}
}

ChainStore ChainStore::load(const fs::path &dir, bool with_alloc) {
	std::ifstream in(dir / "meta");
	if (!in) {
		throw DataError("no chain found at " + dir.string());
	}
	ChainMeta m;
	std::string line;
	while (std::getline(in, line)) {
		if (line.empty()) continue;
		const auto eq = line.find('=');
		if (eq == std::string::npos) {
			throw DataError("malformed chain metadata line '" + line + "'");
		}
		m.entries[line.substr(0, eq)] = line.substr(eq + 1);
	}
	ModelDims d;
	d.n = static_cast<int>(m.get_int("n"));
	d.m = static_cast<int>(m.get_int("m"));
	d.p_fe = static_cast<int>(m.get_int("p_fe"));
	d.p_re = static_cast<int>(m.get_int("p_re"));
	d.p_int = static_cast<int>(m.get_int("p_int"));
	d.q_cont = static_cast<int>(m.get_int("q_cont"));
	d.cat_levels = m.get_ints("cat_levels");
	d.clusters = static_cast<int>(m.get_int("clusters"));
	ChainStore c(d);
	for (const char *k : {"n", "m", "p_fe", "p_re", "p_int", "q_cont", "cat_levels", "clusters", "kept_draws",
	                      "format_version"}) {
		m.entries.erase(k);
	}
	c.meta = m;
	c.trace_zeta = read_double_table(dir / "trace_zeta").data;
	c.trace_nclus = read_int_table(dir / "trace_nclus").data;
	if (fs::exists(dir / "trace_loglik")) {
		c.trace_loglik = read_double_table(dir / "trace_loglik").data;
	}
	auto load_block = [&dir](const char *name, BlockTable &t) {
		BlockTable r = read_double_table(dir / name);
		if (r.cols != t.cols) {
			throw DataError(std::string("chain block ") + name + " has " + std::to_string(r.cols) +
			                " columns, expected " + std::to_string(t.cols));
		}
		t = std::move(r);
	};
	load_block("beta", c.beta);
	load_block("sigma2", c.sigma2);
	load_block("gamma", c.gamma);
	load_block("eta", c.eta);
	load_block("wre", c.wre);
	load_block("wint", c.wint);
	load_block("theta_u", c.theta_u);
	load_block("sticks", c.sticks);
	if (with_alloc) {
		c.alloc = read_int_table(dir / "alloc");
		if (c.alloc.cols != static_cast<std::size_t>(d.n)) {
			throw DataError("chain allocation block does not match n");
		}
	}
	for (const BlockTable *t : {&c.beta, &c.sigma2, &c.gamma, &c.eta, &c.wre, &c.wint, &c.theta_u, &c.sticks}) {
		if (t->rows != c.trace_zeta.size()) {
			throw DataError("chain blocks disagree on the number of kept draws");
		}
	}
	if (fs::exists(dir / "resume_state")) {
		c.resume_state = read_double_table(dir / "resume_state").data;
		const auto ra = read_int_table(dir / "resume_alloc").data;
		c.resume_alloc.assign(ra.begin(), ra.end());
		std::ifstream rin(dir / "rng_state");
		std::stringstream ss;
		ss << rin.rdbuf();
		c.rng_state = ss.str();
	}
	return c;
}

void ChainStore::export_csv(const fs::path &dir) const {
	fs::create_directories(dir);
	{
		std::ofstream out(dir / "traces.csv", std::ios::trunc);
		out << "draw,zeta,nclus,sigma2" << (trace_loglik.empty() ? "" : ",loglik") << '\n';
		for (std::size_t h = 0; h < draws(); ++h) {
			out << h + 1 << ',' << format_double(trace_zeta[h]) << ',' << trace_nclus[h] << ','
			    << format_double(sigma2.at(h, 0));
			if (!trace_loglik.empty()) out << ',' << format_double(trace_loglik[h]);
			out << '\n';
		}
	}
	std::ofstream out(dir / "beta.csv", std::ios::trunc);
	out << "draw";
	for (std::size_t k = 0; k < beta.cols; ++k) out << ",beta_" << k + 1;
	out << '\n';
	for (std::size_t h = 0; h < beta.rows; ++h) {
		out << h + 1;
		for (std::size_t k = 0; k < beta.cols; ++k) out << ',' << format_double(beta.at(h, k));
		out << '\n';
	}
}

void MemoryAllocationSource::read(std::size_t h, std::vector<int> &z) {
	z.resize(chain_.alloc.cols);
	const std::int64_t *row = chain_.alloc.row(h);
	for (std::size_t i = 0; i < chain_.alloc.cols; ++i) z[i] = static_cast<int>(row[i] - 1);
}

FileAllocationSource::FileAllocationSource(const fs::path &file) : in_(file, std::ios::binary) {
	if (!in_) {
		throw DataError("cannot open " + file.string());
	}
	const Header h = read_header(in_, file);
	if (h.dtype != kDtypeI64) {
		throw DataError(file.string() + ": allocation file must hold integers");
	}
	rows_ = h.rows;
	cols_ = h.cols;
	data_offset_ = static_cast<std::streamoff>(kHeaderBytes);
	buffer_.resize(cols_);
}

void FileAllocationSource::read(std::size_t h, std::vector<int> &z) {
	if (h >= rows_) {
		throw Error("allocation row out of range");
	}
	in_.seekg(data_offset_ + static_cast<std::streamoff>(h * cols_ * sizeof(std::int64_t)));
	in_.read(reinterpret_cast<char *>(buffer_.data()), static_cast<std::streamsize>(cols_ * sizeof(std::int64_t)));
	if (!in_) {
		throw DataError("truncated allocation file");
	}
	z.resize(cols_);
	for (std::size_t i = 0; i < cols_; ++i) z[i] = static_cast<int>(to_little(buffer_[i]) - 1);
}

void write_table(const fs::path &file, const BlockTable &t) { write_any(file, t, kDtypeF64); }
void write_table(const fs::path &file, const IntTable &t) { write_any(file, t, kDtypeI64); }
BlockTable read_double_table(const fs::path &file) { return read_any<double>(file, kDtypeF64); }
IntTable read_int_table(const fs::path &file) { return read_any<std::int64_t>(file, kDtypeI64); }

std::uint64_t fnv1a(const std::string &text) {
	std::uint64_t h = 14695981039346656037ULL;
	for (unsigned char c : text) {
		h ^= c;
		h *= 1099511628211ULL;
	}
	return h;
}

} // namespace plmm
