#include "plmm/cli/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "plmm/chain_store.hpp"
#include "plmm/errors.hpp"
#include "plmm/simulation.hpp"

namespace plmm::cli {

namespace {

bool generated_column(const std::string &name) {
	return name == "intercept" || name.rfind("spline_", 0) == 0;
}

std::string quoted(const std::string &s) {
	if (s.find_first_of(",\"\n") == std::string::npos) return s;
	std::string out = "\"";
	for (char c : s) {
		if (c == '"') out += '"';
		out += c;
	}
	return out + "\"";
}

} // namespace

std::vector<std::string> split_csv_line(const std::string &line) {
	std::vector<std::string> fields;
	std::string cur;
	bool in_quotes = false;
	for (std::size_t k = 0; k < line.size(); ++k) {
		const char c = line[k];
		if (in_quotes) {
			if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
				cur += '"';
				++k;
			} else if (c == '"') {
				in_quotes = false;
			} else {
				cur += c;
			}
		} else if (c == '"') {
			in_quotes = true;
		} else if (c == ',') {
			fields.push_back(cur);
			cur.clear();
		} else if (c != '\r') {
			cur += c;
		}
	}
	fields.push_back(cur);
	for (auto &f : fields) {
		const auto b = f.find_first_not_of(" \t");
		const auto e = f.find_last_not_of(" \t");
		f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
	}
	return fields;
}

std::pair<double, double> spline_domain(const DataLayout &layout, const Eigen::VectorXd &time) {
	double lower = layout.spline_lower ? *layout.spline_lower : std::floor(time.minCoeff());
	double upper = layout.spline_upper ? *layout.spline_upper : std::ceil(time.maxCoeff());
	if (!(upper > lower)) upper = lower + 1.0;
	return {lower, upper};
}

IngestedData ingest_csv_text(const std::string &text, const DataLayout &layout) {
	std::istringstream in(text);
	std::string line;
	long row = 0;
	std::vector<std::string> header;
	while (std::getline(in, line)) {
		++row;
		if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
		if (row == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
		header = split_csv_line(line);
		break;
	}
	if (header.empty()) {
		throw DataError("file has no header row");
	}
	std::map<std::string, std::size_t> position;
	for (std::size_t k = 0; k < header.size(); ++k) {
		if (!position.emplace(header[k], k).second) {
			throw DataError("column '" + header[k] + "' appears twice in the header", row);
		}
	}
	auto column = [&](const std::string &name) {
		const auto it = position.find(name);
		if (it == position.end()) {
			throw DataError("missing column '" + name + "'", row);
		}
		return it->second;
	};
	const std::size_t c_id = column(layout.id_column);
	const std::size_t c_time = column(layout.time_column);
	const std::size_t c_y = column(layout.outcome);
	std::vector<std::size_t> c_x, c_u, c_cat;
	for (const auto &n : layout.x) c_x.push_back(column(n));
	for (const auto &n : layout.u_cont) c_u.push_back(column(n));
	for (const auto &n : layout.u_cat) c_cat.push_back(column(n));

	IngestedData out;
	LongitudinalDataset &d = out.data;
	std::map<std::string, int> id_code;
	std::vector<std::map<std::string, int>> cat_code(c_cat.size());
	out.category_labels.resize(c_cat.size());
	std::set<std::pair<int, double>> seen;
	std::vector<double> time, y, xs, us;
	std::vector<int> cats;
	std::vector<long> rows;

	while (std::getline(in, line)) {
		++row;
		if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
		const auto f = split_csv_line(line);
		if (f.size() != header.size()) {
			throw DataError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()),
			                row);
		}
		auto number = [&](std::size_t c) {
			const std::string &s = f[c];
			if (s.empty()) {
				throw DataError("missing value in column '" + header[c] + "'", row);
			}
			double v = 0.0;
			const char *first = s.data() + (s[0] == '+' ? 1 : 0);
			const auto res = std::from_chars(first, s.data() + s.size(), v);
			if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
				throw DataError("non-numeric value '" + s + "' in column '" + header[c] + "'", row);
			}
			return v;
		};
		const std::string &id = f[c_id];
		if (id.empty()) {
			throw DataError("missing value in column '" + header[c_id] + "'", row);
		}
		const auto [it, fresh] = id_code.emplace(id, static_cast<int>(out.id_labels.size()));
		if (fresh) out.id_labels.push_back(id);
		const double t = number(c_time);
		if (!seen.emplace(it->second, t).second) {
			throw DataError("duplicate (id, time) pair (" + id + ", " + f[c_time] + ")", row);
		}
		d.individual_of.push_back(it->second);
		time.push_back(t);
		y.push_back(number(c_y));
		for (auto c : c_x) xs.push_back(number(c));
		for (auto c : c_u) us.push_back(number(c));
		for (std::size_t k = 0; k < c_cat.size(); ++k) {
			const std::string &v = f[c_cat[k]];
			if (v.empty()) {
				throw DataError("missing value in column '" + header[c_cat[k]] + "'", row);
			}
			const auto [ct, added] = cat_code[k].emplace(v, static_cast<int>(out.category_labels[k].size()));
			if (added) out.category_labels[k].push_back(v);
			cats.push_back(ct->second);
		}
		rows.push_back(row);
	}
	const auto n = static_cast<Eigen::Index>(y.size());
	if (n == 0) {
		throw DataError("file has no data rows");
	}
	d.n_individuals = static_cast<int>(out.id_labels.size());
	d.time = Eigen::Map<Eigen::VectorXd>(time.data(), n);
	d.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);

	const auto px = static_cast<Eigen::Index>(c_x.size());
	const bool spline = layout.uses_spline();
	const Eigen::Index kb = spline ? layout.spline_basis : 0;
	d.x.resize(n, 1 + px + kb);
	d.x.col(0).setOnes();
	for (Eigen::Index i = 0; i < n; ++i)
		for (Eigen::Index k = 0; k < px; ++k) d.x(i, 1 + k) = xs[static_cast<std::size_t>(i * px + k)];
	d.x_names = layout.x_names();
	if (spline) {
		const auto [lo, hi] = spline_domain(layout, d.time);
		out.spline_lower = lo;
		out.spline_upper = hi;
		for (Eigen::Index i = 0; i < n; ++i) {
			if (d.time(i) < lo || d.time(i) > hi) {
				throw DataError("time " + format_double(d.time(i)) + " lies outside the spline domain [" +
				                    format_double(lo) + ", " + format_double(hi) + "]",
				                rows[static_cast<std::size_t>(i)]);
			}
		}
		d.x.rightCols(kb) = bspline_basis(d.time, layout.spline_degree, layout.spline_basis, lo, hi);
	}

	const auto q = static_cast<Eigen::Index>(c_u.size());
	d.u_cont.resize(n, q);
	for (Eigen::Index i = 0; i < n; ++i)
		for (Eigen::Index k = 0; k < q; ++k) d.u_cont(i, k) = us[static_cast<std::size_t>(i * q + k)];
	d.u_cont_names = layout.u_cont;
	const auto l = static_cast<Eigen::Index>(c_cat.size());
	d.u_cat.resize(n, l);
	for (Eigen::Index i = 0; i < n; ++i)
		for (Eigen::Index k = 0; k < l; ++k) d.u_cat(i, k) = cats[static_cast<std::size_t>(i * l + k)];
	d.u_cat_names = layout.u_cat;
	for (const auto &labels : out.category_labels) d.cat_levels.push_back(static_cast<int>(labels.size()));
	d.validate();
	return out;
}

IngestedData ingest_csv(const std::filesystem::path &file, const DataLayout &layout) {
	std::ifstream in(file, std::ios::binary);
	if (!in) {
		throw DataError("cannot read data file " + file.string());
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return ingest_csv_text(ss.str(), layout);
}

void write_dataset_csv(const std::filesystem::path &file, const LongitudinalDataset &data,
                       const std::vector<std::string> &id_labels) {
	std::ofstream out(file, std::ios::binary);
	if (!out) {
		throw DataError("cannot write " + file.string());
	}
	std::vector<Eigen::Index> xcols;
	out << "id,time,y";
	for (Eigen::Index k = 0; k < data.x.cols(); ++k) {
		const std::string &name = data.x_names[static_cast<std::size_t>(k)];
		if (generated_column(name)) continue;
		xcols.push_back(k);
		out << ',' << quoted(name);
	}
	for (const auto &name : data.u_cont_names) out << ',' << quoted(name);
	for (const auto &name : data.u_cat_names) out << ',' << quoted(name);
	out << '\n';
	for (Eigen::Index i = 0; i < data.n(); ++i) {
		const int j = data.individual_of[static_cast<std::size_t>(i)];
		out << (id_labels.empty() ? std::to_string(j + 1) : quoted(id_labels[static_cast<std::size_t>(j)]));
		out << ',' << format_double(data.time(i)) << ',' << format_double(data.y(i));
		for (auto k : xcols) out << ',' << format_double(data.x(i, k));
		for (Eigen::Index k = 0; k < data.u_cont.cols(); ++k) out << ',' << format_double(data.u_cont(i, k));
		for (Eigen::Index k = 0; k < data.u_cat.cols(); ++k) out << ',' << data.u_cat(i, k) + 1;
		out << '\n';
	}
	if (!out) {
		throw DataError("failed writing " + file.string());
	}
}

} // namespace plmm::cli
