#include "plmm/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "plmm/chain_store.hpp"
#include "plmm/errors.hpp"

namespace plmm::cli {

namespace {

std::string trim(const std::string &s) {
	const auto b = s.find_first_not_of(" \t\r");
	if (b == std::string::npos) return {};
	const auto e = s.find_last_not_of(" \t\r");
	return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string &value) {
	std::vector<std::string> out;
	if (trim(value).empty()) return out;
	std::stringstream ss(value);
	std::string item;
	while (std::getline(ss, item, ',')) out.push_back(trim(item));
	return out;
}

std::string join(const std::vector<std::string> &v) {
	std::string out;
	for (std::size_t k = 0; k < v.size(); ++k) {
		if (k) out += ", ";
		out += v[k];
	}
	return out;
}

double to_double(const std::string &s, int line) {
	double v = 0.0;
	const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
		throw ConfigError("expected a number, got '" + s + "'", line);
	}
	return v;
}

template <typename T>
T to_integer(const std::string &s, int line) {
	T v{};
	const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
		throw ConfigError("expected an integer, got '" + s + "'", line);
	}
	return v;
}

bool to_bool(const std::string &s, int line) {
	if (s == "true" || s == "1" || s == "yes") return true;
	if (s == "false" || s == "0" || s == "no") return false;
	throw ConfigError("expected true or false, got '" + s + "'", line);
}

void require(bool ok, const std::string &what, int line = 0) {
	if (!ok) throw ConfigError(what, line);
}

struct MatrixValue {
	std::vector<double> values;
	int line = 0;
};

PsdMatrix to_matrix(const MatrixValue &v, int dim, const std::string &name) {
	Eigen::MatrixXd m;
	if (v.values.size() == 1) {
		m = Eigen::MatrixXd::Identity(dim, dim) * v.values[0];
	} else if (static_cast<int>(v.values.size()) == dim * dim) {
		m.resize(dim, dim);
		for (int r = 0; r < dim; ++r)
			for (int c = 0; c < dim; ++c) m(r, c) = v.values[static_cast<std::size_t>(r * dim + c)];
	} else {
		throw ConfigError(name + " needs 1 or " + std::to_string(dim * dim) + " entries", v.line);
	}
	try {
		return PsdMatrix(m, name);
	} catch (const Error &e) {
		throw ConfigError(name + " must be symmetric positive definite", v.line);
	}
}

std::string matrix_text(const PsdMatrix &m) {
	std::vector<double> v;
	for (Eigen::Index r = 0; r < m.dim(); ++r)
		for (Eigen::Index c = 0; c < m.dim(); ++c) v.push_back(m.matrix()(r, c));
	std::string out;
	for (std::size_t k = 0; k < v.size(); ++k) {
		if (k) out += ", ";
		out += format_double(v[k]);
	}
	return out;
}

std::string numbers_text(const std::vector<double> &v) {
	std::string out;
	for (std::size_t k = 0; k < v.size(); ++k) {
		if (k) out += ", ";
		out += format_double(v[k]);
	}
	return out;
}

} // namespace

bool DataLayout::uses_spline() const {
	auto has = [](const std::vector<std::string> &v) { return std::find(v.begin(), v.end(), "spline") != v.end(); };
	return has(fe) || has(re) || has(interaction);
}

std::vector<std::string> DataLayout::x_names() const {
	std::vector<std::string> names{"intercept"};
	names.insert(names.end(), x.begin(), x.end());
	if (uses_spline()) {
		for (int k = 1; k <= spline_basis; ++k) names.push_back("spline_" + std::to_string(k));
	}
	return names;
}

ModelSpec DataLayout::role_indices(int truncation, bool standardize_u, bool standardize_x) const {
	const auto names = x_names();
	auto resolve = [&](const std::vector<std::string> &roles, const char *role) {
		std::vector<int> cols;
		for (const auto &r : roles) {
			if (r == "spline") {
				for (int k = 1; k <= spline_basis; ++k) {
					const auto it = std::find(names.begin(), names.end(), "spline_" + std::to_string(k));
					cols.push_back(static_cast<int>(it - names.begin()));
				}
				continue;
			}
			const auto it = std::find(names.begin(), names.end(), r);
			if (it == names.end()) {
				throw ConfigError(std::string(role) + " refers to unknown column '" + r + "'");
			}
			cols.push_back(static_cast<int>(it - names.begin()));
		}
		return cols;
	};
	ModelSpec spec;
	spec.fe_cols = resolve(fe, "fe");
	spec.re_cols = resolve(re, "re");
	spec.int_cols = resolve(interaction, "int");
	spec.truncation = truncation;
	spec.standardize_u = standardize_u;
	spec.standardize_x = standardize_x;
	return spec;
}

Config parse_config_text(const std::string &text) {
	Config cfg;
	cfg.run.iterations = 15000;
	cfg.run.burn_in = 5000;
	int truncation = 60;
	bool standardize_u = true;
	bool standardize_x = false;
	std::map<std::string, double> prior_scalars;
	std::map<std::string, int> prior_lines;
	std::map<std::string, MatrixValue> prior_matrices;
	std::map<std::string, int> role_lines;
	int line_run = 0;

	using Handler = std::function<void(const std::string &, int)>;
	std::map<std::string, std::map<std::string, Handler>> table;
	DataLayout &lay = cfg.layout;
	auto names = [&](std::vector<std::string> &target, const char *key) {
		return [&target, &role_lines, key](const std::string &v, int line) {
			target = split_list(v);
			role_lines[key] = line;
			for (const auto &n : target) require(!n.empty(), std::string("empty name in ") + key, line);
		};
	};
	auto word = [](std::string &target) {
		return [&target](const std::string &v, int line) {
			require(!v.empty(), "expected a column name", line);
			target = v;
		};
	};
	table["model"] = {
		{"outcome", word(lay.outcome)},
		{"id", word(lay.id_column)},
		{"time", word(lay.time_column)},
		{"x", names(lay.x, "x")},
		{"u_cont", names(lay.u_cont, "u_cont")},
		{"u_cat", names(lay.u_cat, "u_cat")},
		{"fe", names(lay.fe, "fe")},
		{"re", names(lay.re, "re")},
		{"int", names(lay.interaction, "int")},
		{"C",
		 [&](const std::string &v, int line) {
			 truncation = to_integer<int>(v, line);
			 require(truncation >= 2, "C must be at least 2", line);
		 }},
		{"standardize_u", [&](const std::string &v, int line) { standardize_u = to_bool(v, line); }},
		{"standardize_x", [&](const std::string &v, int line) { standardize_x = to_bool(v, line); }},
		{"spline_degree",
		 [&](const std::string &v, int line) {
			 lay.spline_degree = to_integer<int>(v, line);
			 require(lay.spline_degree >= 0, "spline_degree must be non-negative", line);
		 }},
		{"spline_basis",
		 [&](const std::string &v, int line) {
			 lay.spline_basis = to_integer<int>(v, line);
			 require(lay.spline_basis >= 1, "spline_basis must be positive", line);
		 }},
		{"spline_lower", [&](const std::string &v, int line) { lay.spline_lower = to_double(v, line); }},
		{"spline_upper", [&](const std::string &v, int line) { lay.spline_upper = to_double(v, line); }},
	};
	for (const char *k : {"lambda", "a_sigma", "b_sigma", "nu_re", "nu_int", "lambda0", "nu0", "alpha_dir", "a_zeta",
	                      "b_zeta"}) {
		const std::string key = k;
		table["priors"][key] = [&, key](const std::string &v, int line) {
			const double x = to_double(v, line);
			require(x > 0.0 && std::isfinite(x), key + " must be positive", line);
			prior_scalars[key] = x;
			prior_lines[key] = line;
		};
	}
	for (const char *k : {"psi_re", "psi_int", "phi0"}) {
		const std::string key = k;
		table["priors"][key] = [&, key](const std::string &v, int line) {
			MatrixValue m;
			m.line = line;
			for (const auto &item : split_list(v)) m.values.push_back(to_double(item, line));
			require(!m.values.empty(), key + " needs at least one entry", line);
			prior_matrices[key] = m;
		};
	}
	RunConfig &run = cfg.run;
	auto positive_int = [](int &target, const char *key) {
		return [&target, key](const std::string &v, int line) {
			target = to_integer<int>(v, line);
			require(target >= 1, std::string(key) + " must be at least 1", line);
		};
	};
	table["run"] = {
		{"iterations",
		 [&](const std::string &v, int line) {
			 run.iterations = to_integer<int>(v, line);
			 require(run.iterations >= 1, "iterations must be at least 1", line);
			 line_run = line;
		 }},
		{"burn_in",
		 [&](const std::string &v, int line) {
			 run.burn_in = to_integer<int>(v, line);
			 require(run.burn_in >= 0, "burn_in must be non-negative", line);
			 line_run = line;
		 }},
		{"thin", positive_int(run.thin, "thin")},
		{"seed", [&](const std::string &v, int line) { run.seed = to_integer<std::uint64_t>(v, line); }},
		{"chains", positive_int(run.n_chains, "chains")},
		{"record_loglik", [&](const std::string &v, int line) { run.record_loglik = to_bool(v, line); }},
		{"progress_every",
		 [&](const std::string &v, int line) {
			 run.progress_every = to_integer<int>(v, line);
			 require(run.progress_every >= 0, "progress_every must be non-negative", line);
		 }},
	};
	PostprocessSettings &post = cfg.post;
	auto fraction = [](double &target, const char *key, bool allow_zero) {
		return [&target, key, allow_zero](const std::string &v, int line) {
			target = to_double(v, line);
			const bool ok = allow_zero ? (target >= 0.0 && target < 1.0) : (target > 0.0 && target <= 1.0);
			require(ok, std::string(key) + (allow_zero ? " must lie in [0, 1)" : " must lie in (0, 1]"), line);
		};
	};
	table["postprocess"] = {
		{"subset", positive_int(post.subset, "subset")},
		{"kept_fraction", fraction(post.kept_fraction, "kept_fraction", false)},
		{"k_max",
		 [&](const std::string &v, int line) {
			 post.k_max = to_integer<int>(v, line);
			 require(post.k_max >= 2, "k_max must be at least 2", line);
		 }},
		{"level", fraction(post.level, "level", true)},
		{"contrast_level", fraction(post.contrast_level, "contrast_level", true)},
		{"reference", positive_int(post.reference, "reference")},
		{"min_size_fraction", fraction(post.min_size_fraction, "min_size_fraction", true)},
		{"subset_seed", [&](const std::string &v, int line) { post.subset_seed = to_integer<std::uint64_t>(v, line); }},
	};
	ScenarioConfig &sc = cfg.sim.scenario;
	auto positive_real = [](double &target, const char *key) {
		return [&target, key](const std::string &v, int line) {
			target = to_double(v, line);
			require(target > 0.0, std::string(key) + " must be positive", line);
		};
	};
	table["simulation"] = {
		{"m", positive_int(sc.m, "m")},
		{"waves", positive_int(sc.waves, "waves")},
		{"scenario",
		 [&](const std::string &v, int line) {
			 sc.scenario = to_integer<int>(v, line);
			 require(sc.scenario == 1 || sc.scenario == 2, "scenario must be 1 or 2", line);
		 }},
		{"within_sd", positive_real(sc.within_sd, "within_sd")},
		{"correlation",
		 [&](const std::string &v, int line) {
			 sc.correlation = to_double(v, line);
			 require(sc.correlation > -1.0 && sc.correlation < 1.0, "correlation must lie in (-1, 1)", line);
		 }},
		{"quadrant_weight", positive_real(sc.quadrant_weight, "quadrant_weight")},
		{"w_re_scale", positive_real(sc.w_re_scale, "w_re_scale")},
		{"sigma2", positive_real(sc.sigma2, "sigma2")},
		{"beta",
		 [&](const std::string &v, int line) {
			 sc.beta.clear();
			 for (const auto &item : split_list(v)) sc.beta.push_back(to_double(item, line));
			 require(sc.beta.empty() || sc.beta.size() == 5, "beta needs 5 entries", line);
		 }},
		{"seed", [&](const std::string &v, int line) { sc.seed = to_integer<std::uint64_t>(v, line); }},
		{"reps", positive_int(cfg.sim.reps, "reps")},
	};

	std::istringstream in(text);
	std::string raw;
	std::string section;
	int line = 0;
	std::map<std::string, int> seen;
	while (std::getline(in, raw)) {
		++line;
		const auto hash = raw.find('#');
		const std::string content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
		if (content.empty()) continue;
		if (content.front() == '[') {
			require(content.back() == ']', "malformed section header", line);
			section = trim(content.substr(1, content.size() - 2));
			require(table.count(section) > 0, "unknown section [" + section + "]", line);
			continue;
		}
		const auto eq = content.find('=');
		require(eq != std::string::npos, "expected 'key = value'", line);
		require(!section.empty(), "key outside of any section", line);
		const std::string key = trim(content.substr(0, eq));
		const std::string value = trim(content.substr(eq + 1));
		const auto &handlers = table[section];
		const auto it = handlers.find(key);
		require(it != handlers.end(), "unknown key '" + key + "' in [" + section + "]", line);
		const std::string full = section + "." + key;
		if (seen.count(full)) {
			throw ConfigError("duplicate key '" + key + "', first set on line " + std::to_string(seen[full]), line);
		}
		seen[full] = line;
		it->second(value, line);
	}

	require(run.burn_in < run.iterations, "burn_in must be smaller than iterations", line_run);
	require(!lay.u_cont.empty() || !lay.u_cat.empty(), "at least one clustering covariate (u_cont or u_cat) is required");
	{
		std::vector<std::string> all{lay.id_column, lay.time_column, lay.outcome};
		all.insert(all.end(), lay.x.begin(), lay.x.end());
		all.insert(all.end(), lay.u_cont.begin(), lay.u_cont.end());
		all.insert(all.end(), lay.u_cat.begin(), lay.u_cat.end());
		std::vector<std::string> sorted = all;
		std::sort(sorted.begin(), sorted.end());
		const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
		require(dup == sorted.end(), "column '" + (dup == sorted.end() ? std::string() : *dup) + "' is declared twice");
		for (const auto &x : lay.x) {
			require(x != "intercept" && x != "spline" && x.rfind("spline_", 0) != 0,
			        "'" + x + "' is a reserved regression column name", role_lines.count("x") ? role_lines["x"] : 0);
		}
	}
	if (lay.uses_spline()) {
		require(lay.spline_basis >= lay.spline_degree + 1, "spline_basis must be at least spline_degree + 1");
		if (lay.spline_lower && lay.spline_upper) {
			require(*lay.spline_upper > *lay.spline_lower, "spline_upper must exceed spline_lower");
		}
	}
	for (const char *role : {"fe", "re", "int"}) {
		const auto &v = std::string(role) == "fe" ? lay.fe : std::string(role) == "re" ? lay.re : lay.interaction;
		const int line = role_lines.count(role) ? role_lines[role] : 0;
		require(!v.empty(), std::string(role) + " must list at least one column", line);
		const auto known = lay.x_names();
		for (const auto &name : v) {
			require(name == "spline" || std::find(known.begin(), known.end(), name) != known.end(),
			        std::string(role) + " refers to unknown column '" + name + "'", line);
		}
	}
	cfg.spec = lay.role_indices(truncation, standardize_u, standardize_x);

	const int p_re = static_cast<int>(cfg.spec.re_cols.size());
	const int p_int = static_cast<int>(cfg.spec.int_cols.size());
	const int q = static_cast<int>(lay.u_cont.size());
	Hyperparameters &h = cfg.hyper;
	h = Hyperparameters::defaults(p_re, p_int, q);
	auto scalar = [&](const char *key, double &target) {
		if (prior_scalars.count(key)) target = prior_scalars[key];
	};
	scalar("lambda", h.lambda);
	scalar("a_sigma", h.a_sigma);
	scalar("b_sigma", h.b_sigma);
	scalar("nu_re", h.nu_re);
	scalar("nu_int", h.nu_int);
	scalar("lambda0", h.lambda0);
	scalar("nu0", h.nu0);
	scalar("alpha_dir", h.alpha_dir);
	scalar("a_zeta", h.a_zeta);
	scalar("b_zeta", h.b_zeta);
	if (prior_matrices.count("psi_re")) h.psi_re = to_matrix(prior_matrices["psi_re"], p_re, "psi_re");
	if (prior_matrices.count("psi_int")) h.psi_int = to_matrix(prior_matrices["psi_int"], p_int, "psi_int");
	if (prior_matrices.count("phi0")) {
		require(q > 0, "phi0 given but no continuous clustering covariates", prior_matrices["phi0"].line);
		h.phi0 = to_matrix(prior_matrices["phi0"], q, "phi0");
	}
	auto line_of = [&](const char *key) { return prior_lines.count(key) ? prior_lines[key] : 0; };
	require(h.nu_re > p_re - 1.0, "nu_re must exceed dim(W_re) - 1 = " + std::to_string(p_re - 1), line_of("nu_re"));
	require(h.nu_int > p_int - 1.0, "nu_int must exceed dim(W_int) - 1 = " + std::to_string(p_int - 1),
	        line_of("nu_int"));
	if (q > 0) require(h.nu0 > q - 1.0, "nu0 must exceed q_cont - 1 = " + std::to_string(q - 1), line_of("nu0"));

	sc.spline_degree = lay.spline_degree;
	sc.spline_basis = lay.spline_basis;
	return cfg;
}

Config parse_config(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in) {
		throw ConfigError("cannot read configuration file " + path.string());
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return parse_config_text(ss.str());
}

std::string emit_config(const Config &cfg) {
	const DataLayout &l = cfg.layout;
	const Hyperparameters &h = cfg.hyper;
	std::ostringstream o;
	o << "[model]\n";
	o << "outcome = " << l.outcome << "\n";
	o << "id = " << l.id_column << "\n";
	o << "time = " << l.time_column << "\n";
	o << "x = " << join(l.x) << "\n";
	o << "u_cont = " << join(l.u_cont) << "\n";
	o << "u_cat = " << join(l.u_cat) << "\n";
	o << "fe = " << join(l.fe) << "\n";
	o << "re = " << join(l.re) << "\n";
	o << "int = " << join(l.interaction) << "\n";
	o << "C = " << cfg.spec.truncation << "\n";
	o << "standardize_u = " << (cfg.spec.standardize_u ? "true" : "false") << "\n";
	o << "standardize_x = " << (cfg.spec.standardize_x ? "true" : "false") << "\n";
	o << "spline_degree = " << l.spline_degree << "\n";
	o << "spline_basis = " << l.spline_basis << "\n";
	if (l.spline_lower) o << "spline_lower = " << format_double(*l.spline_lower) << "\n";
	if (l.spline_upper) o << "spline_upper = " << format_double(*l.spline_upper) << "\n";
	o << "\n[priors]\n";
	o << "lambda = " << format_double(h.lambda) << "\n";
	o << "a_sigma = " << format_double(h.a_sigma) << "\n";
	o << "b_sigma = " << format_double(h.b_sigma) << "\n";
	o << "psi_re = " << matrix_text(h.psi_re) << "\n";
	o << "nu_re = " << format_double(h.nu_re) << "\n";
	o << "psi_int = " << matrix_text(h.psi_int) << "\n";
	o << "nu_int = " << format_double(h.nu_int) << "\n";
	o << "lambda0 = " << format_double(h.lambda0) << "\n";
	o << "nu0 = " << format_double(h.nu0) << "\n";
	if (h.phi0.dim() > 0) o << "phi0 = " << matrix_text(h.phi0) << "\n";
	o << "alpha_dir = " << format_double(h.alpha_dir) << "\n";
	o << "a_zeta = " << format_double(h.a_zeta) << "\n";
	o << "b_zeta = " << format_double(h.b_zeta) << "\n";
	const RunConfig &r = cfg.run;
	o << "\n[run]\n";
	o << "iterations = " << r.iterations << "\n";
	o << "burn_in = " << r.burn_in << "\n";
	o << "thin = " << r.thin << "\n";
	o << "seed = " << r.seed << "\n";
	o << "chains = " << r.n_chains << "\n";
	o << "record_loglik = " << (r.record_loglik ? "true" : "false") << "\n";
	o << "progress_every = " << r.progress_every << "\n";
	const PostprocessSettings &p = cfg.post;
	o << "\n[postprocess]\n";
	o << "subset = " << p.subset << "\n";
	o << "kept_fraction = " << format_double(p.kept_fraction) << "\n";
	o << "k_max = " << p.k_max << "\n";
	o << "level = " << format_double(p.level) << "\n";
	o << "contrast_level = " << format_double(p.contrast_level) << "\n";
	o << "reference = " << p.reference << "\n";
	o << "min_size_fraction = " << format_double(p.min_size_fraction) << "\n";
	o << "subset_seed = " << p.subset_seed << "\n";
	const ScenarioConfig &s = cfg.sim.scenario;
	o << "\n[simulation]\n";
	o << "m = " << s.m << "\n";
	o << "waves = " << s.waves << "\n";
	o << "scenario = " << s.scenario << "\n";
	o << "within_sd = " << format_double(s.within_sd) << "\n";
	o << "correlation = " << format_double(s.correlation) << "\n";
	o << "quadrant_weight = " << format_double(s.quadrant_weight) << "\n";
	o << "w_re_scale = " << format_double(s.w_re_scale) << "\n";
	o << "sigma2 = " << format_double(s.sigma2) << "\n";
	if (!s.beta.empty()) o << "beta = " << numbers_text(s.beta) << "\n";
	o << "seed = " << s.seed << "\n";
	o << "reps = " << cfg.sim.reps << "\n";
	return o.str();
}

Config scenario_config(const ScenarioConfig &scenario) {
	std::ostringstream o;
	o << "[model]\nx = x1, x2, x3, x4\nu_cont = u1, u2\nfe = intercept, x1, x2, x3, x4\nre = spline\n"
	  << "int = intercept, x1\nspline_degree = " << scenario.spline_degree << "\nspline_basis = " << scenario.spline_basis
	  << "\nspline_lower = 1\nspline_upper = " << scenario.waves + 1 << "\n";
	Config cfg = parse_config_text(o.str());
	cfg.sim.scenario = scenario;
	return cfg;
}

} // namespace plmm::cli
