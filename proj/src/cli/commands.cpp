#include "plmm/cli/commands.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plmm/chain_store.hpp"
#include "plmm/cli/csv.hpp"
#include "plmm/errors.hpp"
#include "plmm/gibbs.hpp"
#include "plmm/simulation.hpp"

namespace plmm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json to_json(const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Eigen::MatrixXd &m) {
	json rows = json::array();
	for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
	return rows;
}

void ensure_dir(const fs::path &dir) {
	std::error_code ec;
	fs::create_directories(dir, ec);
	const fs::path probe = dir / ".plmm-write-test";
	std::ofstream f(probe);
	if (ec || !f) {
		throw ConfigError("output directory " + dir.string() + " is not writable");
	}
	f.close();
	fs::remove(probe, ec);
}

void write_text(const fs::path &file, const std::string &text) {
	std::ofstream out(file, std::ios::binary | std::ios::trunc);
	out << text;
	if (!out) {
		throw DataError("failed writing " + file.string());
	}
}

void write_json(const fs::path &file, const json &j) { write_text(file, j.dump(2) + "\n"); }

std::vector<std::string> split_names(const std::string &s) {
	std::vector<std::string> out;
	std::stringstream ss(s);
	std::string item;
	while (std::getline(ss, item, ',')) out.push_back(item);
	return out;
}

std::vector<std::string> column_names(const ChainStore &chain, const std::vector<int> &cols, const char *prefix) {
	const auto names = chain.meta.has("x_names") ? split_names(chain.meta.get("x_names")) : std::vector<std::string>{};
	std::vector<std::string> out;
	for (int c : cols) {
		out.push_back(c < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(c)]
		                                                  : std::string(prefix) + std::to_string(c + 1));
	}
	return out;
}

std::optional<Standardization> x_standardization(const ChainStore &chain) {
	if (!chain.meta.has("standardize_x") || chain.meta.get("standardize_x") != "1") return std::nullopt;
	auto vec = [&](const char *key) {
		const auto v = chain.meta.get_doubles(key);
		return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
	};
	return Standardization{vec("x_center"), vec("x_scale"), vec("x_constant")};
}

json trace_json(const TraceSummary &t) {
	return {{"length", t.length}, {"mean", t.mean}, {"sd", t.sd}, {"lag1", t.lag1}, {"ess", t.ess}};
}

std::string fixed(double v, int precision = 4) {
	std::ostringstream o;
	o << std::fixed << std::setprecision(precision) << v;
	return o.str();
}

const char *error_kind(const std::exception &e) {
	if (dynamic_cast<const ConfigError *>(&e)) return "config";
	if (dynamic_cast<const SpecError *>(&e)) return "spec";
	if (dynamic_cast<const DataError *>(&e)) return "data";
	if (dynamic_cast<const FactorizationError *>(&e)) return "factorization";
	if (dynamic_cast<const NumericalError *>(&e)) return "numerical";
	if (dynamic_cast<const ParameterError *>(&e)) return "parameter";
	if (dynamic_cast<const fs::filesystem_error *>(&e)) return "io";
	return "internal";
}

} // namespace

int exit_code_for(const std::exception &e) {
	if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const SpecError *>(&e) ||
	    dynamic_cast<const CLI::Error *>(&e)) {
		return kUsageError;
	}
	if (dynamic_cast<const DataError *>(&e) || dynamic_cast<const fs::filesystem_error *>(&e)) {
		return kDataError;
	}
	return kNumericalError;
}

std::vector<fs::path> fit_command(const Config &cfg, const fs::path &data, const fs::path &out,
                                  std::ostream *progress) {
	ensure_dir(out);
	const IngestedData ing = ingest_csv(data, cfg.layout);
	const DesignViews views = build_design_views(ing.data, cfg.spec);
	ChainOptions options;
	options.progress = progress;
	std::vector<ChainStore> chains = run_chains(views, cfg.hyper, cfg.run, options);

	Config effective = cfg;
	if (cfg.layout.uses_spline()) {
		effective.layout.spline_lower = ing.spline_lower;
		effective.layout.spline_upper = ing.spline_upper;
	}
	write_text(out / "effective_config.ini", emit_config(effective));

	json mapping;
	mapping["ids"] = ing.id_labels;
	json cats = json::object();
	for (std::size_t k = 0; k < ing.category_labels.size(); ++k) cats[cfg.layout.u_cat[k]] = ing.category_labels[k];
	mapping["categories"] = cats;
	mapping["x_names"] = ing.data.x_names;
	write_json(out / "data_mapping.json", mapping);

	std::vector<fs::path> dirs;
	json diag = json::array();
	std::ostringstream txt;
	txt << "chain  trace   draws      mean        sd      lag1       ess\n";
	for (std::size_t c = 0; c < chains.size(); ++c) {
		ChainStore &chain = chains[c];
		std::string names;
		for (std::size_t k = 0; k < ing.data.x_names.size(); ++k) names += (k ? "," : "") + ing.data.x_names[k];
		chain.meta.set("x_names", names);
		std::string u_names;
		for (std::size_t k = 0; k < ing.data.u_cont_names.size(); ++k) u_names += (k ? "," : "") + ing.data.u_cont_names[k];
		chain.meta.set("u_cont_names", u_names);
		const fs::path dir = out / (chains.size() == 1 ? std::string("chain") : "chain_" + std::to_string(c + 1));
		chain.save(dir);
		chain.export_csv(dir);
		dirs.push_back(dir);

		const DiagnosticsReport r = diagnostics(chain);
		std::map<std::int64_t, int> freq;
		for (auto k : chain.trace_nclus) ++freq[k];
		const auto mode =
			std::max_element(freq.begin(), freq.end(), [](auto &a, auto &b) { return a.second < b.second; })->first;
		diag.push_back({{"chain", c + 1},
		                {"directory", dir.filename().string()},
		                {"kept_draws", chain.draws()},
		                {"zeta", trace_json(r.zeta)},
		                {"sigma2", trace_json(r.sigma2)},
		                {"nclus", trace_json(r.nclus)},
		                {"nclus_mode", mode}});
		for (const TraceSummary *t : {&r.zeta, &r.sigma2, &r.nclus}) {
			txt << std::setw(5) << c + 1 << "  " << std::left << std::setw(6) << t->name << std::right << std::setw(7)
			    << t->length << std::setw(10) << fixed(t->mean) << std::setw(10) << fixed(t->sd) << std::setw(10)
			    << fixed(t->lag1, 3) << std::setw(10) << fixed(t->ess, 1) << "\n";
		}
		txt << "       most frequent number of non-empty clusters: " << mode << "\n";
	}
	write_json(out / "diagnostics.json", diag);
	write_text(out / "diagnostics.txt", txt.str());
	return dirs;
}

PostprocessResult postprocess_command(const Config &cfg, const fs::path &chain_dir, const fs::path &out) {
	if (!fs::exists(chain_dir / "meta") || !fs::exists(chain_dir / "alloc")) {
		throw DataError("no chain found in " + chain_dir.string());
	}
	ensure_dir(out);
	const PostprocessSettings &p = cfg.post;
	const ChainStore chain = ChainStore::load(chain_dir, false);
	FileAllocationSource alloc(chain_dir / "alloc");
	if (alloc.draws() == 0) {
		throw DataError("chain in " + chain_dir.string() + " holds no kept draws");
	}
	const std::size_t first = tail_start(alloc.draws(), p.kept_fraction);

	RngStream subset_rng(p.subset_seed, 0x5B);
	const auto subset = choose_subset(static_cast<int>(alloc.observations()), p.subset, subset_rng);
	const SimilarityMatrix sim = build_similarity(alloc, subset, first);
	write_similarity(out / "similarity.bin", sim);

	PostprocessResult res;
	res.representative = representative_clustering(sim, p.k_max);
	const RepresentativeClustering &rep = res.representative;
	res.excluded = small_clusters(rep, p.min_size_fraction);
	{
		std::ostringstream o;
		o << "observation,cluster\n";
		for (std::size_t a = 0; a < rep.subset_ids.size(); ++a) o << rep.subset_ids[a] + 1 << ',' << rep.labels[a] << '\n';
		write_text(out / "labels.csv", o.str());
	}

	const std::vector<int> fe_cols = chain.meta.get_ints("fe_cols");
	const std::vector<int> int_cols = chain.meta.get_ints("int_cols");
	const auto fe_names = column_names(chain, fe_cols, "x");
	const auto int_names = column_names(chain, int_cols, "x");
	const auto xs = x_standardization(chain);

	BlockTable beta = chain.beta;
	if (xs) {
		for (std::size_t h = 0; h < beta.rows; ++h) {
			const Eigen::VectorXd b = xs->to_original(
				Eigen::Map<const Eigen::VectorXd>(beta.row(h), static_cast<Eigen::Index>(beta.cols)), fe_cols);
			std::copy(b.data(), b.data() + b.size(), beta.data.begin() + static_cast<std::ptrdiff_t>(h * beta.cols));
		}
	}
	res.fixed_effects = summarize_draws(beta, p.level, first);

	ClusterValueFn gamma_value;
	if (xs) {
		gamma_value = [&xs, &int_cols, base = cluster_value(ClusterParam::gamma)](const ChainStore &c, std::size_t h,
		                                                                           int label) {
			return xs->to_original(base(c, h, label), int_cols);
		};
	}
	res.cluster_effects = aggregate_cluster_params(chain, alloc, rep, ClusterParam::gamma, p.level, first, gamma_value);
	for (int c : res.excluded) res.cluster_effects.excluded[static_cast<std::size_t>(c - 1)] = true;

	ClusterSummary profiles;
	if (chain.dims.q_cont > 0) {
		const auto center = chain.meta.get_doubles("u_center");
		const auto scale = chain.meta.get_doubles("u_scale");
		ClusterValueFn mu_value = [center, scale, base = cluster_value(ClusterParam::mu)](const ChainStore &c,
		                                                                                std::size_t h, int label) {
			Eigen::VectorXd v = base(c, h, label);
			for (Eigen::Index k = 0; k < v.size(); ++k) {
				v(k) = center[static_cast<std::size_t>(k)] + scale[static_cast<std::size_t>(k)] * v(k);
			}
			return v;
		};
		profiles = aggregate_cluster_params(chain, alloc, rep, ClusterParam::mu, p.level, first, mu_value);
	}

	{
		std::ostringstream o;
		o << "term,mean,lower,upper\n";
		for (std::size_t k = 0; k < fe_names.size(); ++k) {
			const auto kk = static_cast<Eigen::Index>(k);
			o << fe_names[k] << ',' << format_double(res.fixed_effects.mean(kk)) << ','
			  << format_double(res.fixed_effects.lower(kk)) << ',' << format_double(res.fixed_effects.upper(kk)) << '\n';
		}
		write_text(out / "fixed_effects.csv", o.str());
	}
	{
		std::ostringstream o;
		o << "cluster,size,excluded,term,mean,lower,upper\n";
		for (int c = 0; c < rep.k; ++c) {
			const IntervalSummary &s = res.cluster_effects.clusters[static_cast<std::size_t>(c)];
			if (s.empty) continue;
			for (std::size_t k = 0; k < int_names.size(); ++k) {
				const auto kk = static_cast<Eigen::Index>(k);
				o << c + 1 << ',' << rep.sizes[static_cast<std::size_t>(c)] << ','
				  << (res.cluster_effects.excluded[static_cast<std::size_t>(c)] ? 1 : 0) << ',' << int_names[k] << ','
				  << format_double(s.mean(kk)) << ',' << format_double(s.lower(kk)) << ',' << format_double(s.upper(kk))
				  << '\n';
			}
		}
		write_text(out / "cluster_effects.csv", o.str());
	}
	if (chain.dims.q_cont > 0) {
		const auto u_names = chain.meta.has("u_cont_names") ? split_names(chain.meta.get("u_cont_names"))
		                                                    : std::vector<std::string>{};
		std::ostringstream o;
		o << "cluster,covariate,mean,lower,upper\n";
		for (int c = 0; c < rep.k; ++c) {
			const IntervalSummary &s = profiles.clusters[static_cast<std::size_t>(c)];
			if (s.empty) continue;
			for (Eigen::Index k = 0; k < s.mean.size(); ++k) {
				const auto kk = static_cast<std::size_t>(k);
				o << c + 1 << ',' << (kk < u_names.size() ? u_names[kk] : "u" + std::to_string(k + 1)) << ','
				  << format_double(s.mean(k)) << ',' << format_double(s.lower(k)) << ',' << format_double(s.upper(k))
				  << '\n';
			}
		}
		write_text(out / "cluster_profiles.csv", o.str());
	}

	const int ref = p.reference;
	if (ref > rep.k) {
		throw ConfigError("reference cluster " + std::to_string(ref) + " does not exist (k = " + std::to_string(rep.k) +
		                  ")");
	}
	if (res.cluster_effects.excluded[static_cast<std::size_t>(ref - 1)]) {
		throw ConfigError("reference cluster " + std::to_string(ref) + " is excluded by the size threshold");
	}
	res.contrasts = cluster_effect_contrasts(res.cluster_effects, ref, p.contrast_level);
	{
		std::ostringstream o;
		o << "cluster,reference,term,mean,lower,upper\n";
		for (const Contrast &c : res.contrasts) {
			for (std::size_t k = 0; k < int_names.size(); ++k) {
				const auto kk = static_cast<Eigen::Index>(k);
				o << c.cluster << ',' << ref << ',' << int_names[k] << ',' << format_double(c.mean(kk)) << ','
				  << format_double(c.lower(kk)) << ',' << format_double(c.upper(kk)) << '\n';
			}
		}
		write_text(out / "contrasts.csv", o.str());
	}

	json j;
	j["draws_used"] = sim.draws_used;
	j["first_draw"] = first;
	j["subset_size"] = subset.size();
	j["rule"] = rep.rule;
	j["k"] = rep.k;
	j["silhouette"] = rep.silhouette;
	j["sizes"] = rep.sizes;
	std::vector<int> medoids;
	for (int m : rep.medoids) medoids.push_back(m + 1);
	j["medoids"] = medoids;
	j["excluded"] = res.excluded;
	j["min_size_fraction"] = p.min_size_fraction;
	j["level"] = p.level;
	j["contrast_level"] = p.contrast_level;
	j["reference"] = ref;
	json fe = json::array();
	for (std::size_t k = 0; k < fe_names.size(); ++k) {
		const auto kk = static_cast<Eigen::Index>(k);
		fe.push_back({{"term", fe_names[k]},
		              {"mean", res.fixed_effects.mean(kk)},
		              {"lower", res.fixed_effects.lower(kk)},
		              {"upper", res.fixed_effects.upper(kk)}});
	}
	j["fixed_effects"] = fe;
	json ce = json::array();
	for (int c = 0; c < rep.k; ++c) {
		const IntervalSummary &s = res.cluster_effects.clusters[static_cast<std::size_t>(c)];
		json e = {{"cluster", c + 1},
		          {"size", rep.sizes[static_cast<std::size_t>(c)]},
		          {"excluded", static_cast<bool>(res.cluster_effects.excluded[static_cast<std::size_t>(c)])},
		          {"terms", int_names}};
		if (!s.empty) {
			e["mean"] = to_json(s.mean);
			e["lower"] = to_json(s.lower);
			e["upper"] = to_json(s.upper);
			e["pooled"] = s.pooled;
		}
		ce.push_back(e);
	}
	j["cluster_effects"] = ce;
	json co = json::array();
	for (const Contrast &c : res.contrasts) {
		co.push_back({{"cluster", c.cluster},
		              {"mean", to_json(c.mean)},
		              {"lower", to_json(c.lower)},
		              {"upper", to_json(c.upper)}});
	}
	j["contrasts"] = co;
	write_json(out / "summary.json", j);

	std::ostringstream t;
	t << "representative clustering: k = " << rep.k << " over " << subset.size() << " observations, "
	  << sim.draws_used << " draws\n";
	t << "cluster   size  excluded\n";
	for (int c = 0; c < rep.k; ++c) {
		t << std::setw(7) << c + 1 << std::setw(7) << rep.sizes[static_cast<std::size_t>(c)] << std::setw(10)
		  << (res.cluster_effects.excluded[static_cast<std::size_t>(c)] ? "yes" : "no") << "\n";
	}
	t << "\nfixed effects (" << fixed(100 * p.level, 0) << "% intervals)\n";
	for (std::size_t k = 0; k < fe_names.size(); ++k) {
		const auto kk = static_cast<Eigen::Index>(k);
		t << std::left << std::setw(14) << fe_names[k] << std::right << std::setw(10)
		  << fixed(res.fixed_effects.mean(kk)) << "  [" << fixed(res.fixed_effects.lower(kk)) << ", "
		  << fixed(res.fixed_effects.upper(kk)) << "]\n";
	}
	t << "\ncluster effects (" << fixed(100 * p.level, 0) << "% intervals)\n";
	for (int c = 0; c < rep.k; ++c) {
		const IntervalSummary &s = res.cluster_effects.clusters[static_cast<std::size_t>(c)];
		if (s.empty) continue;
		for (std::size_t k = 0; k < int_names.size(); ++k) {
			const auto kk = static_cast<Eigen::Index>(k);
			t << std::setw(7) << c + 1 << "  " << std::left << std::setw(12) << int_names[k] << std::right
			  << std::setw(10) << fixed(s.mean(kk)) << "  [" << fixed(s.lower(kk)) << ", " << fixed(s.upper(kk))
			  << "]\n";
		}
	}
	t << "\ncontrasts against cluster " << ref << " (" << fixed(100 * p.contrast_level, 0) << "% intervals)\n";
	for (const Contrast &c : res.contrasts) {
		for (std::size_t k = 0; k < int_names.size(); ++k) {
			const auto kk = static_cast<Eigen::Index>(k);
			t << std::setw(7) << c.cluster << "  " << std::left << std::setw(12) << int_names[k] << std::right
			  << std::setw(10) << fixed(c.mean(kk)) << "  [" << fixed(c.lower(kk)) << ", " << fixed(c.upper(kk))
			  << "]\n";
		}
	}
	write_text(out / "summary.txt", t.str());
	return res;
}

namespace {

Config scenario_run_config(const Config &cfg) {
	Config sc = scenario_config(cfg.sim.scenario);
	sc.spec.truncation = cfg.spec.truncation;
	sc.run = cfg.run;
	sc.post = cfg.post;
	sc.sim = cfg.sim;
	const Hyperparameters &h = cfg.hyper;
	if (h.psi_re.dim() == sc.hyper.psi_re.dim() && h.psi_int.dim() == sc.hyper.psi_int.dim() &&
	    h.phi0.dim() == sc.hyper.phi0.dim()) {
		sc.hyper = h;
	} else {
		throw ConfigError("the configured priors do not match the scenario design (" +
		                  std::to_string(sc.hyper.psi_re.dim()) + " random effects, " +
		                  std::to_string(sc.hyper.psi_int.dim()) + " interaction effects, " +
		                  std::to_string(sc.hyper.phi0.dim()) + " clustering covariates)");
	}
	return sc;
}

} // namespace

void simulate_command(const Config &cfg, const fs::path &out) {
	ensure_dir(out);
	const Config sc = scenario_run_config(cfg);
	const Scenario s = generate_scenario(cfg.sim.scenario);
	write_dataset_csv(out / "data.csv", s.data);
	{
		std::ostringstream o;
		o << "id,time,cluster\n";
		for (Eigen::Index i = 0; i < s.data.n(); ++i) {
			o << s.data.individual_of[static_cast<std::size_t>(i)] + 1 << ',' << format_double(s.data.time(i)) << ','
			  << s.truth.labels[static_cast<std::size_t>(i)] << '\n';
		}
		write_text(out / "truth.csv", o.str());
	}
	const GroundTruth &t = s.truth;
	json j;
	j["beta"] = to_json(t.beta);
	j["gamma"] = to_json(t.gamma);
	j["w_re"] = to_json(t.w_re);
	j["sigma2"] = t.sigma2;
	j["weights"] = to_json(t.weights);
	json cents = json::array();
	for (const auto &c : t.centroids) cents.push_back(to_json(Eigen::VectorXd(c)));
	j["centroids"] = cents;
	json covs = json::array();
	for (const auto &c : t.covariances) covs.push_back(to_json(Eigen::MatrixXd(c)));
	j["covariances"] = covs;
	j["spline"] = {{"degree", t.spline_degree}, {"basis", t.spline_basis}, {"lower", t.spline_lower},
	               {"upper", t.spline_upper}};
	write_json(out / "truth.json", j);
	write_text(out / "config.ini", emit_config(sc));
}

void study_command(const Config &cfg, const fs::path &out, std::ostream *progress) {
	ensure_dir(out);
	const Config sc = scenario_run_config(cfg);
	StudyOptions opt;
	opt.truncation = sc.spec.truncation;
	opt.subset_cap = sc.post.subset;
	opt.kept_fraction = sc.post.kept_fraction;
	opt.k_max = sc.post.k_max;
	if (progress) *progress << "running " << sc.sim.reps << " replicates\n";
	const StudyReport report = run_replication_study(sc.sim.scenario, sc.sim.reps, sc.run, sc.hyper, opt);
	std::ostringstream rows;
	rows << "replicate,method,metric,value\n";
	for (const auto &r : report.rows) rows << r.replicate << ',' << r.method << ',' << r.metric << ',' << format_double(r.value) << '\n';
	write_text(out / "study_rows.csv", rows.str());
	std::ostringstream sum;
	std::ostringstream txt;
	sum << "method,metric,min,q25,median,q75,max,mean\n";
	txt << std::left << std::setw(17) << "method" << std::setw(31) << "metric" << std::right << std::setw(9) << "min"
	    << std::setw(9) << "median" << std::setw(9) << "max" << std::setw(9) << "mean" << "\n";
	for (const auto &s : report.summary) {
		sum << s.method << ',' << s.metric << ',' << format_double(s.min) << ',' << format_double(s.q25) << ','
		    << format_double(s.median) << ',' << format_double(s.q75) << ',' << format_double(s.max) << ','
		    << format_double(s.mean) << '\n';
		txt << std::left << std::setw(17) << s.method << std::setw(31) << s.metric << std::right << std::setw(9)
		    << fixed(s.min, 3) << std::setw(9) << fixed(s.median, 3) << std::setw(9) << fixed(s.max, 3) << std::setw(9)
		    << fixed(s.mean, 3) << "\n";
	}
	write_text(out / "study_summary.csv", sum.str());
	write_text(out / "study_summary.txt", txt.str());
	write_text(out / "effective_config.ini", emit_config(sc));
}

bool validate_command(const GirConfig &gir, const fs::path &out, std::ostream &log) {
	ensure_dir(out);
	const GirReport main = getting_it_right(gir);
	const GirReport control = getting_it_right(gir, corrupted_sigma_blocks());
	auto report_json = [](const GirReport &r) {
		json stats = json::array();
		for (const auto &s : r.statistics) {
			stats.push_back({{"name", s.name},
			                 {"marginal_mean", s.marginal_mean},
			                 {"successive_mean", s.successive_mean},
			                 {"z", s.z}});
		}
		return json{{"passed", r.passed}, {"max_abs_z", r.max_abs_z}, {"statistics", stats}};
	};
	const bool ok = main.passed && !control.passed;
	json j;
	j["draws"] = gir.draws;
	j["seed"] = gir.seed;
	j["z_threshold"] = gir.z_threshold;
	j["sampler"] = report_json(main);
	j["negative_control"] = report_json(control);
	j["passed"] = ok;
	write_json(out / "validation.json", j);
	log << "sampler check: max |z| = " << fixed(main.max_abs_z, 2) << " over " << main.statistics.size()
	    << " statistics, " << (main.passed ? "pass" : "FAIL") << "\n";
	log << "negative control (halved error-precision rate): max |z| = " << fixed(control.max_abs_z, 2) << ", "
	    << (control.passed ? "NOT detected" : "detected") << "\n";
	return ok;
}

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
	CLI::App app{"Profile regression with linear mixed effects: fit, summarize, simulate and validate"};
	app.require_subcommand(1);
	app.set_version_flag("--version", "plmm 1.0");

	std::string config_path, data_path, out_dir, chain_dir;
	std::optional<int> iterations, burn_in, truncation, subset, chains, reps, draws, reference, thin;
	std::optional<std::uint64_t> seed;
	std::optional<double> level, contrast_level;
	bool quiet = false;

	auto add_common = [&](CLI::App *sub) {
		sub->add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
		sub->add_option("--out", out_dir, "output directory")->required();
		sub->add_option("--seed", seed, "random seed");
		sub->add_flag("--quiet", quiet, "suppress progress output");
	};
	auto add_run = [&](CLI::App *sub) {
		sub->add_option("--iterations", iterations, "total Gibbs iterations")->check(CLI::PositiveNumber);
		sub->add_option("--burn-in", burn_in, "discarded iterations")->check(CLI::NonNegativeNumber);
		sub->add_option("--thin", thin, "keep every k-th iteration")->check(CLI::PositiveNumber);
		sub->add_option("--truncation,-C", truncation, "maximum number of clusters")->check(CLI::Range(2, 100000));
		sub->add_option("--chains", chains, "independent chains")->check(CLI::Range(1, 1024));
	};
	auto add_post = [&](CLI::App *sub) {
		sub->add_option("--subset", subset, "observations in the similarity matrix")->check(CLI::PositiveNumber);
		sub->add_option("--level", level, "credible level of fixed and cluster effects")
			->check(CLI::Range(0.0, 0.999999));
		sub->add_option("--contrast-level", contrast_level, "credible level of the contrasts")
			->check(CLI::Range(0.0, 0.999999));
		sub->add_option("--reference", reference, "reference cluster of the contrasts")->check(CLI::PositiveNumber);
	};

	CLI::App *fit = app.add_subcommand("fit", "run the Gibbs sampler on a data file");
	add_common(fit);
	add_run(fit);
	fit->add_option("--data", data_path, "data CSV")->required()->check(CLI::ExistingFile);

	CLI::App *post = app.add_subcommand("postprocess", "similarity matrix, representative clustering and summaries");
	add_common(post);
	add_post(post);
	post->add_option("--chain", chain_dir, "chain directory written by fit")->required();

	CLI::App *sim = app.add_subcommand("simulate", "write a simulated dataset and its ground truth");
	add_common(sim);
	add_run(sim);

	CLI::App *study = app.add_subcommand("study", "repeated simulate, fit and evaluate");
	add_common(study);
	add_run(study);
	add_post(study);
	study->add_option("--reps", reps, "number of replicates")->check(CLI::PositiveNumber);

	CLI::App *val = app.add_subcommand("validate", "sampler-correctness check with a negative control");
	val->add_option("--out", out_dir, "output directory")->required();
	val->add_option("--seed", seed, "random seed");
	val->add_option("--draws", draws, "coupled draws")->check(CLI::Range(2, 100000000));

	std::vector<std::string> args;
	for (int k = argc - 1; k > 0; --k) args.emplace_back(argv[k]);
	try {
		app.parse(args);
	} catch (const CLI::ParseError &e) {
		if (e.get_exit_code() == 0) {
			out << (dynamic_cast<const CLI::CallForVersion *>(&e) ? std::string("plmm 1.0\n") : app.help());
			if (app.get_subcommands().size() == 1 && dynamic_cast<const CLI::CallForHelp *>(&e)) {
				out << app.get_subcommands().front()->help();
			}
			return kSuccess;
		}
		err << "error: " << e.what() << "\n";
		return kUsageError;
	}

	try {
		Config cfg;
		if (!config_path.empty()) {
			cfg = parse_config(config_path);
		} else if (fit->parsed()) {
			throw ConfigError("fit needs --config");
		} else if (sim->parsed() || study->parsed()) {
			cfg = scenario_config(ScenarioConfig{});
		}
		if (iterations) cfg.run.iterations = *iterations;
		if (burn_in) cfg.run.burn_in = *burn_in;
		if (thin) cfg.run.thin = *thin;
		if (chains) cfg.run.n_chains = *chains;
		if (seed) {
			cfg.run.seed = *seed;
			cfg.sim.scenario.seed = *seed;
		}
		if (truncation) cfg.spec.truncation = *truncation;
		if (subset) cfg.post.subset = *subset;
		if (level) cfg.post.level = *level;
		if (contrast_level) cfg.post.contrast_level = *contrast_level;
		if (reference) cfg.post.reference = *reference;
		if (reps) cfg.sim.reps = *reps;
		if (cfg.run.burn_in >= cfg.run.iterations) {
			throw ConfigError("burn-in (" + std::to_string(cfg.run.burn_in) + ") must be smaller than iterations (" +
			                  std::to_string(cfg.run.iterations) + ")");
		}
		std::ostream *progress = quiet ? nullptr : &err;
		{
			if (fit->parsed()) {
				const auto dirs = fit_command(cfg, data_path, out_dir, progress);
				for (const auto &d : dirs) out << "chain written to " << d.string() << "\n";
			} else if (post->parsed()) {
				const PostprocessResult r = postprocess_command(cfg, chain_dir, out_dir);
				out << "representative clustering with " << r.representative.k << " clusters written to " << out_dir
				    << "\n";
			} else if (sim->parsed()) {
				simulate_command(cfg, out_dir);
				out << "simulated data written to " << (fs::path(out_dir) / "data.csv").string() << "\n";
			} else if (study->parsed()) {
				study_command(cfg, out_dir, progress);
				out << "study written to " << out_dir << "\n";
			} else if (val->parsed()) {
				GirConfig gir;
				if (draws) gir.draws = *draws;
				if (seed) gir.seed = *seed;
				if (!validate_command(gir, out_dir, out)) {
					err << "error: sampler validation failed\n";
					return kNumericalError;
				}
			}
		}
	} catch (const std::exception &e) {
		const int code = exit_code_for(e);
		err << "error: " << e.what() << "\n";
		std::error_code ec;
		if (!out_dir.empty() && (fs::is_directory(out_dir, ec) || fs::create_directories(out_dir, ec))) {
			const json j = {{"error", error_kind(e)}, {"message", e.what()}, {"exit_code", code}};
			std::ofstream f(fs::path(out_dir) / "error.json");
			f << j.dump(2) << "\n";
		}
		return code;
	}
	return kSuccess;
}

} // namespace plmm::cli
