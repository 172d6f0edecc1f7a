#include "plmm/gibbs.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "plmm/errors.hpp"

namespace plmm {

namespace {

template <typename F>
auto run_block(const char *name, F &&f) {
	try {
		return f();
	} catch (const Error &e) {
		throw NumericalError(std::string(name) + ": " + e.what());
	}
}

std::string matrix_text(const Eigen::MatrixXd &m) {
	std::vector<double> v(m.data(), m.data() + m.size());
	return join_numbers(v);
}

std::string vector_text(const Eigen::VectorXd &v) {
	return join_numbers(std::vector<double>(v.data(), v.data() + v.size()));
}

void write_meta(ChainStore &chain, const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
                std::uint64_t chain_index) {
	ChainMeta &m = chain.meta;
	m.set("seed", std::to_string(cfg.seed));
	m.set("chain_index", std::to_string(chain_index));
	m.set("iterations", static_cast<std::int64_t>(cfg.iterations));
	m.set("burn_in", static_cast<std::int64_t>(cfg.burn_in));
	m.set("thin", static_cast<std::int64_t>(cfg.thin));
	m.set("record_loglik", std::string(cfg.record_loglik ? "1" : "0"));
	m.set("spec_hash", std::to_string(fnv1a(model_fingerprint(views, hyper))));
	m.set("fe_cols", join_numbers(views.spec.fe_cols));
	m.set("re_cols", join_numbers(views.spec.re_cols));
	m.set("int_cols", join_numbers(views.spec.int_cols));
	m.set("standardize_u", std::string(views.spec.standardize_u ? "1" : "0"));
	m.set("standardize_x", std::string(views.spec.standardize_x ? "1" : "0"));
	m.set("u_center", vector_text(views.u_scaling.center));
	m.set("u_scale", vector_text(views.u_scaling.scale));
	m.set("x_center", vector_text(views.x_scaling.center));
	m.set("x_scale", vector_text(views.x_scaling.scale));
	m.set("x_constant", vector_text(views.x_scaling.constant_value));
}

void save_resume(ChainStore &chain, const ParameterState &state, const RngStream &rng, int done) {
	chain.resume_state = StateLayout{chain.dims}.flatten(state);
	chain.resume_alloc = state.z;
	chain.rng_state = rng.save_state();
	chain.meta.set("iterations_done", static_cast<std::int64_t>(done));
}

void iterate(ChainStore &chain, const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
             const ChainOptions &options, ParameterState &state, RngStream &rng, int from, int to) {
	for (int it = from; it <= to; ++it) {
		try {
			gibbs_step(views, hyper, state, rng, options.blocks, !options.freeze_allocations);
		} catch (const Error &e) {
			throw NumericalError("iteration " + std::to_string(it) + ", " + e.what());
		}
		if (it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
			const double ll = cfg.record_loglik ? complete_log_likelihood(views, state) : 0.0;
			chain.append(state, ll, cfg.record_loglik);
		}
		if (options.progress && cfg.progress_every > 0 && it % cfg.progress_every == 0) {
			*options.progress << "iter " << it << " nclus " << state.non_empty_clusters() << " zeta " << state.zeta
			                  << '\n';
		}
	}
	save_resume(chain, state, rng, to);
}

} // namespace

void RunConfig::validate() const {
	if (iterations < 1) {
		throw SpecError("iterations must be positive");
	}
	if (burn_in < 0 || burn_in >= iterations) {
		throw SpecError("burn-in must satisfy 0 <= burn_in < iterations");
	}
	if (thin < 1) {
		throw SpecError("thin must be at least 1");
	}
	if (n_chains < 1) {
		throw SpecError("at least one chain is required");
	}
}

void gibbs_step(const DesignViews &views, const Hyperparameters &hyper, ParameterState &state, RngStream &rng,
                const GibbsBlocks &blocks, bool update_z) {
	// a)
	state.theta_u = run_block("a) assignment parameters", [&] {
		return blocks.assignment(compute_cluster_stats(views, state.z), hyper, rng);
	});
	// b)
	BetaGamma bg = run_block("b) beta-gamma", [&] { return blocks.beta_gamma(views, state, hyper, rng); });
	state.beta = std::move(bg.beta);
	state.gamma = std::move(bg.gamma);
	state.sigma2 = run_block("b) sigma2", [&] { return blocks.sigma(views, state, hyper, rng); });
	state.eta = run_block("b) random effects", [&] { return blocks.random_effects(views, state, rng); });
	state.w_re = run_block("b) W_re", [&] { return blocks.wre(state.eta, hyper, rng); });
	state.w_int = run_block("b) W_int", [&] { return blocks.wint(state.gamma, hyper, rng); });
	// c)
	if (update_z) {
		state.z = run_block("c) allocations", [&] { return blocks.allocations(views, state, rng); });
	}
	StickDraw sd = run_block("c) weights", [&] { return blocks.weights(state.z, state.zeta, views.dims.clusters, rng); });
	state.sticks = std::move(sd.sticks);
	state.weights = std::move(sd.weights);
	state.zeta = run_block("c) concentration", [&] { return blocks.concentration(state.sticks, hyper, rng); });
}

double complete_log_likelihood(const DesignViews &views, const ParameterState &state) {
	double ll = 0.0;
	for (int i = 0; i < views.dims.n; ++i) {
		const auto c = static_cast<std::size_t>(state.z[static_cast<std::size_t>(i)]);
		const double mean = views.fe.row(i).dot(state.beta) +
		                    views.re.row(i).dot(state.eta[static_cast<std::size_t>(views.individual_of[static_cast<std::size_t>(i)])]) +
		                    views.interaction.row(i).dot(state.gamma[c]);
		ll += log_normal_density(views.y(i), mean, state.sigma2);
		const auto &t = state.theta_u[c];
		if (views.dims.q_cont > 0) {
			ll += log_mvn_density(views.u_cont.row(i).transpose(), t.mu, t.sigma);
		}
		for (std::size_t j = 0; j < t.phi.size(); ++j) {
			ll += std::log(t.phi[j](views.u_cat(i, static_cast<Eigen::Index>(j))));
		}
	}
	return ll;
}

ChainStore run_chain(const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
                     const ChainOptions &options, std::uint64_t chain_index) {
	cfg.validate();
	hyper.validate(views.dims.p_re, views.dims.p_int, views.dims.q_cont);
	RngStream rng(cfg.seed, chain_index);
	ParameterState state;
	if (options.initial_state) {
		state = *options.initial_state;
	} else {
		state = init_state(views, hyper, rng);
	}
	if (options.initial_z) {
		if (static_cast<int>(options.initial_z->size()) != views.dims.n) {
			throw SpecError("initial allocation length does not match the data");
		}
		state.z = *options.initial_z;
		state.theta_u = update_assignment_params(compute_cluster_stats(views, state.z), hyper, rng);
	}
	ChainStore chain(views.dims);
	write_meta(chain, views, hyper, cfg, chain_index);
	iterate(chain, views, hyper, cfg, options, state, rng, 1, cfg.iterations);
	return chain;
}

ChainStore run_chain(const LongitudinalDataset &data, const ModelSpec &spec, const Hyperparameters &hyper,
                     const RunConfig &cfg) {
	return run_chain(build_design_views(data, spec), hyper, cfg);
}

std::vector<ChainStore> run_chains(const DesignViews &views, const Hyperparameters &hyper, const RunConfig &cfg,
                                   const ChainOptions &options) {
	cfg.validate();
	std::vector<std::optional<ChainStore>> slots(static_cast<std::size_t>(cfg.n_chains));
	std::vector<std::exception_ptr> failures(slots.size());
	std::vector<std::thread> workers;
	for (std::size_t k = 0; k < slots.size(); ++k) {
		workers.emplace_back([&, k] {
			try {
				ChainOptions local = options;
				local.progress = k == 0 ? options.progress : nullptr;
				slots[k] = run_chain(views, hyper, cfg, local, k);
			} catch (...) {
				failures[k] = std::current_exception();
			}
		});
	}
	for (auto &w : workers) w.join();
	for (const auto &f : failures) {
		if (f) std::rethrow_exception(f);
	}
	std::vector<ChainStore> out;
	for (auto &s : slots) out.push_back(std::move(*s));
	return out;
}

void continue_chain(ChainStore &chain, const DesignViews &views, const Hyperparameters &hyper, int total_iterations,
                    const ChainOptions &options) {
	if (chain.resume_state.empty() || !chain.meta.has("iterations_done")) {
		throw DataError("chain holds no resumable state");
	}
	if (!(chain.dims == views.dims)) {
		throw SpecError("chain dimensions do not match the data and model");
	}
	if (chain.meta.get("spec_hash") != std::to_string(fnv1a(model_fingerprint(views, hyper)))) {
		throw SpecError("chain was produced under a different model or prior");
	}
	const int done = static_cast<int>(chain.meta.get_int("iterations_done"));
	if (total_iterations <= done) {
		throw SpecError("chain already has " + std::to_string(done) + " iterations");
	}
	RunConfig cfg;
	cfg.iterations = total_iterations;
	cfg.burn_in = static_cast<int>(chain.meta.get_int("burn_in"));
	cfg.thin = static_cast<int>(chain.meta.get_int("thin"));
	cfg.record_loglik = chain.meta.get("record_loglik") == "1";
	cfg.validate();
	ParameterState state = StateLayout{chain.dims}.unflatten(chain.resume_state, chain.resume_alloc);
	RngStream rng;
	rng.restore_state(chain.rng_state);
	chain.meta.set("iterations", static_cast<std::int64_t>(total_iterations));
	iterate(chain, views, hyper, cfg, options, state, rng, done + 1, total_iterations);
}

std::string model_fingerprint(const DesignViews &views, const Hyperparameters &hyper) {
	std::ostringstream out;
	const ModelDims &d = views.dims;
	out << "n=" << d.n << ";m=" << d.m << ";p_fe=" << d.p_fe << ";p_re=" << d.p_re << ";p_int=" << d.p_int
	    << ";q=" << d.q_cont << ";levels=" << join_numbers(d.cat_levels) << ";C=" << d.clusters;
	out << ";fe=" << join_numbers(views.spec.fe_cols) << ";re=" << join_numbers(views.spec.re_cols)
	    << ";int=" << join_numbers(views.spec.int_cols) << ";su=" << views.spec.standardize_u
	    << ";sx=" << views.spec.standardize_x;
	out << ";lambda=" << format_double(hyper.lambda) << ";a_sigma=" << format_double(hyper.a_sigma)
	    << ";b_sigma=" << format_double(hyper.b_sigma) << ";psi_re=" << matrix_text(hyper.psi_re.matrix())
	    << ";nu_re=" << format_double(hyper.nu_re) << ";psi_int=" << matrix_text(hyper.psi_int.matrix())
	    << ";nu_int=" << format_double(hyper.nu_int) << ";lambda0=" << format_double(hyper.lambda0)
	    << ";nu0=" << format_double(hyper.nu0) << ";phi0=" << matrix_text(hyper.phi0.matrix())
	    << ";alpha=" << format_double(hyper.alpha_dir) << ";a_zeta=" << format_double(hyper.a_zeta)
	    << ";b_zeta=" << format_double(hyper.b_zeta);
	return out.str();
}

double autocorrelation(const std::vector<double> &x, std::size_t lag) {
	const std::size_t n = x.size();
	if (n == 0 || lag >= n) {
		return 0.0;
	}
	double mean = 0.0;
	for (double v : x) mean += v;
	mean /= static_cast<double>(n);
	double c0 = 0.0;
	double ck = 0.0;
	for (std::size_t t = 0; t < n; ++t) {
		c0 += (x[t] - mean) * (x[t] - mean);
		if (t + lag < n) ck += (x[t] - mean) * (x[t + lag] - mean);
	}
	return c0 > 0.0 ? ck / c0 : 0.0;
}

double effective_sample_size(const std::vector<double> &x) {
	const std::size_t n = x.size();
	if (n == 0) {
		throw Error("effective sample size of an empty trace");
	}
	double mean = 0.0;
	for (double v : x) mean += v;
	mean /= static_cast<double>(n);
	auto autocov = [&](std::size_t lag) {
		double s = 0.0;
		for (std::size_t t = 0; t + lag < n; ++t) s += (x[t] - mean) * (x[t + lag] - mean);
		return s / static_cast<double>(n);
	};
	const double c0 = autocov(0);
	if (!(c0 > 1e-300 * (1.0 + mean * mean))) {
		return static_cast<double>(n);
	}
	double sum_pairs = 0.0;
	for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
		const double pair = autocov(2 * m) + autocov(2 * m + 1);
		if (pair <= 0.0) break;
		sum_pairs += pair;
	}
	const double tau = (-c0 + 2.0 * sum_pairs) / c0;
	return tau > 0.0 ? static_cast<double>(n) / tau : static_cast<double>(n);
}

TraceSummary summarize_trace(const std::string &name, const std::vector<double> &x) {
	if (x.empty()) {
		throw Error("trace '" + name + "' is empty");
	}
	TraceSummary s;
	s.name = name;
	s.length = x.size();
	for (double v : x) s.mean += v;
	s.mean /= static_cast<double>(x.size());
	double ss = 0.0;
	for (double v : x) ss += (v - s.mean) * (v - s.mean);
	s.sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
	s.lag1 = autocorrelation(x, 1);
	s.ess = effective_sample_size(x);
	return s;
}

DiagnosticsReport diagnostics(const ChainStore &chain) {
	if (chain.draws() == 0) {
		throw Error("chain holds no kept draws");
	}
	DiagnosticsReport r;
	r.zeta = summarize_trace("zeta", chain.trace_zeta);
	r.sigma2 = summarize_trace("sigma2", chain.sigma2.data);
	r.nclus = summarize_trace("nclus", std::vector<double>(chain.trace_nclus.begin(), chain.trace_nclus.end()));
	return r;
}

} // namespace plmm
