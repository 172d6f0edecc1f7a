#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "plmm/cli/commands.hpp"
#include "plmm/cli/config.hpp"
#include "plmm/cli/csv.hpp"
#include "plmm/errors.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using plmm::cli::parse_config_text;

namespace {

std::string slurp(const fs::path &p) {
	std::ifstream in(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cli(std::vector<std::string> args, std::string *out_text = nullptr, std::string *err_text = nullptr) {
	args.insert(args.begin(), "plmm");
	std::vector<const char *> argv;
	for (const auto &a : args) argv.push_back(a.c_str());
	std::ostringstream out, err;
	const int code = plmm::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
	if (out_text) *out_text = out.str();
	if (err_text) *err_text = err.str();
	return code;
}

int config_line(const std::string &text) {
	try {
		parse_config_text(text);
	} catch (const plmm::ConfigError &e) {
		return e.line();
	}
	return -1;
}

const char *kMinimal = "[model]\nx = x1\nu_cont = u1\n";

const char *kLayout = "[model]\nx = x1\nu_cont = u1\nu_cat = g\n";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("minimal configuration takes the defaults") {
	const auto cfg = parse_config_text(kMinimal);
	CHECK(cfg.spec.truncation == 60);
	CHECK(cfg.run.iterations == 15000);
	CHECK(cfg.run.burn_in == 5000);
	CHECK(cfg.run.thin == 1);
	CHECK(cfg.layout.outcome == "y");
	CHECK(cfg.spec.fe_cols == std::vector<int>{0});
	CHECK(cfg.hyper.psi_int.dim() == 1);
	CHECK(cfg.hyper.phi0.dim() == 1);
	CHECK(cfg.post.level == 0.95);
	CHECK(cfg.post.contrast_level == 0.90);
}

TEST_CASE("configuration errors cite the offending line") {
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\nC = 1\n") == 4);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\ncolour = red\n") == 4);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\n[nope]\n") == 4);
	CHECK(config_line("[model]\nx = x1\nx = x2\nu_cont = u1\n") == 3);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\n[run]\niterations = ten\n") == 5);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\n[priors]\nlambda = -1\n") == 5);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\n[run]\niterations = 10\nburn_in = 10\n") > 0);
	CHECK(config_line("[model]\nx = x1\nu_cont = u1\nint = x9\n") == 4);
	CHECK_THROWS_AS(parse_config_text("[model]\nx = x1\n"), plmm::ConfigError);
	CHECK(config_line(std::string(kMinimal) + "# comment\n[run]\nseed = 3 # trailing\n") == -1);
}

TEST_CASE("emitted configuration parses back to itself") {
	auto cfg = parse_config_text(std::string(kLayout) +
	                             "fe = intercept, x1\nre = intercept, spline\nC = 7\n[priors]\nlambda = 0.5\n"
	                             "psi_int = 2\n[run]\niterations = 30\nburn_in = 10\nseed = 42\n"
	                             "[postprocess]\nlevel = 0.8\n[simulation]\nm = 20\n");
	const std::string text = plmm::cli::emit_config(cfg);
	const auto back = parse_config_text(text);
	CHECK(plmm::cli::emit_config(back) == text);
	CHECK(back.layout == cfg.layout);
	CHECK(back.run == cfg.run);
	CHECK(back.post == cfg.post);
	CHECK(back.sim == cfg.sim);
	CHECK(back.spec.truncation == 7);
	CHECK(back.hyper.lambda == 0.5);
	CHECK(back.hyper.psi_int.matrix()(0, 0) == 2.0);
}

TEST_CASE("CSV ingestion encodes ids and categories by first appearance") {
	const auto cfg = parse_config_text(kLayout);
	const auto ing = plmm::cli::ingest_csv_text(
		"id,time,y,x1,u1,g\nA,1,0.5,1,0.1,red\nA,2,0.7,1,0.2,blue\nB,1,-1,\"2\",0.3,red\n", cfg.layout);
	CHECK(ing.data.n() == 3);
	CHECK(ing.data.n_individuals == 2);
	CHECK(ing.data.individual_of == std::vector<int>{0, 0, 1});
	CHECK(ing.id_labels == std::vector<std::string>{"A", "B"});
	CHECK(ing.category_labels[0] == std::vector<std::string>{"red", "blue"});
	CHECK(ing.data.u_cat(1, 0) == 1);
	CHECK(ing.data.x(2, 1) == 2.0);
	CHECK(ing.data.x(0, 0) == 1.0);
}

TEST_CASE("CSV errors cite the file row") {
	const auto cfg = parse_config_text(kMinimal);
	auto row_of = [&](const std::string &text) {
		try {
			plmm::cli::ingest_csv_text(text, cfg.layout);
		} catch (const plmm::DataError &e) {
			return e.row();
		}
		return -1L;
	};
	std::string text = "id,time,y,x1,u1\n";
	for (int r = 2; r <= 6; ++r) text += "a," + std::to_string(r) + ",1,0,0\n";
	CHECK(row_of(text) == -1);
	CHECK(row_of(text + "b,1,,0,0\n") == 7);
	CHECK(row_of(text + "a,3,1,0,0\n") == 7);
	CHECK(row_of(text + "b,1,1,zero,0\n") == 7);
	CHECK(row_of(text + "b,1,1,0\n") == 7);
	CHECK(row_of("id,time,y,x1\na,1,1,0\n") == 1);
	CHECK_THROWS_AS(plmm::cli::ingest_csv("/nonexistent/data.csv", cfg.layout), plmm::DataError);
}

TEST_CASE("simulated data written as CSV ingests to the same dataset") {
	plmm::ScenarioConfig sc;
	sc.m = 25;
	const auto s = plmm::generate_scenario(sc);
	const auto cfg = plmm::cli::scenario_config(sc);
	const auto dir = test::temp_dir("csv_rt");
	plmm::cli::write_dataset_csv(dir / "d.csv", s.data);
	const auto ing = plmm::cli::ingest_csv(dir / "d.csv", cfg.layout);
	CHECK(ing.data.y == s.data.y);
	CHECK(ing.data.time == s.data.time);
	CHECK(ing.data.u_cont == s.data.u_cont);
	CHECK(ing.data.individual_of == s.data.individual_of);
	CHECK(ing.data.x_names == s.data.x_names);
	CHECK((ing.data.x - s.data.x).cwiseAbs().maxCoeff() < 1e-14);
	CHECK(ing.data.x.leftCols(5) == s.data.x.leftCols(5));
}

TEST_CASE("command-line pipeline") {
	const auto dir = test::temp_dir("pipeline");
	plmm::ScenarioConfig sc;
	sc.m = 17;
	{
		std::ofstream(dir / "sim.ini") << plmm::cli::emit_config(plmm::cli::scenario_config(sc));
	}
	std::string out, err;
	REQUIRE(cli({"simulate", "--config", (dir / "sim.ini").string(), "--out", (dir / "sim").string()}, &out, &err) == 0);
	for (const char *f : {"data.csv", "truth.csv", "truth.json", "config.ini"}) CHECK(fs::exists(dir / "sim" / f));

	auto fit = [&](const fs::path &to) {
		return cli({"fit", "--config", (dir / "sim" / "config.ini").string(), "--data", (dir / "sim" / "data.csv").string(),
		            "--out", to.string(), "--iterations", "60", "--burn-in", "20", "-C", "6", "--quiet"},
		           &out, &err);
	};
	REQUIRE(fit(dir / "fit1") == 0);
	for (const char *f : {"effective_config.ini", "data_mapping.json", "diagnostics.json", "diagnostics.txt",
	                      "chain/meta", "chain/alloc", "chain/beta", "chain/traces.csv"}) {
		CHECK(fs::exists(dir / "fit1" / f));
	}
	const auto diag = nlohmann::json::parse(slurp(dir / "fit1" / "diagnostics.json"));
	CHECK(diag[0]["kept_draws"] == 40);
	const auto chain = plmm::ChainStore::load(dir / "fit1" / "chain");
	CHECK(chain.alloc.cols == 51);
	CHECK(chain.dims.clusters == 6);

	REQUIRE(fit(dir / "fit2") == 0);
	for (const auto &e : fs::directory_iterator(dir / "fit1" / "chain")) {
		CHECK(slurp(e.path()) == slurp(dir / "fit2" / "chain" / e.path().filename()));
	}

	REQUIRE(cli({"postprocess", "--config", (dir / "fit1" / "effective_config.ini").string(), "--chain",
	             (dir / "fit1" / "chain").string(), "--out", (dir / "post").string(), "--level", "0.5",
	             "--contrast-level", "0.8"},
	            &out, &err) == 0);
	for (const char *f : {"similarity.bin", "labels.csv", "fixed_effects.csv", "cluster_effects.csv",
	                      "cluster_profiles.csv", "contrasts.csv", "summary.json", "summary.txt"}) {
		CHECK(fs::exists(dir / "post" / f));
	}
	const auto summary = nlohmann::json::parse(slurp(dir / "post" / "summary.json"));
	CHECK(summary["level"] == 0.5);
	CHECK(summary["contrast_level"] == 0.8);
	const auto sim = plmm::read_similarity(dir / "post" / "similarity.bin");
	CHECK(sim.s.rows() == 51);
	CHECK(sim.s.diagonal().minCoeff() == 1.0);

	CHECK(cli({"fit", "--config", (dir / "sim" / "config.ini").string(), "--data", (dir / "sim" / "data.csv").string(),
	           "--out", (dir / "bad").string(), "--iterations", "10", "--burn-in", "10"},
	          &out, &err) == 1);
	CHECK(fs::exists(dir / "bad" / "error.json"));
	CHECK(nlohmann::json::parse(slurp(dir / "bad" / "error.json"))["exit_code"] == 1);

	{
		std::ofstream(dir / "broken.csv") << slurp(dir / "sim" / "data.csv") << "1,2.5,oops,0,0,0,0,0,0\n";
	}
	CHECK(cli({"fit", "--config", (dir / "sim" / "config.ini").string(), "--data", (dir / "broken.csv").string(),
	           "--out", (dir / "bad2").string(), "--quiet"},
	          &out, &err) == 2);
	CHECK(err.find("row 53") != std::string::npos);
	CHECK(nlohmann::json::parse(slurp(dir / "bad2" / "error.json"))["error"] == "data");

	CHECK(cli({"postprocess", "--chain", (dir / "nothing").string(), "--out", (dir / "bad3").string()}, &out, &err) ==
	      2);
	CHECK(cli({"postprocess", "--config", (dir / "fit1" / "effective_config.ini").string(), "--chain",
	           (dir / "fit1" / "chain").string(), "--out", (dir / "bad4").string(), "--reference", "99"},
	          &out, &err) == 1);
	CHECK(cli({"frobnicate"}, &out, &err) == 1);
	CHECK(cli({"fit", "--out", (dir / "x").string()}, &out, &err) == 1);
	CHECK(cli({"--help"}, &out, &err) == 0);
	CHECK(out.find("postprocess") != std::string::npos);
}

TEST_CASE("study command writes one row set per replicate") {
	const auto dir = test::temp_dir("study");
	plmm::ScenarioConfig sc;
	sc.m = 30;
	{
		std::ofstream(dir / "s.ini") << plmm::cli::emit_config(plmm::cli::scenario_config(sc));
	}
	REQUIRE(cli({"study", "--config", (dir / "s.ini").string(), "--out", (dir / "out").string(), "--reps", "2",
	             "--iterations", "40", "--burn-in", "10", "-C", "8", "--quiet"}) == 0);
	std::ifstream in(dir / "out" / "study_rows.csv");
	std::string line;
	std::getline(in, line);
	CHECK(line == "replicate,method,metric,value");
	int reps[3] = {0, 0, 0};
	while (std::getline(in, line)) ++reps[line[0] - '0'];
	CHECK(reps[1] == 18);
	CHECK(reps[2] == 18);
	CHECK(fs::exists(dir / "out" / "study_summary.txt"));
}

TEST_CASE("installed executable reports exit codes") {
	const auto dir = test::temp_dir("exe");
	const std::string exe = PLMM_CLI_PATH;
	CHECK(std::system((exe + " --help > " + (dir / "h.txt").string()).c_str()) == 0);
	const int rc = std::system((exe + " fit --out " + (dir / "o").string() + " --data " + exe + " 2> " +
	                            (dir / "e.txt").string())
	                               .c_str());
	CHECK(WEXITSTATUS(rc) == 1);
}

}
