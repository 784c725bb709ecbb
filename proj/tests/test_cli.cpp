#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using Catch::Matchers::WithinAbs;

namespace {

const std::string cli = MIXCUT_CLI_PATH;

fs::path sandbox() {
    static const fs::path root = [] {
        const fs::path p =
            fs::temp_directory_path() / ("mixcut_cli_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run(const std::string& args) {
    static int counter = 0;
    const fs::path log = sandbox() / ("log_" + std::to_string(counter++) + ".txt");
    const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
    REQUIRE(out.good());
}

long line_count(const fs::path& p) {
    const std::string s = slurp(p);
    long n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

// The conjugate pipeline is run once and shared across test cases.
struct Pipeline {
    fs::path cfg_file, sim, fit, full, cut, smi0, check, choose;

    Pipeline() {
        const fs::path root = sandbox();
        cfg_file = root / "conjugate.json";
        spit(cfg_file, R"({
            "seed": 4242,
            "model": {"kind": "conjugate"},
            "n_sims": 4000,
            "fit": {"j_max": 2, "n_restarts": 2},
            "problem": {"phi": ["phi"], "eta": ["eta"], "s1": ["zbar"], "s2": ["wbar"]},
            "s_obs": {"zbar": 0.3, "wbar": 1.2},
            "conflict": {"alpha": 0.05, "n_ref": 60, "grid_step": 0.25},
            "posterior": {"n_samples": 2000, "grid_points": 128}
        })");
        sim = root / "sim";
        fit = root / "fit";
        full = root / "full";
        cut = root / "cut";
        smi0 = root / "smi0";
        check = root / "check";
        choose = root / "choose";
        const std::string c = " --config " + cfg_file.string();
        REQUIRE(run("simulate" + c + " --out " + sim.string()) == 0);
        REQUIRE(run("fit" + c + " --out " + fit.string() + " --table " +
                    (sim / "table.csv").string()) == 0);
        const std::string fd = " --fit-dir " + fit.string();
        REQUIRE(run("posterior" + c + fd + " --out " + full.string()) == 0);
        REQUIRE(run("cut" + c + fd + " --out " + cut.string()) == 0);
        REQUIRE(run("smi" + c + fd + " --gamma 0 --out " + smi0.string()) == 0);
        REQUIRE(run("check" + c + fd + " --out " + check.string()) == 0);
        REQUIRE(run("choose-gamma" + c + fd + " --out " + choose.string()) == 0);
    }

    static const Pipeline& get() {
        static Pipeline p;
        return p;
    }
};

}  // namespace

TEST_CASE("simulate writes the table and a manifest that pins the run") {
    const Pipeline& p = Pipeline::get();
    REQUIRE(line_count(p.sim / "table.csv") == 4001);  // header + n_sims rows
    const json m = load_json(p.sim / "manifest.json");
    REQUIRE(m.at("tool") == "mixcut 0.1.0");
    REQUIRE(m.at("command") == "simulate");
    REQUIRE(m.at("seed") == 4242);
    REQUIRE(m.at("config_hash").get<std::string>().size() == 16);
    REQUIRE(m.at("outputs") == json::array({"table.csv"}));
}

TEST_CASE("reruns are byte identical and thread count does not matter") {
    const Pipeline& p = Pipeline::get();
    const fs::path again = sandbox() / "sim_again";
    const std::string c = " --config " + p.cfg_file.string();
    REQUIRE(run("simulate" + c + " --threads 3 --out " + again.string()) == 0);
    REQUIRE(slurp(p.sim / "table.csv") == slurp(again / "table.csv"));
    REQUIRE(load_json(p.sim / "manifest.json").at("config_hash") ==
            load_json(again / "manifest.json").at("config_hash"));
}

TEST_CASE("the seed flag overrides the config and changes the draws") {
    const Pipeline& p = Pipeline::get();
    const fs::path other = sandbox() / "sim_seed7";
    const std::string c = " --config " + p.cfg_file.string();
    REQUIRE(run("simulate" + c + " --seed 7 --out " + other.string()) == 0);
    REQUIRE(load_json(other / "manifest.json").at("seed") == 7);
    REQUIRE(slurp(p.sim / "table.csv") != slurp(other / "table.csv"));
}

TEST_CASE("fit emits a versioned mixture with selection diagnostics") {
    const Pipeline& p = Pipeline::get();
    const json mix = load_json(p.fit / "mixture.json");
    REQUIRE(mix.at("version") == 1);
    const json diag = load_json(p.fit / "fit.json");
    REQUIRE(diag.at("j_fitted").get<int>() >= 1);
    REQUIRE(diag.at("n_rows") == 4000);
    REQUIRE(diag.at("bic_curve").size() >= 1);
    REQUIRE(load_json(p.fit / "transform.json").at("version") == 1);
}

TEST_CASE("posterior outputs samples, summaries, and normalized density grids") {
    const Pipeline& p = Pipeline::get();
    REQUIRE(line_count(p.full / "samples.csv") == 2001);
    const json s = load_json(p.full / "summary.json");
    REQUIRE(s.at("posterior") == "full");
    REQUIRE(std::isfinite(s.at("parameters").at("phi").at("mean").get<double>()));
    REQUIRE(s.at("parameters").at("eta").at("sd").get<double>() > 0.0);

    // The grid spans the 0.001..0.999 quantiles of the marginal, so the
    // trapezoid integral recovers 0.998 of the mass.
    for (const char* name : {"density_phi.csv", "density_eta.csv"}) {
        std::ifstream in(p.full / name);
        REQUIRE(in.good());
        std::string header;
        std::getline(in, header);
        REQUIRE(header == "x,density");
        std::vector<double> xs, ds;
        double x, d;
        char comma;
        while (in >> x >> comma >> d) {
            xs.push_back(x);
            ds.push_back(d);
        }
        REQUIRE(xs.size() == 128);
        double integral = 0.0;
        for (std::size_t i = 1; i < xs.size(); ++i)
            integral += 0.5 * (ds[i] + ds[i - 1]) * (xs[i] - xs[i - 1]);
        REQUIRE_THAT(integral, WithinAbs(0.998, 0.0030));
    }
}

TEST_CASE("smi at gamma zero reproduces the cut posterior byte for byte") {
    const Pipeline& p = Pipeline::get();
    REQUIRE(slurp(p.cut / "samples.csv") == slurp(p.smi0 / "samples.csv"));
    const json s = load_json(p.smi0 / "summary.json");
    REQUIRE(s.at("posterior") == "smi");
    REQUIRE(s.at("gamma") == 0.0);
}

TEST_CASE("check and choose-gamma agree on the conflict summary") {
    const Pipeline& p = Pipeline::get();
    const json c = load_json(p.check / "conflict.json");
    REQUIRE(c.at("observed_stat").get<double>() >= 0.0);
    const double tail = c.at("tail_p").get<double>();
    REQUIRE(tail > 0.0);
    REQUIRE(tail <= 1.0);
    REQUIRE(line_count(p.check / "reference_stats.csv") == 61);  // header + n_ref

    const json g = load_json(p.choose / "conflict.json");
    const double gamma_star = g.at("gamma_star").get<double>();
    REQUIRE(gamma_star >= 0.0);
    REQUIRE(gamma_star <= 1.0);
    // both commands run the same derived seed, so the observed stat matches
    REQUIRE(g.at("observed_stat") == c.at("observed_stat"));
    REQUIRE(g.at("tail_p") == c.at("tail_p"));

    std::ifstream curve(p.choose / "curve.csv");
    std::string header, first;
    std::getline(curve, header);
    std::getline(curve, first);
    REQUIRE(header == "gamma,observed,tail_p");
    REQUIRE(first == "0,0,1");  // no pooling, no conflict, tail probability one
    REQUIRE(line_count(p.choose / "curve.csv") == 6);  // header + 5 grid points
}

TEST_CASE("discrete panel and prior table feed the forecast command") {
    const fs::path root = sandbox();
    const fs::path cfg_file = root / "discrete.json";
    spit(cfg_file, R"({
        "seed": 99,
        "model": {"kind": "discrete", "t_days": 150,
                  "params": {"mu_z": -0.5, "sigma_z": 0.8, "d": 0.03, "beta": 0.3,
                              "tau": 0.2, "omega": -0.3, "rho": 0.95, "sigma_h": 0.2,
                              "alpha": 1.9, "psi1": 1.0, "sigma_bv": 0.3}},
        "n_sims": 50,
        "forecast": {"particles": 64, "holdout": 5, "draws": 3, "thin_per_cloud": 8}
    })");
    const std::string c = " --config " + cfg_file.string();

    const fs::path table_dir = root / "dtable", panel_dir = root / "dpanel",
                   latent_dir = root / "dlatent", fc_dir = root / "dforecast";
    REQUIRE(run("simulate" + c + " --out " + table_dir.string()) == 0);
    REQUIRE(line_count(table_dir / "table.csv") == 51);

    REQUIRE(run("simulate --panel" + c + " --out " + panel_dir.string()) == 0);
    REQUIRE(line_count(panel_dir / "panel.csv") == 151);
    std::ifstream ph(panel_dir / "panel.csv");
    std::string header;
    std::getline(ph, header);
    REQUIRE(header == "r,log_bv");

    REQUIRE(run("simulate --panel --with-latents" + c + " --out " + latent_dir.string()) == 0);
    std::ifstream lh(latent_dir / "panel.csv");
    std::getline(lh, header);
    REQUIRE(header == "r,log_bv,h,delta,jump");

    REQUIRE(run("forecast" + c + " --samples " + (table_dir / "table.csv").string() +
                " --data " + (panel_dir / "panel.csv").string() + " --out " +
                fc_dir.string()) == 0);
    REQUIRE(line_count(fc_dir / "scores.csv") == 6);  // header + holdout rows
    const json s = load_json(fc_dir / "scores.json");
    REQUIRE(s.at("holdout") == 5);
    REQUIRE(s.at("draws") == 3);
    REQUIRE(std::isfinite(s.at("mean").at("ls_r").get<double>()));
    REQUIRE(std::isfinite(s.at("mean").at("crps_bv").get<double>()));
}

TEST_CASE("contract violations exit with status two") {
    const fs::path root = sandbox();
    const fs::path bad_key = root / "bad_key.json";
    spit(bad_key, R"({"seed": 1, "modell": {"kind": "conjugate"}})");
    REQUIRE(run("simulate --config " + bad_key.string() + " --out " +
                (root / "x1").string()) == 2);

    const fs::path not_json = root / "not_json.json";
    spit(not_json, "seed = 1\n");
    REQUIRE(run("simulate --config " + not_json.string() + " --out " +
                (root / "x2").string()) == 2);

    const fs::path bad_kind = root / "bad_kind.json";
    spit(bad_kind, R"({"seed": 1, "model": {"kind": "quantum"}})");
    REQUIRE(run("simulate --config " + bad_kind.string() + " --out " +
                (root / "x3").string()) == 2);

    // a mixture file from the future must be rejected, not misread
    const Pipeline& p = Pipeline::get();
    const fs::path fit_bad = root / "fit_bad";
    fs::create_directories(fit_bad);
    json mix = load_json(p.fit / "mixture.json");
    mix["version"] = 99;
    spit(fit_bad / "mixture.json", mix.dump());
    fs::copy_file(p.fit / "transform.json", fit_bad / "transform.json",
                  fs::copy_options::overwrite_existing);
    REQUIRE(run("posterior --config " + p.cfg_file.string() + " --fit-dir " +
                fit_bad.string() + " --out " + (root / "x4").string()) == 2);

    // missing required flags are a usage error, not a crash
    REQUIRE(run("posterior") != 0);
}

TEST_CASE("numerical failures exit with status three") {
    const fs::path root = sandbox();
    const fs::path cfg_file = root / "explosive.json";
    // every draw of the beta box explodes long before forty days, so the per
    // row retry budget runs out and the tool reports a numerical failure
    spit(cfg_file, R"({
        "seed": 3,
        "model": {"kind": "continuous", "t_days": 40, "m": 4, "i_steps": 40},
        "n_sims": 2
    })");
    REQUIRE(run("simulate --config " + cfg_file.string() + " --out " +
                (root / "x5").string()) == 3);
}
