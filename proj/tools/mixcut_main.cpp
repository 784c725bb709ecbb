// Command-line front end: simulate joint tables, fit the mixture surrogate, and
// produce full / cut / semi-modular posteriors, conflict checks, and rolling
// forecast scores. Every command writes a manifest that pins the configuration
// hash and seed, so a rerun with the same inputs is bit-for-bit identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixcut/em.hpp"
#include "mixcut/errors.hpp"
#include "mixcut/forecast.hpp"
#include "mixcut/gmm.hpp"
#include "mixcut/modular.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/run_config.hpp"
#include "mixcut/sim_table.hpp"
#include "mixcut/transform.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    auto* out = cmd->add_option("--out", args.out_dir, "output directory");
    if (out_required) out->required();
    cmd->add_option("--seed", args.seed_override, "override the config seed");
    cmd->add_option("--threads", args.threads, "cap worker threads (0 = hardware)");
}

mixcut::RunConfig load_config(const CommonArgs& args) {
    mixcut::RunConfig cfg = mixcut::RunConfig::load(args.config_path);
    if (args.seed_override) {
        cfg.seed = *args.seed_override;
        cfg.raw["seed"] = *args.seed_override;
    }
    mixcut::set_thread_cap(args.threads);
    return cfg;
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw mixcut::contract_error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw mixcut::contract_error("write to '" + path.string() + "' failed");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw mixcut::contract_error("cannot open '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw mixcut::contract_error("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const mixcut::RunConfig& cfg, const std::map<std::string, std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json m;
    m["tool"] = std::string("mixcut ") + mixcut::tool_version;
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["config_hash"] = cfg.config_hash();
    m["config"] = cfg.raw;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_json_file(out_dir / "manifest.json", m);
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw mixcut::contract_error("cannot create output directory '" + dir + "'");
    return p;
}

// ---- simulate ----

// Fixed parameter values for panel simulation, taken from config model.params
// with the struct defaults filling any gap.
mixcut::models::DiscreteTimeParams discrete_params_from(
    const std::map<std::string, double>& m) {
    mixcut::models::DiscreteTimeParams p;
    for (const auto& [key, value] : m) {
        if (key == "mu_z") p.mu_z = value;
        else if (key == "sigma_z") p.sigma_z = value;
        else if (key == "d") p.d = value;
        else if (key == "tau") p.tau = value;
        else if (key == "beta") p.beta = value;
        else if (key == "omega") p.omega = value;
        else if (key == "rho") p.rho = value;
        else if (key == "sigma_h") p.sigma_h = value;
        else if (key == "alpha") p.alpha = value;
        else if (key == "psi0") p.psi0 = value;
        else if (key == "psi1") p.psi1 = value;
        else if (key == "sigma_bv") p.sigma_bv = value;
        else
            throw mixcut::contract_error("config: model.params has no discrete parameter '" +
                                         key + "'");
    }
    p.validate();
    return p;
}

mixcut::models::ContTimeParams continuous_params_from(const std::map<std::string, double>& m) {
    mixcut::models::ContTimeParams p;
    for (const auto& [key, value] : m) {
        if (key == "mu_p") p.mu_p = value;
        else if (key == "kappa") p.kappa = value;
        else if (key == "alpha") p.alpha = value;
        else if (key == "sigma_v") p.sigma_v = value;
        else if (key == "rho") p.rho = value;
        else if (key == "mu_z") p.mu_z = value;
        else if (key == "sigma_z") p.sigma_z = value;
        else if (key == "d") p.d = value;
        else if (key == "tau") p.tau = value;
        else if (key == "beta") p.beta = value;
        else
            throw mixcut::contract_error("config: model.params has no continuous parameter '" +
                                         key + "'");
    }
    p.validate();
    return p;
}

// One observed series at fixed parameters, one row per day, for feeding the
// forecast command. Latents are only available for the discrete model.
int write_panel(const mixcut::RunConfig& cfg, const fs::path& out, bool with_latents) {
    std::ofstream csv(out / "panel.csv");
    if (!csv) throw mixcut::contract_error("cannot open panel.csv for writing");
    char buf[192];
    long days = 0;
    if (cfg.model_kind == "discrete") {
        const auto par = discrete_params_from(cfg.model_params);
        const mixcut::models::DiscretePath path =
            mixcut::models::simulate_discrete(par, cfg.disc_t_days, cfg.seed);
        csv << (with_latents ? "r,log_bv,h,delta,jump\n" : "r,log_bv\n");
        for (Eigen::Index t = 0; t < path.r.size(); ++t) {
            if (with_latents)
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", path.r(t),
                              path.log_bv(t), path.h(t), path.delta(t), path.jumps(t));
            else
                std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", path.r(t), path.log_bv(t));
            csv << buf;
        }
        days = path.r.size();
    } else if (cfg.model_kind == "continuous") {
        mixcut::require(!with_latents,
                        "simulate: --with-latents is only available for the discrete model");
        const auto par = continuous_params_from(cfg.model_params);
        const mixcut::models::IntradayPanel panel = mixcut::models::simulate_continuous(
            par, cfg.cont_t_days, cfg.cont_m, cfg.cont_i_steps, cfg.seed);
        const Eigen::VectorXd daily = panel.daily();
        csv << "r,log_bv\n";
        for (int t = 0; t < panel.days(); ++t) {
            const double b = std::max(mixcut::models::bv(panel, t), 1e-12);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", daily(t), std::log(b));
            csv << buf;
        }
        days = panel.days();
    } else {
        throw mixcut::contract_error(
            "simulate: --panel needs model kind discrete or continuous");
    }
    write_manifest(out, "simulate", cfg, {}, {"panel.csv"});
    std::cout << "simulate: wrote a " << days << " day panel to "
              << (out / "panel.csv").string() << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args, bool panel, bool with_latents) {
    const mixcut::RunConfig cfg = load_config(args);
    const fs::path out = ensure_out_dir(args.out_dir);
    if (panel) return write_panel(cfg, out, with_latents);
    mixcut::require(!with_latents, "simulate: --with-latents requires --panel");
    mixcut::SimTable table;
    if (cfg.model_kind == "conjugate") {
        table = mixcut::models::conjugate_prior_table(cfg.conjugate, cfg.n_sims, cfg.seed);
    } else if (cfg.model_kind == "continuous") {
        mixcut::models::ContinuousTableDiagnostics diag;
        table = mixcut::models::continuous_prior_table(cfg.continuous_prior, cfg.n_sims,
                                                       cfg.cont_t_days, cfg.cont_m,
                                                       cfg.cont_i_steps, cfg.seed, &diag);
        json d;
        d["prior_retries"] = diag.retries;
        d["floored_bv"] = diag.floored_bv;
        d["total_jumps"] = diag.total_jumps;
        write_json_file(out / "simulate_diagnostics.json", d);
    } else if (cfg.model_kind == "discrete") {
        table = mixcut::models::discrete_prior_table(cfg.discrete_prior, cfg.n_sims,
                                                     cfg.disc_t_days, cfg.seed);
    } else {
        throw mixcut::contract_error(
            "simulate: config must name a builtin model kind (conjugate, continuous, discrete)");
    }
    table.write_csv((out / "table.csv").string());
    write_manifest(out, "simulate", cfg, {}, {"table.csv"});
    std::cout << "simulate: wrote " << table.rows() << " rows x " << table.cols()
              << " cols to " << (out / "table.csv").string() << "\n";
    return 0;
}

// ---- fit ----

int cmd_fit(const CommonArgs& args, const std::string& table_path) {
    const mixcut::RunConfig cfg = load_config(args);
    const fs::path out = ensure_out_dir(args.out_dir);
    mixcut::SimTable table = mixcut::SimTable::read_csv(table_path, cfg.derived_param_count());
    if (table.is_underpowered())
        std::cerr << "warning: table has " << table.rows() << " rows for " << table.cols()
                  << " columns; the fit may be unstable\n";
    const mixcut::MarginalTransform tf = mixcut::build_transform(table, cfg.analytic_cdfs());
    std::vector<long> clamps;
    const mixcut::SimTable normal = mixcut::to_normal(table, tf, &clamps);
    mixcut::FitConfig fit_cfg = cfg.fit;
    fit_cfg.seed = mixcut::derive_seed(cfg.seed, 0xf17);
    const mixcut::ModelSelection sel = mixcut::select_model(normal, fit_cfg);

    write_json_file(out / "transform.json", tf.to_json());
    write_json_file(out / "mixture.json", sel.mixture.to_json());
    json diag;
    diag["j_requested"] = sel.j_requested;
    diag["j_fitted"] = sel.mixture.size();
    diag["bic"] = sel.bic;
    diag["loglik"] = sel.best.loglik;
    diag["em_iters"] = sel.best.iters;
    diag["collapsed_components"] = sel.best.collapsed_components;
    diag["monotonicity_violations"] = sel.best.monotonicity_violations;
    diag["worst_loglik_drift"] = sel.best.worst_drift;
    json curve = json::array();
    for (const auto& [jreq, bic] : sel.bic_curve) curve.push_back({{"j", jreq}, {"bic", bic}});
    diag["bic_curve"] = curve;
    diag["fit_errors"] = sel.fit_errors;
    json jclamps = json::object();
    for (int i = 0; i < table.cols(); ++i)
        jclamps[table.labels[static_cast<std::size_t>(i)]] =
            clamps[static_cast<std::size_t>(i)];
    diag["cdf_clamps"] = jclamps;
    diag["n_rows"] = table.rows();
    diag["underpowered"] = table.is_underpowered();
    write_json_file(out / "fit.json", diag);
    write_manifest(out, "fit", cfg, {{"table", table_path}},
                   {"transform.json", "mixture.json", "fit.json"});
    std::cout << "fit: selected " << sel.mixture.size() << " components (bic " << sel.bic
              << ") from " << table.rows() << " rows\n";
    return 0;
}

// ---- shared posterior plumbing ----

struct FittedInputs {
    mixcut::GaussianMixture mixture;
    mixcut::MarginalTransform tf;
    mixcut::ModularProblem prob;
    Eigen::VectorXd s_obs_normal;
    std::vector<std::string> s_labels;  // s1 then s2

    FittedInputs(const mixcut::RunConfig& cfg, const std::string& fit_dir)
        : mixture(mixcut::GaussianMixture::from_json(read_json_file(fs::path(fit_dir) /
                                                                    "mixture.json"))),
          tf(mixcut::MarginalTransform::from_json(
              read_json_file(fs::path(fit_dir) / "transform.json"))) {
        mixcut::require(!cfg.phi_names.empty(),
                        "config: problem.phi is required for this command");
        mixcut::require(!cfg.s1_names.empty(),
                        "config: problem.s1 is required for this command");
        prob = mixcut::ModularProblem::by_names(mixture.labels(), cfg.derived_param_count(),
                                                cfg.phi_names, cfg.eta_names, cfg.s1_names,
                                                cfg.s2_names);
        s_labels = cfg.s1_names;
        s_labels.insert(s_labels.end(), cfg.s2_names.begin(), cfg.s2_names.end());
        s_obs_normal.resize(static_cast<Eigen::Index>(s_labels.size()));
        for (std::size_t i = 0; i < s_labels.size(); ++i) {
            const auto it = cfg.s_obs.find(s_labels[i]);
            mixcut::require(it != cfg.s_obs.end(),
                            "config: s_obs is missing a value for '" + s_labels[i] + "'");
            s_obs_normal(static_cast<Eigen::Index>(i)) =
                tf.var(s_labels[i]).to_normal(it->second);
        }
    }
};

void write_samples_csv(const fs::path& path, const std::vector<std::string>& labels,
                       const Eigen::MatrixXd& normal_rows, const mixcut::MarginalTransform& tf) {
    mixcut::SimTable t;
    t.labels = labels;
    t.values = normal_rows;
    t.param_count = static_cast<int>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& v = tf.var(labels[i]);
        for (Eigen::Index r = 0; r < t.values.rows(); ++r)
            t.values(r, static_cast<Eigen::Index>(i)) =
                v.from_normal(t.values(r, static_cast<Eigen::Index>(i)));
    }
    t.write_csv(path.string());
}

double mix1d_cdf(const mixcut::GaussianMixture& m, double z) {
    double acc = 0.0;
    for (const auto& c : m.components())
        acc += c.weight * mixcut::norm_cdf((z - c.mean(0)) / std::sqrt(c.cov(0, 0)));
    return acc;
}

// Density grid on the original scale for one parameter: evenly spaced x between
// the marginal's 0.001 and 0.999 quantiles, density = (mixture density on the
// normal scale) * dz/dx.
void write_density_grid(const fs::path& path, const mixcut::VariableTransform& var,
                        int grid_points, const std::function<double(double)>& log_density_z,
                        const std::function<double(double)>& cdf_z) {
    const auto quantile_z = [&](double p) {
        double lo = -8.0, hi = 8.0;
        while (cdf_z(lo) > p) lo *= 2.0;
        while (cdf_z(hi) < p) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            (cdf_z(mid) < p ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double z_lo = var.from_normal(quantile_z(0.001));
    const double z_hi = var.from_normal(quantile_z(0.999));
    std::ofstream out(path);
    if (!out) throw mixcut::contract_error("cannot open '" + path.string() + "' for writing");
    out << "x,density\n";
    char buf[96];
    for (int k = 0; k < grid_points; ++k) {
        const double x = z_lo + (z_hi - z_lo) * k / (grid_points - 1.0);
        const double z = var.to_normal(x);
        const double dens = std::exp(log_density_z(z)) * var.dz_dx(x);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", x, dens);
        out << buf;
    }
}

json sample_summary(const std::vector<std::string>& labels, const fs::path& samples_csv) {
    const mixcut::SimTable t =
        mixcut::SimTable::read_csv(samples_csv.string(), static_cast<int>(labels.size()));
    json s = json::object();
    for (int i = 0; i < t.cols(); ++i) {
        const Eigen::VectorXd col = t.values.col(i);
        s[t.labels[static_cast<std::size_t>(i)]] = {
            {"mean", col.mean()}, {"sd", mixcut::sd_sample(col)}};
    }
    return s;
}

// kind: 0 = full, 1 = cut, 2 = smi
int cmd_posterior(const CommonArgs& args, const std::string& fit_dir, int kind,
                  std::optional<double> gamma_flag) {
    const mixcut::RunConfig cfg = load_config(args);
    const fs::path out = ensure_out_dir(args.out_dir);
    const FittedInputs in(cfg, fit_dir);
    const std::uint64_t sample_seed = mixcut::derive_seed(cfg.seed, 0x9a3);

    std::vector<std::string> param_labels;
    for (int k : in.prob.phi) param_labels.push_back(in.mixture.labels()[static_cast<std::size_t>(k)]);
    for (int k : in.prob.eta) param_labels.push_back(in.mixture.labels()[static_cast<std::size_t>(k)]);

    Eigen::MatrixXd draws;
    std::string name;
    double gamma_used = 1.0;
    std::optional<mixcut::CutPosterior> two_stage;
    std::optional<mixcut::GaussianMixture> full;
    if (kind == 0) {
        name = "full";
        full = mixcut::full_posterior(in.mixture, in.prob, in.s_obs_normal);
        draws = full->sample(cfg.n_samples, sample_seed);
    } else {
        if (kind == 1) {
            name = "cut";
            gamma_used = 0.0;
            two_stage = mixcut::cut_posterior(in.mixture, in.prob, in.s_obs_normal);
        } else {
            name = "smi";
            double g = gamma_flag ? *gamma_flag : cfg.gamma;
            mixcut::require(
                g >= 0.0 && g <= 1.0,
                "smi: gamma must be given (config key 'gamma' or --gamma) and lie in [0,1]");
            gamma_used = g;
            two_stage = mixcut::smi_posterior(in.mixture, in.prob, in.s_obs_normal, g);
        }
        draws = two_stage->sample(cfg.n_samples, sample_seed);
    }

    write_samples_csv(out / "samples.csv", param_labels, draws, in.tf);

    // Per-parameter density grids. phi coordinates (and everything in the full
    // posterior) marginalize exactly; cut/smi eta coordinates average the
    // conditional over a thinned set of phi draws.
    std::vector<std::string> outputs = {"samples.csv", "summary.json"};
    const int nphi = in.prob.phi_dim();
    for (std::size_t i = 0; i < param_labels.size(); ++i) {
        const auto& var = in.tf.var(param_labels[i]);
        const std::string fname = "density_" + param_labels[i] + ".csv";
        std::function<double(double)> logd;
        std::function<double(double)> cdf;
        if (kind == 0 || static_cast<int>(i) < nphi) {
            auto marg = std::make_shared<mixcut::GaussianMixture>(
                kind == 0 ? full->marginalize({static_cast<int>(i)})
                          : two_stage->phi_marginal().marginalize({static_cast<int>(i)}));
            logd = [marg](double z) {
                Eigen::VectorXd v(1);
                v(0) = z;
                return marg->log_density(v);
            };
            cdf = [marg](double z) { return mix1d_cdf(*marg, z); };
        } else {
            const int eta_coord = static_cast<int>(i) - nphi;
            const int n_thin = std::min<int>(512, static_cast<int>(draws.rows()));
            auto mixes = std::make_shared<std::vector<mixcut::GaussianMixture>>();
            for (int r = 0; r < n_thin; ++r) {
                const Eigen::Index row =
                    static_cast<Eigen::Index>(static_cast<double>(r) * draws.rows() / n_thin);
                mixes->push_back(
                    two_stage->eta_mixture(draws.row(row).head(nphi).transpose())
                        .marginalize({eta_coord}));
            }
            logd = [mixes](double z) {
                Eigen::VectorXd v(1);
                v(0) = z;
                std::vector<double> terms;
                terms.reserve(mixes->size());
                for (const auto& m : *mixes) terms.push_back(m.log_density(v));
                return mixcut::logsumexp(terms) - std::log(static_cast<double>(mixes->size()));
            };
            cdf = [mixes](double z) {
                double acc = 0.0;
                for (const auto& m : *mixes) acc += mix1d_cdf(m, z);
                return acc / static_cast<double>(mixes->size());
            };
        }
        write_density_grid(out / fname, var, cfg.grid_points, logd, cdf);
        outputs.push_back(fname);
    }

    json summary;
    summary["posterior"] = name;
    summary["gamma"] = gamma_used;
    summary["n_samples"] = cfg.n_samples;
    summary["seed"] = cfg.seed;
    summary["parameters"] = sample_summary(param_labels, out / "samples.csv");
    write_json_file(out / "summary.json", summary);
    write_manifest(out, name, cfg, {{"fit_dir", fit_dir}}, outputs);
    std::cout << name << ": wrote " << cfg.n_samples << " samples for "
              << param_labels.size() << " parameters\n";
    return 0;
}

// ---- conflict commands ----

int cmd_check(const CommonArgs& args, const std::string& fit_dir, bool choose) {
    const mixcut::RunConfig cfg = load_config(args);
    const fs::path out = ensure_out_dir(args.out_dir);
    const FittedInputs in(cfg, fit_dir);
    const std::uint64_t conflict_seed = mixcut::derive_seed(cfg.seed, 0xc0f);

    json summary;
    summary["alpha"] = cfg.alpha;
    summary["n_ref"] = cfg.n_ref;
    summary["seed"] = cfg.seed;
    std::vector<std::string> outputs = {"conflict.json"};
    if (!choose) {
        const mixcut::ConflictResult res = mixcut::conflict_check(
            in.mixture, in.prob, in.s_obs_normal, cfg.n_ref, conflict_seed);
        summary["observed_stat"] = res.observed_stat;
        summary["tail_p"] = res.tail_p;
        std::ofstream refs(out / "reference_stats.csv");
        refs << "stat\n";
        char buf[48];
        for (double g : res.reference_stats) {
            std::snprintf(buf, sizeof buf, "%.17g\n", g);
            refs << buf;
        }
        outputs.push_back("reference_stats.csv");
        std::cout << "check: observed " << res.observed_stat << ", tail p " << res.tail_p
                  << "\n";
    } else {
        const int steps = static_cast<int>(std::lround(1.0 / cfg.gamma_grid_step));
        mixcut::require(steps >= 1 &&
                            std::abs(steps * cfg.gamma_grid_step - 1.0) < 1e-9,
                        "conflict.gamma_grid_step must divide 1 evenly");
        std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
        for (int k = 0; k <= steps; ++k)
            grid[static_cast<std::size_t>(k)] = std::min(1.0, k * cfg.gamma_grid_step);
        grid.front() = 0.0;
        grid.back() = 1.0;
        const mixcut::GammaChoice choice = mixcut::choose_gamma(
            in.mixture, in.prob, in.s_obs_normal, cfg.alpha, grid, cfg.n_ref, conflict_seed);
        summary["gamma_star"] = choice.gamma_star;
        summary["observed_stat"] = choice.curve.back().observed;
        summary["tail_p"] = choice.curve.back().tail_p;
        std::ofstream cur(out / "curve.csv");
        cur << "gamma,observed,tail_p\n";
        char buf[96];
        for (const auto& pt : choice.curve) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pt.gamma, pt.observed,
                          pt.tail_p);
            cur << buf;
        }
        outputs.push_back("curve.csv");
        std::cout << "choose-gamma: gamma* = " << choice.gamma_star << " (tail p at 1: "
                  << choice.curve.back().tail_p << ")\n";
    }
    write_json_file(out / "conflict.json", summary);
    write_manifest(out, choose ? "choose-gamma" : "check", cfg, {{"fit_dir", fit_dir}}, outputs);
    return 0;
}

// ---- forecast ----

int cmd_forecast(const CommonArgs& args, const std::string& samples_path,
                 const std::string& data_path) {
    const mixcut::RunConfig cfg = load_config(args);
    const fs::path out = ensure_out_dir(args.out_dir);
    const auto& labels = mixcut::models::discrete_param_labels();
    const mixcut::SimTable samples =
        mixcut::SimTable::read_csv(samples_path, static_cast<int>(labels.size()));
    const mixcut::SimTable data = mixcut::SimTable::read_csv(data_path, 0);
    const int rcol = data.column_index("r");
    const int bvcol = data.column_index("log_bv");
    Eigen::MatrixXd y(data.rows(), 2);
    y.col(0) = data.values.col(rcol);
    y.col(1) = data.values.col(bvcol);

    std::vector<int> param_cols;
    for (const auto& l : labels) param_cols.push_back(samples.column_index(l));
    const int s_count = std::min(cfg.forecast_draws, samples.rows());
    std::vector<mixcut::models::DiscreteTimeParams> draws;
    draws.reserve(static_cast<std::size_t>(s_count));
    for (int s = 0; s < s_count; ++s) {
        // evenly spaced rows of the posterior sample
        const auto row = static_cast<Eigen::Index>(
            static_cast<double>(s) * samples.rows() / s_count);
        mixcut::models::DiscreteTimeParams p;
        p.mu_z = samples.values(row, param_cols[0]);
        p.sigma_z = samples.values(row, param_cols[1]);
        p.d = samples.values(row, param_cols[2]);
        p.tau = samples.values(row, param_cols[3]);
        p.beta = samples.values(row, param_cols[4]);
        p.omega = samples.values(row, param_cols[5]);
        p.rho = samples.values(row, param_cols[6]);
        p.sigma_h = samples.values(row, param_cols[7]);
        p.alpha = samples.values(row, param_cols[8]);
        p.psi1 = samples.values(row, param_cols[9]);
        p.sigma_bv = samples.values(row, param_cols[10]);
        p.validate();
        draws.push_back(p);
    }

    const mixcut::RollingScores scores = mixcut::rolling_evaluation(
        draws, y, cfg.holdout, cfg.filter, mixcut::derive_seed(cfg.seed, 0xfc7),
        cfg.thin_per_cloud);

    std::ofstream sc(out / "scores.csv");
    sc << "step,ls_r,qs_r,crps_r,ls_bv,qs_bv,crps_bv\n";
    char buf[192];
    for (Eigen::Index k = 0; k < scores.per_step.rows(); ++k) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(k), scores.per_step(k, 0), scores.per_step(k, 1),
                      scores.per_step(k, 2), scores.per_step(k, 3), scores.per_step(k, 4),
                      scores.per_step(k, 5));
        sc << buf;
    }
    json js;
    js["holdout"] = cfg.holdout;
    js["draws"] = s_count;
    js["particles"] = cfg.filter.particles;
    js["resamples"] = scores.resamples;
    js["mean"] = {{"ls_r", scores.mean(0)},   {"qs_r", scores.mean(1)},
                  {"crps_r", scores.mean(2)}, {"ls_bv", scores.mean(3)},
                  {"qs_bv", scores.mean(4)},  {"crps_bv", scores.mean(5)}};
    write_json_file(out / "scores.json", js);
    write_manifest(out, "forecast", cfg, {{"samples", samples_path}, {"data", data_path}},
                   {"scores.csv", "scores.json"});
    std::cout << "forecast: mean log score (r) " << scores.mean(0) << " over " << cfg.holdout
              << " steps\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation-based modular inference with Gaussian mixtures"};
    app.require_subcommand(1);

    CommonArgs sim_args, fit_args, full_args, cut_args, smi_args, check_args, choose_args,
        fc_args;
    std::string table_path, fit_dir_full, fit_dir_cut, fit_dir_smi, fit_dir_check,
        fit_dir_choose, samples_path, data_path;
    std::optional<double> gamma_flag;

    bool panel = false, with_latents = false;
    auto* sim = app.add_subcommand("simulate", "draw a joint (parameters, summaries) table");
    add_common(sim, sim_args);
    sim->add_flag("--panel", panel,
                  "simulate one observed series at fixed model.params instead of a prior table");
    sim->add_flag("--with-latents", with_latents, "include latent columns in the panel");

    auto* fit = app.add_subcommand("fit", "fit the mixture surrogate to a table");
    add_common(fit, fit_args);
    fit->add_option("--table", table_path, "input table CSV")->required();

    auto* post = app.add_subcommand("posterior", "full-feedback posterior");
    add_common(post, full_args);
    post->add_option("--fit-dir", fit_dir_full, "directory with mixture.json/transform.json")
        ->required();

    auto* cut = app.add_subcommand("cut", "cut posterior (no feedback)");
    add_common(cut, cut_args);
    cut->add_option("--fit-dir", fit_dir_cut, "directory with mixture.json/transform.json")
        ->required();

    auto* smi = app.add_subcommand("smi", "semi-modular posterior");
    add_common(smi, smi_args);
    smi->add_option("--fit-dir", fit_dir_smi, "directory with mixture.json/transform.json")
        ->required();
    smi->add_option("--gamma", gamma_flag, "influence parameter in [0,1]");

    auto* chk = app.add_subcommand("check", "prior-predictive conflict check");
    add_common(chk, check_args);
    chk->add_option("--fit-dir", fit_dir_check, "directory with mixture.json/transform.json")
        ->required();

    auto* chog = app.add_subcommand("choose-gamma", "pick the influence parameter");
    add_common(chog, choose_args);
    chog->add_option("--fit-dir", fit_dir_choose, "directory with mixture.json/transform.json")
        ->required();

    auto* fc = app.add_subcommand("forecast", "rolling one-step forecast scores");
    add_common(fc, fc_args);
    fc->add_option("--samples", samples_path, "posterior samples CSV (original scale)")
        ->required();
    fc->add_option("--data", data_path, "observed series CSV with columns r, log_bv")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(sim_args, panel, with_latents);
        if (fit->parsed()) return cmd_fit(fit_args, table_path);
        if (post->parsed()) return cmd_posterior(full_args, fit_dir_full, 0, std::nullopt);
        if (cut->parsed()) return cmd_posterior(cut_args, fit_dir_cut, 1, std::nullopt);
        if (smi->parsed()) return cmd_posterior(smi_args, fit_dir_smi, 2, gamma_flag);
        if (chk->parsed()) return cmd_check(check_args, fit_dir_check, false);
        if (chog->parsed()) return cmd_check(choose_args, fit_dir_choose, true);
        if (fc->parsed()) return cmd_forecast(fc_args, samples_path, data_path);
    } catch (const mixcut::contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const mixcut::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
