#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixcut/em.hpp"
#include "mixcut/errors.hpp"
#include "mixcut/filter.hpp"
#include "mixcut/models/conjugate.hpp"
#include "mixcut/models/continuous.hpp"
#include "mixcut/models/discrete.hpp"
#include "mixcut/transform.hpp"

namespace mixcut {

inline constexpr const char* tool_version = "0.1.0";

// FNV-1a over the canonical (key-sorted) config dump; stamped into manifests so
// reruns can verify they used the same configuration.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        require(ok, "config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw contract_error("config: key '" + key + "' has the wrong type");
    }
}

inline models::PriorBox get_box(const nlohmann::json& j, const std::string& key,
                                models::PriorBox fallback) {
    if (!j.contains(key)) return fallback;
    const auto arr = j.at(key).get<std::vector<double>>();
    require(arr.size() == 2 && arr[0] < arr[1],
            "config: prior box '" + key + "' must be [lo, hi] with lo < hi");
    return {arr[0], arr[1]};
}

}  // namespace detail

struct RunConfig {
    std::uint64_t seed = 0;

    std::string model_kind;  // "conjugate", "continuous", "discrete", or "" for external tables
    models::ConjugateSpec conjugate;
    models::ContinuousPrior continuous_prior;
    int cont_t_days = 250, cont_m = 20, cont_i_steps = 100;
    models::DiscretePrior discrete_prior;
    int disc_t_days = 1000;
    std::map<std::string, double> model_params;  // fixed values for panel simulation

    int n_sims = 10000;
    int param_count = -1;  // derived from the model kind unless set explicitly

    FitConfig fit;

    std::vector<std::string> phi_names, eta_names, s1_names, s2_names;
    std::map<std::string, double> s_obs;  // original scale, keyed by column label

    double alpha = 0.05;
    int n_ref = 1000;
    double gamma_grid_step = 0.01;
    double gamma = -1.0;  // < 0 means "not set"

    int n_samples = 10000;
    int grid_points = 512;

    FilterOptions filter;
    int holdout = 50;
    int forecast_draws = 20;
    int thin_per_cloud = 32;

    nlohmann::json raw;

    int derived_param_count() const {
        if (param_count >= 0) return param_count;
        if (model_kind == "conjugate") return 2;
        if (model_kind == "continuous") return 10;
        if (model_kind == "discrete") return 11;
        throw contract_error("config: param_count is required when no builtin model is named");
    }

    std::string config_hash() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(raw.dump())));
        return buf;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        require(j.is_object(), "config: top level must be a JSON object");
        detail::check_keys(j, {"seed", "model", "n_sims", "param_count", "fit", "problem",
                               "s_obs", "conflict", "gamma", "posterior", "forecast"},
                           "top level");
        RunConfig c;
        c.raw = j;
        c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
        if (j.contains("model")) {
            const auto& jm = j.at("model");
            detail::check_keys(jm,
                               {"kind", "phi_mean", "phi_sd", "eta_mean", "eta_sd", "z_noise_sd",
                                "w_noise_sd", "n_z", "n_w", "t_days", "m", "i_steps", "priors",
                                "params"},
                               "model");
            if (jm.contains("params")) {
                require(jm.at("params").is_object(),
                        "config: model.params must be an object of name -> value");
                for (const auto& [key, value] : jm.at("params").items()) {
                    require(value.is_number(),
                            "config: model.params entry '" + key + "' must be a number");
                    c.model_params[key] = value.get<double>();
                }
            }
            c.model_kind = detail::get_or<std::string>(jm, "kind", "");
            if (c.model_kind == "conjugate") {
                auto& s = c.conjugate;
                s.phi_mean = detail::get_or(jm, "phi_mean", s.phi_mean);
                s.phi_sd = detail::get_or(jm, "phi_sd", s.phi_sd);
                s.eta_mean = detail::get_or(jm, "eta_mean", s.eta_mean);
                s.eta_sd = detail::get_or(jm, "eta_sd", s.eta_sd);
                s.z_noise_sd = detail::get_or(jm, "z_noise_sd", s.z_noise_sd);
                s.w_noise_sd = detail::get_or(jm, "w_noise_sd", s.w_noise_sd);
                s.n_z = detail::get_or(jm, "n_z", s.n_z);
                s.n_w = detail::get_or(jm, "n_w", s.n_w);
                s.validate();
            } else if (c.model_kind == "continuous") {
                c.cont_t_days = detail::get_or(jm, "t_days", c.cont_t_days);
                c.cont_m = detail::get_or(jm, "m", c.cont_m);
                c.cont_i_steps = detail::get_or(jm, "i_steps", c.cont_i_steps);
                if (jm.contains("priors")) {
                    const auto& jp = jm.at("priors");
                    auto& p = c.continuous_prior;
                    detail::check_keys(jp,
                                       {"mu_p", "kappa", "alpha", "sigma_v", "rho", "mu_z",
                                        "sigma_z", "d", "tau"},
                                       "model.priors");
                    p.mu_p = detail::get_box(jp, "mu_p", p.mu_p);
                    p.kappa = detail::get_box(jp, "kappa", p.kappa);
                    p.alpha = detail::get_box(jp, "alpha", p.alpha);
                    p.sigma_v = detail::get_box(jp, "sigma_v", p.sigma_v);
                    p.rho = detail::get_box(jp, "rho", p.rho);
                    p.mu_z = detail::get_box(jp, "mu_z", p.mu_z);
                    p.sigma_z = detail::get_box(jp, "sigma_z", p.sigma_z);
                    p.d = detail::get_box(jp, "d", p.d);
                    p.tau = detail::get_box(jp, "tau", p.tau);
                }
            } else if (c.model_kind == "discrete") {
                c.disc_t_days = detail::get_or(jm, "t_days", c.disc_t_days);
                if (jm.contains("priors")) {
                    const auto& jp = jm.at("priors");
                    auto& p = c.discrete_prior;
                    detail::check_keys(jp,
                                       {"mu_z", "sigma_z", "d", "tau", "omega", "rho", "sigma_h",
                                        "alpha", "psi1", "sigma_bv"},
                                       "model.priors");
                    p.mu_z = detail::get_box(jp, "mu_z", p.mu_z);
                    p.sigma_z = detail::get_box(jp, "sigma_z", p.sigma_z);
                    p.d = detail::get_box(jp, "d", p.d);
                    p.tau = detail::get_box(jp, "tau", p.tau);
                    p.omega = detail::get_box(jp, "omega", p.omega);
                    p.rho = detail::get_box(jp, "rho", p.rho);
                    p.sigma_h = detail::get_box(jp, "sigma_h", p.sigma_h);
                    p.alpha = detail::get_box(jp, "alpha", p.alpha);
                    p.psi1 = detail::get_box(jp, "psi1", p.psi1);
                    p.sigma_bv = detail::get_box(jp, "sigma_bv", p.sigma_bv);
                }
            } else if (!c.model_kind.empty()) {
                throw contract_error("config: unknown model kind '" + c.model_kind +
                                     "' (expected conjugate, continuous, or discrete)");
            }
        }
        c.n_sims = detail::get_or(j, "n_sims", c.n_sims);
        require(c.n_sims >= 1, "config: n_sims must be >= 1");
        c.param_count = detail::get_or(j, "param_count", c.param_count);
        if (j.contains("fit")) {
            const auto& jf = j.at("fit");
            detail::check_keys(jf, {"j_max", "n_restarts", "em_tol", "em_max_iter", "ridge"},
                               "fit");
            c.fit.j_max = detail::get_or(jf, "j_max", c.fit.j_max);
            c.fit.n_restarts = detail::get_or(jf, "n_restarts", c.fit.n_restarts);
            c.fit.em_tol = detail::get_or(jf, "em_tol", c.fit.em_tol);
            c.fit.em_max_iter = detail::get_or(jf, "em_max_iter", c.fit.em_max_iter);
            c.fit.ridge = detail::get_or(jf, "ridge", c.fit.ridge);
            c.fit.validate();
        }
        if (j.contains("problem")) {
            const auto& jp = j.at("problem");
            detail::check_keys(jp, {"phi", "eta", "s1", "s2"}, "problem");
            c.phi_names = detail::get_or<std::vector<std::string>>(jp, "phi", {});
            c.eta_names = detail::get_or<std::vector<std::string>>(jp, "eta", {});
            c.s1_names = detail::get_or<std::vector<std::string>>(jp, "s1", {});
            c.s2_names = detail::get_or<std::vector<std::string>>(jp, "s2", {});
        }
        if (j.contains("s_obs")) {
            require(j.at("s_obs").is_object(),
                    "config: s_obs must be an object of label -> value");
            for (const auto& [key, value] : j.at("s_obs").items()) {
                require(value.is_number(), "config: s_obs entry '" + key + "' must be a number");
                c.s_obs[key] = value.get<double>();
            }
        }
        if (j.contains("conflict")) {
            const auto& jc = j.at("conflict");
            detail::check_keys(jc, {"alpha", "n_ref", "grid_step"}, "conflict");
            c.alpha = detail::get_or(jc, "alpha", c.alpha);
            c.n_ref = detail::get_or(jc, "n_ref", c.n_ref);
            c.gamma_grid_step = detail::get_or(jc, "grid_step", c.gamma_grid_step);
            require(c.alpha > 0.0 && c.alpha < 1.0, "config: conflict.alpha must lie in (0,1)");
            require(c.n_ref >= 1, "config: conflict.n_ref must be >= 1");
            require(c.gamma_grid_step > 0.0 && c.gamma_grid_step <= 1.0,
                    "config: conflict.grid_step must lie in (0,1]");
        }
        c.gamma = detail::get_or(j, "gamma", c.gamma);
        if (j.contains("gamma"))
            require(c.gamma >= 0.0 && c.gamma <= 1.0, "config: gamma must lie in [0,1]");
        if (j.contains("posterior")) {
            const auto& jp = j.at("posterior");
            detail::check_keys(jp, {"n_samples", "grid_points"}, "posterior");
            c.n_samples = detail::get_or(jp, "n_samples", c.n_samples);
            c.grid_points = detail::get_or(jp, "grid_points", c.grid_points);
            require(c.n_samples >= 1, "config: posterior.n_samples must be >= 1");
            require(c.grid_points >= 16, "config: posterior.grid_points must be >= 16");
        }
        if (j.contains("forecast")) {
            const auto& jf = j.at("forecast");
            detail::check_keys(jf,
                               {"particles", "ess_fraction", "systematic_resampling",
                                "use_return_measurement", "holdout", "draws", "thin_per_cloud"},
                               "forecast");
            c.filter.particles = detail::get_or(jf, "particles", c.filter.particles);
            c.filter.ess_fraction = detail::get_or(jf, "ess_fraction", c.filter.ess_fraction);
            c.filter.systematic_resampling =
                detail::get_or(jf, "systematic_resampling", c.filter.systematic_resampling);
            c.filter.use_return_measurement =
                detail::get_or(jf, "use_return_measurement", c.filter.use_return_measurement);
            c.holdout = detail::get_or(jf, "holdout", c.holdout);
            c.forecast_draws = detail::get_or(jf, "draws", c.forecast_draws);
            c.thin_per_cloud = detail::get_or(jf, "thin_per_cloud", c.thin_per_cloud);
            c.filter.validate();
            require(c.holdout >= 1, "config: forecast.holdout must be >= 1");
            require(c.forecast_draws >= 1, "config: forecast.draws must be >= 1");
        }
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw contract_error("cannot open config '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw contract_error("config '" + path + "' is not valid JSON: " + e.what());
        }
        return from_json(j);
    }

    // Analytic prior CDFs for the parameter columns of the builtin models. The
    // continuous and discrete betas depend on tau, so their marginal prior is not
    // uniform and they fall back to the smoothed empirical CDF.
    std::map<std::string, PriorCdf> analytic_cdfs() const {
        std::map<std::string, PriorCdf> m;
        auto uni = [](const models::PriorBox& b) {
            return PriorCdf{CdfKind::uniform, b.lo, b.hi};
        };
        if (model_kind == "conjugate") {
            m["phi"] = PriorCdf{CdfKind::gaussian, conjugate.phi_mean, conjugate.phi_sd};
            m["eta"] = PriorCdf{CdfKind::gaussian, conjugate.eta_mean, conjugate.eta_sd};
        } else if (model_kind == "continuous") {
            const auto& p = continuous_prior;
            m["mu_p"] = uni(p.mu_p);
            m["kappa"] = uni(p.kappa);
            m["alpha"] = uni(p.alpha);
            m["sigma_v"] = uni(p.sigma_v);
            m["rho"] = uni(p.rho);
            m["mu_z"] = uni(p.mu_z);
            m["sigma_z"] = uni(p.sigma_z);
            m["d"] = uni(p.d);
            m["tau"] = uni(p.tau);
        } else if (model_kind == "discrete") {
            const auto& p = discrete_prior;
            m["mu_z"] = uni(p.mu_z);
            m["sigma_z"] = uni(p.sigma_z);
            m["d"] = uni(p.d);
            m["tau"] = uni(p.tau);
            m["omega"] = uni(p.omega);
            m["rho"] = uni(p.rho);
            m["sigma_h"] = uni(p.sigma_h);
            m["alpha"] = uni(p.alpha);
            m["psi1"] = uni(p.psi1);
            m["sigma_bv"] = uni(p.sigma_bv);
        }
        return m;
    }
};

}  // namespace mixcut
