#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"
#include "mixcut/models/prior_box.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/rng.hpp"
#include "mixcut/sim_table.hpp"

namespace mixcut::models {

// Jump-diffusion for log price p and log variance V with a self-exciting jump
// intensity delta, discretized by Euler steps of size 1/I per day:
//   dp = mu_p dt + exp(V/2) dW_p + Z dN,          Z ~ N(mu_z, sigma_z^2)
//   dV = kappa (alpha - V) dt + sigma_v dW_v,     corr(dW_p, dW_v) = rho
//   delta_{i+1} = delta_i + (d + beta delta_i)/I + tau dN_i
// The intensity recursion is as displayed; with beta above zero it grows without
// bound on long horizons, so prior draws are rejected and retried when delta/I
// leaves the Bernoulli range mid-run.
struct ContTimeParams {
    double mu_p = 0.0, kappa = 0.2, alpha = 0.5, sigma_v = 0.5, rho = -0.3;
    double mu_z = 0.0, sigma_z = 1.0;
    double d = 0.05, beta = 0.0, tau = 0.0;

    void validate() const {
        // Deliberately weaker than the prior boxes: degenerate settings like
        // tau = beta = 0 or sigma_z = 0 are legitimate test configurations.
        require(sigma_v > 0.0, "continuous params: sigma_v must be positive");
        require(sigma_z >= 0.0, "continuous params: sigma_z must be nonnegative");
        require(rho >= -1.0 && rho <= 0.0, "continuous params: rho must lie in [-1,0]");
        require(kappa >= 0.0, "continuous params: kappa must be nonnegative");
        require(d >= 0.0 && tau >= 0.0 && beta >= 0.0,
                "continuous params: d, tau, beta must be nonnegative");
    }
};

struct IntradayPanel {
    Eigen::MatrixXd intraday;  // T x M coarse returns
    long jump_count = 0;

    int days() const { return static_cast<int>(intraday.rows()); }
    int per_day() const { return static_cast<int>(intraday.cols()); }
    Eigen::VectorXd daily() const { return intraday.rowwise().sum(); }
};

inline IntradayPanel simulate_continuous(const ContTimeParams& par, int t_days, int m, int i_steps,
                                         std::uint64_t seed) {
    par.validate();
    require(t_days >= 1, "simulate_continuous: need at least 1 day");
    require(m >= 2, "simulate_continuous: need at least 2 intraday returns per day");
    require(i_steps >= m && i_steps % m == 0,
            "simulate_continuous: fine steps per day must be a positive multiple of the "
            "intraday return count");
    const double dt = 1.0 / i_steps;
    const double sqdt = std::sqrt(dt);
    const double rho_c = std::sqrt(1.0 - par.rho * par.rho);
    const int per_bucket = i_steps / m;

    // Separate streams so the diffusion path is unchanged by jump activity.
    Rng diff_rng(derive_seed(seed, 1));
    Rng jump_rng(derive_seed(seed, 2));

    IntradayPanel panel;
    panel.intraday = Eigen::MatrixXd::Zero(t_days, m);
    double v = par.alpha;   // start log variance at its long-run mean
    double delta = par.d;   // intensity starts at the base daily rate
    for (int t = 0; t < t_days; ++t) {
        for (int i = 0; i < i_steps; ++i) {
            const double jump_prob = delta * dt;
            if (jump_prob > 1.0)
                throw numeric_error(
                    "simulate_continuous: jump intensity overflow on day " + std::to_string(t) +
                    ", step " + std::to_string(i) + " (delta/I = " + std::to_string(jump_prob) +
                    "); parameters are outside the stable region");
            const bool jump = rbernoulli(jump_rng, jump_prob);
            double z = 0.0;
            if (jump) {
                z = rnorm(jump_rng, par.mu_z, par.sigma_z);
                ++panel.jump_count;
            }
            const double ep = rnorm(diff_rng);
            const double ev = rnorm(diff_rng);
            const double r_inc = par.mu_p * dt + std::exp(0.5 * v) * sqdt * ep + z;
            panel.intraday(t, i / per_bucket) += r_inc;
            v += par.kappa * (par.alpha - v) * dt + par.sigma_v * sqdt * (par.rho * ep + rho_c * ev);
            delta += (par.d + par.beta * delta) * dt + par.tau * (jump ? 1.0 : 0.0);
        }
    }
    return panel;
}

inline double rv(const IntradayPanel& panel, int t) {
    require(t >= 0 && t < panel.days(), "rv: day index out of range");
    return panel.intraday.row(t).squaredNorm();
}

// Bipower variation, robust to jumps: scaled sum of adjacent absolute products.
inline double bv(const IntradayPanel& panel, int t) {
    require(t >= 0 && t < panel.days(), "bv: day index out of range");
    const int m = panel.per_day();
    require(m >= 2, "bv: needs at least 2 intraday returns");
    double s = 0.0;
    for (int i = 1; i < m; ++i)
        s += std::abs(panel.intraday(t, i)) * std::abs(panel.intraday(t, i - 1));
    const double half_pi = 1.5707963267948966;
    return half_pi * (static_cast<double>(m) / (m - 1)) * s;
}

// Jump variation: the non-negative part of RV - BV.
inline double jv(const IntradayPanel& panel, int t) {
    return std::max(rv(panel, t) - bv(panel, t), 0.0);
}

inline constexpr double bv_log_floor = 1e-12;

// Five jump-focused summaries: signed jump scale, JV variance and lag-1
// autocovariance (population convention), and the shape of log BV. BV is floored
// at 1e-12 before the log; `floored`, when given, counts how often that bit.
inline Eigen::VectorXd jump_summaries(const IntradayPanel& panel, long* floored = nullptr) {
    const int t_days = panel.days();
    require(t_days >= 3, "jump_summaries: need at least 3 days");
    const Eigen::VectorXd r = panel.daily();
    Eigen::VectorXd jv_series(t_days), log_bv(t_days), signed_jump(t_days);
    long floor_count = 0;
    for (int t = 0; t < t_days; ++t) {
        const double bvt = bv(panel, t);
        const double jvt = jv(panel, t);
        jv_series(t) = jvt;
        double b = bvt;
        if (b < bv_log_floor) {
            b = bv_log_floor;
            ++floor_count;
        }
        log_bv(t) = std::log(b);
        const double sgn = r(t) > 0.0 ? 1.0 : (r(t) < 0.0 ? -1.0 : 0.0);
        signed_jump(t) = sgn * std::sqrt(jvt);
    }
    if (floored) *floored += floor_count;
    Eigen::VectorXd s(5);
    s(0) = signed_jump.mean();
    s(1) = var_pop(jv_series);
    s(2) = autocov1_pop(jv_series);
    s(3) = skewness_of(log_bv);
    s(4) = kurtosis_of(log_bv);
    return s;
}

// Five plain return-moment summaries for the second summary block: mean,
// variance, skewness, kurtosis of daily returns and the lag-1 autocorrelation of
// their absolute values.
inline Eigen::VectorXd return_moment_summaries(const Eigen::VectorXd& r) {
    require(r.size() >= 3, "return_moment_summaries: need at least 3 returns");
    Eigen::VectorXd s(5);
    s(0) = r.mean();
    s(1) = var_pop(r);
    s(2) = skewness_of(r);
    s(3) = kurtosis_of(r);
    s(4) = autocorr1(r.cwiseAbs());
    return s;
}

// Independent uniform boxes; beta is uniform on (0.5, 1 - tau) given tau.
struct ContinuousPrior {
    PriorBox mu_p{-0.1, 0.1};
    PriorBox kappa{0.05, 0.5};
    PriorBox alpha{-1.0, 3.0};
    PriorBox sigma_v{0.001, 1.99};
    PriorBox rho{-0.7, 0.0};
    PriorBox mu_z{-1.0, 1.0};
    PriorBox sigma_z{0.0, 3.0};
    PriorBox d{0.01, 0.2};
    PriorBox tau{0.001, 0.2};
};

inline ContTimeParams sample_continuous_prior(const ContinuousPrior& prior, Rng& rng) {
    ContTimeParams p;
    p.mu_p = runif(rng, prior.mu_p.lo, prior.mu_p.hi);
    p.kappa = runif(rng, prior.kappa.lo, prior.kappa.hi);
    p.alpha = runif(rng, prior.alpha.lo, prior.alpha.hi);
    p.sigma_v = runif(rng, prior.sigma_v.lo, prior.sigma_v.hi);
    p.rho = runif(rng, prior.rho.lo, prior.rho.hi);
    p.mu_z = runif(rng, prior.mu_z.lo, prior.mu_z.hi);
    p.sigma_z = runif(rng, prior.sigma_z.lo, prior.sigma_z.hi);
    p.d = runif(rng, prior.d.lo, prior.d.hi);
    p.tau = runif(rng, prior.tau.lo, prior.tau.hi);
    p.beta = runif(rng, 0.5, 1.0 - p.tau);
    return p;
}

inline const std::vector<std::string>& continuous_param_labels() {
    static const std::vector<std::string> labels = {"mu_p", "kappa", "alpha", "sigma_v", "rho",
                                                    "mu_z", "sigma_z", "d",     "tau",     "beta"};
    return labels;
}

inline const std::vector<std::string>& continuous_summary_labels() {
    static const std::vector<std::string> labels = {"sj_mean", "jv_var",  "jv_acov", "lbv_skew",
                                                    "lbv_kurt", "r_mean", "r_var",   "r_skew",
                                                    "r_kurt",   "absr_ac1"};
    return labels;
}

struct ContinuousTableDiagnostics {
    long retries = 0;       // prior draws rejected for intensity overflow
    long floored_bv = 0;    // BV values floored before the log
    long total_jumps = 0;
};

// Prior-predictive table for the continuous model: 10 parameter columns, then
// the 5 jump summaries (s1 block) and 5 return-moment summaries (s2 block).
// Rows whose intensity path overflows get a fresh prior draw, up to 100 tries.
inline SimTable continuous_prior_table(const ContinuousPrior& prior, int n, int t_days, int m,
                                       int i_steps, std::uint64_t seed,
                                       ContinuousTableDiagnostics* diag = nullptr) {
    require(n >= 1, "continuous_prior_table: n must be >= 1");
    SimTable table;
    table.labels = continuous_param_labels();
    for (const auto& s : continuous_summary_labels()) table.labels.push_back(s);
    table.param_count = 10;
    table.values.resize(n, 20);
    std::atomic<long> retries{0}, floored{0}, jumps{0};
    parallel_for(n, [&](std::int64_t row) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(row) * 101 +
                                          static_cast<std::uint64_t>(attempt)));
            const ContTimeParams par = sample_continuous_prior(prior, rng);
            IntradayPanel panel;
            try {
                panel = simulate_continuous(par, t_days, m, i_steps, rng());
            } catch (const numeric_error&) {
                retries.fetch_add(1, std::memory_order_relaxed);
                continue;
            }
            long fl = 0;
            const Eigen::VectorXd s1 = jump_summaries(panel, &fl);
            const Eigen::VectorXd s2 = return_moment_summaries(panel.daily());
            floored.fetch_add(fl, std::memory_order_relaxed);
            jumps.fetch_add(panel.jump_count, std::memory_order_relaxed);
            table.values(row, 0) = par.mu_p;
            table.values(row, 1) = par.kappa;
            table.values(row, 2) = par.alpha;
            table.values(row, 3) = par.sigma_v;
            table.values(row, 4) = par.rho;
            table.values(row, 5) = par.mu_z;
            table.values(row, 6) = par.sigma_z;
            table.values(row, 7) = par.d;
            table.values(row, 8) = par.tau;
            table.values(row, 9) = par.beta;
            table.values.row(row).segment(10, 5) = s1.transpose();
            table.values.row(row).segment(15, 5) = s2.transpose();
            return;
        }
        throw numeric_error("continuous_prior_table: row " + std::to_string(row) +
                            " failed 100 prior draws without a stable intensity path");
    });
    if (diag) {
        diag->retries = retries.load();
        diag->floored_bv = floored.load();
        diag->total_jumps = jumps.load();
    }
    return table;
}

}  // namespace mixcut::models
