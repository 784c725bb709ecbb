#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"
#include "mixcut/models/prior_box.hpp"
#include "mixcut/models/stable.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/rng.hpp"
#include "mixcut/sim_table.hpp"

namespace mixcut::models {

// Daily return and realized-measure model with stable-tailed stochastic
// volatility and self-exciting jumps:
//   r_t     = exp(h_t/2) eps_t + dN_t Z_t,     Z_t ~ N(mu_z, sigma_z^2)
//   logBV_t = psi0 + psi1 h_t + sigma_bv zeta_t
//   h_t     = omega + rho h_{t-1} + sigma_h eta_t,  eta_t ~ S(alpha, -1, 0, 1)
//   delta_t = clamp(d + beta delta_{t-1} + tau dN_{t-1}, 0, 1) = P(dN_t = 1)
// The clamped delta is both the jump probability and the carried state, so the
// intensity always stays a probability.
struct DiscreteTimeParams {
    double mu_z = 0.0, sigma_z = 0.5;
    double d = 0.05, beta = 0.3, tau = 0.2;
    double omega = -0.3, rho = 0.95, sigma_h = 0.2;
    double alpha = 1.9;  // stable tail index of the volatility shocks
    double psi0 = 0.0, psi1 = 1.0, sigma_bv = 0.3;

    void validate() const {
        require(sigma_z >= 0.0, "discrete params: sigma_z must be nonnegative");
        require(sigma_bv > 0.0, "discrete params: sigma_bv must be positive");
        require(sigma_h > 0.0, "discrete params: sigma_h must be positive");
        require(alpha > 1.0 && alpha <= 2.0, "discrete params: alpha must lie in (1,2]");
        require(d >= 0.0 && beta >= 0.0 && tau >= 0.0,
                "discrete params: d, beta, tau must be nonnegative");
        require(beta + tau < 1.0, "discrete params: need beta + tau < 1 for a stable intensity");
        require(rho > -1.0 && rho < 1.0, "discrete params: rho must lie in (-1,1)");
    }
};

struct DiscretePath {
    Eigen::VectorXd r, log_bv, h, delta;
    Eigen::VectorXi jumps;
    long h_clips = 0;  // volatility states pulled back to +-50
};

inline constexpr double h_state_bound = 50.0;
inline constexpr int discrete_burn_in = 200;

inline DiscretePath simulate_discrete(const DiscreteTimeParams& par, int t_days,
                                      std::uint64_t seed) {
    par.validate();
    require(t_days >= 1, "simulate_discrete: need at least 1 day");
    Rng rng(seed);
    DiscretePath path;
    path.r.resize(t_days);
    path.log_bv.resize(t_days);
    path.h.resize(t_days);
    path.delta.resize(t_days);
    path.jumps.resize(t_days);
    double h = par.omega / (1.0 - par.rho);
    double delta = std::clamp(par.d / (1.0 - par.beta - par.tau), 0.0, 1.0);
    int prev_jump = 0;
    for (int t = -discrete_burn_in; t < t_days; ++t) {
        const double eta = rstable(rng, par.alpha, -1.0);
        h = par.omega + par.rho * h + par.sigma_h * eta;
        if (h > h_state_bound || h < -h_state_bound) {
            h = std::clamp(h, -h_state_bound, h_state_bound);
            ++path.h_clips;
        }
        delta = std::clamp(par.d + par.beta * delta + par.tau * prev_jump, 0.0, 1.0);
        const int jump = rbernoulli(rng, delta) ? 1 : 0;
        const double z = jump ? rnorm(rng, par.mu_z, par.sigma_z) : 0.0;
        const double r = std::exp(0.5 * h) * rnorm(rng) + z;
        const double log_bv = par.psi0 + par.psi1 * h + par.sigma_bv * rnorm(rng);
        prev_jump = jump;
        if (t >= 0) {
            path.r(t) = r;
            path.log_bv(t) = log_bv;
            path.h(t) = h;
            path.delta(t) = delta;
            path.jumps(t) = jump;
        }
    }
    return path;
}

// Seven summaries of the realized-measure series: level moments of log BV,
// moments of its first difference, and the lag-1 autocorrelation of the BV
// levels themselves (not the logs).
inline Eigen::VectorXd bv_summaries(const Eigen::VectorXd& log_bv) {
    const auto t_days = log_bv.size();
    require(t_days >= 3, "bv_summaries: need at least 3 days");
    const Eigen::VectorXd diff = log_bv.tail(t_days - 1) - log_bv.head(t_days - 1);
    const Eigen::VectorXd levels = log_bv.array().exp();
    Eigen::VectorXd s(7);
    s(0) = log_bv.mean();
    s(1) = var_pop(log_bv);
    s(2) = skewness_of(log_bv);
    s(3) = diff.mean();
    s(4) = var_pop(diff);
    s(5) = skewness_of(diff);
    s(6) = autocorr1(levels);
    return s;
}

// Uniform prior boxes for the discrete model. beta is uniform on (0, 0.95 - tau)
// given tau so the intensity recursion stays comfortably stationary; psi0 is
// pinned at 0 because level and psi0 are not separately identified.
struct DiscretePrior {
    PriorBox mu_z{-1.0, 1.0};
    PriorBox sigma_z{0.1, 2.0};
    PriorBox d{0.01, 0.2};
    PriorBox tau{0.001, 0.2};
    PriorBox omega{-1.5, -0.05};
    PriorBox rho{0.8, 0.99};
    PriorBox sigma_h{0.05, 0.5};
    PriorBox alpha{1.5, 2.0};
    PriorBox psi1{0.5, 1.5};
    PriorBox sigma_bv{0.1, 1.0};
};

inline DiscreteTimeParams sample_discrete_prior(const DiscretePrior& prior, Rng& rng) {
    DiscreteTimeParams p;
    p.mu_z = runif(rng, prior.mu_z.lo, prior.mu_z.hi);
    p.sigma_z = runif(rng, prior.sigma_z.lo, prior.sigma_z.hi);
    p.d = runif(rng, prior.d.lo, prior.d.hi);
    p.tau = runif(rng, prior.tau.lo, prior.tau.hi);
    p.beta = runif(rng, 0.0, 0.95 - p.tau);
    p.omega = runif(rng, prior.omega.lo, prior.omega.hi);
    p.rho = runif(rng, prior.rho.lo, prior.rho.hi);
    p.sigma_h = runif(rng, prior.sigma_h.lo, prior.sigma_h.hi);
    p.alpha = runif(rng, prior.alpha.lo, prior.alpha.hi);
    p.psi1 = runif(rng, prior.psi1.lo, prior.psi1.hi);
    p.sigma_bv = runif(rng, prior.sigma_bv.lo, prior.sigma_bv.hi);
    return p;
}

inline const std::vector<std::string>& discrete_param_labels() {
    static const std::vector<std::string> labels = {"mu_z",  "sigma_z", "d",       "tau",
                                                    "beta",  "omega",   "rho",     "sigma_h",
                                                    "alpha", "psi1",    "sigma_bv"};
    return labels;
}

inline const std::vector<std::string>& discrete_summary_labels() {
    static const std::vector<std::string> labels = {"lbv_mean",  "lbv_var",  "lbv_skew",
                                                    "dlbv_mean", "dlbv_var", "dlbv_skew",
                                                    "bv_ac1"};
    return labels;
}

// Prior-predictive table for the discrete model: 11 parameter columns and the 7
// realized-measure summaries.
inline SimTable discrete_prior_table(const DiscretePrior& prior, int n, int t_days,
                                     std::uint64_t seed) {
    require(n >= 1, "discrete_prior_table: n must be >= 1");
    SimTable table;
    table.labels = discrete_param_labels();
    for (const auto& s : discrete_summary_labels()) table.labels.push_back(s);
    table.param_count = 11;
    table.values.resize(n, 18);
    parallel_for(n, [&](std::int64_t row) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(row)));
        const DiscreteTimeParams par = sample_discrete_prior(prior, rng);
        const DiscretePath path = simulate_discrete(par, t_days, rng());
        const Eigen::VectorXd s = bv_summaries(path.log_bv);
        table.values(row, 0) = par.mu_z;
        table.values(row, 1) = par.sigma_z;
        table.values(row, 2) = par.d;
        table.values(row, 3) = par.tau;
        table.values(row, 4) = par.beta;
        table.values(row, 5) = par.omega;
        table.values(row, 6) = par.rho;
        table.values(row, 7) = par.sigma_h;
        table.values(row, 8) = par.alpha;
        table.values(row, 9) = par.psi1;
        table.values(row, 10) = par.sigma_bv;
        table.values.row(row).segment(11, 7) = s.transpose();
    });
    return table;
}

}  // namespace mixcut::models
