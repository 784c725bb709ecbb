#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"
#include "mixcut/models/discrete.hpp"
#include "mixcut/rng.hpp"

namespace mixcut {

struct FilterOptions {
    int particles = 5000;
    double ess_fraction = 0.5;  // resample when ESS < fraction * particles
    bool systematic_resampling = false;
    bool use_return_measurement = true;

    void validate() const {
        require(particles >= 2, "filter options: need at least 2 particles");
        require(ess_fraction > 0.0 && ess_fraction <= 1.0,
                "filter options: ess_fraction must lie in (0,1]");
    }
};

struct ParticleCloud {
    Eigen::VectorXd h, delta, weights;
    Eigen::VectorXi jump;
    double ess = 0.0;

    int size() const { return static_cast<int>(h.size()); }

    double h_mean() const { return weights.dot(h); }
    double h_var() const {
        const double m = h_mean();
        return weights.dot((h.array() - m).square().matrix());
    }
    double jump_prob() const { return weights.dot(jump.cast<double>()); }
};

// Bootstrap filter for the discrete-time model, advanced one observation at a
// time. Particles carry (h, delta, jump); weights multiply the measurement
// density of logBV and, unless disabled, of the return. The particle loop is
// sequential on one generator, so a given seed always produces the same cloud.
class RunningFilter {
public:
    RunningFilter(const models::DiscreteTimeParams& par, const FilterOptions& opts,
                  std::uint64_t seed)
        : par_(par), opts_(opts), rng_(seed) {
        par_.validate();
        opts_.validate();
        const int p = opts_.particles;
        cloud_.h = Eigen::VectorXd::Constant(p, par_.omega / (1.0 - par_.rho));
        cloud_.delta = Eigen::VectorXd::Constant(
            p, std::clamp(par_.d / (1.0 - par_.beta - par_.tau), 0.0, 1.0));
        cloud_.jump = Eigen::VectorXi::Zero(p);
        cloud_.weights = Eigen::VectorXd::Constant(p, 1.0 / p);
        cloud_.ess = static_cast<double>(p);
    }

    const ParticleCloud& cloud() const { return cloud_; }
    const models::DiscreteTimeParams& params() const { return par_; }
    int steps_done() const { return t_; }
    int resample_count() const { return resamples_; }

    void step(double r, double log_bv) {
        const int p = opts_.particles;
        // Resample lazily at the start of the next step, so the cloud a caller
        // sees after step() still carries this step's importance weights.
        if (cloud_.ess < opts_.ess_fraction * p) {
            resample();
            ++resamples_;
        }
        Eigen::VectorXd logw(p);
        const double var_bv = par_.sigma_bv * par_.sigma_bv;
        for (int i = 0; i < p; ++i) {
            const double eta = models::rstable(rng_, par_.alpha, -1.0);
            double h = par_.omega + par_.rho * cloud_.h(i) + par_.sigma_h * eta;
            h = std::clamp(h, -models::h_state_bound, models::h_state_bound);
            const double delta =
                std::clamp(par_.d + par_.beta * cloud_.delta(i) + par_.tau * cloud_.jump(i), 0.0,
                           1.0);
            const int jump = rbernoulli(rng_, delta) ? 1 : 0;
            cloud_.h(i) = h;
            cloud_.delta(i) = delta;
            cloud_.jump(i) = jump;
            const double resid_bv = log_bv - par_.psi0 - par_.psi1 * h;
            double lw = -0.5 * resid_bv * resid_bv / var_bv - 0.5 * std::log(var_bv) -
                        0.5 * log_2pi;
            if (opts_.use_return_measurement) {
                const double var_r =
                    std::exp(h) + (jump ? par_.sigma_z * par_.sigma_z : 0.0);
                const double resid_r = r - (jump ? par_.mu_z : 0.0);
                lw += -0.5 * resid_r * resid_r / var_r - 0.5 * std::log(var_r) - 0.5 * log_2pi;
            }
            logw(i) = std::log(cloud_.weights(i)) + lw;
        }
        const double m = logw.maxCoeff();
        if (!std::isfinite(m))
            throw numeric_error("filter: all particle weights vanished at step " +
                                std::to_string(t_) + " (max log-weight " + std::to_string(m) +
                                ")");
        cloud_.weights = (logw.array() - m).exp();
        cloud_.weights /= cloud_.weights.sum();
        cloud_.ess = 1.0 / cloud_.weights.squaredNorm();
        ++t_;
    }

private:
    void resample() {
        const int p = opts_.particles;
        std::vector<int> pick(static_cast<std::size_t>(p));
        if (opts_.systematic_resampling) {
            const double u0 = runif(rng_) / p;
            double cum = cloud_.weights(0);
            int j = 0;
            for (int i = 0; i < p; ++i) {
                const double u = u0 + static_cast<double>(i) / p;
                while (cum < u && j + 1 < p) cum += cloud_.weights(++j);
                pick[static_cast<std::size_t>(i)] = j;
            }
        } else {
            std::vector<double> cum(static_cast<std::size_t>(p));
            double c = 0.0;
            for (int i = 0; i < p; ++i) {
                c += cloud_.weights(i);
                cum[static_cast<std::size_t>(i)] = c;
            }
            for (int i = 0; i < p; ++i)
                pick[static_cast<std::size_t>(i)] = rcategorical(rng_, cum);
        }
        Eigen::VectorXd h(p), delta(p);
        Eigen::VectorXi jump(p);
        for (int i = 0; i < p; ++i) {
            h(i) = cloud_.h(pick[static_cast<std::size_t>(i)]);
            delta(i) = cloud_.delta(pick[static_cast<std::size_t>(i)]);
            jump(i) = cloud_.jump(pick[static_cast<std::size_t>(i)]);
        }
        cloud_.h = std::move(h);
        cloud_.delta = std::move(delta);
        cloud_.jump = std::move(jump);
        cloud_.weights.setConstant(1.0 / p);
        cloud_.ess = static_cast<double>(p);
    }

    models::DiscreteTimeParams par_;
    FilterOptions opts_;
    Rng rng_;
    ParticleCloud cloud_;
    int t_ = 0;
    int resamples_ = 0;
};

struct FilterResult {
    ParticleCloud cloud;
    Eigen::VectorXd h_mean, h_var, jump_prob, ess;
    int resamples = 0;
};

// Run the filter over a T x 2 observation matrix (returns, log BV).
inline FilterResult bootstrap_filter(const models::DiscreteTimeParams& par,
                                     const Eigen::MatrixXd& y, const FilterOptions& opts,
                                     std::uint64_t seed) {
    require(y.cols() == 2, "bootstrap_filter: observations must have 2 columns (r, logBV)");
    require(y.rows() >= 1, "bootstrap_filter: no observations");
    require(y.allFinite(), "bootstrap_filter: observations contain non-finite values");
    RunningFilter filter(par, opts, seed);
    const auto t_len = y.rows();
    FilterResult res;
    res.h_mean.resize(t_len);
    res.h_var.resize(t_len);
    res.jump_prob.resize(t_len);
    res.ess.resize(t_len);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        filter.step(y(t, 0), y(t, 1));
        res.h_mean(t) = filter.cloud().h_mean();
        res.h_var(t) = filter.cloud().h_var();
        res.jump_prob(t) = filter.cloud().jump_prob();
        res.ess(t) = filter.cloud().ess;
    }
    res.cloud = filter.cloud();
    res.resamples = filter.resample_count();
    return res;
}

}  // namespace mixcut
