#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/filter.hpp"
#include "mixcut/gmm.hpp"
#include "mixcut/math.hpp"
#include "mixcut/models/discrete.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/rng.hpp"

namespace mixcut {

namespace detail {

// Weight-proportional systematic subsample of particle indices, for capping the
// component count of forecast mixtures.
inline std::vector<int> thin_indices(const Eigen::VectorXd& weights, int m, Rng& rng) {
    const auto p = weights.size();
    std::vector<int> pick(static_cast<std::size_t>(m));
    const double u0 = runif(rng) / m;
    double cum = weights(0);
    int j = 0;
    for (int i = 0; i < m; ++i) {
        const double u = u0 + static_cast<double>(i) / m;
        while (cum < u && j + 1 < p) cum += weights(++j);
        pick[static_cast<std::size_t>(i)] = j;
    }
    return pick;
}

}  // namespace detail

// One-step-ahead predictive of (r, logBV) as an explicit Gaussian mixture: each
// posterior draw's particles are propagated one step and the jump indicator is
// enumerated, giving two components per particle with weights
// (w_p / S) P(jump | delta). max_per_cloud > 0 caps the particles used per draw
// by weight-proportional thinning.
inline GaussianMixture one_step_forecast(const std::vector<models::DiscreteTimeParams>& draws,
                                         const std::vector<ParticleCloud>& clouds,
                                         std::uint64_t seed, int max_per_cloud = 0) {
    require(!draws.empty(), "one_step_forecast: no parameter draws");
    require(draws.size() == clouds.size(),
            "one_step_forecast: draw and cloud counts differ");
    const auto s_count = static_cast<int>(draws.size());
    std::vector<GaussianComponent> comps;
    for (int s = 0; s < s_count; ++s) {
        const auto& par = draws[static_cast<std::size_t>(s)];
        const auto& cloud = clouds[static_cast<std::size_t>(s)];
        require(cloud.size() >= 1, "one_step_forecast: empty particle cloud");
        Rng rng(derive_seed(seed, 0xf0120000u + static_cast<std::uint64_t>(s)));

        std::vector<int> idx;
        Eigen::VectorXd w;
        if (max_per_cloud > 0 && cloud.size() > max_per_cloud) {
            idx = detail::thin_indices(cloud.weights, max_per_cloud, rng);
            w = Eigen::VectorXd::Constant(max_per_cloud, 1.0 / max_per_cloud);
        } else {
            idx.resize(static_cast<std::size_t>(cloud.size()));
            for (int i = 0; i < cloud.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
            w = cloud.weights;
        }

        const double var_bv = par.sigma_bv * par.sigma_bv;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const int i = idx[k];
            const double eta = models::rstable(rng, par.alpha, -1.0);
            double h = par.omega + par.rho * cloud.h(i) + par.sigma_h * eta;
            h = std::clamp(h, -models::h_state_bound, models::h_state_bound);
            const double delta = std::clamp(
                par.d + par.beta * cloud.delta(i) + par.tau * cloud.jump(i), 0.0, 1.0);
            const double base_w = w(static_cast<Eigen::Index>(k)) / s_count;
            const double mean_bv = par.psi0 + par.psi1 * h;
            const double var_r = std::exp(h);
            // no-jump branch
            if (base_w * (1.0 - delta) > 0.0) {
                GaussianComponent c;
                c.weight = base_w * (1.0 - delta);
                c.mean = Eigen::Vector2d(0.0, mean_bv);
                c.cov = Eigen::Vector2d(var_r, var_bv).asDiagonal();
                comps.push_back(std::move(c));
            }
            // jump branch
            if (base_w * delta > 0.0) {
                GaussianComponent c;
                c.weight = base_w * delta;
                c.mean = Eigen::Vector2d(par.mu_z, mean_bv);
                c.cov = Eigen::Vector2d(var_r + par.sigma_z * par.sigma_z, var_bv).asDiagonal();
                comps.push_back(std::move(c));
            }
        }
    }
    require(!comps.empty(), "one_step_forecast: no components survived");
    double mass = 0.0;
    for (const auto& c : comps) mass += c.weight;
    for (auto& c : comps) c.weight /= mass;
    return GaussianMixture({"r", "log_bv"}, std::move(comps));
}

// Scoring rules for scalar mixtures, all oriented so that larger is better.

inline void require_scalar(const GaussianMixture& f, const char* who) {
    require(f.dim() == 1, std::string(who) + ": needs a 1-dimensional mixture");
}

inline double log_score(const GaussianMixture& f, double y) {
    require_scalar(f, "log_score");
    Eigen::VectorXd v(1);
    v(0) = y;
    return f.log_density(v);
}

// Quadratic (probability) score 2 f(y) - integral of f^2; the squared integral of
// a Gaussian mixture is a pairwise convolution sum.
inline double quadratic_score(const GaussianMixture& f, double y) {
    require_scalar(f, "quadratic_score");
    Eigen::VectorXd v(1);
    v(0) = y;
    const double fy = std::exp(f.log_density(v));
    const int j = f.size();
    double l2 = 0.0;
    for (int a = 0; a < j; ++a) {
        const auto& ca = f.component(a);
        for (int b = 0; b < j; ++b) {
            const auto& cb = f.component(b);
            const double var = ca.cov(0, 0) + cb.cov(0, 0);
            const double diff = ca.mean(0) - cb.mean(0);
            l2 += ca.weight * cb.weight *
                  std::exp(-0.5 * diff * diff / var - 0.5 * std::log(var) - 0.5 * log_2pi);
        }
    }
    return 2.0 * fy - l2;
}

namespace detail {

// E|X - m| for X ~ N(0, var), shifted: A(m, var) = E|m - X|.
inline double crps_abs_term(double m, double var) {
    if (var <= 0.0) return std::abs(m);
    const double s = std::sqrt(var);
    const double z = m / s;
    return m * (2.0 * norm_cdf(z) - 1.0) + 2.0 * s * norm_pdf(z);
}

}  // namespace detail

// Continuous ranked probability score in closed form, negated so larger is
// better, matching the orientation of the other two scores.
inline double crps_score(const GaussianMixture& f, double y) {
    require_scalar(f, "crps_score");
    const int j = f.size();
    double first = 0.0, second = 0.0;
    for (int a = 0; a < j; ++a) {
        const auto& ca = f.component(a);
        first += ca.weight * detail::crps_abs_term(y - ca.mean(0), ca.cov(0, 0));
        for (int b = 0; b < j; ++b) {
            const auto& cb = f.component(b);
            second += ca.weight * cb.weight *
                      detail::crps_abs_term(ca.mean(0) - cb.mean(0),
                                            ca.cov(0, 0) + cb.cov(0, 0));
        }
    }
    return -(first - 0.5 * second);
}

struct RollingScores {
    // columns: ls_r, qs_r, crps_r, ls_bv, qs_bv, crps_bv
    Eigen::MatrixXd per_step;
    Eigen::VectorXd mean;
    int resamples = 0;
};

// Rolling one-step-ahead evaluation over the last `holdout` observations. Each
// parameter draw keeps its own filter; forecasts are scored on the marginal of
// each outcome, then the filters assimilate the realized observation. Thinning
// caps the quadratic-cost scores without touching filter accuracy.
inline RollingScores rolling_evaluation(const std::vector<models::DiscreteTimeParams>& draws,
                                        const Eigen::MatrixXd& y, int holdout,
                                        const FilterOptions& opts, std::uint64_t seed,
                                        int thin_per_cloud = 32) {
    require(!draws.empty(), "rolling_evaluation: no parameter draws");
    require(y.cols() == 2, "rolling_evaluation: observations must have 2 columns (r, logBV)");
    const auto t_len = y.rows();
    require(holdout >= 1 && holdout < t_len,
            "rolling_evaluation: holdout must lie in [1, T-1]");
    const auto t_train = t_len - holdout;
    const auto s_count = static_cast<int>(draws.size());

    std::vector<RunningFilter> filters;
    filters.reserve(static_cast<std::size_t>(s_count));
    for (int s = 0; s < s_count; ++s)
        filters.emplace_back(draws[static_cast<std::size_t>(s)], opts,
                             derive_seed(seed, 0xa1b00000u + static_cast<std::uint64_t>(s)));
    parallel_for(s_count, [&](std::int64_t s) {
        auto& f = filters[static_cast<std::size_t>(s)];
        for (Eigen::Index t = 0; t < t_train; ++t) f.step(y(t, 0), y(t, 1));
    });

    RollingScores out;
    out.per_step.resize(holdout, 6);
    std::vector<ParticleCloud> clouds(static_cast<std::size_t>(s_count));
    for (Eigen::Index k = 0; k < holdout; ++k) {
        const Eigen::Index t = t_train + k;
        for (int s = 0; s < s_count; ++s)
            clouds[static_cast<std::size_t>(s)] = filters[static_cast<std::size_t>(s)].cloud();
        const GaussianMixture fc = one_step_forecast(
            draws, clouds, derive_seed(seed, 0xfc000000u + static_cast<std::uint64_t>(k)),
            thin_per_cloud);
        const GaussianMixture fr = fc.marginalize({0});
        const GaussianMixture fbv = fc.marginalize({1});
        out.per_step(k, 0) = log_score(fr, y(t, 0));
        out.per_step(k, 1) = quadratic_score(fr, y(t, 0));
        out.per_step(k, 2) = crps_score(fr, y(t, 0));
        out.per_step(k, 3) = log_score(fbv, y(t, 1));
        out.per_step(k, 4) = quadratic_score(fbv, y(t, 1));
        out.per_step(k, 5) = crps_score(fbv, y(t, 1));
        parallel_for(s_count, [&](std::int64_t s) {
            filters[static_cast<std::size_t>(s)].step(y(t, 0), y(t, 1));
        });
    }
    out.mean = out.per_step.colwise().mean();
    for (const auto& f : filters) out.resamples += f.resample_count();
    return out;
}

}  // namespace mixcut
