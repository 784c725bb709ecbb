#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"

namespace mixcut {

inline constexpr double log_2pi = 1.8378770664093454836;

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x - 0.5 * log_2pi);
}

inline double norm_log_pdf(double x) {
    return -0.5 * x * x - 0.5 * log_2pi;
}

inline double norm_cdf(double x) {
    // erfc keeps relative accuracy in the lower tail where 0.5*(1+erf) loses it.
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Inverse standard normal CDF, Wichura's PPND16 rational approximations.
// Good to about 1e-15 relative over (0,1); p at or beyond the open interval throws.
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw contract_error("norm_quantile: p must lie in (0,1), got " + std::to_string(p));
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                  6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
              1.3314166789178437745e2) * r + 3.3871328727963666080e0);
        const double den =
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                  3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
              4.2313330701600911252e1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return (q < 0.0) ? -val : val;
}

inline double logsumexp(const double* v, std::size_t n) {
    if (n == 0) return -std::numeric_limits<double>::infinity();
    double m = v[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;  // all -inf, or a stray inf/nan propagates
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& v) { return logsumexp(v.data(), v.size()); }

inline double logsumexp(const Eigen::VectorXd& v) {
    return logsumexp(v.data(), static_cast<std::size_t>(v.size()));
}

// Sample moments. Variance and higher moments use the population (1/n) convention,
// kurtosis is non-excess; that matches how the summary statistics are defined.
inline double mean_of(const Eigen::VectorXd& x) {
    require(x.size() > 0, "mean_of: empty vector");
    return x.mean();
}

inline double var_pop(const Eigen::VectorXd& x) {
    require(x.size() > 0, "var_pop: empty vector");
    const double m = x.mean();
    return (x.array() - m).square().mean();
}

inline double sd_sample(const Eigen::VectorXd& x) {
    require(x.size() > 1, "sd_sample: need at least 2 values");
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

inline double skewness_of(const Eigen::VectorXd& x) {
    const double m = x.mean();
    const Eigen::ArrayXd c = x.array() - m;
    const double v = c.square().mean();
    if (v <= 0.0) return 0.0;
    return c.cube().mean() / std::pow(v, 1.5);
}

// Non-excess kurtosis: 3 for a normal sample in expectation.
inline double kurtosis_of(const Eigen::VectorXd& x) {
    const double m = x.mean();
    const Eigen::ArrayXd c = x.array() - m;
    const double v = c.square().mean();
    if (v <= 0.0) return 0.0;
    return c.pow(4).mean() / (v * v);
}

// Lag-1 autocovariance with the 1/n normalization.
inline double autocov1_pop(const Eigen::VectorXd& x) {
    const auto n = x.size();
    require(n > 1, "autocov1_pop: need at least 2 values");
    const double m = x.mean();
    double s = 0.0;
    for (Eigen::Index t = 1; t < n; ++t) s += (x(t) - m) * (x(t - 1) - m);
    return s / static_cast<double>(n);
}

inline double pearson_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    require(a.size() == b.size() && a.size() > 1, "pearson_corr: need equal-length vectors, n > 1");
    const double ma = a.mean(), mb = b.mean();
    const Eigen::ArrayXd ca = a.array() - ma, cb = b.array() - mb;
    const double denom = std::sqrt(ca.square().sum() * cb.square().sum());
    if (denom <= 0.0) return 0.0;
    return (ca * cb).sum() / denom;
}

inline double autocorr1(const Eigen::VectorXd& x) {
    const auto n = x.size();
    require(n > 1, "autocorr1: need at least 2 values");
    return pearson_corr(x.head(n - 1), x.tail(n - 1));
}

}  // namespace mixcut
