#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/rng.hpp"

namespace mixcut::models {

// Chambers-Mallows-Stuck draw from the alpha-stable law S(alpha, beta, 0, 1) in
// the S1 parameterization. At alpha = 2 this degenerates to N(0, 2) regardless
// of beta, which is the variance convention the filter's Kalman check relies on.
inline double rstable(Rng& rng, double alpha, double beta) {
    require(alpha > 0.0 && alpha <= 2.0, "rstable: alpha must lie in (0,2]");
    require(beta >= -1.0 && beta <= 1.0, "rstable: beta must lie in [-1,1]");
    const double half_pi = 1.5707963267948966;
    const double u = (runif(rng) - 0.5) * 3.141592653589793;  // uniform on (-pi/2, pi/2)
    const double w = rexp(rng);
    if (alpha == 1.0) {
        const double a = half_pi + beta * u;
        return (a * std::tan(u) -
                beta * std::log((half_pi * w * std::cos(u)) / a)) /
               half_pi;
    }
    const double t = beta * std::tan(half_pi * alpha);
    const double b = std::atan(t) / alpha;
    const double s = std::pow(1.0 + t * t, 1.0 / (2.0 * alpha));
    return s * std::sin(alpha * (u + b)) / std::pow(std::cos(u), 1.0 / alpha) *
           std::pow(std::cos(u - alpha * (u + b)) / w, (1.0 - alpha) / alpha);
}

inline Eigen::VectorXd sample_alpha_stable(double alpha, double beta, int n, std::uint64_t seed) {
    require(n >= 1, "sample_alpha_stable: n must be >= 1");
    Rng rng(seed);
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out(i) = rstable(rng, alpha, beta);
    return out;
}

}  // namespace mixcut::models
