#pragma once

// Shared fixtures for the test suites: seeded random mixtures and a couple of
// tiny numeric utilities. Everything is deterministic given the seed.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/gmm.hpp"
#include "mixcut/rng.hpp"

namespace testutil {

inline std::vector<std::string> make_labels(int d) {
    std::vector<std::string> labels;
    for (int i = 0; i < d; ++i) labels.push_back("v" + std::to_string(i));
    return labels;
}

// Random well-conditioned mixture: means in [-2,2], covariance A*A^T + 0.4 I.
inline mixcut::GaussianMixture random_mixture(int d, int j, std::uint64_t seed) {
    mixcut::Rng rng(seed);
    std::vector<mixcut::GaussianComponent> comps;
    double wsum = 0.0;
    std::vector<double> ws;
    for (int c = 0; c < j; ++c) {
        ws.push_back(0.2 + mixcut::runif(rng));
        wsum += ws.back();
    }
    for (int c = 0; c < j; ++c) {
        mixcut::GaussianComponent comp;
        comp.weight = ws[static_cast<std::size_t>(c)] / wsum;
        comp.mean.resize(d);
        for (int i = 0; i < d; ++i) comp.mean(i) = mixcut::runif(rng, -2.0, 2.0);
        Eigen::MatrixXd a(d, d);
        for (int r = 0; r < d; ++r)
            for (int cc = 0; cc < d; ++cc) a(r, cc) = 0.6 * mixcut::rnorm(rng);
        comp.cov = a * a.transpose() + 0.4 * Eigen::MatrixXd::Identity(d, d);
        comps.push_back(comp);
    }
    return mixcut::GaussianMixture(make_labels(d), comps);
}

// Same component layout with jittered means, covariance scales, and weights.
inline mixcut::GaussianMixture perturbed_copy(const mixcut::GaussianMixture& m, double scale,
                                              std::uint64_t seed) {
    mixcut::Rng rng(seed);
    std::vector<mixcut::GaussianComponent> comps = m.components();
    double wsum = 0.0;
    for (auto& c : comps) {
        for (Eigen::Index i = 0; i < c.mean.size(); ++i)
            c.mean(i) += scale * mixcut::rnorm(rng);
        c.cov *= std::exp(scale * mixcut::rnorm(rng));
        c.weight *= std::exp(scale * mixcut::rnorm(rng));
        wsum += c.weight;
    }
    for (auto& c : comps) c.weight /= wsum;
    return mixcut::GaussianMixture(m.labels(), comps);
}

// Trapezoid rule on [lo, hi] with n points.
template <typename F>
double trapezoid(F f, double lo, double hi, int n) {
    const double h = (hi - lo) / (n - 1);
    double acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i + 1 < n; ++i) acc += f(lo + h * i);
    return acc * h;
}

}  // namespace testutil
