#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/rng.hpp"
#include "mixcut/sim_table.hpp"

namespace mixcut::models {

// Two-module Gaussian benchmark with everything available in closed form.
// Module 1: z_i | phi ~ N(phi, z_noise_sd^2), i = 1..n_z, summarized by zbar.
// Module 2: w_i | phi, eta ~ N(phi + eta, w_noise_sd^2), i = 1..n_w, by wbar.
// Priors phi ~ N(phi_mean, phi_sd^2), eta ~ N(eta_mean, eta_sd^2).
struct ConjugateSpec {
    double phi_mean = 0.0, phi_sd = 1.0;
    double eta_mean = 0.0, eta_sd = 1.0;
    double z_noise_sd = 1.0, w_noise_sd = 1.0;
    int n_z = 20, n_w = 20;

    void validate() const {
        require(phi_sd > 0.0 && eta_sd > 0.0, "conjugate spec: prior sds must be positive");
        require(z_noise_sd > 0.0 && w_noise_sd > 0.0,
                "conjugate spec: noise sds must be positive");
        require(n_z >= 1 && n_w >= 1, "conjugate spec: n_z and n_w must be >= 1");
    }

    double zbar_var() const { return z_noise_sd * z_noise_sd / n_z; }
    double wbar_var() const { return w_noise_sd * w_noise_sd / n_w; }
};

// Sufficient statistics (zbar, wbar) for one draw of the data given (phi, eta).
inline std::pair<double, double> conjugate_simulate(const ConjugateSpec& spec, double phi,
                                                    double eta, Rng& rng) {
    const double zbar = phi + std::sqrt(spec.zbar_var()) * rnorm(rng);
    const double wbar = phi + eta + std::sqrt(spec.wbar_var()) * rnorm(rng);
    return {zbar, wbar};
}

// Joint prior-predictive table with columns (phi, eta, zbar, wbar). Row i is
// seeded independently, so the table is identical however it is threaded.
inline SimTable conjugate_prior_table(const ConjugateSpec& spec, int n, std::uint64_t seed) {
    spec.validate();
    require(n >= 1, "conjugate_prior_table: n must be >= 1");
    SimTable t;
    t.labels = {"phi", "eta", "zbar", "wbar"};
    t.param_count = 2;
    t.values.resize(n, 4);
    parallel_for(n, [&](std::int64_t i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const double phi = rnorm(rng, spec.phi_mean, spec.phi_sd);
        const double eta = rnorm(rng, spec.eta_mean, spec.eta_sd);
        const auto [zbar, wbar] = conjugate_simulate(spec, phi, eta, rng);
        t.values(i, 0) = phi;
        t.values(i, 1) = eta;
        t.values(i, 2) = zbar;
        t.values(i, 3) = wbar;
    });
    return t;
}

struct ConjugatePosteriors {
    // phi | zbar (cut) and phi | zbar, wbar (full)
    double phi_cut_mean = 0.0, phi_cut_var = 0.0;
    double phi_full_mean = 0.0, phi_full_var = 0.0;
    // eta | phi, wbar is N(eta_intercept + eta_slope * phi, eta_var)
    double eta_intercept = 0.0, eta_slope = 0.0, eta_var = 0.0;
    // joint (phi, eta) under cut and full feedback
    Eigen::Vector2d cut_mean, full_mean;
    Eigen::Matrix2d cut_cov, full_cov;
};

inline ConjugatePosteriors conjugate_posteriors(const ConjugateSpec& spec, double zbar,
                                                double wbar) {
    spec.validate();
    ConjugatePosteriors p;
    const double vz = spec.zbar_var();
    const double vw = spec.wbar_var();
    const double prior_prec_phi = 1.0 / (spec.phi_sd * spec.phi_sd);
    const double prior_prec_eta = 1.0 / (spec.eta_sd * spec.eta_sd);

    const double cut_prec = prior_prec_phi + 1.0 / vz;
    p.phi_cut_var = 1.0 / cut_prec;
    p.phi_cut_mean = (spec.phi_mean * prior_prec_phi + zbar / vz) * p.phi_cut_var;

    // wbar | phi integrates eta out: N(phi + eta_mean, vw + eta_sd^2)
    const double vw_marg = vw + spec.eta_sd * spec.eta_sd;
    const double full_prec = cut_prec + 1.0 / vw_marg;
    p.phi_full_var = 1.0 / full_prec;
    p.phi_full_mean =
        (spec.phi_mean * prior_prec_phi + zbar / vz + (wbar - spec.eta_mean) / vw_marg) *
        p.phi_full_var;

    const double eta_prec = prior_prec_eta + 1.0 / vw;
    p.eta_var = 1.0 / eta_prec;
    p.eta_slope = -(1.0 / vw) * p.eta_var;
    p.eta_intercept = (spec.eta_mean * prior_prec_eta + wbar / vw) * p.eta_var;

    auto fill_joint = [&](double pm, double pv, Eigen::Vector2d& mean, Eigen::Matrix2d& cov) {
        mean(0) = pm;
        mean(1) = p.eta_intercept + p.eta_slope * pm;
        cov(0, 0) = pv;
        cov(0, 1) = cov(1, 0) = p.eta_slope * pv;
        cov(1, 1) = p.eta_var + p.eta_slope * p.eta_slope * pv;
    };
    fill_joint(p.phi_cut_mean, p.phi_cut_var, p.cut_mean, p.cut_cov);
    fill_joint(p.phi_full_mean, p.phi_full_var, p.full_mean, p.full_cov);
    return p;
}

struct ConjugatePredictive {
    Eigen::Vector2d mean;  // of (zbar, wbar)
    Eigen::Matrix2d cov;
};

inline ConjugatePredictive conjugate_prior_predictive(const ConjugateSpec& spec) {
    spec.validate();
    ConjugatePredictive pred;
    const double vphi = spec.phi_sd * spec.phi_sd;
    const double veta = spec.eta_sd * spec.eta_sd;
    pred.mean << spec.phi_mean, spec.phi_mean + spec.eta_mean;
    pred.cov(0, 0) = vphi + spec.zbar_var();
    pred.cov(0, 1) = pred.cov(1, 0) = vphi;
    pred.cov(1, 1) = vphi + veta + spec.wbar_var();
    return pred;
}

}  // namespace mixcut::models
