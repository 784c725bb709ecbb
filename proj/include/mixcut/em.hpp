#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/gmm.hpp"
#include "mixcut/math.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/rng.hpp"
#include "mixcut/sim_table.hpp"

namespace mixcut {

struct FitConfig {
    int j_max = 10;
    int n_restarts = 5;
    double em_tol = 1e-6;
    int em_max_iter = 500;
    double ridge = 1e-6;
    std::uint64_t seed = 0;

    void validate() const {
        require(j_max >= 1, "fit config: j_max must be >= 1");
        require(n_restarts >= 1, "fit config: n_restarts must be >= 1");
        require(em_tol > 0.0, "fit config: em_tol must be positive");
        require(em_max_iter >= 1, "fit config: em_max_iter must be >= 1");
        require(ridge >= 0.0, "fit config: ridge must be nonnegative");
    }
};

struct EmResult {
    GaussianMixture mixture;
    double loglik = 0.0;
    int iters = 0;
    int collapsed_components = 0;
    int monotonicity_violations = 0;
    double worst_drift = 0.0;  // largest observed log-likelihood decrease
};

// Count of completed EM runs in this process. Lets tests pin down that the
// conflict machinery reuses one fit instead of quietly refitting.
inline std::atomic<long>& em_invocations() {
    static std::atomic<long> count{0};
    return count;
}

namespace detail {

// k-means++ style seeding: centers are data rows chosen with probability
// proportional to squared distance from the nearest already-chosen center.
inline std::vector<int> kmeanspp_rows(const Eigen::MatrixXd& x, int j, Rng& rng) {
    const auto n = x.rows();
    std::vector<int> centers;
    centers.reserve(static_cast<std::size_t>(j));
    centers.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(n)));
    Eigen::VectorXd dist2 =
        (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
    for (int c = 1; c < j; ++c) {
        const double total = dist2.sum();
        int pick;
        if (total > 0.0) {
            double u = runif(rng) * total;
            pick = static_cast<int>(n) - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= dist2(i);
                if (u <= 0.0) {
                    pick = static_cast<int>(i);
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
        }
        centers.push_back(pick);
        dist2 = dist2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
    }
    return centers;
}

struct WorkingComponent {
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd chol;
    double log_norm;
};

}  // namespace detail

// Full-covariance EM on normal-scale data for a fixed requested component count.
// Components whose weight falls below 1/n or whose covariance trace falls below
// ridge*d collapse and are removed; the run continues with the survivors. Best of
// cfg.n_restarts by final log-likelihood, ties going to the lowest restart index.
inline EmResult em_fit(const SimTable& table, int j, const FitConfig& cfg) {
    cfg.validate();
    table.validate();
    const Eigen::MatrixXd& x = table.values;
    const auto n = x.rows();
    const auto d = x.cols();
    require(j >= 1, "em_fit: component count must be >= 1");
    require(n > j, "em_fit: need more rows than components, got n=" + std::to_string(n) +
                       ", j=" + std::to_string(j));

    struct RestartOutcome {
        bool ok = false;
        std::string error;
        std::vector<GaussianComponent> comps;
        double loglik = -std::numeric_limits<double>::infinity();
        int iters = 0;
        int collapsed = 0;
        int mono_violations = 0;
        double worst_drift = 0.0;
    };
    std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(cfg.n_restarts));

    auto run_restart = [&](int restart) {
        RestartOutcome& out = outcomes[static_cast<std::size_t>(restart)];
        try {
            Rng rng(derive_seed(cfg.seed, 0x656d0000u + static_cast<std::uint64_t>(restart)));
            const std::vector<int> seeds_rows = detail::kmeanspp_rows(x, j, rng);

            // Hard-assign rows to the nearest center for the first M-step.
            Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, j);
            for (Eigen::Index i = 0; i < n; ++i) {
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (int c = 0; c < j; ++c) {
                    const double dd = (x.row(i) - x.row(seeds_rows[static_cast<std::size_t>(c)]))
                                          .squaredNorm();
                    if (dd < best_d) {
                        best_d = dd;
                        best = c;
                    }
                }
                resp(i, best) = 1.0;
            }

            std::vector<detail::WorkingComponent> comps(static_cast<std::size_t>(j));
            auto m_step = [&](const Eigen::MatrixXd& r) {
                // Rebuild every component from responsibilities r, dropping any
                // that collapse; returns false if everything collapsed.
                std::vector<detail::WorkingComponent> next;
                const Eigen::VectorXd nk = r.colwise().sum();
                for (Eigen::Index c = 0; c < r.cols(); ++c) {
                    const double weight = nk(c) / static_cast<double>(n);
                    if (weight < 1.0 / static_cast<double>(n)) {
                        ++out.collapsed;
                        continue;
                    }
                    detail::WorkingComponent wc;
                    wc.weight = weight;
                    wc.mean = (r.col(c).transpose() * x).transpose() / nk(c);
                    Eigen::MatrixXd xc = x.rowwise() - wc.mean.transpose();
                    xc.array().colwise() *= r.col(c).array().sqrt();
                    wc.cov = xc.transpose() * xc / nk(c);
                    wc.cov.diagonal().array() += cfg.ridge;
                    if (wc.cov.trace() < cfg.ridge * static_cast<double>(d)) {
                        ++out.collapsed;
                        continue;
                    }
                    next.push_back(std::move(wc));
                }
                if (next.empty()) return false;
                double wsum = 0.0;
                for (const auto& wc : next) wsum += wc.weight;
                for (auto& wc : next) {
                    wc.weight /= wsum;
                    wc.chol = cholesky_psd(wc.cov, "em component");
                    wc.log_norm = -0.5 * static_cast<double>(d) * log_2pi -
                                  wc.chol.diagonal().array().log().sum();
                }
                comps = std::move(next);
                return true;
            };
            if (!m_step(resp)) throw numeric_error("em_fit: all components collapsed at init");

            double prev_ll = -std::numeric_limits<double>::infinity();
            double ll = prev_ll;
            Eigen::MatrixXd logp;
            for (int iter = 1; iter <= cfg.em_max_iter; ++iter) {
                out.iters = iter;
                const auto jj = static_cast<Eigen::Index>(comps.size());
                logp.resize(n, jj);
                parallel_for(jj, [&](std::int64_t c) {
                    const auto& wc = comps[static_cast<std::size_t>(c)];
                    Eigen::MatrixXd y = wc.chol.triangularView<Eigen::Lower>().solve(
                        (x.rowwise() - wc.mean.transpose()).transpose());
                    logp.col(c) = ((std::log(wc.weight) + wc.log_norm) -
                                   0.5 * y.colwise().squaredNorm().transpose().array())
                                      .matrix();
                });
                const Eigen::VectorXd row_max = logp.rowwise().maxCoeff();
                const Eigen::VectorXd row_lse =
                    (row_max.array() +
                     (logp.colwise() - row_max).array().exp().rowwise().sum().log())
                        .matrix();
                ll = row_lse.sum();
                if (std::isfinite(prev_ll) && ll < prev_ll) {
                    // fp noise in a sum of n row terms scales with |ll|, hence the
                    // relative drift tolerance
                    const double drift = prev_ll - ll;
                    if (drift > 1e-9 * std::max(1.0, std::abs(prev_ll))) {
                        ++out.mono_violations;
                        out.worst_drift = std::max(out.worst_drift, drift);
                    }
                }
                const bool converged =
                    std::isfinite(prev_ll) &&
                    std::abs(ll - prev_ll) <= cfg.em_tol * std::max(1.0, std::abs(prev_ll));
                prev_ll = ll;
                // stop before mutating comps so the reported loglik matches the
                // returned parameters
                if (converged || iter == cfg.em_max_iter) break;
                logp = (logp.colwise() - row_lse).array().exp().matrix();
                const auto before = comps.size();
                if (!m_step(logp))
                    throw numeric_error("em_fit: all components collapsed during iteration " +
                                        std::to_string(iter));
                if (comps.size() != before) prev_ll = -std::numeric_limits<double>::infinity();
            }

            out.comps.reserve(comps.size());
            for (const auto& wc : comps) {
                GaussianComponent c;
                c.weight = wc.weight;
                c.mean = wc.mean;
                c.cov = wc.cov;
                out.comps.push_back(std::move(c));
            }
            double wsum = 0.0;
            for (const auto& c : out.comps) wsum += c.weight;
            for (auto& c : out.comps) c.weight /= wsum;
            out.loglik = ll;
            out.ok = true;
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    };
    for (int r = 0; r < cfg.n_restarts; ++r) run_restart(r);

    int best = -1;
    for (int r = 0; r < cfg.n_restarts; ++r) {
        const auto& o = outcomes[static_cast<std::size_t>(r)];
        if (!o.ok) continue;
        if (best < 0 || o.loglik > outcomes[static_cast<std::size_t>(best)].loglik) best = r;
    }
    if (best < 0) {
        std::string detail = outcomes.front().error;
        throw numeric_error("em_fit: every restart failed for j=" + std::to_string(j) +
                            " (first error: " + detail + ")");
    }
    auto& o = outcomes[static_cast<std::size_t>(best)];
    EmResult res{GaussianMixture(table.labels, std::move(o.comps)),
                 o.loglik,
                 o.iters,
                 o.collapsed,
                 o.mono_violations,
                 o.worst_drift};
    em_invocations().fetch_add(1, std::memory_order_relaxed);
    return res;
}

inline double bic_of(double loglik, int j, int d, int n) {
    // free parameters: j-1 weights, j*d means, j*d(d+1)/2 covariance entries
    const double k = (j - 1) + j * d + j * d * (d + 1) / 2.0;
    return -2.0 * loglik + k * std::log(static_cast<double>(n));
}

struct ModelSelection {
    GaussianMixture mixture;
    int j_requested = 0;  // requested count of the winning fit
    double bic = 0.0;
    EmResult best;
    std::vector<std::pair<int, double>> bic_curve;  // (requested j, bic), failures skipped
    std::vector<std::string> fit_errors;
};

// Fit j = 1..j_max and keep the BIC argmin. The BIC penalty counts the parameters
// of the components that survived, not the requested count, so collapsed fits are
// scored as the smaller model they became.
inline ModelSelection select_model(const SimTable& table, const FitConfig& cfg) {
    cfg.validate();
    std::vector<EmResult> fits;
    std::vector<int> requested;
    std::vector<std::string> errors;
    for (int j = 1; j <= cfg.j_max; ++j) {
        if (table.rows() <= j) break;
        try {
            fits.push_back(em_fit(table, j, cfg));
            requested.push_back(j);
        } catch (const std::exception& e) {
            errors.push_back("j=" + std::to_string(j) + ": " + e.what());
        }
    }
    if (fits.empty())
        throw numeric_error("select_model: no component count could be fitted (" +
                            (errors.empty() ? std::string("no attempts") : errors.front()) + ")");
    int best = 0;
    std::vector<std::pair<int, double>> curve;
    double best_bic = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const double bic =
            bic_of(fits[i].loglik, fits[i].mixture.size(), table.cols(), table.rows());
        curve.emplace_back(requested[i], bic);
        if (bic < best_bic) {
            best_bic = bic;
            best = static_cast<int>(i);
        }
    }
    ModelSelection sel{fits[static_cast<std::size_t>(best)].mixture,
                       requested[static_cast<std::size_t>(best)],
                       best_bic,
                       fits[static_cast<std::size_t>(best)],
                       std::move(curve),
                       std::move(errors)};
    return sel;
}

}  // namespace mixcut
