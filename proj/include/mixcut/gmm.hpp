#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"
#include "mixcut/rng.hpp"

namespace mixcut {

// Lower Cholesky factor with escalating diagonal jitter. Starts at 1e-8 times the
// mean diagonal and retries up to three times, 10x each step; anything that still
// fails is treated as numerically indefinite rather than papered over.
inline Eigen::MatrixXd cholesky_psd(const Eigen::MatrixXd& a, const std::string& what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double mean_diag = a.diagonal().mean();
    if (!(mean_diag > 0.0))
        throw numeric_error(what + ": covariance has non-positive mean diagonal, cannot factor");
    double jitter = 1e-8 * mean_diag;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    for (int attempt = 0; attempt < 3; ++attempt) {
        llt.compute(a + jitter * eye);
        if (llt.info() == Eigen::Success) return llt.matrixL();
        jitter *= 10.0;
    }
    throw numeric_error(what + ": covariance not positive definite after jitter up to " +
                        std::to_string(jitter / 10.0));
}

struct GaussianComponent {
    double weight = 0.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// KL(N(mu0,cov0) || N(mu1,cov1)) in closed form. Cholesky solves throughout, no
// explicit inverses. Identical arguments give exactly 0 because the solve of L
// against itself cancels term by term.
inline double kl_gaussian(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& cov0,
                          const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1) {
    const auto d = mu0.size();
    require(mu1.size() == d && cov0.rows() == d && cov0.cols() == d && cov1.rows() == d &&
                cov1.cols() == d,
            "kl_gaussian: dimension mismatch");
    const Eigen::MatrixXd l0 = cholesky_psd(cov0, "kl_gaussian cov0");
    const Eigen::MatrixXd l1 = cholesky_psd(cov1, "kl_gaussian cov1");
    const Eigen::MatrixXd a = l1.triangularView<Eigen::Lower>().solve(l0);
    const double trace_term = a.squaredNorm();
    const Eigen::VectorXd y = l1.triangularView<Eigen::Lower>().solve(mu1 - mu0);
    const double maha = y.squaredNorm();
    const double logdet_diff =
        2.0 * (l1.diagonal().array().log().sum() - l0.diagonal().array().log().sum());
    return 0.5 * (trace_term + maha - static_cast<double>(d) + logdet_diff);
}

inline double kl_gaussian(const GaussianComponent& p, const GaussianComponent& q) {
    return kl_gaussian(p.mean, p.cov, q.mean, q.cov);
}

class GaussianMixture {
public:
    GaussianMixture(std::vector<std::string> labels, std::vector<GaussianComponent> components)
        : labels_(std::move(labels)), comps_(std::move(components)) {
        validate_and_cache();
    }

    int dim() const { return static_cast<int>(labels_.size()); }
    int size() const { return static_cast<int>(comps_.size()); }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<GaussianComponent>& components() const { return comps_; }
    const GaussianComponent& component(int j) const { return comps_.at(static_cast<std::size_t>(j)); }

    int label_index(const std::string& name) const {
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] == name) return static_cast<int>(i);
        throw contract_error("mixture has no variable named '" + name + "'");
    }

    double component_log_density(int j, const Eigen::VectorXd& x) const {
        const auto& c = comps_[static_cast<std::size_t>(j)];
        const Eigen::VectorXd y =
            chol_[static_cast<std::size_t>(j)].triangularView<Eigen::Lower>().solve(x - c.mean);
        return log_norm_[static_cast<std::size_t>(j)] - 0.5 * y.squaredNorm();
    }

    double log_density(const Eigen::VectorXd& x) const {
        require(x.size() == dim(), "log_density: point has dim " + std::to_string(x.size()) +
                                       ", mixture has dim " + std::to_string(dim()));
        std::vector<double> terms(comps_.size());
        for (std::size_t j = 0; j < comps_.size(); ++j)
            terms[j] = log_weight_[j] + component_log_density(static_cast<int>(j), x);
        return logsumexp(terms);
    }

    // One row per point.
    Eigen::VectorXd log_density_rows(const Eigen::MatrixXd& pts) const {
        require(pts.cols() == dim(), "log_density_rows: column count must equal mixture dim");
        Eigen::VectorXd out(pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            out(i) = log_density(pts.row(i).transpose());
        return out;
    }

    Eigen::MatrixXd sample(std::int64_t n, std::uint64_t seed) const {
        require(n >= 1, "sample: n must be >= 1");
        Rng rng(seed);
        Eigen::MatrixXd out(n, dim());
        Eigen::VectorXd z(dim());
        for (std::int64_t i = 0; i < n; ++i) {
            const int j = rcategorical(rng, cum_weights_);
            for (int k = 0; k < dim(); ++k) z(k) = rnorm(rng);
            out.row(i) = (comps_[static_cast<std::size_t>(j)].mean +
                          chol_[static_cast<std::size_t>(j)] * z)
                             .transpose();
        }
        return out;
    }

    Eigen::VectorXd mean() const {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
        for (const auto& c : comps_) m += c.weight * c.mean;
        return m;
    }

    Eigen::MatrixXd cov() const {
        const Eigen::VectorXd m = mean();
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim(), dim());
        for (const auto& c : comps_)
            s += c.weight * (c.cov + (c.mean - m) * (c.mean - m).transpose());
        return s;
    }

    GaussianMixture marginalize(const std::vector<int>& keep) const {
        require(!keep.empty(), "marginalize: index set is empty");
        check_index_set(keep, "marginalize");
        std::vector<std::string> labels;
        labels.reserve(keep.size());
        for (int k : keep) labels.push_back(labels_[static_cast<std::size_t>(k)]);
        std::vector<GaussianComponent> comps;
        comps.reserve(comps_.size());
        const auto m = static_cast<Eigen::Index>(keep.size());
        for (const auto& c : comps_) {
            GaussianComponent sub;
            sub.weight = c.weight;
            sub.mean.resize(m);
            sub.cov.resize(m, m);
            for (Eigen::Index a = 0; a < m; ++a) {
                sub.mean(a) = c.mean(keep[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < m; ++b)
                    sub.cov(a, b) = c.cov(keep[static_cast<std::size_t>(a)],
                                          keep[static_cast<std::size_t>(b)]);
            }
            comps.push_back(std::move(sub));
        }
        return GaussianMixture(std::move(labels), std::move(comps));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = 1;
        j["labels"] = labels_;
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& c : comps_) {
            nlohmann::json jc;
            jc["weight"] = c.weight;
            jc["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index r = 0; r < c.cov.rows(); ++r) {
                std::vector<double> row(static_cast<std::size_t>(c.cov.cols()));
                for (Eigen::Index k = 0; k < c.cov.cols(); ++k)
                    row[static_cast<std::size_t>(k)] = c.cov(r, k);
                rows.push_back(row);
            }
            jc["cov"] = rows;
            comps.push_back(std::move(jc));
        }
        j["components"] = std::move(comps);
        return j;
    }

    static GaussianMixture from_json(const nlohmann::json& j) {
        require(j.is_object(), "mixture json: top level must be an object");
        require(j.contains("version"), "mixture json: missing 'version'");
        const int version = j.at("version").get<int>();
        if (version != 1)
            throw contract_error("mixture json: schema version " + std::to_string(version) +
                                 " not supported, expected 1");
        require(j.contains("labels") && j.contains("components"),
                "mixture json: missing 'labels' or 'components'");
        std::vector<std::string> labels = j.at("labels").get<std::vector<std::string>>();
        std::vector<GaussianComponent> comps;
        for (const auto& jc : j.at("components")) {
            GaussianComponent c;
            c.weight = jc.at("weight").get<double>();
            const auto mean = jc.at("mean").get<std::vector<double>>();
            c.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                       static_cast<Eigen::Index>(mean.size()));
            const auto& jcov = jc.at("cov");
            const auto d = static_cast<Eigen::Index>(mean.size());
            require(static_cast<Eigen::Index>(jcov.size()) == d,
                    "mixture json: cov row count does not match mean length");
            c.cov.resize(d, d);
            for (Eigen::Index r = 0; r < d; ++r) {
                const auto row = jcov.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
                require(static_cast<Eigen::Index>(row.size()) == d,
                        "mixture json: cov is not square");
                for (Eigen::Index k = 0; k < d; ++k) c.cov(r, k) = row[static_cast<std::size_t>(k)];
            }
            comps.push_back(std::move(c));
        }
        return GaussianMixture(std::move(labels), std::move(comps));
    }

private:
    void check_index_set(const std::vector<int>& idx, const std::string& who) const {
        std::vector<bool> seen(static_cast<std::size_t>(dim()), false);
        for (int k : idx) {
            require(k >= 0 && k < dim(),
                    who + ": index " + std::to_string(k) + " out of range for dim " +
                        std::to_string(dim()));
            require(!seen[static_cast<std::size_t>(k)],
                    who + ": duplicate index " + std::to_string(k));
            seen[static_cast<std::size_t>(k)] = true;
        }
    }

    void validate_and_cache() {
        require(!comps_.empty(), "mixture: needs at least one component");
        require(!labels_.empty(), "mixture: needs at least one variable label");
        for (std::size_t a = 0; a < labels_.size(); ++a)
            for (std::size_t b = a + 1; b < labels_.size(); ++b)
                require(labels_[a] != labels_[b], "mixture: duplicate label '" + labels_[a] + "'");
        const auto d = static_cast<Eigen::Index>(labels_.size());
        double wsum = 0.0;
        for (std::size_t j = 0; j < comps_.size(); ++j) {
            const auto& c = comps_[j];
            const std::string tag = "component " + std::to_string(j);
            require(c.weight >= 0.0, "mixture: " + tag + " has negative weight");
            require(c.mean.size() == d, "mixture: " + tag + " mean dim " +
                                            std::to_string(c.mean.size()) + " != label count " +
                                            std::to_string(d));
            require(c.cov.rows() == d && c.cov.cols() == d,
                    "mixture: " + tag + " covariance shape mismatch");
            require(c.mean.allFinite() && c.cov.allFinite(),
                    "mixture: " + tag + " has non-finite entries");
            const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
            require((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                    "mixture: " + tag + " covariance is not symmetric");
            wsum += c.weight;
        }
        require(std::abs(wsum - 1.0) <= 1e-12,
                "mixture: weights sum to " + std::to_string(wsum) + ", expected 1");
        chol_.resize(comps_.size());
        log_norm_.resize(comps_.size());
        log_weight_.resize(comps_.size());
        cum_weights_.resize(comps_.size());
        double cum = 0.0;
        for (std::size_t j = 0; j < comps_.size(); ++j) {
            Eigen::MatrixXd sym = 0.5 * (comps_[j].cov + comps_[j].cov.transpose());
            chol_[j] = cholesky_psd(sym, "mixture component " + std::to_string(j));
            log_norm_[j] = -0.5 * static_cast<double>(d) * log_2pi -
                           chol_[j].diagonal().array().log().sum();
            log_weight_[j] = comps_[j].weight > 0.0 ? std::log(comps_[j].weight)
                                                    : -std::numeric_limits<double>::infinity();
            cum += comps_[j].weight;
            cum_weights_[j] = cum;
        }
    }

    std::vector<std::string> labels_;
    std::vector<GaussianComponent> comps_;
    std::vector<Eigen::MatrixXd> chol_;
    std::vector<double> log_norm_;
    std::vector<double> log_weight_;
    std::vector<double> cum_weights_;
};

// Split of the variable indices into a conditioned block x and a conditioning
// block w. Blocks must be disjoint; together they need not cover everything.
struct IndexPartition {
    std::vector<int> x;
    std::vector<int> w;

    void validate(int dim) const {
        require(!x.empty(), "partition: x block is empty");
        require(!w.empty(), "partition: w block is empty");
        std::vector<int> seen(static_cast<std::size_t>(dim), 0);
        for (int k : x) {
            require(k >= 0 && k < dim, "partition: x index " + std::to_string(k) + " out of range");
            require(seen[static_cast<std::size_t>(k)]++ == 0,
                    "partition: index " + std::to_string(k) + " repeated");
        }
        for (int k : w) {
            require(k >= 0 && k < dim, "partition: w index " + std::to_string(k) + " out of range");
            require(seen[static_cast<std::size_t>(k)]++ == 0,
                    "partition: index " + std::to_string(k) + " appears in both blocks");
        }
    }
};

// Per-component pieces of p(x | w) precomputed once, so conditioning at many w
// values costs one small matrix-vector product per component instead of a fresh
// factorization. Conditional covariances do not depend on w, only the means and
// the component weights do.
class ConditionalFamily {
public:
    ConditionalFamily(const GaussianMixture& m, const IndexPartition& part) {
        part.validate(m.dim());
        for (int k : part.x) x_labels_.push_back(m.labels()[static_cast<std::size_t>(k)]);
        const auto nx = static_cast<Eigen::Index>(part.x.size());
        const auto nw = static_cast<Eigen::Index>(part.w.size());
        parts_.reserve(static_cast<std::size_t>(m.size()));
        for (int j = 0; j < m.size(); ++j) {
            const auto& c = m.component(j);
            Part p;
            p.weight = c.weight;
            p.mu_x.resize(nx);
            p.mu_w.resize(nw);
            Eigen::MatrixXd sxx(nx, nx), sxw(nx, nw), sww(nw, nw);
            for (Eigen::Index a = 0; a < nx; ++a) {
                p.mu_x(a) = c.mean(part.x[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < nx; ++b)
                    sxx(a, b) = c.cov(part.x[static_cast<std::size_t>(a)],
                                      part.x[static_cast<std::size_t>(b)]);
                for (Eigen::Index b = 0; b < nw; ++b)
                    sxw(a, b) = c.cov(part.x[static_cast<std::size_t>(a)],
                                      part.w[static_cast<std::size_t>(b)]);
            }
            for (Eigen::Index a = 0; a < nw; ++a) {
                p.mu_w(a) = c.mean(part.w[static_cast<std::size_t>(a)]);
                for (Eigen::Index b = 0; b < nw; ++b)
                    sww(a, b) = c.cov(part.w[static_cast<std::size_t>(a)],
                                      part.w[static_cast<std::size_t>(b)]);
            }
            const std::string tag = "conditioning component " + std::to_string(j);
            p.chol_w = cholesky_psd(0.5 * (sww + sww.transpose()), tag);
            // reg = sxw * sww^{-1}, via two triangular solves against the factor.
            Eigen::MatrixXd tmp = p.chol_w.triangularView<Eigen::Lower>().solve(sxw.transpose());
            Eigen::MatrixXd solved =
                p.chol_w.transpose().triangularView<Eigen::Upper>().solve(tmp);
            p.reg = solved.transpose();
            Eigen::MatrixXd cc = sxx - p.reg * sxw.transpose();
            p.cond_cov = 0.5 * (cc + cc.transpose());
            p.log_norm_w = -0.5 * static_cast<double>(nw) * log_2pi -
                           p.chol_w.diagonal().array().log().sum();
            p.log_weight = p.weight > 0.0 ? std::log(p.weight)
                                          : -std::numeric_limits<double>::infinity();
            parts_.push_back(std::move(p));
        }
    }

    int conditioning_dim() const {
        return parts_.empty() ? 0 : static_cast<int>(parts_.front().mu_w.size());
    }

    // Log density of the w-marginal at w; the normalizer of the conditional.
    double log_marginal(const Eigen::VectorXd& w) const {
        std::vector<double> terms(parts_.size());
        for (std::size_t j = 0; j < parts_.size(); ++j)
            terms[j] = parts_[j].log_weight + log_gauss_w(parts_[j], w);
        return logsumexp(terms);
    }

    GaussianMixture at(const Eigen::VectorXd& w) const {
        require(w.size() == conditioning_dim(),
                "condition: w has dim " + std::to_string(w.size()) + ", expected " +
                    std::to_string(conditioning_dim()));
        std::vector<double> lw(parts_.size());
        for (std::size_t j = 0; j < parts_.size(); ++j)
            lw[j] = parts_[j].log_weight + log_gauss_w(parts_[j], w);
        const double norm = logsumexp(lw);
        if (!std::isfinite(norm))
            throw numeric_error("condition: all component weights vanished at the given w");
        std::vector<GaussianComponent> comps;
        comps.reserve(parts_.size());
        for (std::size_t j = 0; j < parts_.size(); ++j) {
            const double wt = std::exp(lw[j] - norm);
            if (wt < 1e-14) continue;
            GaussianComponent c;
            c.weight = wt;
            c.mean = parts_[j].mu_x + parts_[j].reg * (w - parts_[j].mu_w);
            c.cov = parts_[j].cond_cov;
            comps.push_back(std::move(c));
        }
        if (comps.empty())
            throw numeric_error("condition: every conditional weight fell below the prune cutoff");
        double mass = 0.0;
        for (const auto& c : comps) mass += c.weight;
        for (auto& c : comps) c.weight /= mass;
        return GaussianMixture(x_labels_, std::move(comps));
    }

private:
    struct Part {
        double weight = 0.0;
        double log_weight = 0.0;
        Eigen::VectorXd mu_x, mu_w;
        Eigen::MatrixXd reg;       // sxw * sww^{-1}
        Eigen::MatrixXd cond_cov;  // sxx - reg * sxw^T
        Eigen::MatrixXd chol_w;
        double log_norm_w = 0.0;
    };

    static double log_gauss_w(const Part& p, const Eigen::VectorXd& w) {
        const Eigen::VectorXd y = p.chol_w.triangularView<Eigen::Lower>().solve(w - p.mu_w);
        return p.log_norm_w - 0.5 * y.squaredNorm();
    }

    std::vector<Part> parts_;
    std::vector<std::string> x_labels_;
};

inline GaussianMixture condition(const GaussianMixture& m, const IndexPartition& part,
                                 const Eigen::VectorXd& w) {
    return ConditionalFamily(m, part).at(w);
}

// Linear opinion pool gamma*a + (1-gamma)*b. Components with exactly pruned-away
// weight are dropped; the rest are renormalized only if pruning removed positive
// mass, so gamma = 0 and gamma = 1 return b's and a's weights bit for bit.
inline GaussianMixture pool(const GaussianMixture& a, const GaussianMixture& b, double gamma) {
    require(gamma >= 0.0 && gamma <= 1.0,
            "pool: gamma must lie in [0,1], got " + std::to_string(gamma));
    require(a.dim() == b.dim(), "pool: mixtures have different dims");
    require(a.labels() == b.labels(), "pool: mixtures are over different variables");
    std::vector<GaussianComponent> comps;
    comps.reserve(static_cast<std::size_t>(a.size() + b.size()));
    double pruned = 0.0;
    auto push = [&](const GaussianComponent& c, double factor) {
        GaussianComponent scaled = c;
        scaled.weight = factor * c.weight;
        if (scaled.weight < 1e-14) {
            pruned += scaled.weight;
            return;
        }
        comps.push_back(std::move(scaled));
    };
    for (const auto& c : a.components()) push(c, gamma);
    for (const auto& c : b.components()) push(c, 1.0 - gamma);
    require(!comps.empty(), "pool: all pooled weights pruned to zero");
    if (pruned > 0.0) {
        double mass = 0.0;
        for (const auto& c : comps) mass += c.weight;
        for (auto& c : comps) c.weight /= mass;
    }
    return GaussianMixture(a.labels(), std::move(comps));
}

// Variational mixture-to-mixture KL approximation (the Hershey-Olsen lower-bound
// form). Built from pairwise Gaussian KLs with one shared log-sum-exp routine, so
// kl_mixture(f, f) is exactly 0 and single-component inputs reduce exactly to
// kl_gaussian. The approximation itself is not guaranteed nonnegative.
inline double kl_mixture(const GaussianMixture& f, const GaussianMixture& g) {
    require(f.dim() == g.dim(), "kl_mixture: mixtures have different dims");
    const int jf = f.size(), jg = g.size();
    std::vector<double> num_terms(static_cast<std::size_t>(jf));
    std::vector<double> den_terms(static_cast<std::size_t>(jg));
    double total = 0.0;
    for (int a = 0; a < jf; ++a) {
        const auto& fa = f.component(a);
        if (fa.weight <= 0.0) continue;
        for (int a2 = 0; a2 < jf; ++a2) {
            const auto& fa2 = f.component(a2);
            num_terms[static_cast<std::size_t>(a2)] =
                fa2.weight > 0.0 ? std::log(fa2.weight) - kl_gaussian(fa, fa2)
                                 : -std::numeric_limits<double>::infinity();
        }
        for (int b = 0; b < jg; ++b) {
            const auto& gb = g.component(b);
            den_terms[static_cast<std::size_t>(b)] =
                gb.weight > 0.0 ? std::log(gb.weight) - kl_gaussian(fa, gb)
                                : -std::numeric_limits<double>::infinity();
        }
        total += fa.weight * (logsumexp(num_terms) - logsumexp(den_terms));
    }
    return total;
}

}  // namespace mixcut
