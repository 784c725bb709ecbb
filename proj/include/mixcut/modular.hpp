#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mixcut/errors.hpp"
#include "mixcut/gmm.hpp"
#include "mixcut/parallel.hpp"

namespace mixcut {

// Index blocks of a fitted joint mixture: parameters split into phi (trusted
// module) and eta (suspect module's own parameters), summaries split into s1
// (trusted data) and s2 (suspect data). phi and s1 must be nonempty; eta and s2
// may be empty. Together the blocks must cover the parameter and summary columns
// exactly.
struct ModularProblem {
    std::vector<int> phi, eta, s1, s2;

    int phi_dim() const { return static_cast<int>(phi.size()); }
    int eta_dim() const { return static_cast<int>(eta.size()); }
    int s_dim() const { return static_cast<int>(s1.size() + s2.size()); }

    std::vector<int> summary_indices() const {
        std::vector<int> s = s1;
        s.insert(s.end(), s2.begin(), s2.end());
        return s;
    }

    void validate(const std::vector<std::string>& labels, int param_count) const {
        const int d = static_cast<int>(labels.size());
        require(param_count >= 1 && param_count <= d,
                "modular problem: param_count out of range");
        require(!phi.empty(), "modular problem: phi block is empty");
        require(!s1.empty(), "modular problem: s1 block is empty");
        std::vector<int> owner(static_cast<std::size_t>(d), -1);
        auto claim = [&](const std::vector<int>& idx, int who, const char* name) {
            for (int k : idx) {
                require(k >= 0 && k < d, std::string("modular problem: ") + name + " index " +
                                             std::to_string(k) + " out of range");
                require(owner[static_cast<std::size_t>(k)] == -1,
                        "modular problem: column '" + labels[static_cast<std::size_t>(k)] +
                            "' assigned to two blocks");
                owner[static_cast<std::size_t>(k)] = who;
            }
        };
        claim(phi, 0, "phi");
        claim(eta, 1, "eta");
        claim(s1, 2, "s1");
        claim(s2, 3, "s2");
        for (int k = 0; k < d; ++k) {
            const int who = owner[static_cast<std::size_t>(k)];
            const std::string& lab = labels[static_cast<std::size_t>(k)];
            if (k < param_count)
                require(who == 0 || who == 1,
                        "modular problem: parameter column '" + lab + "' not in phi or eta");
            else
                require(who == 2 || who == 3,
                        "modular problem: summary column '" + lab + "' not in s1 or s2");
        }
    }

    static ModularProblem by_names(const std::vector<std::string>& labels, int param_count,
                                   const std::vector<std::string>& phi_names,
                                   const std::vector<std::string>& eta_names,
                                   const std::vector<std::string>& s1_names,
                                   const std::vector<std::string>& s2_names) {
        auto find = [&](const std::string& name) {
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == name) return static_cast<int>(i);
            throw contract_error("modular problem: no column named '" + name + "'");
        };
        ModularProblem p;
        for (const auto& n : phi_names) p.phi.push_back(find(n));
        for (const auto& n : eta_names) p.eta.push_back(find(n));
        for (const auto& n : s1_names) p.s1.push_back(find(n));
        for (const auto& n : s2_names) p.s2.push_back(find(n));
        p.validate(labels, param_count);
        return p;
    }
};

namespace detail {

inline Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

inline std::vector<int> cat_idx(std::initializer_list<const std::vector<int>*> lists) {
    std::vector<int> out;
    for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
    return out;
}

inline void check_s_obs(const ModularProblem& prob, const Eigen::VectorXd& s_obs) {
    require(s_obs.size() == prob.s_dim(),
            "s_obs has dim " + std::to_string(s_obs.size()) + ", problem expects " +
                std::to_string(prob.s_dim()) + " (s1 then s2 order)");
    require(s_obs.allFinite(), "s_obs contains non-finite values");
}

}  // namespace detail

// Full-feedback posterior over (phi, eta), conditioning the joint fit on the
// whole summary block. s_obs is on the normal scale, ordered s1 then s2.
inline GaussianMixture full_posterior(const GaussianMixture& joint, const ModularProblem& prob,
                                      const Eigen::VectorXd& s_obs) {
    prob.validate(joint.labels(), prob.phi_dim() + prob.eta_dim());
    detail::check_s_obs(prob, s_obs);
    IndexPartition part;
    part.x = detail::cat_idx({&prob.phi, &prob.eta});
    part.w = prob.summary_indices();
    return ConditionalFamily(joint, part).at(s_obs);
}

// phi-marginal of the full posterior.
inline GaussianMixture full_phi_marginal(const GaussianMixture& joint,
                                         const ModularProblem& prob,
                                         const Eigen::VectorXd& s_obs) {
    std::vector<int> keep(static_cast<std::size_t>(prob.phi_dim()));
    for (int i = 0; i < prob.phi_dim(); ++i) keep[static_cast<std::size_t>(i)] = i;
    return full_posterior(joint, prob, s_obs).marginalize(keep);
}

// phi-marginal with feedback cut: phi sees only s1.
inline GaussianMixture cut_phi_marginal(const GaussianMixture& joint, const ModularProblem& prob,
                                        const Eigen::VectorXd& s_obs) {
    prob.validate(joint.labels(), prob.phi_dim() + prob.eta_dim());
    detail::check_s_obs(prob, s_obs);
    const GaussianMixture sub = joint.marginalize(detail::cat_idx({&prob.phi, &prob.s1}));
    IndexPartition part;
    for (int i = 0; i < prob.phi_dim(); ++i) part.x.push_back(i);
    for (std::size_t i = 0; i < prob.s1.size(); ++i)
        part.w.push_back(prob.phi_dim() + static_cast<int>(i));
    return ConditionalFamily(sub, part).at(s_obs.head(static_cast<Eigen::Index>(prob.s1.size())));
}

// Two-stage posterior: a phi marginal (cut, or a pooled one for partial feedback)
// chained with the conditional eta | (phi, s1, s2) from the same joint fit.
class CutPosterior {
public:
    CutPosterior(GaussianMixture phi_marginal, std::optional<ConditionalFamily> eta_stage,
                 Eigen::VectorXd s_obs, std::vector<std::string> labels, double gamma)
        : phi_(std::move(phi_marginal)),
          eta_stage_(std::move(eta_stage)),
          s_obs_(std::move(s_obs)),
          labels_(std::move(labels)),
          gamma_(gamma) {}

    const GaussianMixture& phi_marginal() const { return phi_; }
    const std::vector<std::string>& labels() const { return labels_; }
    double gamma() const { return gamma_; }
    int phi_dim() const { return phi_.dim(); }
    int eta_dim() const { return static_cast<int>(labels_.size()) - phi_.dim(); }

    GaussianMixture eta_mixture(const Eigen::VectorXd& phi_value) const {
        require(eta_stage_.has_value(), "posterior has no eta block");
        require(phi_value.size() == phi_.dim(), "eta_mixture: phi value has wrong dim");
        return eta_stage_->at(detail::concat(phi_value, s_obs_));
    }

    double log_density(const Eigen::VectorXd& phi_eta) const {
        require(phi_eta.size() == static_cast<Eigen::Index>(labels_.size()),
                "log_density: point has wrong dim");
        const Eigen::VectorXd phi_part = phi_eta.head(phi_.dim());
        double lp = phi_.log_density(phi_part);
        if (eta_dim() > 0)
            lp += eta_mixture(phi_part).log_density(phi_eta.tail(eta_dim()));
        return lp;
    }

    Eigen::MatrixXd sample(std::int64_t n, std::uint64_t seed) const {
        require(n >= 1, "sample: n must be >= 1");
        const Eigen::MatrixXd phi_draws = phi_.sample(n, derive_seed(seed, 0x70686931u));
        Eigen::MatrixXd out(n, labels_.size());
        out.leftCols(phi_.dim()) = phi_draws;
        if (eta_dim() > 0) {
            parallel_for(n, [&](std::int64_t i) {
                const GaussianMixture cond = eta_mixture(phi_draws.row(i).transpose());
                out.row(i).tail(eta_dim()) =
                    cond.sample(1, derive_seed(seed, 0x65746100u + static_cast<std::uint64_t>(i)))
                        .row(0);
            });
        }
        return out;
    }

private:
    GaussianMixture phi_;
    std::optional<ConditionalFamily> eta_stage_;
    Eigen::VectorXd s_obs_;
    std::vector<std::string> labels_;
    double gamma_;
};

namespace detail {

inline std::optional<ConditionalFamily> make_eta_stage(const GaussianMixture& joint,
                                                       const ModularProblem& prob) {
    if (prob.eta.empty()) return std::nullopt;
    IndexPartition part;
    part.x = prob.eta;
    part.w = cat_idx({&prob.phi, &prob.s1, &prob.s2});
    return ConditionalFamily(joint, part);
}

inline std::vector<std::string> posterior_labels(const GaussianMixture& joint,
                                                 const ModularProblem& prob) {
    std::vector<std::string> labels;
    for (int k : prob.phi) labels.push_back(joint.labels()[static_cast<std::size_t>(k)]);
    for (int k : prob.eta) labels.push_back(joint.labels()[static_cast<std::size_t>(k)]);
    return labels;
}

}  // namespace detail

inline CutPosterior cut_posterior(const GaussianMixture& joint, const ModularProblem& prob,
                                  const Eigen::VectorXd& s_obs) {
    return CutPosterior(cut_phi_marginal(joint, prob, s_obs),
                        detail::make_eta_stage(joint, prob), s_obs,
                        detail::posterior_labels(joint, prob), 0.0);
}

// Semi-modular posterior: phi marginal is the linear pool of the full and cut phi
// marginals with weight gamma on full. gamma = 0 recovers cut_posterior exactly
// and gamma = 1 makes the phi marginal the full posterior's.
inline CutPosterior smi_posterior(const GaussianMixture& joint, const ModularProblem& prob,
                                  const Eigen::VectorXd& s_obs, double gamma) {
    require(gamma >= 0.0 && gamma <= 1.0,
            "smi: gamma must lie in [0,1], got " + std::to_string(gamma));
    const GaussianMixture cut_phi = cut_phi_marginal(joint, prob, s_obs);
    const GaussianMixture full_phi = full_phi_marginal(joint, prob, s_obs);
    return CutPosterior(pool(full_phi, cut_phi, gamma), detail::make_eta_stage(joint, prob),
                        s_obs, detail::posterior_labels(joint, prob), gamma);
}

// Conflict statistic: KL divergence of the full-feedback phi marginal from the
// cut phi marginal, both at the observed summaries.
inline double conflict_statistic(const GaussianMixture& joint, const ModularProblem& prob,
                                 const Eigen::VectorXd& s_obs) {
    require(!prob.s2.empty(), "conflict statistic needs a nonempty s2 block");
    return kl_mixture(full_phi_marginal(joint, prob, s_obs),
                      cut_phi_marginal(joint, prob, s_obs));
}

struct ConflictResult {
    double observed_stat = 0.0;
    double tail_p = 1.0;
    int n_ref = 0;
    std::uint64_t seed = 0;
    std::vector<double> reference_stats;  // in draw order
};

struct GammaCurvePoint {
    double gamma = 0.0;
    double observed = 0.0;
    double tail_p = 1.0;
};

struct GammaChoice {
    double gamma_star = 0.0;
    double alpha = 0.0;
    int n_ref = 0;
    std::uint64_t seed = 0;
    std::vector<GammaCurvePoint> curve;
};

namespace detail {

// Stream tags for seed derivation. conflict_check and choose_gamma must draw the
// same reference summaries for the same (joint, s_obs, n_ref, seed), which is what
// makes tail_p at gamma = 1 coincide exactly with the plain conflict check.
inline constexpr std::uint64_t ref_draw_stream = 0x72656664u;

// Pairwise Gaussian KLs between the union of full and cut components (full block
// first) and the cut components. The union-vs-union and union-vs-cut tables do
// not depend on the pool weight, so one table serves every gamma on the grid.
struct PooledKlTable {
    PooledKlTable(const GaussianMixture& full_phi, const GaussianMixture& cut_phi)
        : jf(full_phi.size()), jc(cut_phi.size()) {
        std::vector<const GaussianComponent*> uni;
        uni.reserve(static_cast<std::size_t>(jf + jc));
        for (int a = 0; a < jf; ++a) uni.push_back(&full_phi.component(a));
        for (int b = 0; b < jc; ++b) uni.push_back(&cut_phi.component(b));
        const int ju = jf + jc;
        k_union.resize(ju, ju);
        for (int a = 0; a < ju; ++a)
            for (int b = 0; b < ju; ++b) k_union(a, b) = kl_gaussian(*uni[static_cast<std::size_t>(a)],
                                                                     *uni[static_cast<std::size_t>(b)]);
        weights.resize(ju);
        for (int a = 0; a < jf; ++a) weights[static_cast<std::size_t>(a)] = full_phi.component(a).weight;
        for (int b = 0; b < jc; ++b)
            weights[static_cast<std::size_t>(jf + b)] = cut_phi.component(b).weight;
    }

    // Variational KL of pool(full, cut, gamma) from cut, matching kl_mixture's
    // arithmetic term for term.
    double eval(double gamma) const {
        const int ju = jf + jc;
        std::vector<double> w(static_cast<std::size_t>(ju));
        double pruned = 0.0;
        double mass = 0.0;
        for (int a = 0; a < ju; ++a) {
            const double factor = a < jf ? gamma : 1.0 - gamma;
            double wa = factor * weights[static_cast<std::size_t>(a)];
            if (wa < 1e-14) {
                pruned += wa;
                wa = 0.0;
            }
            w[static_cast<std::size_t>(a)] = wa;
            mass += wa;
        }
        if (pruned > 0.0)
            for (auto& wa : w) wa /= mass;
        std::vector<double> num_terms, den_terms;
        num_terms.reserve(static_cast<std::size_t>(ju));
        den_terms.reserve(static_cast<std::size_t>(jc));
        double total = 0.0;
        for (int a = 0; a < ju; ++a) {
            const double wa = w[static_cast<std::size_t>(a)];
            if (wa <= 0.0) continue;
            num_terms.clear();
            den_terms.clear();
            for (int a2 = 0; a2 < ju; ++a2) {
                const double wa2 = w[static_cast<std::size_t>(a2)];
                if (wa2 > 0.0)
                    num_terms.push_back(std::log(wa2) - k_union(a, a2));
            }
            for (int b = 0; b < jc; ++b) {
                const double wb = weights[static_cast<std::size_t>(jf + b)];
                den_terms.push_back(wb > 0.0 ? std::log(wb) - k_union(a, jf + b)
                                             : -std::numeric_limits<double>::infinity());
            }
            total += wa * (logsumexp(num_terms) - logsumexp(den_terms));
        }
        return total;
    }

    int jf, jc;
    Eigen::MatrixXd k_union;
    std::vector<double> weights;
};

struct ConflictSetup {
    GaussianMixture cut_phi;
    ConditionalFamily full_family;  // phi | (s1, s2), on the (phi, s1, s2) marginal
    Eigen::MatrixXd ref_s2;         // n_ref x |s2| reference draws from s2 | s1 = obs
    Eigen::VectorXd s1_obs;

    ConflictSetup(const GaussianMixture& joint, const ModularProblem& prob,
                  const Eigen::VectorXd& s_obs, int n_ref, std::uint64_t seed)
        : cut_phi(cut_phi_marginal(joint, prob, s_obs)),
          full_family(joint.marginalize(cat_idx({&prob.phi, &prob.s1, &prob.s2})),
                      phi_vs_s_partition(prob)),
          s1_obs(s_obs.head(static_cast<Eigen::Index>(prob.s1.size()))) {
        require(!prob.s2.empty(), "conflict check needs a nonempty s2 block");
        require(n_ref >= 1, "conflict check: n_ref must be >= 1");
        // Reference draws come from the fitted joint itself: s2 | s1 = observed.
        const GaussianMixture sub = joint.marginalize(cat_idx({&prob.s2, &prob.s1}));
        IndexPartition part;
        for (std::size_t i = 0; i < prob.s2.size(); ++i) part.x.push_back(static_cast<int>(i));
        for (std::size_t i = 0; i < prob.s1.size(); ++i)
            part.w.push_back(static_cast<int>(prob.s2.size() + i));
        const GaussianMixture s2_given_s1 = ConditionalFamily(sub, part).at(s1_obs);
        ref_s2 = s2_given_s1.sample(n_ref, derive_seed(seed, ref_draw_stream));
    }

    static IndexPartition phi_vs_s_partition(const ModularProblem& prob) {
        IndexPartition part;
        const int np = prob.phi_dim();
        const int ns = prob.s_dim();
        for (int i = 0; i < np; ++i) part.x.push_back(i);
        for (int i = 0; i < ns; ++i) part.w.push_back(np + i);
        return part;
    }

    GaussianMixture full_phi_at(const Eigen::VectorXd& s2_val) const {
        return full_family.at(concat(s1_obs, s2_val));
    }
};

}  // namespace detail

// Prior-predictive style conflict check: compare the observed conflict statistic
// with its distribution under replicate s2 drawn from the fit given s1 = observed.
// No refitting happens anywhere in here; everything conditions the one joint fit.
inline ConflictResult conflict_check(const GaussianMixture& joint, const ModularProblem& prob,
                                     const Eigen::VectorXd& s_obs, int n_ref = 1000,
                                     std::uint64_t seed = 0) {
    prob.validate(joint.labels(), prob.phi_dim() + prob.eta_dim());
    detail::check_s_obs(prob, s_obs);
    detail::ConflictSetup setup(joint, prob, s_obs, n_ref, seed);
    const auto ns1 = static_cast<Eigen::Index>(prob.s1.size());
    const detail::PooledKlTable obs_table(
        setup.full_phi_at(s_obs.tail(s_obs.size() - ns1)), setup.cut_phi);
    ConflictResult res;
    res.observed_stat = obs_table.eval(1.0);
    res.n_ref = n_ref;
    res.seed = seed;
    res.reference_stats.assign(static_cast<std::size_t>(n_ref), 0.0);
    parallel_for(n_ref, [&](std::int64_t r) {
        const detail::PooledKlTable table(setup.full_phi_at(setup.ref_s2.row(r).transpose()),
                                          setup.cut_phi);
        res.reference_stats[static_cast<std::size_t>(r)] = table.eval(1.0);
    });
    int count = 0;
    for (double g : res.reference_stats)
        if (g >= res.observed_stat) ++count;
    res.tail_p = (1.0 + count) / (static_cast<double>(n_ref) + 1.0);
    return res;
}

// Pick the influence parameter: the largest gamma on the grid whose pooled-vs-cut
// conflict statistic still looks ordinary against the same reference draws, i.e.
// tail probability above alpha. Falls back to 0 if every gamma conflicts.
inline GammaChoice choose_gamma(const GaussianMixture& joint, const ModularProblem& prob,
                                const Eigen::VectorXd& s_obs, double alpha = 0.05,
                                std::vector<double> grid = {}, int n_ref = 1000,
                                std::uint64_t seed = 0) {
    prob.validate(joint.labels(), prob.phi_dim() + prob.eta_dim());
    detail::check_s_obs(prob, s_obs);
    require(alpha > 0.0 && alpha < 1.0, "choose_gamma: alpha must lie in (0,1)");
    if (grid.empty())
        for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
    require(grid.front() == 0.0 && grid.back() == 1.0,
            "choose_gamma: grid must start at 0 and end at 1");
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        require(grid[i] < grid[i + 1], "choose_gamma: grid must be strictly increasing");

    detail::ConflictSetup setup(joint, prob, s_obs, n_ref, seed);
    const auto ns1 = static_cast<Eigen::Index>(prob.s1.size());
    const int ng = static_cast<int>(grid.size());

    const detail::PooledKlTable obs_table(
        setup.full_phi_at(s_obs.tail(s_obs.size() - ns1)), setup.cut_phi);
    std::vector<double> observed(static_cast<std::size_t>(ng));
    for (int g = 0; g < ng; ++g)
        observed[static_cast<std::size_t>(g)] = obs_table.eval(grid[static_cast<std::size_t>(g)]);

    Eigen::MatrixXd ref_stats(n_ref, ng);
    parallel_for(n_ref, [&](std::int64_t r) {
        const detail::PooledKlTable table(setup.full_phi_at(setup.ref_s2.row(r).transpose()),
                                          setup.cut_phi);
        for (int g = 0; g < ng; ++g)
            ref_stats(r, g) = table.eval(grid[static_cast<std::size_t>(g)]);
    });

    GammaChoice choice;
    choice.alpha = alpha;
    choice.n_ref = n_ref;
    choice.seed = seed;
    choice.curve.resize(static_cast<std::size_t>(ng));
    for (int g = 0; g < ng; ++g) {
        int count = 0;
        for (int r = 0; r < n_ref; ++r)
            if (ref_stats(r, g) >= observed[static_cast<std::size_t>(g)]) ++count;
        auto& pt = choice.curve[static_cast<std::size_t>(g)];
        pt.gamma = grid[static_cast<std::size_t>(g)];
        pt.observed = observed[static_cast<std::size_t>(g)];
        pt.tail_p = (1.0 + count) / (static_cast<double>(n_ref) + 1.0);
    }
    choice.gamma_star = 0.0;
    for (int g = ng - 1; g >= 0; --g) {
        if (choice.curve[static_cast<std::size_t>(g)].tail_p > alpha) {
            choice.gamma_star = choice.curve[static_cast<std::size_t>(g)].gamma;
            break;
        }
    }
    return choice;
}

}  // namespace mixcut
