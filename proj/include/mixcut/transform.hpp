#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"
#include "mixcut/parallel.hpp"
#include "mixcut/sim_table.hpp"

namespace mixcut {

enum class CdfKind { uniform, gaussian, kernel };

inline std::string cdf_kind_name(CdfKind k) {
    switch (k) {
        case CdfKind::uniform: return "uniform";
        case CdfKind::gaussian: return "gaussian";
        default: return "kernel";
    }
}

// Analytic prior CDF for a parameter column. For uniform, a/b are the bounds;
// for gaussian, mean and sd.
struct PriorCdf {
    CdfKind kind = CdfKind::uniform;
    double a = 0.0;
    double b = 1.0;
};

// Monotone map of one variable to the standard normal scale, z = Phi^-1(F(x)).
// Gaussian priors shortcut to the exact affine map and never clamp. Uniform and
// kernel CDFs clamp F(x) to [1/(2n), 1 - 1/(2n)] before the normal quantile.
struct VariableTransform {
    std::string label;
    CdfKind kind = CdfKind::kernel;
    double a = 0.0;  // uniform lo / gaussian mean
    double b = 1.0;  // uniform hi / gaussian sd

    // kernel pieces: quantile-thinned knots with a shared Gaussian bandwidth
    Eigen::VectorXd knots;     // sorted ascending
    Eigen::VectorXd knot_cdf;  // F evaluated at the knots, for inverse warm starts
    double bandwidth = 0.0;

    double u_lo = 0.0;
    double u_hi = 1.0;

    double cdf(double x) const {
        switch (kind) {
            case CdfKind::uniform:
                return std::clamp((x - a) / (b - a), 0.0, 1.0);
            case CdfKind::gaussian:
                return norm_cdf((x - a) / b);
            default:
                return kernel_cdf(x);
        }
    }

    double pdf(double x) const {
        switch (kind) {
            case CdfKind::uniform:
                return (x >= a && x <= b) ? 1.0 / (b - a) : 0.0;
            case CdfKind::gaussian:
                return norm_pdf((x - a) / b) / b;
            default:
                return kernel_pdf(x);
        }
    }

    double to_normal(double x, long* clamps = nullptr) const {
        if (kind == CdfKind::gaussian) return (x - a) / b;
        double u = cdf(x);
        if (u < u_lo || u > u_hi) {
            u = std::clamp(u, u_lo, u_hi);
            if (clamps) ++*clamps;
        }
        return norm_quantile(u);
    }

    double from_normal(double z) const {
        if (kind == CdfKind::gaussian) return a + b * z;
        const double u = std::clamp(norm_cdf(z), u_lo, u_hi);
        if (kind == CdfKind::uniform) return a + (b - a) * u;
        return kernel_inv_cdf(u);
    }

    // d/dx of the full map x -> z, for density Jacobians: pdf(x) / phi(z(x)).
    double dz_dx(double x) const {
        if (kind == CdfKind::gaussian) return 1.0 / b;
        return pdf(x) / norm_pdf(to_normal(x));
    }

private:
    static constexpr double kernel_window = 8.0;

    std::pair<Eigen::Index, Eigen::Index> window_range(double x) const {
        const double lo = x - kernel_window * bandwidth;
        const double hi = x + kernel_window * bandwidth;
        const double* begin = knots.data();
        const double* end = begin + knots.size();
        const Eigen::Index first = std::lower_bound(begin, end, lo) - begin;
        const Eigen::Index last = std::upper_bound(begin, end, hi) - begin;
        return {first, last};
    }

    double kernel_cdf(double x) const {
        const auto [first, last] = window_range(x);
        // Knots entirely below the window each contribute 1 to machine precision.
        double s = static_cast<double>(first);
        for (Eigen::Index k = first; k < last; ++k)
            s += norm_cdf((x - knots(k)) / bandwidth);
        return s / static_cast<double>(knots.size());
    }

    double kernel_pdf(double x) const {
        const auto [first, last] = window_range(x);
        double s = 0.0;
        for (Eigen::Index k = first; k < last; ++k)
            s += norm_pdf((x - knots(k)) / bandwidth);
        return s / (static_cast<double>(knots.size()) * bandwidth);
    }

    double kernel_inv_cdf(double u) const {
        // Warm start by interpolating the tabulated knot CDF, then safeguarded
        // Newton against the bisection bracket.
        const auto m = knots.size();
        double lo = knots(0) - (kernel_window + 1.0) * bandwidth;
        double hi = knots(m - 1) + (kernel_window + 1.0) * bandwidth;
        double x;
        const double* cbegin = knot_cdf.data();
        const double* cend = cbegin + knot_cdf.size();
        const Eigen::Index pos = std::lower_bound(cbegin, cend, u) - cbegin;
        if (pos <= 0) {
            x = knots(0);
        } else if (pos >= m) {
            x = knots(m - 1);
        } else {
            const double c0 = knot_cdf(pos - 1), c1 = knot_cdf(pos);
            const double t = (c1 > c0) ? (u - c0) / (c1 - c0) : 0.5;
            x = knots(pos - 1) + t * (knots(pos) - knots(pos - 1));
            lo = knots(pos - 1) - bandwidth;
            hi = knots(pos) + bandwidth;
        }
        for (int it = 0; it < 200; ++it) {
            const double f = kernel_cdf(x) - u;
            if (f > 0.0)
                hi = std::min(hi, x);
            else
                lo = std::max(lo, x);
            const double deriv = kernel_pdf(x);
            double step_to = (deriv > 0.0) ? x - f / deriv : 0.5 * (lo + hi);
            if (!(step_to > lo && step_to < hi)) step_to = 0.5 * (lo + hi);
            const double dx = std::abs(step_to - x);
            x = step_to;
            if (std::abs(f) <= 1e-15 || dx <= 1e-13 * std::max(1.0, std::abs(x))) break;
        }
        return x;
    }
};

struct MarginalTransform {
    int n_train = 0;
    std::vector<VariableTransform> vars;

    int dim() const { return static_cast<int>(vars.size()); }

    const VariableTransform& var(int i) const { return vars.at(static_cast<std::size_t>(i)); }

    const VariableTransform& var(const std::string& label) const {
        for (const auto& v : vars)
            if (v.label == label) return v;
        throw contract_error("transform has no variable named '" + label + "'");
    }

    Eigen::VectorXd to_normal_row(const Eigen::VectorXd& x,
                                  std::vector<long>* clamp_counts = nullptr) const {
        require(x.size() == dim(), "to_normal_row: dimension mismatch");
        Eigen::VectorXd z(x.size());
        for (int i = 0; i < dim(); ++i) {
            long* slot = clamp_counts ? &(*clamp_counts)[static_cast<std::size_t>(i)] : nullptr;
            z(i) = vars[static_cast<std::size_t>(i)].to_normal(x(i), slot);
        }
        return z;
    }

    Eigen::VectorXd from_normal_row(const Eigen::VectorXd& z) const {
        require(z.size() == dim(), "from_normal_row: dimension mismatch");
        Eigen::VectorXd x(z.size());
        for (int i = 0; i < dim(); ++i)
            x(i) = vars[static_cast<std::size_t>(i)].from_normal(z(i));
        return x;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = 1;
        j["n_train"] = n_train;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vars) {
            nlohmann::json jv;
            jv["label"] = v.label;
            jv["kind"] = cdf_kind_name(v.kind);
            jv["u_lo"] = v.u_lo;
            jv["u_hi"] = v.u_hi;
            if (v.kind == CdfKind::kernel) {
                jv["bandwidth"] = v.bandwidth;
                jv["knots"] = std::vector<double>(v.knots.data(), v.knots.data() + v.knots.size());
                jv["knot_cdf"] =
                    std::vector<double>(v.knot_cdf.data(), v.knot_cdf.data() + v.knot_cdf.size());
            } else {
                jv["a"] = v.a;
                jv["b"] = v.b;
            }
            arr.push_back(std::move(jv));
        }
        j["vars"] = std::move(arr);
        return j;
    }

    static MarginalTransform from_json(const nlohmann::json& j) {
        require(j.is_object() && j.contains("version"), "transform json: missing 'version'");
        const int version = j.at("version").get<int>();
        if (version != 1)
            throw contract_error("transform json: schema version " + std::to_string(version) +
                                 " not supported, expected 1");
        MarginalTransform tf;
        tf.n_train = j.at("n_train").get<int>();
        for (const auto& jv : j.at("vars")) {
            VariableTransform v;
            v.label = jv.at("label").get<std::string>();
            const std::string kind = jv.at("kind").get<std::string>();
            v.u_lo = jv.at("u_lo").get<double>();
            v.u_hi = jv.at("u_hi").get<double>();
            if (kind == "kernel") {
                v.kind = CdfKind::kernel;
                v.bandwidth = jv.at("bandwidth").get<double>();
                const auto knots = jv.at("knots").get<std::vector<double>>();
                const auto kcdf = jv.at("knot_cdf").get<std::vector<double>>();
                v.knots = Eigen::Map<const Eigen::VectorXd>(
                    knots.data(), static_cast<Eigen::Index>(knots.size()));
                v.knot_cdf = Eigen::Map<const Eigen::VectorXd>(
                    kcdf.data(), static_cast<Eigen::Index>(kcdf.size()));
            } else if (kind == "uniform" || kind == "gaussian") {
                v.kind = kind == "uniform" ? CdfKind::uniform : CdfKind::gaussian;
                v.a = jv.at("a").get<double>();
                v.b = jv.at("b").get<double>();
            } else {
                throw contract_error("transform json: unknown kind '" + kind + "'");
            }
            tf.vars.push_back(std::move(v));
        }
        return tf;
    }
};

// Knot count for the smoothed empirical CDF. Thinning to sample quantiles keeps
// evaluation cheap on big tables without visibly moving the fitted CDF.
inline constexpr int max_cdf_knots = 2048;

inline VariableTransform build_kernel_transform(const std::string& label,
                                                const Eigen::VectorXd& column, int n_train) {
    VariableTransform v;
    v.label = label;
    v.kind = CdfKind::kernel;
    const auto n = column.size();
    std::vector<double> sorted(column.data(), column.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double sd = sd_sample(column);
    // A constant column can still show sd ~ 1e-16 from accumulation error in the
    // mean, so degeneracy is judged by the actual range.
    if (!(sd > 0.0) || !(sorted.back() > sorted.front()))
        throw contract_error("column '" + label + "' is degenerate (zero sample variance)");
    v.bandwidth = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
    const int m = std::min<int>(max_cdf_knots, static_cast<int>(n));
    v.knots.resize(m);
    for (int k = 0; k < m; ++k) {
        // midpoint quantiles of the sorted sample
        auto pos = static_cast<Eigen::Index>((k + 0.5) * static_cast<double>(n) / m);
        pos = std::min<Eigen::Index>(pos, n - 1);
        v.knots(k) = sorted[static_cast<std::size_t>(pos)];
    }
    v.u_lo = 0.5 / static_cast<double>(n_train);
    v.u_hi = 1.0 - v.u_lo;
    v.knot_cdf.resize(m);
    for (int k = 0; k < m; ++k) v.knot_cdf(k) = v.cdf(v.knots(k));
    return v;
}

// One transform per column: analytic where a prior CDF is supplied, smoothed
// empirical CDF otherwise. Keys in `analytic` must name real columns.
inline MarginalTransform build_transform(const SimTable& table,
                                         const std::map<std::string, PriorCdf>& analytic = {}) {
    table.validate();
    for (const auto& [name, spec] : analytic) {
        (void)spec;
        table.column_index(name);  // throws on unknown names
    }
    MarginalTransform tf;
    tf.n_train = table.rows();
    for (int i = 0; i < table.cols(); ++i) {
        const std::string& label = table.labels[static_cast<std::size_t>(i)];
        const auto it = analytic.find(label);
        if (it == analytic.end()) {
            tf.vars.push_back(build_kernel_transform(label, table.values.col(i), table.rows()));
            continue;
        }
        VariableTransform v;
        v.label = label;
        v.kind = it->second.kind;
        v.a = it->second.a;
        v.b = it->second.b;
        if (v.kind == CdfKind::uniform) {
            require(v.b > v.a, "uniform prior for '" + label + "': upper bound must exceed lower");
            v.u_lo = 0.5 / static_cast<double>(table.rows());
            v.u_hi = 1.0 - v.u_lo;
        } else if (v.kind == CdfKind::gaussian) {
            require(v.b > 0.0, "gaussian prior for '" + label + "': sd must be positive");
            v.u_lo = 0.0;
            v.u_hi = 1.0;
        } else {
            throw contract_error("analytic prior for '" + label +
                                 "' must be uniform or gaussian");
        }
        tf.vars.push_back(std::move(v));
    }
    return tf;
}

// Column-wise transform of a whole table. clamp_counts, when given, is resized to
// the column count and accumulates how often each column hit the CDF clamp.
inline SimTable to_normal(const SimTable& table, const MarginalTransform& tf,
                          std::vector<long>* clamp_counts = nullptr) {
    require(table.cols() == tf.dim(), "to_normal: table and transform dims differ");
    for (int i = 0; i < table.cols(); ++i)
        require(table.labels[static_cast<std::size_t>(i)] == tf.var(i).label,
                "to_normal: column " + std::to_string(i) + " is '" +
                    table.labels[static_cast<std::size_t>(i)] + "' but transform expects '" +
                    tf.var(i).label + "'");
    if (clamp_counts) clamp_counts->assign(static_cast<std::size_t>(table.cols()), 0);
    SimTable out = table;
    for (int i = 0; i < table.cols(); ++i) {
        const auto& v = tf.var(i);
        std::atomic<long> clamps{0};
        parallel_for(table.rows(), [&](std::int64_t r) {
            long c = 0;
            out.values(r, i) = v.to_normal(table.values(r, i), &c);
            if (c) clamps.fetch_add(c, std::memory_order_relaxed);
        });
        if (clamp_counts) (*clamp_counts)[static_cast<std::size_t>(i)] = clamps.load();
    }
    return out;
}

inline SimTable from_normal(const SimTable& table, const MarginalTransform& tf) {
    require(table.cols() == tf.dim(), "from_normal: table and transform dims differ");
    SimTable out = table;
    for (int i = 0; i < table.cols(); ++i) {
        const auto& v = tf.var(i);
        for (int r = 0; r < table.rows(); ++r)
            out.values(r, i) = v.from_normal(table.values(r, i));
    }
    return out;
}

}  // namespace mixcut
