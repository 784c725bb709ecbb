#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "mixcut/em.hpp"
#include "mixcut/math.hpp"
#include "mixcut/sim_table.hpp"
#include "mixcut/transform.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

mixcut::SimTable gaussian_column(int n, double mean, double sd, std::uint64_t seed,
                                 const std::string& label = "x") {
    mixcut::Rng rng(seed);
    mixcut::SimTable t;
    t.labels = {label};
    t.param_count = 1;
    t.values.resize(n, 1);
    for (int i = 0; i < n; ++i) t.values(i, 0) = mean + sd * mixcut::rnorm(rng);
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("normal quantile matches reference values and inverts the cdf") {
    REQUIRE(mixcut::norm_quantile(0.5) == 0.0);
    REQUIRE_THAT(mixcut::norm_quantile(0.975), WithinAbs(1.959963984540054, 1e-12));
    REQUIRE_THAT(mixcut::norm_quantile(0.99), WithinAbs(2.3263478740408408, 1e-12));
    REQUIRE_THAT(mixcut::norm_quantile(1e-4), WithinAbs(-3.719016485455709, 1e-12));
    for (double p :
         {1e-15, 1e-10, 1e-6, 1e-3, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-6, 1.0 - 1e-9}) {
        const double q = mixcut::norm_quantile(p);
        REQUIRE_THAT(mixcut::norm_cdf(q) / p, WithinAbs(1.0, 1e-9));
    }
    // Symmetry only holds where 1-p is representable without absorbing the tail.
    for (double p : {1e-6, 1e-3, 0.01, 0.2, 0.45}) {
        const double q = mixcut::norm_quantile(p);
        REQUIRE_THAT(mixcut::norm_quantile(1.0 - p), WithinAbs(-q, 1e-9 * (1.0 + std::abs(q))));
    }
    CHECK_THROWS_AS(mixcut::norm_quantile(0.0), mixcut::contract_error);
    CHECK_THROWS_AS(mixcut::norm_quantile(1.0), mixcut::contract_error);
}

TEST_CASE("gaussian analytic transform is an exact affine map") {
    mixcut::SimTable t = gaussian_column(200, 1.0, 2.0, 42);
    std::map<std::string, mixcut::PriorCdf> analytic;
    analytic["x"] = {mixcut::CdfKind::gaussian, 1.0, 2.0};
    const mixcut::MarginalTransform tf = mixcut::build_transform(t, analytic);
    const auto& v = tf.var("x");
    REQUIRE(v.to_normal(1.0) == 0.0);
    REQUIRE(v.to_normal(3.0) == 1.0);
    REQUIRE(v.from_normal(v.to_normal(-7.5)) == -7.5);
    // no clamping anywhere, arbitrarily far out
    REQUIRE(std::isfinite(v.to_normal(1e6)));
    REQUIRE_THAT(v.dz_dx(0.3), WithinAbs(0.5, 1e-14));
}

TEST_CASE("uniform analytic transform round trips and clamps the boundary") {
    mixcut::Rng rng(7);
    mixcut::SimTable t;
    t.labels = {"u"};
    t.param_count = 1;
    t.values.resize(500, 1);
    for (int i = 0; i < 500; ++i) t.values(i, 0) = mixcut::runif(rng, 2.0, 5.0);
    std::map<std::string, mixcut::PriorCdf> analytic;
    analytic["u"] = {mixcut::CdfKind::uniform, 2.0, 5.0};
    const mixcut::MarginalTransform tf = mixcut::build_transform(t, analytic);
    const auto& v = tf.var("u");
    REQUIRE_THAT(v.to_normal(3.5), WithinAbs(0.0, 1e-14));
    REQUIRE_THAT(v.from_normal(0.0), WithinAbs(3.5, 1e-12));
    for (double x : {2.2, 2.9, 3.3, 4.4, 4.9})
        REQUIRE_THAT(v.from_normal(v.to_normal(x)), WithinAbs(x, 1e-10));

    long clamped = 0;
    REQUIRE(std::isfinite(v.to_normal(1.9, &clamped)));
    REQUIRE(clamped == 1);

    analytic["u"] = {mixcut::CdfKind::uniform, 5.0, 2.0};
    CHECK_THROWS_AS(mixcut::build_transform(t, analytic), mixcut::contract_error);
}

TEST_CASE("kernel transform produces near-normal margins and round trips") {
    mixcut::SimTable t = gaussian_column(5000, 3.0, 2.0, 11);
    const mixcut::MarginalTransform tf = mixcut::build_transform(t, {});
    const auto& v = tf.var("x");
    const mixcut::SimTable z = mixcut::to_normal(t, tf);
    REQUIRE_THAT(z.values.col(0).mean(), WithinAbs(0.0, 0.05));
    REQUIRE_THAT(mixcut::sd_sample(z.values.col(0)), WithinAbs(1.0, 0.05));
    for (double x : {0.5, 2.0, 3.0, 4.5, 7.0})
        REQUIRE_THAT(v.from_normal(v.to_normal(x)), WithinAbs(x, 1e-8));
    // strictly increasing map
    double prev = v.to_normal(-2.0);
    for (double x = -1.5; x < 8.0; x += 0.5) {
        const double cur = v.to_normal(x);
        REQUIRE(cur > prev);
        prev = cur;
    }
    // density consistency: dz_dx equals the numerical derivative of to_normal
    for (double x : {1.0, 3.0, 5.5}) {
        const double h = 1e-5;
        const double numeric = (v.to_normal(x + h) - v.to_normal(x - h)) / (2 * h);
        REQUIRE_THAT(v.dz_dx(x), WithinAbs(numeric, 1e-4 * (1.0 + numeric)));
    }
}

TEST_CASE("degenerate columns are rejected with the column named") {
    mixcut::SimTable t;
    t.labels = {"flat"};
    t.param_count = 1;
    t.values = Eigen::MatrixXd::Constant(50, 1, 4.2);
    CHECK_THROWS_WITH(mixcut::build_transform(t, {}),
                      ContainsSubstring("flat") && ContainsSubstring("zero sample variance"));
}

TEST_CASE("marginal transform json round trip is bitwise") {
    mixcut::SimTable t = gaussian_column(800, -1.0, 0.7, 5, "k");
    const mixcut::MarginalTransform tf = mixcut::build_transform(t, {});
    const mixcut::MarginalTransform back = mixcut::MarginalTransform::from_json(tf.to_json());
    for (double x : {-2.0, -1.1, -0.4, 0.3})
        REQUIRE(back.var("k").to_normal(x) == tf.var("k").to_normal(x));
    nlohmann::json j = tf.to_json();
    j["version"] = 9;
    CHECK_THROWS_WITH(mixcut::MarginalTransform::from_json(j), ContainsSubstring("version"));
}

TEST_CASE("em with one component reproduces sample moments plus ridge") {
    mixcut::Rng rng(33);
    mixcut::SimTable t;
    t.labels = {"a", "b"};
    t.param_count = 2;
    t.values.resize(400, 2);
    for (int i = 0; i < 400; ++i) {
        const double u = mixcut::rnorm(rng);
        t.values(i, 0) = 0.4 * u + 0.1 * mixcut::rnorm(rng);
        t.values(i, 1) = -0.2 * u + 0.3 * mixcut::rnorm(rng);
    }
    mixcut::FitConfig cfg;
    cfg.seed = 1;
    const mixcut::EmResult res = mixcut::em_fit(t, 1, cfg);
    REQUIRE(res.mixture.size() == 1);
    const Eigen::VectorXd mean = t.values.colwise().mean();
    const Eigen::MatrixXd centered = t.values.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(t.rows()) +
        cfg.ridge * Eigen::MatrixXd::Identity(2, 2);
    REQUIRE((res.mixture.component(0).mean - mean).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((res.mixture.component(0).cov - cov).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE(res.mixture.component(0).weight == 1.0);
    REQUIRE(res.monotonicity_violations == 0);
}

TEST_CASE("em recovers two well separated clusters and bic selects them") {
    mixcut::Rng rng(77);
    const int n = 3000;
    mixcut::SimTable t;
    t.labels = {"x", "y"};
    t.param_count = 2;
    t.values.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        const bool left = mixcut::runif(rng) < 0.4;
        const double cx = left ? -3.0 : 3.0;
        t.values(i, 0) = cx + 0.7 * mixcut::rnorm(rng);
        t.values(i, 1) = 0.5 * cx + 0.7 * mixcut::rnorm(rng);
    }
    mixcut::FitConfig cfg;
    cfg.j_max = 4;
    cfg.n_restarts = 3;
    cfg.seed = 9;
    const long calls_before = mixcut::em_invocations().load();
    const mixcut::ModelSelection sel = mixcut::select_model(t, cfg);
    REQUIRE(mixcut::em_invocations().load() > calls_before);
    REQUIRE(sel.mixture.size() == 2);
    // identify components by sign of the first mean coordinate
    int left_j = sel.mixture.component(0).mean(0) < 0 ? 0 : 1;
    const auto& lc = sel.mixture.component(left_j);
    const auto& rc = sel.mixture.component(1 - left_j);
    REQUIRE_THAT(lc.mean(0), WithinAbs(-3.0, 0.1));
    REQUIRE_THAT(rc.mean(0), WithinAbs(3.0, 0.1));
    REQUIRE_THAT(lc.weight, WithinAbs(0.4, 0.05));
    REQUIRE(sel.best.monotonicity_violations == 0);
    REQUIRE(sel.bic_curve.size() >= 2);
}

TEST_CASE("em rejects more components than rows") {
    mixcut::SimTable t = gaussian_column(4, 0.0, 1.0, 3);
    mixcut::FitConfig cfg;
    CHECK_THROWS_AS(mixcut::em_fit(t, 5, cfg), mixcut::contract_error);
}

TEST_CASE("csv round trip is byte identical") {
    mixcut::SimTable t;
    t.labels = {"p", "q"};
    t.param_count = 1;
    t.values.resize(4, 2);
    t.values << 1.0 / 3.0, 1e-17, -0.0, 2.5e300, 1.0, -7.25, 3.141592653589793, 1e-300;
    const std::string p1 = "/tmp/mixcut_csv_a.csv", p2 = "/tmp/mixcut_csv_b.csv";
    t.write_csv(p1);
    const mixcut::SimTable back = mixcut::SimTable::read_csv(p1, 1);
    REQUIRE((back.values - t.values).cwiseAbs().maxCoeff() == 0.0);
    back.write_csv(p2);
    REQUIRE(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("csv reader names the offending cell") {
    const std::string path = "/tmp/mixcut_csv_bad.csv";
    {
        std::ofstream out(path);
        out << "a,b\n1.0,2.0\n3.0,oops\n";
    }
    CHECK_THROWS_WITH(mixcut::SimTable::read_csv(path, 1),
                      ContainsSubstring("oops") || ContainsSubstring("row 2"));
    std::remove(path.c_str());
}

TEST_CASE("transform clamp counters accumulate over a table") {
    mixcut::SimTable t;
    t.labels = {"u"};
    t.param_count = 1;
    t.values.resize(3, 1);
    t.values << 0.5, 1.5, -0.2;  // two rows outside [0,1]
    std::map<std::string, mixcut::PriorCdf> analytic;
    analytic["u"] = {mixcut::CdfKind::uniform, 0.0, 1.0};
    const mixcut::MarginalTransform tf = mixcut::build_transform(t, analytic);
    std::vector<long> counts;
    mixcut::to_normal(t, tf, &counts);
    REQUIRE(counts.size() == 1);
    REQUIRE(counts[0] == 2);
}
