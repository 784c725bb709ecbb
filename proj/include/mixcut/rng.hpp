#pragma once

#include <cstdint>
#include <random>

#include "mixcut/errors.hpp"
#include "mixcut/math.hpp"

namespace mixcut {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby stream indices.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent-looking seed for a named substream of a master seed. Keeping each
// logical sampling task on its own stream makes results insensitive to how work
// is split across threads.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix_seed(master ^ mix_seed(stream));
}

// Uniform on the open interval (0,1); never returns an endpoint.
inline double runif(Rng& rng) {
    // 53-bit mantissa draw shifted half a ulp away from 0.
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

inline double runif(Rng& rng, double lo, double hi) { return lo + (hi - lo) * runif(rng); }

// Inverse-CDF normal draw. One uniform per variate, so consumption is fixed and
// results do not depend on the standard library's normal_distribution internals.
inline double rnorm(Rng& rng) { return norm_quantile(runif(rng)); }

inline double rnorm(Rng& rng, double mean, double sd) { return mean + sd * rnorm(rng); }

inline double rexp(Rng& rng) { return -std::log(runif(rng)); }

inline bool rbernoulli(Rng& rng, double p) { return runif(rng) < p; }

inline int rcategorical(Rng& rng, const std::vector<double>& cumulative) {
    require(!cumulative.empty(), "rcategorical: empty cumulative weights");
    const double u = runif(rng) * cumulative.back();
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
    int k = static_cast<int>(it - cumulative.begin());
    if (k >= static_cast<int>(cumulative.size())) k = static_cast<int>(cumulative.size()) - 1;
    return k;
}

}  // namespace mixcut
