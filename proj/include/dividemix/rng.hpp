#pragma once

#include <cstdint>
#include <random>

namespace dmx {

using Rng = std::mt19937_64;

// Beta(alpha, alpha) via two gamma draws. For tiny alpha both draws can
// underflow to zero; the distribution's limit is Bernoulli(1/2) on {0,1}.
inline double sample_beta(double alpha, Rng& rng) {
    std::gamma_distribution<double> g(alpha, 1.0);
    double x = g(rng);
    double y = g(rng);
    double s = x + y;
    if (s > 0.0) return x / s;
    return (rng() & 1) ? 1.0 : 0.0;
}

inline double sample_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

// Uniform integer in [0, n).
inline int sample_index(int n, Rng& rng) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(rng);
}

} // namespace dmx
