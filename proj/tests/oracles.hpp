#pragma once

// Test-only oracles. These stay independent of the library's gradient and
// AUC implementations so they can act as ground truth.

#include <cstdint>
#include <functional>
#include <vector>

#include "dividemix/nn.hpp"

namespace oracle {

// Central finite differences over every parameter of the model. loss_fn must
// evaluate the loss at the model's current parameters.
inline dmx::Grads fd_gradients(dmx::Model& m, const std::function<double()>& loss_fn,
                               double step = 1e-4) {
    dmx::Grads g = dmx::Grads::zeros_like(m);
    for (size_t l = 0; l < m.w.size(); ++l) {
        for (size_t i = 0; i < m.w[l].a.size(); ++i) {
            double saved = m.w[l].a[i];
            m.w[l].a[i] = saved + step;
            double up = loss_fn();
            m.w[l].a[i] = saved - step;
            double down = loss_fn();
            m.w[l].a[i] = saved;
            g.w[l].a[i] = (up - down) / (2.0 * step);
        }
        for (size_t i = 0; i < m.b[l].size(); ++i) {
            double saved = m.b[l][i];
            m.b[l][i] = saved + step;
            double up = loss_fn();
            m.b[l][i] = saved - step;
            double down = loss_fn();
            m.b[l][i] = saved;
            g.b[l][i] = (up - down) / (2.0 * step);
        }
    }
    return g;
}

// Worst relative disagreement |a−f| / max(|a|, |f|, floor).
inline double max_rel_error(const dmx::Grads& analytic, const dmx::Grads& fd,
                            double floor = 1e-4) {
    double worst = 0.0;
    auto check = [&](double a, double f) {
        double denom = std::max({std::abs(a), std::abs(f), floor});
        worst = std::max(worst, std::abs(a - f) / denom);
    };
    for (size_t l = 0; l < analytic.w.size(); ++l) {
        for (size_t i = 0; i < analytic.w[l].a.size(); ++i) check(analytic.w[l].a[i], fd.w[l].a[i]);
        for (size_t i = 0; i < analytic.b[l].size(); ++i) check(analytic.b[l][i], fd.b[l][i]);
    }
    return worst;
}

// All clean-vs-noisy pairs, ties worth half. NaN when one side is empty.
inline double brute_force_auc(const std::vector<double>& w,
                              const std::vector<uint8_t>& noise_mask) {
    double wins = 0.0;
    long long pairs = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        if (noise_mask[i]) continue; // clean side
        for (size_t j = 0; j < w.size(); ++j) {
            if (!noise_mask[j]) continue; // noisy side
            ++pairs;
            if (w[i] > w[j])
                wins += 1.0;
            else if (w[i] == w[j])
                wins += 0.5;
        }
    }
    if (pairs == 0) return std::numeric_limits<double>::quiet_NaN();
    return wins / pairs;
}

} // namespace oracle
