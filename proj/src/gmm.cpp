#include "dividemix/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dmx {

namespace {

constexpr double kLogFloor = 1e-12;

double quantile_sorted(const std::vector<double>& sorted, double q) {
    double pos = q * (sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - lo;
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

double log_gauss(double x, double mean, double var) {
    double d = x - mean;
    return -0.5 * std::log(2.0 * M_PI * var) - d * d / (2.0 * var);
}

// log(π₀N₀ + π₁N₁) via log-sum-exp; also fills the component-0 responsibility.
double log_mix_density(const GmmFit& g, double x, double* resp0) {
    double l0 = std::log(g.weight[0]) + log_gauss(x, g.mean[0], g.var[0]);
    double l1 = std::log(g.weight[1]) + log_gauss(x, g.mean[1], g.var[1]);
    double mx = std::max(l0, l1);
    double s = std::exp(l0 - mx) + std::exp(l1 - mx);
    if (resp0) *resp0 = std::exp(l0 - mx) / s;
    return mx + std::log(s);
}

void order_components(GmmFit& g) {
    if (g.mean[0] > g.mean[1]) {
        std::swap(g.mean[0], g.mean[1]);
        std::swap(g.var[0], g.var[1]);
        std::swap(g.weight[0], g.weight[1]);
    }
}

} // namespace

bool LossVector::constant() const {
    if (raw.empty()) return true;
    auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    return *hi - *lo <= 0.0;
}

LossVector per_sample_losses(const Model& m, const Dataset& ds) {
    if (ds.dim() != m.arch.input_size())
        throw InvalidInput("per_sample_losses: dataset dimension does not match model");
    LossVector lv;
    int n = ds.size();
    lv.raw.assign(n, 0.0);
    constexpr int kChunk = 512;
    int chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](int clo, int chi) {
        for (int c = clo; c < chi; ++c) {
            int lo = c * kChunk, hi = std::min(n, lo + kChunk);
            Mat batch(hi - lo, ds.dim());
            for (int i = lo; i < hi; ++i)
                std::copy(ds.x.row(i), ds.x.row(i) + ds.dim(), batch.row(i - lo));
            Mat probs = forward_probs(m, batch);
            for (int i = lo; i < hi; ++i) {
                double p = probs(i - lo, ds.noisy_label[i]);
                lv.raw[i] = -std::log(p < kLogFloor ? kLogFloor : p);
            }
        }
    });

    lv.normalized = normalize_losses(lv.raw);
    return lv;
}

std::vector<double> normalize_losses(const std::vector<double>& raw) {
    std::vector<double> out(raw.size(), 0.0);
    if (raw.empty()) return out;
    auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
    double span = *mx - *mn;
    if (span > 0.0)
        for (size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *mn) / span;
    return out;
}

GmmFit m_step(const std::vector<double>& values, const std::vector<double>& resp0,
              const EmConfig& cfg) {
    GmmFit g;
    double n0 = 0.0, n1 = 0.0, s0 = 0.0, s1 = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        n0 += resp0[i];
        n1 += 1.0 - resp0[i];
        s0 += resp0[i] * values[i];
        s1 += (1.0 - resp0[i]) * values[i];
    }
    n0 = std::max(n0, 1e-12);
    n1 = std::max(n1, 1e-12);
    g.mean[0] = s0 / n0;
    g.mean[1] = s1 / n1;
    double v0 = 0.0, v1 = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        double d0 = values[i] - g.mean[0];
        double d1 = values[i] - g.mean[1];
        v0 += resp0[i] * d0 * d0;
        v1 += (1.0 - resp0[i]) * d1 * d1;
    }
    g.var[0] = std::max(v0 / n0, cfg.var_floor);
    g.var[1] = std::max(v1 / n1, cfg.var_floor);
    double total = n0 + n1;
    g.weight[0] = n0 / total;
    g.weight[1] = n1 / total;
    return g;
}

GmmFit fit_gmm_em(const std::vector<double>& values, const EmConfig& cfg) {
    if (values.size() < 2) throw InvalidInput("fit_gmm_em: need at least 2 points");
    int n = static_cast<int>(values.size());

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    GmmFit g;
    g.mean[0] = quantile_sorted(sorted, 0.10);
    g.mean[1] = quantile_sorted(sorted, 0.90);
    if (g.mean[1] - g.mean[0] <= 1e-12) { // heavy ties; fall back to the extremes
        g.mean[0] = sorted.front();
        g.mean[1] = sorted.back();
    }
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = std::max(var / n, cfg.var_floor);
    g.var[0] = g.var[1] = var;
    g.weight[0] = g.weight[1] = 0.5;

    std::vector<double> resp(n);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        double ll = 0.0;
        for (int i = 0; i < n; ++i) ll += log_mix_density(g, values[i], &resp[i]);
        ll /= n;
        g.ll_trace.push_back(ll);
        if (g.ll_trace.size() >= 2 &&
            std::abs(ll - g.ll_trace[g.ll_trace.size() - 2]) < cfg.tol)
            break;
        GmmFit next = m_step(values, resp, cfg);
        next.ll_trace = std::move(g.ll_trace);
        g = std::move(next);
    }
    order_components(g);
    return g;
}

std::vector<double> clean_posterior(const GmmFit& fit, const std::vector<double>& values) {
    GmmFit g = fit;
    order_components(g);
    std::vector<double> w(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        double r = 0.0;
        log_mix_density(g, values[i], &r);
        w[i] = r;
    }
    return w;
}

CleanPosterior clean_probabilities(const Model& m, const Dataset& ds, const EmConfig& cfg,
                                   LossVector* out_losses) {
    LossVector lv = per_sample_losses(m, ds);
    CleanPosterior out;
    out.source_net = m.tag;
    if (lv.constant()) {
        out.w.assign(ds.size(), 1.0);
    } else {
        GmmFit g = fit_gmm_em(lv.normalized, cfg);
        out.w = clean_posterior(g, lv.normalized);
    }
    if (out_losses) *out_losses = std::move(lv);
    return out;
}

DataDivision co_divide(const CleanPosterior& posterior, double tau, int min_labeled) {
    if (tau <= 0.0 || tau >= 1.0) throw InvalidInput("co_divide: tau must be in (0,1)");
    DataDivision d;
    d.tau = tau;
    d.source_net = posterior.source_net;
    int n = static_cast<int>(posterior.w.size());
    for (int i = 0; i < n; ++i) {
        if (posterior.w[i] >= tau) {
            d.labeled.push_back(i);
            d.labeled_w.push_back(posterior.w[i]);
        } else {
            d.unlabeled.push_back(i);
        }
    }
    if (static_cast<int>(d.labeled.size()) < std::min(min_labeled, n)) {
        // too few cleared the threshold; keep the highest-w samples labeled
        d.fallback_applied = true;
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return posterior.w[a] > posterior.w[b]; });
        int take = std::min(min_labeled, n);
        d.labeled.assign(order.begin(), order.begin() + take);
        std::sort(d.labeled.begin(), d.labeled.end());
        d.labeled_w.clear();
        for (int i : d.labeled) d.labeled_w.push_back(posterior.w[i]);
        d.unlabeled.assign(order.begin() + take, order.end());
        std::sort(d.unlabeled.begin(), d.unlabeled.end());
    }
    return d;
}

void export_division_csv(const LossVector& losses, const CleanPosterior& posterior,
                         const DataDivision& division, const Dataset& ds,
                         const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("export_division_csv: cannot open " + path);
    std::vector<uint8_t> labeled(ds.size(), 0);
    for (int i : division.labeled) labeled[i] = 1;
    f << "index,loss,normalized_loss,w,assigned_set,is_noise\n";
    char buf[128];
    for (int i = 0; i < ds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%s,%d\n", i, losses.raw[i],
                      losses.normalized[i], posterior.w[i],
                      labeled[i] ? "labeled" : "unlabeled", int(ds.noise_mask[i]));
        f << buf;
    }
}

} // namespace dmx
