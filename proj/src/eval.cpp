#include "dividemix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmx {

double test_accuracy(const Model& net1, const Model* net2, const Dataset& testset, TestMode mode) {
    if (testset.size() == 0) throw InvalidInput("test_accuracy: empty test set");
    if (mode != TestMode::Net1 && net2 == nullptr)
        throw InvalidInput("test_accuracy: net2 required for this mode");

    int n = testset.size();
    std::vector<int> correct(n, 0);
    constexpr int kChunk = 512;
    int chunks = (n + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](int clo, int chi) {
        for (int c = clo; c < chi; ++c) {
            int lo = c * kChunk, hi = std::min(n, lo + kChunk);
            Mat batch(hi - lo, testset.dim());
            for (int i = lo; i < hi; ++i)
                std::copy(testset.x.row(i), testset.x.row(i) + testset.dim(), batch.row(i - lo));
            Mat probs;
            switch (mode) {
            case TestMode::Net1:
                probs = forward_probs(net1, batch);
                break;
            case TestMode::Net2:
                probs = forward_probs(*net2, batch);
                break;
            case TestMode::Ensemble: {
                probs = forward_probs(net1, batch);
                Mat p2 = forward_probs(*net2, batch);
                for (size_t k = 0; k < probs.a.size(); ++k) probs.a[k] = 0.5 * (probs.a[k] + p2.a[k]);
                break;
            }
            }
            for (int i = lo; i < hi; ++i) {
                const double* p = probs.row(i - lo);
                int best = 0;
                for (int j = 1; j < probs.cols; ++j)
                    if (p[j] > p[best]) best = j; // ties keep the lowest index
                correct[i] = best == testset.true_label[i] ? 1 : 0;
            }
        }
    });
    int hits = std::accumulate(correct.begin(), correct.end(), 0);
    return static_cast<double>(hits) / n;
}

Summary summarize(const std::vector<double>& accuracy_history) {
    if (accuracy_history.empty()) throw InvalidInput("summarize: empty history");
    Summary s;
    s.best = *std::max_element(accuracy_history.begin(), accuracy_history.end());
    size_t take = std::min<size_t>(10, accuracy_history.size());
    double sum = std::accumulate(accuracy_history.end() - take, accuracy_history.end(), 0.0);
    s.last10 = sum / take;
    return s;
}

double division_auc(const std::vector<double>& w, const std::vector<uint8_t>& noise_mask) {
    if (w.size() != noise_mask.size()) throw InvalidInput("division_auc: size mismatch");
    size_t n = w.size();
    size_t n_clean = 0;
    for (uint8_t m : noise_mask) n_clean += m ? 0 : 1;
    size_t n_noisy = n - n_clean;
    if (n_clean == 0 || n_noisy == 0) return std::numeric_limits<double>::quiet_NaN();

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return w[a] < w[b]; });

    // mid-ranks for tied scores
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && w[order[j + 1]] == w[order[i]]) ++j;
        double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }

    double r_clean = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (!noise_mask[k]) r_clean += rank[k];
    double u = r_clean - 0.5 * n_clean * (n_clean + 1);
    return u / (static_cast<double>(n_clean) * static_cast<double>(n_noisy));
}

std::vector<int> histogram(const std::vector<double>& values, int bins, double lo, double hi) {
    if (bins < 1 || hi <= lo) throw InvalidInput("histogram: bad binning");
    std::vector<int> counts(bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
    }
    return counts;
}

double histogram_entropy(const std::vector<int>& counts) {
    long long total = std::accumulate(counts.begin(), counts.end(), 0LL);
    if (total == 0) return 0.0;
    double h = 0.0;
    for (int c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

} // namespace dmx
