#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dividemix/errors.hpp"

namespace dmx {

// Dense row-major matrix of doubles. Small on purpose: the networks in this
// project are fixed-architecture MLPs/CNNs, so a handful of loops beats a
// linear algebra dependency.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
    std::span<const double> row_span(int i) const { return {row(i), static_cast<size_t>(cols)}; }

    size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }

    void fill(double v) { std::fill(a.begin(), a.end(), v); }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Number of worker threads for data-prep parallelism. Reads DIVIDEMIX_THREADS
// once; defaults to hardware concurrency.
int worker_threads();

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. Each index must write only to its own output slots so results do
// not depend on the thread count.
void parallel_for(int n, const std::function<void(int, int)>& fn);

Mat matmul(const Mat& A, const Mat& B);    // A (m×k) · B (k×n) -> (m×n)
Mat matmul_nt(const Mat& A, const Mat& B); // A (m×k) · Bᵀ with B (n×k) -> (m×n)
Mat matmul_tn(const Mat& A, const Mat& B); // Aᵀ · B with A (k×m), B (k×n) -> (m×n)

inline double l2_distance(const Mat& x, const Mat& y) {
    double s = 0.0;
    for (size_t i = 0; i < x.a.size(); ++i) {
        double d = x.a[i] - y.a[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace dmx
