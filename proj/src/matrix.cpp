#include "dividemix/matrix.hpp"

#include <cstdlib>
#include <string>
#include <thread>

namespace dmx {

int worker_threads() {
    static const int n = [] {
        if (const char* env = std::getenv("DIVIDEMIX_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }();
    return n;
}

void parallel_for(int n, const std::function<void(int, int)>& fn) {
    if (n <= 0) return;
    int workers = std::min(worker_threads(), n);
    if (workers <= 1 || n < 64) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int lo = w * chunk;
        int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(fn, lo, hi);
    }
    for (auto& t : pool) t.join();
}

Mat matmul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) throw InvalidInput("matmul: inner dimensions differ");
    Mat C(A.rows, B.cols);
    parallel_for(A.rows, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const double* arow = A.row(i);
            double* crow = C.row(i);
            for (int k = 0; k < A.cols; ++k) {
                double aik = arow[k];
                if (aik == 0.0) continue;
                const double* brow = B.row(k);
                for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
            }
        }
    });
    return C;
}

Mat matmul_nt(const Mat& A, const Mat& B) {
    if (A.cols != B.cols) throw InvalidInput("matmul_nt: inner dimensions differ");
    Mat C(A.rows, B.rows);
    parallel_for(A.rows, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const double* arow = A.row(i);
            double* crow = C.row(i);
            for (int j = 0; j < B.rows; ++j) {
                const double* brow = B.row(j);
                double s = 0.0;
                for (int k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
                crow[j] = s;
            }
        }
    });
    return C;
}

Mat matmul_tn(const Mat& A, const Mat& B) {
    if (A.rows != B.rows) throw InvalidInput("matmul_tn: inner dimensions differ");
    Mat C(A.cols, B.cols);
    for (int k = 0; k < A.rows; ++k) {
        const double* arow = A.row(k);
        const double* brow = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = C.row(i);
            for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
        }
    }
    return C;
}

} // namespace dmx
