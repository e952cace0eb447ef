#include "dividemix/mixmatch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dmx {

void HyperParams::validate() const {
    if (aug_rounds < 1) throw InvalidConfig("hyper: M must be >= 1");
    if (temperature <= 0.0) throw InvalidConfig("hyper: T must be > 0");
    if (alpha <= 0.0) throw InvalidConfig("hyper: alpha must be > 0");
    if (lambda_u < 0.0) throw InvalidConfig("hyper: lambda_u must be >= 0");
    if (lambda_r < 0.0) throw InvalidConfig("hyper: lambda_r must be >= 0");
    if (batch < 1) throw InvalidConfig("hyper: batch must be >= 1");
    if (tau <= 0.0 || tau >= 1.0) throw InvalidConfig("hyper: tau must be in (0,1)");
    if (warmup_epochs < 0) throw InvalidConfig("hyper: warmup epochs must be >= 0");
    if (rampup_epochs < 0) throw InvalidConfig("hyper: rampup epochs must be >= 0");
}

Augmenter Augmenter::identity() { return {}; }

Augmenter Augmenter::vector_jitter(const Dataset& train, double scale) {
    Augmenter a;
    a.kind = Kind::VectorJitter;
    int d = train.dim();
    a.sigma.assign(d, 0.0);
    if (train.size() < 2) return a;
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int i = 0; i < train.size(); ++i) mean += train.x(i, j);
        mean /= train.size();
        double var = 0.0;
        for (int i = 0; i < train.size(); ++i) {
            double dlt = train.x(i, j) - mean;
            var += dlt * dlt;
        }
        a.sigma[j] = scale * std::sqrt(var / train.size());
    }
    return a;
}

Augmenter Augmenter::image_crop_flip(int c, int h, int w) {
    Augmenter a;
    a.kind = Kind::ImageCropFlip;
    a.img_c = c;
    a.img_h = h;
    a.img_w = w;
    return a;
}

Augmenter Augmenter::for_dataset(const Dataset& train) {
    if (train.img_c > 0) return image_crop_flip(train.img_c, train.img_h, train.img_w);
    return vector_jitter(train);
}

std::vector<double> hflip_image(std::span<const double> x, int c, int h, int w) {
    std::vector<double> out(x.size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out[ch * h * w + y * w + xx] = x[ch * h * w + y * w + (w - 1 - xx)];
    return out;
}

namespace {

// reflect index into [0, n): ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
int reflect_index(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

} // namespace

std::vector<double> Augmenter::apply(const double* x, int dim, Rng& rng) const {
    switch (kind) {
    case Kind::Identity:
        return std::vector<double>(x, x + dim);
    case Kind::VectorJitter: {
        std::vector<double> out(x, x + dim);
        std::normal_distribution<double> unit(0.0, 1.0);
        for (int j = 0; j < dim; ++j) {
            double n = unit(rng);
            if (sigma[j] != 0.0) out[j] += sigma[j] * n;
        }
        return out;
    }
    case Kind::ImageCropFlip: {
        // reflect indexing needs pad < min(h, w)
        int pad_eff = std::min({pad, img_h - 1, img_w - 1});
        std::uniform_int_distribution<int> off(0, 2 * pad_eff);
        int oy = off(rng);
        int ox = off(rng);
        std::uniform_int_distribution<int> coin(0, 1);
        bool flip = coin(rng) == 1;
        std::vector<double> out(static_cast<size_t>(dim));
        for (int ch = 0; ch < img_c; ++ch) {
            const double* xc = x + ch * img_h * img_w;
            double* oc = out.data() + ch * img_h * img_w;
            for (int y = 0; y < img_h; ++y) {
                int sy = reflect_index(y + oy - pad_eff, img_h);
                for (int xx = 0; xx < img_w; ++xx) {
                    int sx = reflect_index(xx + ox - pad_eff, img_w);
                    oc[y * img_w + xx] = xc[sy * img_w + sx];
                }
            }
        }
        if (flip) out = hflip_image(out, img_c, img_h, img_w);
        return out;
    }
    }
    return std::vector<double>(x, x + dim);
}

std::vector<double> co_refine(std::span<const double> y, std::span<const double> p_avg, double w) {
    std::vector<double> out(y.size());
    for (size_t i = 0; i < y.size(); ++i) out[i] = w * y[i] + (1.0 - w) * p_avg[i];
    return out;
}

std::vector<double> sharpen(std::span<const double> p, double temperature) {
    if (temperature <= 0.0) throw InvalidInput("sharpen: temperature must be > 0");
    std::vector<double> out(p.size());
    double sum = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        out[i] = p[i] > 0.0 ? std::pow(p[i], 1.0 / temperature) : 0.0;
        sum += out[i];
    }
    if (sum <= 0.0) throw InvalidInput("sharpen: input distribution has no mass");
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> co_guess(const Mat& preds_net1, const Mat& preds_net2, double temperature) {
    if (preds_net1.cols != preds_net2.cols || preds_net1.rows != preds_net2.rows)
        throw InvalidInput("co_guess: prediction shapes differ");
    int m = preds_net1.rows;
    int c = preds_net1.cols;
    std::vector<double> qbar(c, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j) qbar[j] += preds_net1(i, j) + preds_net2(i, j);
    for (double& v : qbar) v /= 2.0 * m;
    return sharpen(qbar, temperature);
}

MixPairResult mix_pair(std::span<const double> x1, std::span<const double> p1,
                       std::span<const double> x2, std::span<const double> p2, double alpha,
                       Rng& rng) {
    if (alpha <= 0.0) throw InvalidInput("mix_pair: alpha must be > 0");
    double lambda = sample_beta(alpha, rng);
    double lp = std::max(lambda, 1.0 - lambda);
    MixPairResult r;
    r.lambda_prime = lp;
    r.x.resize(x1.size());
    r.p.resize(p1.size());
    for (size_t i = 0; i < x1.size(); ++i) r.x[i] = lp * x1[i] + (1.0 - lp) * x2[i];
    for (size_t i = 0; i < p1.size(); ++i) r.p[i] = lp * p1[i] + (1.0 - lp) * p2[i];
    return r;
}

MixedBatch mixmatch_transform(const Mat& x_hat, const Mat& y_hat, const Mat& u_hat,
                              const Mat& q_hat, double alpha, Rng& rng) {
    if (x_hat.rows == 0) throw InvalidInput("mixmatch_transform: empty labeled batch");
    if (x_hat.rows != y_hat.rows || u_hat.rows != q_hat.rows)
        throw InvalidInput("mixmatch_transform: input/target row mismatch");
    if (u_hat.rows > 0 && (u_hat.cols != x_hat.cols || q_hat.cols != y_hat.cols))
        throw InvalidInput("mixmatch_transform: labeled/unlabeled shapes differ");
    int nx = x_hat.rows;
    int nu = u_hat.rows;
    int n = nx + nu;

    auto input_row = [&](int i) { return i < nx ? x_hat.row_span(i) : u_hat.row_span(i - nx); };
    auto target_row = [&](int i) { return i < nx ? y_hat.row_span(i) : q_hat.row_span(i - nx); };

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    MixedBatch out;
    out.x_labeled = Mat(nx, x_hat.cols);
    out.p_labeled = Mat(nx, y_hat.cols);
    out.x_unlabeled = Mat(nu, x_hat.cols);
    out.p_unlabeled = Mat(nu, y_hat.cols);
    out.lambdas.reserve(n);
    for (int i = 0; i < n; ++i) {
        auto mixed = mix_pair(input_row(i), target_row(i), input_row(perm[i]), target_row(perm[i]),
                              alpha, rng);
        out.lambdas.push_back(mixed.lambda_prime);
        if (i < nx) {
            std::copy(mixed.x.begin(), mixed.x.end(), out.x_labeled.row(i));
            std::copy(mixed.p.begin(), mixed.p.end(), out.p_labeled.row(i));
        } else {
            std::copy(mixed.x.begin(), mixed.x.end(), out.x_unlabeled.row(i - nx));
            std::copy(mixed.p.begin(), mixed.p.end(), out.p_unlabeled.row(i - nx));
        }
    }
    return out;
}

SemiLossResult semi_losses(const Model& m, const MixedBatch& mixed, double lambda_u,
                           double lambda_r) {
    int nx = mixed.x_labeled.rows;
    int nu = mixed.x_unlabeled.rows;
    if (nx == 0) throw InvalidInput("semi_losses: X' side is empty");
    int c = m.arch.classes;
    int n = nx + nu;

    Mat inputs(n, mixed.x_labeled.cols);
    for (int i = 0; i < nx; ++i)
        std::copy(mixed.x_labeled.row(i), mixed.x_labeled.row(i) + inputs.cols, inputs.row(i));
    for (int i = 0; i < nu; ++i)
        std::copy(mixed.x_unlabeled.row(i), mixed.x_unlabeled.row(i) + inputs.cols,
                  inputs.row(nx + i));

    ForwardCache cache = forward_cached(m, inputs);
    if (!cache.logits.all_finite())
        throw NumericalError("semi_losses: forward pass produced non-finite activations");
    const Mat& P = cache.probs;

    SemiLossResult out;
    auto& L = out.breakdown;

    constexpr double kFloor = 1e-12;
    for (int i = 0; i < nx; ++i) {
        const double* p = P.row(i);
        const double* t = mixed.p_labeled.row(i);
        for (int j = 0; j < c; ++j)
            if (t[j] != 0.0) L.lx -= t[j] * std::log(p[j] < kFloor ? kFloor : p[j]);
    }
    L.lx /= nx;

    if (nu > 0) {
        for (int i = 0; i < nu; ++i) {
            const double* p = P.row(nx + i);
            const double* t = mixed.p_unlabeled.row(i);
            for (int j = 0; j < c; ++j) {
                double d = p[j] - t[j];
                L.lu += d * d;
            }
        }
        L.lu /= nu;
    }

    std::vector<double> avg(c, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* p = P.row(i);
        for (int j = 0; j < c; ++j) avg[j] += p[j];
    }
    for (double& v : avg) v /= n;
    double pi = 1.0 / c;
    for (int j = 0; j < c; ++j)
        L.lreg += pi * std::log(pi / (avg[j] < kFloor ? kFloor : avg[j]));

    L.total = L.lx + lambda_u * L.lu + lambda_r * L.lreg;

    // dL/dprobs for the MSE and regularizer parts; CE goes straight to logits
    Mat dprobs(n, c);
    for (int i = 0; i < nu; ++i) {
        const double* p = P.row(nx + i);
        const double* t = mixed.p_unlabeled.row(i);
        double* g = dprobs.row(nx + i);
        for (int j = 0; j < c; ++j) g[j] = lambda_u * 2.0 * (p[j] - t[j]) / nu;
    }
    for (int i = 0; i < n; ++i) {
        double* g = dprobs.row(i);
        for (int j = 0; j < c; ++j)
            g[j] += lambda_r * (-pi / (n * (avg[j] < kFloor ? kFloor : avg[j])));
    }
    Mat dlogits = dlogits_from_dprobs(P, dprobs);
    for (int i = 0; i < nx; ++i) {
        const double* p = P.row(i);
        const double* t = mixed.p_labeled.row(i);
        double* g = dlogits.row(i);
        for (int j = 0; j < c; ++j) g[j] += (p[j] - t[j]) / nx;
    }

    out.grads = backward_logits(m, cache, dlogits);
    return out;
}

double negative_entropy(const Mat& probs) { return -entropy_value(probs); }

} // namespace dmx
