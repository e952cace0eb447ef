#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "dividemix/mixmatch.hpp"
#include "oracles.hpp"

using namespace dmx;

namespace {

Model make_model(int in, int classes, uint64_t seed) {
    ArchSpec a;
    a.kind = ArchKind::Mlp;
    a.input_dim = in;
    a.hidden = {7};
    a.classes = classes;
    Rng rng(seed);
    return Model::init(a, 1, rng);
}

Mat random_rows(int rows, int cols, Rng& rng, double scale = 1.0) {
    Mat x(rows, cols);
    std::normal_distribution<double> d(0.0, scale);
    for (double& v : x.a) v = d(rng);
    return x;
}

Mat random_dists(int rows, int classes, Rng& rng) {
    Mat t(rows, classes);
    std::uniform_real_distribution<double> d(0.05, 1.0);
    for (int i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < classes; ++j) {
            t(i, j) = d(rng);
            sum += t(i, j);
        }
        for (int j = 0; j < classes; ++j) t(i, j) /= sum;
    }
    return t;
}

bool is_distribution(std::span<const double> p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= 1e-6;
}

Dataset vector_dataset(int n, int dim, uint64_t seed) {
    Dataset ds;
    ds.classes = 2;
    ds.x = Mat(n, dim);
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, 2.0);
    for (double& v : ds.x.a) v = d(rng);
    ds.noisy_label.assign(n, 0);
    ds.true_label.assign(n, 0);
    ds.noise_mask.assign(n, 0);
    return ds;
}

} // namespace

TEST_CASE("vector jitter: zero sigma is the identity, mean stays near the original") {
    Dataset constant = vector_dataset(10, 3, 1);
    constant.x.fill(2.5); // zero per-feature std -> sigma 0
    Augmenter a0 = Augmenter::vector_jitter(constant);
    Rng rng(5);
    auto out = a0.apply(constant.x.row(0), 3, rng);
    CHECK(out == std::vector<double>{2.5, 2.5, 2.5});

    Dataset ds = vector_dataset(500, 3, 2);
    Augmenter aug = Augmenter::vector_jitter(ds);
    CHECK(aug.sigma.size() == 3);
    for (double s : aug.sigma) CHECK(s > 0.0);

    // Monte Carlo: the jitter is zero-mean, so the empirical mean of many
    // copies stays within 3·sigma/sqrt(n) of the source
    const double* x0 = ds.x.row(0);
    std::vector<double> mean(3, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto j = aug.apply(x0, 3, rng);
        for (int k = 0; k < 3; ++k) mean[k] += j[k];
    }
    for (int k = 0; k < 3; ++k) {
        mean[k] /= n;
        CHECK(std::abs(mean[k] - x0[k]) <= 3.0 * aug.sigma[k] / 100.0);
    }
}

TEST_CASE("horizontal flip is an involution") {
    Rng rng(3);
    Mat img = random_rows(1, 2 * 4 * 6, rng);
    auto once = hflip_image(img.row_span(0), 2, 4, 6);
    auto twice = hflip_image(once, 2, 4, 6);
    CHECK(twice == std::vector<double>(img.row(0), img.row(0) + img.cols));
    CHECK(once != twice);
}

TEST_CASE("image augmentation keeps shape and draws pixels from the reflected source") {
    Rng rng(9);
    const int c = 3, h = 8, w = 8;
    Mat img = random_rows(1, c * h * w, rng);
    Augmenter aug = Augmenter::image_crop_flip(c, h, w);
    for (int trial = 0; trial < 20; ++trial) {
        auto out = aug.apply(img.row(0), c * h * w, rng);
        CHECK(out.size() == static_cast<size_t>(c * h * w));
        // every output pixel exists somewhere in the source plane
        for (int ch = 0; ch < c; ++ch) {
            const double* plane = img.row(0) + ch * h * w;
            for (int i = 0; i < h * w; ++i) {
                bool found = false;
                for (int j = 0; j < h * w && !found; ++j)
                    found = out[ch * h * w + i] == plane[j];
                CHECK(found);
            }
        }
    }
}

TEST_CASE("image augmentation stays in bounds for tiny images") {
    Rng rng(71);
    const int c = 1, h = 4, w = 4; // smaller than the default pad of 4
    Mat img = random_rows(1, c * h * w, rng);
    Augmenter aug = Augmenter::image_crop_flip(c, h, w);
    for (int trial = 0; trial < 100; ++trial) {
        auto out = aug.apply(img.row(0), c * h * w, rng);
        for (double v : out) {
            bool found = false;
            for (int j = 0; j < h * w && !found; ++j) found = v == img(0, j);
            CHECK(found);
        }
    }
}

TEST_CASE("hyperparameter bounds are enforced") {
    HyperParams hp;
    hp.validate();
    HyperParams m = hp;
    m.aug_rounds = 0;
    CHECK_THROWS_AS(m.validate(), InvalidConfig);
    HyperParams t = hp;
    t.temperature = 0.0;
    CHECK_THROWS_AS(t.validate(), InvalidConfig);
    HyperParams a = hp;
    a.alpha = -1.0;
    CHECK_THROWS_AS(a.validate(), InvalidConfig);
    HyperParams lu = hp;
    lu.lambda_u = -0.5;
    CHECK_THROWS_AS(lu.validate(), InvalidConfig);
    HyperParams b = hp;
    b.batch = 0;
    CHECK_THROWS_AS(b.validate(), InvalidConfig);
    HyperParams tau = hp;
    tau.tau = 1.0;
    CHECK_THROWS_AS(tau.validate(), InvalidConfig);
}

TEST_CASE("co_refine blends the label with the averaged prediction") {
    std::vector<double> y{1.0, 0.0};
    std::vector<double> p{0.6, 0.4};
    CHECK(co_refine(y, p, 1.0) == y);
    CHECK(co_refine(y, p, 0.0) == p);
    auto half = co_refine(y, p, 0.5);
    CHECK(half[0] == doctest::Approx(0.8));
    CHECK(half[1] == doctest::Approx(0.2));
}

TEST_CASE("sharpen: identity at T=1, frozen value at T=0.5, argmax mass as T->0") {
    std::vector<double> p{0.8, 0.2};
    auto same = sharpen(p, 1.0);
    CHECK(same[0] == doctest::Approx(0.8).epsilon(1e-12));

    auto sharp = sharpen(p, 0.5); // 0.64/0.68, 0.04/0.68
    CHECK(sharp[0] == doctest::Approx(0.9412).epsilon(1e-3));
    CHECK(sharp[1] == doctest::Approx(0.0588).epsilon(1e-2));

    auto extreme = sharpen(std::vector<double>{0.6, 0.4}, 0.01);
    CHECK(extreme[0] >= 0.999);

    CHECK_THROWS_AS(sharpen(std::vector<double>{0.0, 0.0}, 0.5), InvalidInput);
    CHECK_THROWS_AS(sharpen(p, 0.0), InvalidInput);
}

TEST_CASE("sharpen preserves argmax and increases the max entry for T < 1") {
    Rng rng(17);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> p(4);
        double sum = 0.0;
        for (double& v : p) {
            v = u(rng);
            sum += v;
        }
        for (double& v : p) v /= sum;
        auto s = sharpen(p, 0.5);
        CHECK(is_distribution(s));
        int am_before = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        int am_after = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
        CHECK(am_before == am_after);
        CHECK(s[am_after] >= p[am_before] - 1e-12);
    }
}

TEST_CASE("co_guess averages both networks across augmentations, then sharpens") {
    // identical predictions: the average is the shared distribution
    Mat p1(2, 2), p2(2, 2);
    for (int i = 0; i < 2; ++i) {
        p1(i, 0) = p2(i, 0) = 0.7;
        p1(i, 1) = p2(i, 1) = 0.3;
    }
    auto q_t1 = co_guess(p1, p2, 1.0);
    CHECK(q_t1[0] == doctest::Approx(0.7).epsilon(1e-12));

    // M=1, opposite one-hot predictions: uniform at any temperature
    Mat a(1, 2), b(1, 2);
    a(0, 0) = 1.0;
    b(0, 1) = 1.0;
    auto q = co_guess(a, b, 0.5);
    CHECK(q[0] == doctest::Approx(0.5));
    CHECK(q[1] == doctest::Approx(0.5));

    // M=2 with four known distributions, checked against the hand computation
    Mat c(2, 2), d(2, 2);
    c(0, 0) = 0.9; c(0, 1) = 0.1;
    c(1, 0) = 0.7; c(1, 1) = 0.3;
    d(0, 0) = 0.6; d(0, 1) = 0.4;
    d(1, 0) = 0.2; d(1, 1) = 0.8;
    auto got = co_guess(c, d, 0.5);
    double m0 = (0.9 + 0.7 + 0.6 + 0.2) / 4.0; // 0.6
    double m1 = 1.0 - m0;
    double s0 = m0 * m0 / (m0 * m0 + m1 * m1);
    CHECK(got[0] == doctest::Approx(s0).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(1.0 - s0).epsilon(1e-12));
}

TEST_CASE("mix_pair keeps the first source dominant and matches its own lambda") {
    Rng rng(23);
    std::vector<double> x1{0.0, 0.0}, x2{1.0, 1.0};
    std::vector<double> p1{1.0, 0.0}, p2{0.0, 1.0};
    for (int trial = 0; trial < 200; ++trial) {
        auto r = mix_pair(x1, p1, x2, p2, 4.0, rng);
        CHECK(r.lambda_prime >= 0.5);
        CHECK(r.lambda_prime <= 1.0);
        for (size_t i = 0; i < x1.size(); ++i)
            CHECK(r.x[i] ==
                  doctest::Approx(r.lambda_prime * x1[i] + (1 - r.lambda_prime) * x2[i]));
        for (size_t i = 0; i < p1.size(); ++i)
            CHECK(r.p[i] ==
                  doctest::Approx(r.lambda_prime * p1[i] + (1 - r.lambda_prime) * p2[i]));
        CHECK(is_distribution(r.p));
        // x' sits inside the coordinate-wise hull: here [0, 0.5] per coordinate
        for (double v : r.x) {
            CHECK(v >= 0.0);
            CHECK(v <= 0.5);
        }
    }
    CHECK_THROWS_AS(mix_pair(x1, p1, x2, p2, 0.0, rng), InvalidInput);
}

TEST_CASE("mix_pair at degenerate alpha returns the first source") {
    Rng rng(31);
    std::vector<double> x1{2.0, -1.0}, x2{5.0, 5.0};
    std::vector<double> p1{0.3, 0.7}, p2{0.9, 0.1};
    for (int trial = 0; trial < 50; ++trial) {
        auto r = mix_pair(x1, p1, x2, p2, 1e-9, rng);
        CHECK(r.lambda_prime == 1.0);
        CHECK(r.x == x1);
        CHECK(r.p == p1);
    }
}

TEST_CASE("mixmatch_transform: sizes, convex hull, and identity limit") {
    Rng rng(37);
    const int bm = 6, d = 3, c = 2;
    Mat xh = random_rows(bm, d, rng);
    Mat yh = random_dists(bm, c, rng);
    Mat uh = random_rows(bm, d, rng);
    Mat qh = random_dists(bm, c, rng);

    MixedBatch mixed = mixmatch_transform(xh, yh, uh, qh, 4.0, rng);
    CHECK(mixed.x_labeled.rows == bm);
    CHECK(mixed.x_unlabeled.rows == bm);
    CHECK(mixed.lambdas.size() == static_cast<size_t>(2 * bm));

    // each labeled output is its source mixed with SOME combined-batch row
    auto combined_row = [&](int i) { return i < bm ? xh.row(i) : uh.row(i - bm); };
    for (int i = 0; i < bm; ++i) {
        double lp = mixed.lambdas[i];
        CHECK(lp >= 0.5);
        bool found_partner = false;
        for (int j = 0; j < 2 * bm && !found_partner; ++j) {
            bool all_match = true;
            for (int k = 0; k < d && all_match; ++k) {
                double expect = lp * xh(i, k) + (1 - lp) * combined_row(j)[k];
                all_match = std::abs(mixed.x_labeled(i, k) - expect) <= 1e-9;
            }
            found_partner = all_match;
        }
        CHECK(found_partner);
        CHECK(is_distribution(mixed.p_labeled.row_span(i)));
    }

    // degenerate alpha: X' == X̂ and U' == Û
    MixedBatch id = mixmatch_transform(xh, yh, uh, qh, 1e-9, rng);
    CHECK(id.x_labeled.a == xh.a);
    CHECK(id.p_labeled.a == yh.a);
    CHECK(id.x_unlabeled.a == uh.a);

    // empty unlabeled side is allowed
    MixedBatch sup = mixmatch_transform(xh, yh, Mat(), Mat(), 4.0, rng);
    CHECK(sup.x_labeled.rows == bm);
    CHECK(sup.x_unlabeled.rows == 0);

    CHECK_THROWS_AS(mixmatch_transform(Mat(), Mat(), uh, qh, 4.0, rng), InvalidInput);
}

TEST_CASE("semi_losses: frozen trivial cases") {
    Model uniform = make_model(4, 4, 2);
    for (auto& w : uniform.w) w.fill(0.0);
    for (auto& b : uniform.b) std::fill(b.begin(), b.end(), 0.0);

    Rng rng(41);
    MixedBatch mixed;
    mixed.x_labeled = random_rows(3, 4, rng);
    mixed.p_labeled = random_dists(3, 4, rng);
    mixed.x_unlabeled = random_rows(2, 4, rng);
    mixed.p_unlabeled = Mat(2, 4, 0.25); // targets equal the uniform predictions

    SemiLossResult r = semi_losses(uniform, mixed, 25.0, 1.0);
    CHECK(r.breakdown.lu == 0.0);   // targets equal predictions on U'
    CHECK(r.breakdown.lreg == 0.0); // average output is exactly the uniform prior
    CHECK(r.breakdown.total == r.breakdown.lx);

    // L_X equals the hand-computed cross entropy against uniform predictions
    double expect = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) expect -= mixed.p_labeled(i, j) * std::log(0.25);
    expect /= 3.0;
    CHECK(r.breakdown.lx == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("semi_losses satisfies the exact total decomposition") {
    Model m = make_model(5, 3, 7);
    Rng rng(43);
    MixedBatch mixed;
    mixed.x_labeled = random_rows(4, 5, rng);
    mixed.p_labeled = random_dists(4, 3, rng);
    mixed.x_unlabeled = random_rows(6, 5, rng);
    mixed.p_unlabeled = random_dists(6, 3, rng);

    double lu_w = 17.5, lr_w = 0.8;
    SemiLossResult r = semi_losses(m, mixed, lu_w, lr_w);
    CHECK(r.breakdown.total == r.breakdown.lx + lu_w * r.breakdown.lu + lr_w * r.breakdown.lreg);
    CHECK(r.breakdown.lu >= 0.0);
    CHECK(r.breakdown.lreg >= 0.0);

    SUBCASE("empty unlabeled side gives L_U = 0 with the regularizer over X' alone") {
        MixedBatch sup = mixed;
        sup.x_unlabeled = Mat();
        sup.p_unlabeled = Mat();
        SemiLossResult s = semi_losses(m, sup, lu_w, lr_w);
        CHECK(s.breakdown.lu == 0.0);
        CHECK(s.breakdown.total == s.breakdown.lx + lr_w * s.breakdown.lreg);
    }
    SUBCASE("empty labeled side is rejected") {
        MixedBatch bad = mixed;
        bad.x_labeled = Mat();
        bad.p_labeled = Mat();
        CHECK_THROWS_AS(semi_losses(m, bad, lu_w, lr_w), InvalidInput);
    }
}

TEST_CASE("semi_losses gradients match finite differences for each term") {
    Rng rng(47);
    Model m = make_model(4, 3, 11);
    MixedBatch mixed;
    mixed.x_labeled = random_rows(3, 4, rng);
    mixed.p_labeled = random_dists(3, 3, rng);
    mixed.x_unlabeled = random_rows(4, 4, rng);
    mixed.p_unlabeled = random_dists(4, 3, rng);

    struct Config {
        double lu, lr;
    };
    // (0,0) isolates L_X; adding one term at a time validates L_U and L_reg
    for (Config c : {Config{0.0, 0.0}, Config{1.0, 0.0}, Config{0.0, 1.0}, Config{25.0, 1.0}}) {
        SemiLossResult r = semi_losses(m, mixed, c.lu, c.lr);
        Grads fd = oracle::fd_gradients(
            m, [&] { return semi_losses(m, mixed, c.lu, c.lr).breakdown.total; });
        CHECK(oracle::max_rel_error(r.grads, fd) < 1e-3);
    }
}

TEST_CASE("a DivideMix step with trivial settings reduces to supervised cross-entropy") {
    // w = 1 refinement keeps y; sharpen(one-hot) = one-hot; identity
    // augmentation with M = 1 and λ' = 1 mixing leaves inputs untouched, so
    // the λ_u = λ_r = 0 loss must equal plain CE on the ground-truth labels.
    Rng rng(53);
    Model m = make_model(4, 3, 13);
    Mat x = random_rows(5, 4, rng);
    std::vector<int> labels{0, 1, 2, 1, 0};
    Mat y = one_hot_targets(labels, 3);

    std::vector<double> refined = co_refine(y.row_span(0), std::vector<double>{0.2, 0.3, 0.5}, 1.0);
    CHECK(refined == std::vector<double>(y.row(0), y.row(0) + 3));
    auto sharpened = sharpen(refined, 0.5);
    CHECK(sharpened == refined);

    MixedBatch mixed;
    mixed.x_labeled = x;
    mixed.p_labeled = y;
    SemiLossResult semi = semi_losses(m, mixed, 0.0, 0.0);
    LossResult plain = loss_and_grads(m, x, y, LossSpec::CrossEntropy);
    CHECK(semi.breakdown.total == doctest::Approx(plain.loss).epsilon(1e-12));
    for (size_t l = 0; l < plain.grads.w.size(); ++l)
        for (size_t i = 0; i < plain.grads.w[l].a.size(); ++i)
            CHECK(semi.grads.w[l].a[i] == doctest::Approx(plain.grads.w[l].a[i]).epsilon(1e-12));
}

TEST_CASE("negative entropy: one-hot, uniform, and binary cases") {
    Mat onehot(1, 3);
    onehot(0, 1) = 1.0;
    CHECK(negative_entropy(onehot) == 0.0);

    Mat uniform(2, 10, 0.1);
    CHECK(negative_entropy(uniform) == doctest::Approx(-std::log(10.0)).epsilon(1e-12));

    Mat half(1, 2, 0.5);
    CHECK(negative_entropy(half) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}
