#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dividemix/eval.hpp"
#include "oracles.hpp"

using namespace dmx;

namespace {

Model make_model(int in, int classes, uint64_t seed) {
    ArchSpec a;
    a.kind = ArchKind::Mlp;
    a.input_dim = in;
    a.hidden = {8};
    a.classes = classes;
    Rng rng(seed);
    return Model::init(a, 1, rng);
}

Dataset balanced_random(int n, int classes, int dim, uint64_t seed) {
    Dataset ds;
    ds.classes = classes;
    ds.split = Split::Test;
    ds.x = Mat(n, dim);
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : ds.x.a) v = d(rng);
    ds.noisy_label.resize(n);
    ds.true_label.resize(n);
    for (int i = 0; i < n; ++i) ds.noisy_label[i] = ds.true_label[i] = i % classes;
    ds.noise_mask.assign(n, 0);
    return ds;
}

} // namespace

TEST_CASE("identical networks make ensemble accuracy equal single accuracy") {
    Model m = make_model(6, 3, 5);
    Model copy = m;
    Dataset test = balanced_random(300, 3, 6, 9);
    double single = test_accuracy(m, nullptr, test, TestMode::Net1);
    double ens = test_accuracy(m, &copy, test, TestMode::Ensemble);
    CHECK(single == ens);
}

TEST_CASE("random networks score about 1/C on a balanced 10-class test set") {
    Model m1 = make_model(12, 10, 21);
    Model m2 = make_model(12, 10, 22);
    Dataset test = balanced_random(2000, 10, 12, 33);
    double acc = test_accuracy(m1, &m2, test, TestMode::Ensemble);
    CHECK(std::abs(acc - 0.1) <= 0.02);
}

TEST_CASE("a perfect classifier scores 1.0") {
    // single linear layer whose weight rows are the blob means
    ArchSpec a;
    a.kind = ArchKind::Mlp;
    a.input_dim = 4;
    a.hidden = {};
    a.classes = 4;
    Rng rng(3);
    Model m = Model::init(a, 1, rng);
    m.w[0].fill(0.0);
    for (int c = 0; c < 4; ++c) m.w[0](c, c) = 10.0;
    std::fill(m.b[0].begin(), m.b[0].end(), 0.0);

    Dataset test = gen_blobs(50, 4, 4, 12.0, 77, Split::Test);
    CHECK(test_accuracy(m, nullptr, test, TestMode::Net1) == 1.0);
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    Model m = make_model(3, 4, 1);
    for (auto& w : m.w) w.fill(0.0);
    for (auto& b : m.b) std::fill(b.begin(), b.end(), 0.0); // uniform output
    Dataset test = balanced_random(40, 4, 3, 2);
    // every prediction is class 0, so accuracy equals the share of 0-labels
    CHECK(test_accuracy(m, nullptr, test, TestMode::Net1) == doctest::Approx(0.25));
}

TEST_CASE("test_accuracy rejects empty test sets and missing networks") {
    Model m = make_model(3, 2, 1);
    Dataset empty;
    empty.classes = 2;
    CHECK_THROWS_AS(test_accuracy(m, nullptr, empty, TestMode::Net1), InvalidInput);
    Dataset test = balanced_random(10, 2, 3, 4);
    CHECK_THROWS_AS(test_accuracy(m, nullptr, test, TestMode::Ensemble), InvalidInput);
    CHECK_THROWS_AS(test_accuracy(m, nullptr, test, TestMode::Net2), InvalidInput);
}

TEST_CASE("summarize: constant, step history, short history, empty") {
    Summary c = summarize(std::vector<double>(15, 0.9));
    CHECK(c.best == 0.9);
    CHECK(c.last10 == doctest::Approx(0.9));

    std::vector<double> step(10, 0.5);
    step.insert(step.end(), 10, 0.8);
    Summary s = summarize(step);
    CHECK(s.best == 0.8);
    CHECK(s.last10 == doctest::Approx(0.8));

    Summary five = summarize({0.1, 0.2, 0.3, 0.4, 0.5});
    CHECK(five.best == 0.5);
    CHECK(five.last10 == doctest::Approx(0.3)); // mean of all five

    CHECK_THROWS_AS(summarize({}), InvalidInput);
}

TEST_CASE("summarize best is never below the last-10 mean") {
    Rng rng(44);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> h;
        int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) h.push_back(u(rng));
        Summary s = summarize(h);
        CHECK(s.best >= s.last10 - 1e-12);
    }
}

TEST_CASE("division AUC: separation, constant scores, frozen pair cases") {
    CHECK(division_auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 1.0);
    CHECK(division_auc({0.5, 0.5, 0.5}, {0, 1, 1}) == 0.5); // mid-rank ties

    // brute force over clean-noisy pairs: clean 0.9 beats noisy 0.8 and 0.3
    std::vector<double> w{0.9, 0.8, 0.3};
    std::vector<uint8_t> mask{0, 1, 1};
    CHECK(oracle::brute_force_auc(w, mask) == 1.0);
    CHECK(division_auc(w, mask) == 1.0);

    // a tie against the clean sample is worth half a pair
    std::vector<double> wt{0.9, 0.9, 0.3};
    CHECK(oracle::brute_force_auc(wt, mask) == 0.75);
    CHECK(division_auc(wt, mask) == 0.75);
}

TEST_CASE("division AUC equals the brute-force oracle on random instances") {
    Rng rng(4242);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 2 + static_cast<int>(rng() % 499);
        std::vector<double> w(n);
        std::vector<uint8_t> mask(n);
        std::uniform_int_distribution<int> quant(0, 9); // heavy ties
        std::uniform_int_distribution<int> coin(0, 1);
        for (int i = 0; i < n; ++i) {
            w[i] = quant(rng) / 9.0;
            mask[i] = static_cast<uint8_t>(coin(rng));
        }
        double fast = division_auc(w, mask);
        double slow = oracle::brute_force_auc(w, mask);
        if (std::isnan(slow))
            CHECK(std::isnan(fast));
        else
            CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
    }
}

TEST_CASE("division AUC is not applicable for single-class masks") {
    CHECK(std::isnan(division_auc({0.1, 0.9}, {0, 0})));
    CHECK(std::isnan(division_auc({0.1, 0.9}, {1, 1})));
}

TEST_CASE("histogram and entropy helpers") {
    std::vector<double> vals{0.0, 0.01, 0.5, 0.99, 1.0, -5.0, 7.0}; // outliers clamp to edge bins
    auto h = histogram(vals, 2, 0.0, 1.0);
    CHECK(h[0] == 3);
    CHECK(h[1] == 4);

    CHECK(histogram_entropy({10, 10, 10, 10}) == doctest::Approx(std::log(4.0)));
    CHECK(histogram_entropy({42, 0, 0}) == 0.0);
    CHECK(histogram_entropy({0, 0}) == 0.0);
    CHECK_THROWS_AS(histogram({}, 0, 0.0, 1.0), InvalidInput);
}
