#pragma once

#include <cstdint>
#include <vector>

#include "dividemix/data.hpp"
#include "dividemix/nn.hpp"

namespace dmx {

enum class TestMode { Ensemble, Net1, Net2 };

// Fraction of correctly classified test samples. Ensemble mode averages the
// two softmax outputs before the argmax; argmax ties go to the lowest class
// index. net2 may be null only for the single-network modes.
double test_accuracy(const Model& net1, const Model* net2, const Dataset& testset, TestMode mode);

// (best accuracy, mean of the last 10 epochs); shorter histories average
// everything they have.
struct Summary {
    double best = 0.0;
    double last10 = 0.0;
};
Summary summarize(const std::vector<double>& accuracy_history);

// Mann–Whitney rank AUC of w as a score for the clean class (mask = false),
// with mid-ranks for ties. Returns NaN when the mask is all-true or
// all-false (not applicable).
double division_auc(const std::vector<double>& w, const std::vector<uint8_t>& noise_mask);

// Histogram of values over [lo, hi) with `bins` uniform bins; values outside
// the range are clamped into the edge bins.
std::vector<int> histogram(const std::vector<double>& values, int bins, double lo, double hi);

// Shannon entropy (nats) of a histogram normalized to a distribution.
double histogram_entropy(const std::vector<int>& counts);

} // namespace dmx
