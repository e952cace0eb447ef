#pragma once

#include <vector>

#include "dividemix/data.hpp"
#include "dividemix/nn.hpp"

namespace dmx {

// Per-sample cross-entropy losses, aligned to dataset indices, plus a
// min-max normalized copy in [0,1] (all-zeros when the raw losses are
// constant).
struct LossVector {
    std::vector<double> raw;
    std::vector<double> normalized;

    bool constant() const; // raw losses all equal
};

LossVector per_sample_losses(const Model& m, const Dataset& ds);

// (ℓ − min ℓ) / (max ℓ − min ℓ); all-zeros when the losses are constant.
std::vector<double> normalize_losses(const std::vector<double>& raw);

struct EmConfig {
    int max_iters = 100;
    double tol = 1e-4;        // on the mean log-likelihood
    double var_floor = 1e-4;
};

// Two-component 1-D Gaussian mixture; component 0 has the smaller mean.
struct GmmFit {
    double mean[2] = {0, 0};
    double var[2] = {0, 0};
    double weight[2] = {0.5, 0.5};
    std::vector<double> ll_trace; // mean log-likelihood per EM iteration
};

// EM fit on the normalized losses. Components are initialized at the 10th
// and 90th percentiles, weights at 0.5/0.5. Requires at least 2 points.
GmmFit fit_gmm_em(const std::vector<double>& values, const EmConfig& cfg = {});

// One M-step for externally supplied responsibilities (r = responsibility of
// component 0). Exposed for the EM internals' own tests.
GmmFit m_step(const std::vector<double>& values, const std::vector<double>& resp0,
              const EmConfig& cfg = {});

// Posterior responsibility of the smaller-mean component at each value.
std::vector<double> clean_posterior(const GmmFit& fit, const std::vector<double>& values);

// Per-sample probability that the label is clean; source_net records which
// network's losses produced it (provenance for the co-divide assertion).
struct CleanPosterior {
    std::vector<double> w;
    int source_net = 0;
};

// Whole pipeline for one network: per-sample losses → GMM → posterior.
// Constant losses skip the GMM and return all-ones. When out_losses is
// given, the per-sample losses are copied there (for diagnostics dumps).
CleanPosterior clean_probabilities(const Model& m, const Dataset& ds, const EmConfig& cfg = {},
                                   LossVector* out_losses = nullptr);

// Threshold split of the training indices. Labeled keeps (index, w); the
// unlabeled side carries indices only. When fewer than min_labeled samples
// clear the threshold, the min_labeled highest-w samples become labeled so
// the mini-batch loop stays well-defined.
struct DataDivision {
    std::vector<int> labeled;
    std::vector<double> labeled_w; // aligned with labeled
    std::vector<int> unlabeled;
    double tau = 0.5;
    int source_net = 0;
    bool fallback_applied = false;
};

DataDivision co_divide(const CleanPosterior& posterior, double tau, int min_labeled = 0);

// Diagnostics CSV: index,loss,normalized_loss,w,assigned_set,is_noise.
void export_division_csv(const LossVector& losses, const CleanPosterior& posterior,
                         const DataDivision& division, const Dataset& ds,
                         const std::string& path);

} // namespace dmx
