#pragma once

#include <span>
#include <vector>

#include "dividemix/data.hpp"
#include "dividemix/nn.hpp"
#include "dividemix/rng.hpp"

namespace dmx {

struct HyperParams {
    int aug_rounds = 2;        // M
    double temperature = 0.5;  // T
    double alpha = 4.0;        // Beta(α, α) for MixUp
    double lambda_u = 25.0;
    double lambda_r = 1.0;
    int batch = 64;
    double tau = 0.5;
    int warmup_epochs = 5;
    bool confidence_penalty = false;
    int rampup_epochs = 16; // linear λ_u ramp after warm-up; 0 disables

    void validate() const;
};

// Stochastic input augmentation. Vectors get additive Gaussian jitter scaled
// to 0.1× the per-feature std; images get pad-4 reflect + random crop + 50%
// horizontal flip.
struct Augmenter {
    enum class Kind { Identity, VectorJitter, ImageCropFlip };
    Kind kind = Kind::Identity;
    std::vector<double> sigma; // per-feature jitter std
    int img_c = 0, img_h = 0, img_w = 0;
    int pad = 4;

    static Augmenter identity();
    static Augmenter vector_jitter(const Dataset& train, double scale = 0.1);
    static Augmenter image_crop_flip(int c, int h, int w);
    static Augmenter for_dataset(const Dataset& train); // picks by modality

    std::vector<double> apply(const double* x, int dim, Rng& rng) const;
};

// Deterministic horizontal flip of a plane-major image (flip applied twice
// restores the original).
std::vector<double> hflip_image(std::span<const double> x, int c, int h, int w);

// ȳ = w·y + (1−w)·p_avg
std::vector<double> co_refine(std::span<const double> y, std::span<const double> p_avg, double w);

// p_c^(1/T) / Σ_j p_j^(1/T)
std::vector<double> sharpen(std::span<const double> p, double temperature);

// q̄ = mean of both networks' predictions over the M augmentations (2M rows
// total), then sharpened.
std::vector<double> co_guess(const Mat& preds_net1, const Mat& preds_net2, double temperature);

struct MixPairResult {
    std::vector<double> x;
    std::vector<double> p;
    double lambda_prime = 1.0; // always ≥ 0.5: the first source dominates
};

MixPairResult mix_pair(std::span<const double> x1, std::span<const double> p1,
                       std::span<const double> x2, std::span<const double> p2, double alpha,
                       Rng& rng);

struct MixedBatch {
    Mat x_labeled, p_labeled;     // X′
    Mat x_unlabeled, p_unlabeled; // U′ (empty when no unlabeled data)
    std::vector<double> lambdas;  // λ′ per output row, labeled rows first
};

// Shuffles X̂ ∪ Û into W and mixes element-wise: X′[i] = mix(X̂[i], W[i]),
// U′[j] = mix(Û[j], W[|X̂|+j]).
MixedBatch mixmatch_transform(const Mat& x_hat, const Mat& y_hat, const Mat& u_hat,
                              const Mat& q_hat, double alpha, Rng& rng);

struct LossBreakdown {
    double lx = 0.0;
    double lu = 0.0;
    double lreg = 0.0;
    double total = 0.0; // lx + λ_u·lu + λ_r·lreg
};

struct SemiLossResult {
    LossBreakdown breakdown;
    Grads grads;
};

// CE on X′, squared-L2 on U′, uniform-prior KL over X′ ∪ U′. Targets are
// constants (no gradient flows through label construction). Empty U′ gives
// L_U = 0 with the regularizer over X′ alone.
SemiLossResult semi_losses(const Model& m, const MixedBatch& mixed, double lambda_u,
                           double lambda_r);

// Batch-averaged −H of the predictions (the warm-up confidence penalty term).
double negative_entropy(const Mat& probs);

} // namespace dmx
