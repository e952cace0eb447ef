#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dividemix/matrix.hpp"
#include "dividemix/rng.hpp"

namespace dmx {

enum class ArchKind { Mlp, Cnn };

// Architecture descriptor. Activations are ReLU throughout, softmax output.
// The CNN variant is 3×3 convolutions (stride 1, pad 1), each followed by
// ReLU and 2×2 average pooling, then two fully connected layers.
struct ArchSpec {
    ArchKind kind = ArchKind::Mlp;
    int classes = 0;

    // mlp
    int input_dim = 0;
    std::vector<int> hidden{64, 64};

    // cnn
    int in_c = 0, in_h = 0, in_w = 0;
    std::vector<int> conv_channels{8, 16};
    int fc_hidden = 64;

    int input_size() const;
    void validate() const; // throws InvalidConfig
};

// Network parameters. Tensor declaration order (also the checkpoint order):
//  Mlp: W0,b0, W1,b1, ..., Wout,bout with W stored (out × in).
//  Cnn: conv filters as (out_ch × in_ch·9) matrices in layer order, then the
//  two FC layers.
struct Model {
    ArchSpec arch;
    int tag = 1; // network identity k ∈ {1, 2}
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;

    // He-style uniform fan-in initialization, biases zero.
    static Model init(const ArchSpec& arch, int tag, Rng& rng);

    size_t param_count() const;
    bool all_finite() const;
};

struct Grads {
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;

    static Grads zeros_like(const Model& m);
    void scale(double s);
};

// Stage activations of one forward pass, consumed by backward_logits.
// Layout (documented for nn.cpp internals):
//  Mlp: stage = [input, relu1, relu2, ...]
//  Cnn: stage = [input, relu(conv1), pool1, relu(conv2), pool2, relu(fc1)]
struct ForwardCache {
    std::vector<Mat> stage;
    Mat logits;
    Mat probs;
};

Mat softmax_rows(const Mat& logits);

// Softmax class probabilities for a batch; rows sum to 1.
Mat forward_probs(const Model& m, const Mat& inputs);

ForwardCache forward_cached(const Model& m, const Mat& inputs);

// Backpropagation from a gradient w.r.t. the logits.
Grads backward_logits(const Model& m, const ForwardCache& cache, const Mat& dlogits);

// Chain a gradient w.r.t. softmax probabilities through the softmax Jacobian.
Mat dlogits_from_dprobs(const Mat& probs, const Mat& dprobs);

enum class LossSpec { CrossEntropy, Mse, CrossEntropyMinusEntropy };

// Batch-mean loss values on probabilities. Logs are clamped at 1e-12.
double cross_entropy_value(const Mat& probs, const Mat& targets);
double mse_value(const Mat& probs, const Mat& targets); // squared L2 per row, row-averaged
double entropy_value(const Mat& probs);                 // batch-mean prediction entropy H

struct LossResult {
    double loss = 0.0;
    Grads grads;
};

// Loss + hand-derived gradients for one batch of (inputs, target distributions).
// CrossEntropyMinusEntropy is CE − H, the warm-up confidence penalty form.
LossResult loss_and_grads(const Model& m, const Mat& inputs, const Mat& targets, LossSpec spec);

struct OptimState {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    Grads velocity;

    static OptimState make(const Model& m, double lr, double momentum, double weight_decay);
};

// v ← momentum·v + g + wd·θ;  θ ← θ − lr·v. Weight decay applies to biases too.
void sgd_step(Model& m, OptimState& state, const Grads& grads);

// Versioned little-endian binary checkpoint, magic "DMX1", float32 tensors.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

} // namespace dmx
