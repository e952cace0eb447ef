#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dividemix/data.hpp"
#include "dividemix/eval.hpp"
#include "dividemix/gmm.hpp"
#include "dividemix/mixmatch.hpp"
#include "dividemix/nn.hpp"

namespace dmx {

enum class Method { DivideMix, PlainCE };

// Ablation variants. plain_mixmatch (divide + vanilla MixMatch) implies the
// self-divide semantics of no_co_training; both train a single network.
struct AblationFlags {
    bool no_co_training = false;
    bool no_label_refinement = false;
    bool no_augmentation = false;
    bool plain_mixmatch = false;
    bool single_model_test = false;

    bool single_network() const { return no_co_training || plain_mixmatch; }
    bool self_divide() const { return single_network(); }
};

struct DataSpec {
    enum class Kind { Blobs, Cifar10 };
    Kind kind = Kind::Blobs;

    // blobs
    int n_per_class = 500;
    int classes = 4;
    int dim = 16;
    double separation = 6.0;
    int test_n_per_class = 250;
    uint64_t seed = 7;
    uint64_t test_seed = 8;

    // cifar10 binary files
    std::vector<std::string> train_paths;
    std::string test_path;
    int subset = 0; // 0 = all samples
    int test_subset = 0;
};

struct OptimSettings {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int lr_decay_epoch = 30;
    double lr_decay_factor = 0.1;
};

struct TrainConfig {
    std::string run_name = "run";
    std::string out_dir; // empty → nothing persisted
    Method method = Method::DivideMix;
    DataSpec data;
    NoiseSpec noise;
    ArchSpec arch; // input dims are filled in from the dataset
    HyperParams hp;
    OptimSettings optim;
    EmConfig em;
    int epochs = 60;
    std::array<uint64_t, 2> seeds{1, 2};
    AblationFlags ablation;
    bool dump_divisions = false;
    bool save_checkpoints = false; // final parameters in the DMX1 format

    void validate() const; // throws InvalidConfig
};

constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
    int epoch = 0;
    bool warmup = false;
    double acc_ensemble = kNotApplicable;
    double acc_net1 = kNotApplicable;
    double acc_net2 = kNotApplicable;
    double reported_acc = kNotApplicable; // ensemble, or θ(1) under single-model modes
    double auc_net1 = kNotApplicable;     // AUC of the posterior from net k's losses
    double auc_net2 = kNotApplicable;
    double labeled_frac_net1 = kNotApplicable; // of the division consumed by net k
    double labeled_frac_net2 = kNotApplicable;
    int labeled_net1 = 0, unlabeled_net1 = 0;
    int labeled_net2 = 0, unlabeled_net2 = 0;
    double loss_x = 0.0, loss_u = 0.0, loss_reg = 0.0, loss_total = 0.0;
    double seconds = 0.0; // wall clock; kept out of the deterministic log
};

struct TrainingHistory {
    std::vector<EpochRecord> epochs;

    std::vector<double> reported_accuracy() const;
    Summary summary() const;
};

// One epoch of standard mini-batch CE training on all (noisy) labels,
// optionally with the −H confidence penalty. Returns the mean batch loss.
double warmup_epoch(Model& net, OptimState& opt, const Dataset& train, int batch, bool penalty,
                    Rng& rng);

struct EpochStats {
    double loss_x = 0.0, loss_u = 0.0, loss_reg = 0.0, loss_total = 0.0;
    int iters = 0;
};

// One semi-supervised epoch for network k on its division. `other` supplies
// co-guessing predictions and must be null exactly when the ablation runs a
// single network. The division must come from the other network unless the
// ablation self-divides (asserted via DataDivision::source_net).
EpochStats dividemix_epoch(int k, Model& net, const Model* other, const Dataset& train,
                           const DataDivision& division, const HyperParams& hp,
                           double lambda_u_effective, const Augmenter& aug,
                           const AblationFlags& flags, OptimState& opt, Rng& rng);

Dataset build_train_dataset(const TrainConfig& cfg);
Dataset build_test_dataset(const TrainConfig& cfg);

// Full Algorithm-1 run (or the plain-CE baseline): warm-up, per-epoch GMM +
// crossed division, alternating network epochs, step-decay schedule,
// per-epoch evaluation. Persists metrics to cfg.out_dir when set.
TrainingHistory run_experiment(const TrainConfig& cfg);

} // namespace dmx
