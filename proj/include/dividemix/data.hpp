#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dividemix/matrix.hpp"
#include "dividemix/rng.hpp"

namespace dmx {

enum class Split { Train, Test };

// Samples with noisy labels, the hidden true labels and the per-sample noise
// mask used only for evaluation.
struct Dataset {
    Mat x; // N × d features
    std::vector<int> noisy_label;
    std::vector<int> true_label;
    std::vector<uint8_t> noise_mask; // true ⇔ noisy label differs from true label
    int classes = 0;
    Split split = Split::Train;

    // image geometry when the samples are images (0 for plain vectors)
    int img_c = 0, img_h = 0, img_w = 0;

    int size() const { return x.rows; }
    int dim() const { return x.cols; }
    double noise_fraction() const;
};

enum class SymmetricVariant { All, Exclusive };

struct NoiseSpec {
    enum class Kind { None, SymmetricAll, SymmetricExclusive, Asymmetric };
    Kind kind = Kind::None;
    double ratio = 0.0;
    std::map<int, int> asym_map; // empty → default map for the class count
    uint64_t seed = 0;
};

// One-hot target rows for a label list.
Mat one_hot_targets(const std::vector<int>& labels, int classes);

// Gaussian blobs with class means at scaled one-hot corners, pairwise
// distance exactly `separation`, unit isotropic variance. Requires C ≤ dim.
Dataset gen_blobs(int n_per_class, int classes, int dim, double separation, uint64_t seed,
                  Split split = Split::Train);

// Standard CIFAR-10 binary format: 3073-byte records, 1 label byte + 3072
// pixel bytes (row-major R plane, G plane, B plane). Pixels are scaled to
// [0,1] and channel-normalized with the usual CIFAR-10 statistics.
Dataset load_cifar10_binary(const std::string& path);

// Replaces the labels of exactly ⌊ratio·N⌋ uniformly chosen samples.
// All: new label uniform over all C classes (true label may survive).
// Exclusive: uniform over the other C−1 classes.
Dataset inject_symmetric(const Dataset& ds, double ratio, SymmetricVariant variant, uint64_t seed);

// Flips exactly ⌊ratio·count(c)⌋ samples of each class c in the map's domain
// to map[c]. The map must be injective with no self-loops.
Dataset inject_asymmetric(const Dataset& ds, double ratio, const std::map<int, int>& map,
                          uint64_t seed);

// CIFAR-style pair map for 10 classes (truck→automobile, bird→airplane,
// deer→horse, cat↔dog); next-class cycle for other class counts.
std::map<int, int> default_asymmetric_map(int classes);

Dataset apply_noise(const Dataset& ds, const NoiseSpec& spec);

// CSV with header feature_0..feature_{d-1},noisy_label,true_label,is_noise.
void export_dataset_csv(const Dataset& ds, const std::string& path);

} // namespace dmx
