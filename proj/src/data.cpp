#include "dividemix/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace dmx {

namespace {

constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};

void recompute_mask(Dataset& ds) {
    ds.noise_mask.assign(ds.size(), 0);
    for (int i = 0; i < ds.size(); ++i)
        ds.noise_mask[i] = ds.noisy_label[i] != ds.true_label[i] ? 1 : 0;
}

void require_train_split(const Dataset& ds, const char* op) {
    if (ds.split == Split::Test)
        throw InvalidConfig(std::string(op) + ": test split must stay noise-free");
}

} // namespace

double Dataset::noise_fraction() const {
    if (size() == 0) return 0.0;
    int n = 0;
    for (uint8_t m : noise_mask) n += m;
    return static_cast<double>(n) / size();
}

Mat one_hot_targets(const std::vector<int>& labels, int classes) {
    Mat t(static_cast<int>(labels.size()), classes);
    for (size_t i = 0; i < labels.size(); ++i) t(static_cast<int>(i), labels[i]) = 1.0;
    return t;
}

Dataset gen_blobs(int n_per_class, int classes, int dim, double separation, uint64_t seed,
                  Split split) {
    if (classes < 2) throw InvalidConfig("gen_blobs: need at least 2 classes");
    if (separation <= 0.0) throw InvalidConfig("gen_blobs: separation must be positive");
    if (classes > dim)
        throw InvalidConfig("gen_blobs: cannot place " + std::to_string(classes) +
                            " one-hot means in dimension " + std::to_string(dim));
    Dataset ds;
    ds.classes = classes;
    ds.split = split;
    int n = n_per_class * classes;
    ds.x = Mat(n, dim);
    ds.noisy_label.resize(n);
    ds.true_label.resize(n);
    ds.noise_mask.assign(n, 0);

    // one-hot corners scaled so pairwise mean distance is exactly `separation`
    double scale = separation / std::sqrt(2.0);
    Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < n_per_class; ++i, ++row) {
            double* xr = ds.x.row(row);
            for (int j = 0; j < dim; ++j) xr[j] = unit(rng);
            xr[c] += scale;
            ds.true_label[row] = c;
            ds.noisy_label[row] = c;
        }
    }
    return ds;
}

Dataset load_cifar10_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw FormatError("cifar10: cannot open " + path);
    auto len = static_cast<long long>(f.tellg());
    constexpr long long kRecord = 3073;
    if (len % kRecord != 0)
        throw FormatError("cifar10: file length " + std::to_string(len) +
                          " is not a multiple of 3073");
    f.seekg(0);
    int n = static_cast<int>(len / kRecord);

    Dataset ds;
    ds.classes = 10;
    ds.img_c = 3;
    ds.img_h = 32;
    ds.img_w = 32;
    ds.x = Mat(n, 3072);
    ds.noisy_label.resize(n);
    ds.true_label.resize(n);
    ds.noise_mask.assign(n, 0);

    std::vector<unsigned char> rec(kRecord);
    for (int i = 0; i < n; ++i) {
        f.read(reinterpret_cast<char*>(rec.data()), kRecord);
        if (!f) throw FormatError("cifar10: truncated record " + std::to_string(i));
        if (rec[0] > 9)
            throw FormatError("cifar10: label byte " + std::to_string(rec[0]) + " in record " +
                              std::to_string(i));
        ds.true_label[i] = ds.noisy_label[i] = rec[0];
        double* xr = ds.x.row(i);
        for (int p = 0; p < 3; ++p) {
            const unsigned char* plane = rec.data() + 1 + p * 1024;
            for (int j = 0; j < 1024; ++j)
                xr[p * 1024 + j] = (plane[j] / 255.0 - kCifarMean[p]) / kCifarStd[p];
        }
    }
    return ds;
}

Dataset inject_symmetric(const Dataset& ds, double ratio, SymmetricVariant variant, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw InvalidConfig("inject_symmetric: ratio must be in [0,1]");
    require_train_split(ds, "inject_symmetric");
    Dataset out = ds;
    int n = out.size();
    int n_corrupt = static_cast<int>(std::floor(ratio * n));
    Rng rng(seed);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int k = 0; k < n_corrupt; ++k) {
        int i = perm[k];
        if (variant == SymmetricVariant::All) {
            out.noisy_label[i] = sample_index(out.classes, rng);
        } else {
            int draw = sample_index(out.classes - 1, rng);
            out.noisy_label[i] = draw >= out.true_label[i] ? draw + 1 : draw;
        }
    }
    recompute_mask(out);
    return out;
}

Dataset inject_asymmetric(const Dataset& ds, double ratio, const std::map<int, int>& map,
                          uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw InvalidConfig("inject_asymmetric: ratio must be in [0,1]");
    require_train_split(ds, "inject_asymmetric");
    std::map<int, int> seen_targets;
    for (const auto& [from, to] : map) {
        if (from == to)
            throw InvalidConfig("inject_asymmetric: class map contains self-loop " +
                                std::to_string(from));
        if (from < 0 || from >= ds.classes || to < 0 || to >= ds.classes)
            throw InvalidConfig("inject_asymmetric: class map entry out of range");
        if (++seen_targets[to] > 1)
            throw InvalidConfig("inject_asymmetric: class map is not injective");
    }
    Dataset out = ds;
    Rng rng(seed);
    for (const auto& [from, to] : map) {
        std::vector<int> members;
        for (int i = 0; i < out.size(); ++i)
            if (out.true_label[i] == from) members.push_back(i);
        std::shuffle(members.begin(), members.end(), rng);
        int n_flip = static_cast<int>(std::floor(ratio * members.size()));
        for (int k = 0; k < n_flip; ++k) out.noisy_label[members[k]] = to;
    }
    recompute_mask(out);
    return out;
}

std::map<int, int> default_asymmetric_map(int classes) {
    if (classes == 10) {
        // CIFAR-10 semantics: truck→automobile, bird→airplane, deer→horse, cat↔dog
        return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
    }
    std::map<int, int> m;
    for (int c = 0; c < classes; ++c) m[c] = (c + 1) % classes;
    return m;
}

Dataset apply_noise(const Dataset& ds, const NoiseSpec& spec) {
    switch (spec.kind) {
    case NoiseSpec::Kind::None:
        return ds;
    case NoiseSpec::Kind::SymmetricAll:
        return inject_symmetric(ds, spec.ratio, SymmetricVariant::All, spec.seed);
    case NoiseSpec::Kind::SymmetricExclusive:
        return inject_symmetric(ds, spec.ratio, SymmetricVariant::Exclusive, spec.seed);
    case NoiseSpec::Kind::Asymmetric: {
        auto map = spec.asym_map.empty() ? default_asymmetric_map(ds.classes) : spec.asym_map;
        return inject_asymmetric(ds, spec.ratio, map, spec.seed);
    }
    }
    throw InvalidConfig("apply_noise: unknown noise kind");
}

void export_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("export_dataset_csv: cannot open " + path);
    for (int j = 0; j < ds.dim(); ++j) f << "feature_" << j << ",";
    f << "noisy_label,true_label,is_noise\n";
    char buf[32];
    for (int i = 0; i < ds.size(); ++i) {
        const double* xr = ds.x.row(i);
        for (int j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", xr[j]);
            f << buf << ",";
        }
        f << ds.noisy_label[i] << "," << ds.true_label[i] << "," << int(ds.noise_mask[i]) << "\n";
    }
}

} // namespace dmx
