#include "dividemix/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace dmx {

void TrainConfig::validate() const {
    hp.validate();
    if (epochs < 1) throw InvalidConfig("train.epochs: must be >= 1");
    if (method == Method::DivideMix && hp.warmup_epochs >= epochs)
        throw InvalidConfig("hyper.warmup_epochs: must be < train.epochs");
    if (seeds[0] == seeds[1]) throw InvalidConfig("train.seeds: the two network seeds must differ");
    if (optim.lr <= 0.0) throw InvalidConfig("optim.lr: must be > 0");
    if (optim.lr_decay_factor <= 0.0) throw InvalidConfig("optim.lr_decay_factor: must be > 0");
    if (optim.momentum < 0.0 || optim.momentum >= 1.0)
        throw InvalidConfig("optim.momentum: must be in [0,1)");
    if (optim.weight_decay < 0.0) throw InvalidConfig("optim.weight_decay: must be >= 0");
    if (noise.ratio < 0.0 || noise.ratio > 1.0)
        throw InvalidConfig("noise.ratio: must be in [0,1]");
    if (data.kind == DataSpec::Kind::Blobs) {
        if (data.classes < 2) throw InvalidConfig("data.classes: must be >= 2");
        if (data.classes > data.dim)
            throw InvalidConfig("data.dim: must be >= data.classes for one-hot blob means");
        if (data.n_per_class < 0 || data.test_n_per_class < 0)
            throw InvalidConfig("data.n_per_class: must be >= 0");
        if (data.separation <= 0.0) throw InvalidConfig("data.separation: must be > 0");
    } else {
        if (data.train_paths.empty()) throw InvalidConfig("data.train_paths: required for cifar10");
        if (data.test_path.empty()) throw InvalidConfig("data.test_path: required for cifar10");
    }
}

std::vector<double> TrainingHistory::reported_accuracy() const {
    std::vector<double> out;
    out.reserve(epochs.size());
    for (const auto& e : epochs) out.push_back(e.reported_acc);
    return out;
}

Summary TrainingHistory::summary() const { return summarize(reported_accuracy()); }

namespace {

Mat gather_rows(const Mat& src, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), src.cols);
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(src.row(idx[i]), src.row(idx[i]) + src.cols, out.row(static_cast<int>(i)));
    return out;
}

Dataset take_subset(Dataset ds, int n) {
    if (n <= 0 || n >= ds.size()) return ds;
    Dataset out;
    out.classes = ds.classes;
    out.split = ds.split;
    out.img_c = ds.img_c;
    out.img_h = ds.img_h;
    out.img_w = ds.img_w;
    out.x = Mat(n, ds.dim());
    std::copy(ds.x.a.begin(), ds.x.a.begin() + static_cast<size_t>(n) * ds.dim(), out.x.a.begin());
    out.noisy_label.assign(ds.noisy_label.begin(), ds.noisy_label.begin() + n);
    out.true_label.assign(ds.true_label.begin(), ds.true_label.begin() + n);
    out.noise_mask.assign(ds.noise_mask.begin(), ds.noise_mask.begin() + n);
    return out;
}

Dataset concat(std::vector<Dataset> parts) {
    if (parts.size() == 1) return std::move(parts[0]);
    int n = 0;
    for (const auto& p : parts) {
        if (p.dim() != parts[0].dim())
            throw FormatError("dataset parts have mismatched feature dimensions");
        n += p.size();
    }
    Dataset out = parts[0];
    out.x = Mat(n, parts[0].dim());
    out.noisy_label.clear();
    out.true_label.clear();
    out.noise_mask.clear();
    int row = 0;
    for (const auto& p : parts) {
        std::copy(p.x.a.begin(), p.x.a.end(), out.x.row(row));
        out.noisy_label.insert(out.noisy_label.end(), p.noisy_label.begin(), p.noisy_label.end());
        out.true_label.insert(out.true_label.end(), p.true_label.begin(), p.true_label.end());
        out.noise_mask.insert(out.noise_mask.end(), p.noise_mask.begin(), p.noise_mask.end());
        row += p.size();
    }
    return out;
}

} // namespace

Dataset build_train_dataset(const TrainConfig& cfg) {
    Dataset ds;
    if (cfg.data.kind == DataSpec::Kind::Blobs) {
        ds = gen_blobs(cfg.data.n_per_class, cfg.data.classes, cfg.data.dim, cfg.data.separation,
                       cfg.data.seed, Split::Train);
    } else {
        std::vector<Dataset> parts;
        for (const auto& p : cfg.data.train_paths) parts.push_back(load_cifar10_binary(p));
        ds = concat(std::move(parts));
        ds.split = Split::Train;
        ds = take_subset(std::move(ds), cfg.data.subset);
    }
    return apply_noise(ds, cfg.noise);
}

Dataset build_test_dataset(const TrainConfig& cfg) {
    if (cfg.data.kind == DataSpec::Kind::Blobs)
        return gen_blobs(cfg.data.test_n_per_class, cfg.data.classes, cfg.data.dim,
                         cfg.data.separation, cfg.data.test_seed, Split::Test);
    Dataset ds = load_cifar10_binary(cfg.data.test_path);
    ds = take_subset(std::move(ds), cfg.data.test_subset);
    ds.split = Split::Test;
    return ds;
}

double warmup_epoch(Model& net, OptimState& opt, const Dataset& train, int batch, bool penalty,
                    Rng& rng) {
    int n = train.size();
    if (n == 0) return 0.0;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    LossSpec spec = penalty ? LossSpec::CrossEntropyMinusEntropy : LossSpec::CrossEntropy;

    double total = 0.0;
    int iters = 0;
    for (int lo = 0; lo < n; lo += batch) {
        int hi = std::min(n, lo + batch);
        std::vector<int> idx(perm.begin() + lo, perm.begin() + hi);
        Mat x = gather_rows(train.x, idx);
        std::vector<int> labels(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) labels[i] = train.noisy_label[idx[i]];
        Mat t = one_hot_targets(labels, train.classes);
        LossResult res = loss_and_grads(net, x, t, spec);
        sgd_step(net, opt, res.grads);
        total += res.loss;
        ++iters;
    }
    return total / iters;
}

EpochStats dividemix_epoch(int k, Model& net, const Model* other, const Dataset& train,
                           const DataDivision& division, const HyperParams& hp,
                           double lambda_u_effective, const Augmenter& aug,
                           const AblationFlags& flags, OptimState& opt, Rng& rng) {
    int expected_source = flags.self_divide() ? k : 3 - k;
    if (division.source_net != expected_source)
        throw InvalidInput("dividemix_epoch: network " + std::to_string(k) +
                           " must consume the division from network " +
                           std::to_string(expected_source) + ", got " +
                           std::to_string(division.source_net));
    if (other == nullptr && !flags.single_network())
        throw InvalidInput("dividemix_epoch: co-training requires the other network");

    const int B = hp.batch;
    const int M = hp.aug_rounds;
    const int d = train.dim();
    const int C = train.classes;
    const int nl = static_cast<int>(division.labeled.size());
    if (nl == 0) throw InvalidInput("dividemix_epoch: empty labeled set");

    std::vector<int> lorder(nl);
    std::iota(lorder.begin(), lorder.end(), 0);
    std::shuffle(lorder.begin(), lorder.end(), rng);

    std::vector<int> upool = division.unlabeled;
    if (!upool.empty()) std::shuffle(upool.begin(), upool.end(), rng);
    size_t ucursor = 0;
    auto next_unlabeled = [&]() {
        if (ucursor >= upool.size()) {
            std::shuffle(upool.begin(), upool.end(), rng);
            ucursor = 0;
        }
        return upool[ucursor++];
    };

    const bool refine = !(flags.no_label_refinement || flags.plain_mixmatch);
    const bool co_guessing = !flags.single_network();

    EpochStats stats;
    int iters = (nl + B - 1) / B;
    for (int it = 0; it < iters; ++it) {
        int lo = it * B;
        int hi = std::min(nl, lo + B);
        int bsz = hi - lo;

        Mat x_hat(bsz * M, d);
        std::vector<int> lidx(bsz);
        std::vector<double> lw(bsz);
        for (int b = 0; b < bsz; ++b) {
            int pos = lorder[lo + b];
            lidx[b] = division.labeled[pos];
            lw[b] = division.labeled_w[pos];
            for (int m = 0; m < M; ++m) {
                auto row = aug.apply(train.x.row(lidx[b]), d, rng);
                std::copy(row.begin(), row.end(), x_hat.row(b * M + m));
            }
        }

        int ubsz = upool.empty() ? 0 : bsz;
        Mat u_hat(ubsz * M, d);
        for (int b = 0; b < ubsz; ++b) {
            int uidx = next_unlabeled();
            for (int m = 0; m < M; ++m) {
                auto row = aug.apply(train.x.row(uidx), d, rng);
                std::copy(row.begin(), row.end(), u_hat.row(b * M + m));
            }
        }

        // refined labeled targets: average own predictions across augmentations
        Mat px = forward_probs(net, x_hat);
        Mat y_hat(bsz * M, C);
        for (int b = 0; b < bsz; ++b) {
            std::vector<double> p_avg(C, 0.0);
            for (int m = 0; m < M; ++m)
                for (int j = 0; j < C; ++j) p_avg[j] += px(b * M + m, j);
            for (double& v : p_avg) v /= M;
            std::vector<double> y(C, 0.0);
            y[train.noisy_label[lidx[b]]] = 1.0;
            std::vector<double> refined = refine ? co_refine(y, p_avg, lw[b]) : y;
            std::vector<double> target = sharpen(refined, hp.temperature);
            for (int m = 0; m < M; ++m)
                std::copy(target.begin(), target.end(), y_hat.row(b * M + m));
        }

        // co-guessed unlabeled targets
        Mat q_hat(ubsz * M, C);
        if (ubsz > 0) {
            Mat pu_own = forward_probs(net, u_hat);
            Mat pu_other = co_guessing ? forward_probs(*other, u_hat) : Mat();
            for (int b = 0; b < ubsz; ++b) {
                Mat preds1(M, C), preds2(M, C);
                for (int m = 0; m < M; ++m)
                    for (int j = 0; j < C; ++j) {
                        preds1(m, j) = pu_own(b * M + m, j);
                        preds2(m, j) = co_guessing ? pu_other(b * M + m, j) : pu_own(b * M + m, j);
                    }
                std::vector<double> q = co_guess(preds1, preds2, hp.temperature);
                for (int m = 0; m < M; ++m)
                    std::copy(q.begin(), q.end(), q_hat.row(b * M + m));
            }
        }

        MixedBatch mixed = mixmatch_transform(x_hat, y_hat, u_hat, q_hat, hp.alpha, rng);
        SemiLossResult res = semi_losses(net, mixed, lambda_u_effective, hp.lambda_r);
        sgd_step(net, opt, res.grads);

        stats.loss_x += res.breakdown.lx;
        stats.loss_u += res.breakdown.lu;
        stats.loss_reg += res.breakdown.lreg;
        stats.loss_total += res.breakdown.total;
        ++stats.iters;
    }
    if (stats.iters > 0) {
        stats.loss_x /= stats.iters;
        stats.loss_u /= stats.iters;
        stats.loss_reg /= stats.iters;
        stats.loss_total /= stats.iters;
    }
    return stats;
}

namespace {

ordered_json record_to_json(const std::string& run, const EpochRecord& r, const char* phase) {
    ordered_json j;
    j["run"] = run;
    j["epoch"] = r.epoch;
    j["phase"] = phase;
    j["acc_ensemble"] = r.acc_ensemble;
    j["acc_net1"] = r.acc_net1;
    j["acc_net2"] = r.acc_net2;
    j["reported_acc"] = r.reported_acc;
    j["auc_net1"] = r.auc_net1;
    j["auc_net2"] = r.auc_net2;
    j["labeled_frac_net1"] = r.labeled_frac_net1;
    j["labeled_frac_net2"] = r.labeled_frac_net2;
    j["labeled_net1"] = r.labeled_net1;
    j["unlabeled_net1"] = r.unlabeled_net1;
    j["labeled_net2"] = r.labeled_net2;
    j["unlabeled_net2"] = r.unlabeled_net2;
    j["loss_x"] = r.loss_x;
    j["loss_u"] = r.loss_u;
    j["loss_reg"] = r.loss_reg;
    j["loss_total"] = r.loss_total;
    return j;
}

} // namespace

TrainingHistory run_experiment(const TrainConfig& cfg) {
    cfg.validate();
    Dataset train = build_train_dataset(cfg);
    Dataset test = build_test_dataset(cfg);
    if (train.size() == 0) throw InvalidConfig("data: empty training set");

    ArchSpec arch = cfg.arch;
    arch.classes = train.classes;
    if (arch.kind == ArchKind::Mlp) {
        arch.input_dim = train.dim();
    } else {
        if (train.img_c == 0) throw InvalidConfig("arch: cnn requires image data");
        arch.in_c = train.img_c;
        arch.in_h = train.img_h;
        arch.in_w = train.img_w;
    }
    arch.validate();

    const bool single = cfg.method == Method::PlainCE || cfg.ablation.single_network();
    Rng rng1(cfg.seeds[0]);
    Rng rng2(cfg.seeds[1]);
    Model net1 = Model::init(arch, 1, rng1);
    std::optional<Model> net2;
    if (!single) net2 = Model::init(arch, 2, rng2);

    OptimState opt1 = OptimState::make(net1, cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay);
    OptimState opt2;
    if (net2) opt2 = OptimState::make(*net2, cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay);

    Augmenter aug =
        cfg.ablation.no_augmentation ? Augmenter::identity() : Augmenter::for_dataset(train);

    const bool persist = !cfg.out_dir.empty();
    fs::path out(cfg.out_dir);
    std::ofstream metrics, timing;
    if (persist) {
        fs::create_directories(out);
        if (cfg.dump_divisions) fs::create_directories(out / "divisions");
        metrics.open(out / "metrics.jsonl", std::ios::trunc);
        timing.open(out / "timing.csv", std::ios::trunc);
        timing << "epoch,seconds\n";
        if (!metrics || !timing)
            throw FormatError("run_experiment: cannot write into " + cfg.out_dir);
    }

    CleanPosterior post1, post2;
    bool have_posts = false;

    TrainingHistory hist;
    for (int e = 0; e < cfg.epochs; ++e) {
        auto t0 = std::chrono::steady_clock::now();
        double lr = cfg.optim.lr;
        if (cfg.optim.lr_decay_epoch > 0 && e >= cfg.optim.lr_decay_epoch)
            lr *= cfg.optim.lr_decay_factor;
        opt1.lr = lr;
        opt2.lr = lr;

        EpochRecord rec;
        rec.epoch = e;
        const char* phase = "dividemix";

        if (cfg.method == Method::PlainCE) {
            phase = "ce";
            double l = warmup_epoch(net1, opt1, train, cfg.hp.batch, false, rng1);
            rec.loss_x = rec.loss_total = l;
        } else if (e < cfg.hp.warmup_epochs) {
            phase = "warmup";
            rec.warmup = true;
            double l1 = warmup_epoch(net1, opt1, train, cfg.hp.batch, cfg.hp.confidence_penalty, rng1);
            double l2 = l1;
            if (net2)
                l2 = warmup_epoch(*net2, opt2, train, cfg.hp.batch, cfg.hp.confidence_penalty, rng2);
            rec.loss_x = rec.loss_total = 0.5 * (l1 + l2);
        } else {
            if (!have_posts) { // entering the SSL phase (or warm-up was 0 epochs)
                post1 = clean_probabilities(net1, train, cfg.em);
                if (net2) post2 = clean_probabilities(*net2, train, cfg.em);
                have_posts = true;
            }
            const CleanPosterior& src1 = cfg.ablation.self_divide() ? post1 : post2;
            DataDivision div1 = co_divide(src1, cfg.hp.tau, cfg.hp.batch);
            rec.labeled_net1 = static_cast<int>(div1.labeled.size());
            rec.unlabeled_net1 = static_cast<int>(div1.unlabeled.size());
            rec.labeled_frac_net1 = static_cast<double>(rec.labeled_net1) / train.size();

            int t = e - cfg.hp.warmup_epochs;
            double lambda_eff = cfg.hp.lambda_u;
            if (cfg.hp.rampup_epochs > 0)
                lambda_eff *= std::min(1.0, static_cast<double>(t + 1) / cfg.hp.rampup_epochs);

            EpochStats s1 = dividemix_epoch(1, net1, net2 ? &*net2 : nullptr, train, div1, cfg.hp,
                                            lambda_eff, aug, cfg.ablation, opt1, rng1);
            EpochStats s2;
            if (net2) {
                DataDivision div2 = co_divide(cfg.ablation.self_divide() ? post2 : post1,
                                              cfg.hp.tau, cfg.hp.batch);
                rec.labeled_net2 = static_cast<int>(div2.labeled.size());
                rec.unlabeled_net2 = static_cast<int>(div2.unlabeled.size());
                rec.labeled_frac_net2 = static_cast<double>(rec.labeled_net2) / train.size();
                s2 = dividemix_epoch(2, *net2, &net1, train, div2, cfg.hp, lambda_eff, aug,
                                     cfg.ablation, opt2, rng2);
            }
            int nets = net2 ? 2 : 1;
            rec.loss_x = (s1.loss_x + s2.loss_x) / nets;
            rec.loss_u = (s1.loss_u + s2.loss_u) / nets;
            rec.loss_reg = (s1.loss_reg + s2.loss_reg) / nets;
            rec.loss_total = (s1.loss_total + s2.loss_total) / nets;
        }

        // end-of-epoch loss modeling; these posteriors become the divisions
        // consumed by the next epoch (the mixture fit always precedes training)
        LossVector lv1, lv2;
        post1 = clean_probabilities(net1, train, cfg.em, &lv1);
        if (net2) post2 = clean_probabilities(*net2, train, cfg.em, &lv2);
        have_posts = true;
        rec.auc_net1 = division_auc(post1.w, train.noise_mask);
        if (net2) rec.auc_net2 = division_auc(post2.w, train.noise_mask);

        rec.acc_net1 = test_accuracy(net1, nullptr, test, TestMode::Net1);
        if (net2) {
            rec.acc_net2 = test_accuracy(net1, &*net2, test, TestMode::Net2);
            rec.acc_ensemble = test_accuracy(net1, &*net2, test, TestMode::Ensemble);
        }
        rec.reported_acc =
            (single || cfg.ablation.single_model_test) ? rec.acc_net1 : rec.acc_ensemble;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(rec);

        if (persist) {
            metrics << record_to_json(cfg.run_name, rec, phase).dump() << "\n";
            metrics.flush();
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%.3f\n", e, rec.seconds);
            timing << buf;
            timing.flush();
            if (cfg.dump_divisions) {
                DataDivision d1 = co_divide(post1, cfg.hp.tau, 0);
                export_division_csv(lv1, post1, d1, train,
                                    (out / "divisions" /
                                     ("division_epoch_" + std::to_string(e) + "_net1.csv"))
                                        .string());
                if (net2) {
                    DataDivision d2 = co_divide(post2, cfg.hp.tau, 0);
                    export_division_csv(lv2, post2, d2, train,
                                        (out / "divisions" /
                                         ("division_epoch_" + std::to_string(e) + "_net2.csv"))
                                            .string());
                }
            }
        }
    }

    if (persist && cfg.save_checkpoints) {
        save_checkpoint(net1, (out / "net1.dmx").string());
        if (net2) save_checkpoint(*net2, (out / "net2.dmx").string());
    }
    if (persist) {
        Summary s = hist.summary();
        ordered_json j;
        j["run"] = cfg.run_name;
        j["epochs"] = cfg.epochs;
        j["best_accuracy"] = s.best;
        j["last10_accuracy"] = s.last10;
        std::ofstream sf(out / "summary.json", std::ios::trunc);
        sf << j.dump(2) << "\n";
    }
    return hist;
}

} // namespace dmx
