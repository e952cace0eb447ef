#include "dividemix/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace dmx {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw InvalidConfig(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

NoiseSpec::Kind parse_noise_kind(const std::string& s, const std::string& path) {
    if (s == "none") return NoiseSpec::Kind::None;
    if (s == "sym-all") return NoiseSpec::Kind::SymmetricAll;
    if (s == "sym-excl") return NoiseSpec::Kind::SymmetricExclusive;
    if (s == "asym") return NoiseSpec::Kind::Asymmetric;
    fail(path, "expected one of none|sym-all|sym-excl|asym, got '" + s + "'");
}

std::string noise_kind_name(NoiseSpec::Kind k) {
    switch (k) {
    case NoiseSpec::Kind::None: return "none";
    case NoiseSpec::Kind::SymmetricAll: return "sym-all";
    case NoiseSpec::Kind::SymmetricExclusive: return "sym-excl";
    case NoiseSpec::Kind::Asymmetric: return "asym";
    }
    return "none";
}

int line_of_offset(const std::string& text, size_t byte) {
    int line = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

} // namespace

TrainConfig parse_config_text(const std::string& text, const std::string& source_name) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidConfig(source_name + ":" + std::to_string(line_of_offset(text, e.byte)) +
                            ": " + e.what());
    }
    if (!root.is_object()) throw InvalidConfig(source_name + ": top level must be an object");

    TrainConfig cfg;
    check_keys(root, "",
               {"run_name", "method", "data", "noise", "arch", "optim", "hyper", "train",
                "ablation", "out_dir"});

    cfg.run_name = get_or<std::string>(root, "", "run_name", cfg.run_name);
    cfg.out_dir = get_or<std::string>(root, "", "out_dir", cfg.out_dir);
    std::string method = get_or<std::string>(root, "", "method", "dividemix");
    if (method == "dividemix")
        cfg.method = Method::DivideMix;
    else if (method == "ce")
        cfg.method = Method::PlainCE;
    else
        fail("method", "expected dividemix|ce, got '" + method + "'");

    if (root.contains("data")) {
        const json& d = root.at("data");
        check_keys(d, "data",
                   {"kind", "n_per_class", "classes", "dim", "separation", "seed",
                    "test_n_per_class", "test_seed", "train_paths", "test_path", "subset",
                    "test_subset"});
        std::string kind = get_or<std::string>(d, "data", "kind", "blobs");
        if (kind == "blobs")
            cfg.data.kind = DataSpec::Kind::Blobs;
        else if (kind == "cifar10")
            cfg.data.kind = DataSpec::Kind::Cifar10;
        else
            fail("data.kind", "expected blobs|cifar10, got '" + kind + "'");
        cfg.data.n_per_class = get_or<int>(d, "data", "n_per_class", cfg.data.n_per_class);
        cfg.data.classes = get_or<int>(d, "data", "classes", cfg.data.classes);
        cfg.data.dim = get_or<int>(d, "data", "dim", cfg.data.dim);
        cfg.data.separation = get_or<double>(d, "data", "separation", cfg.data.separation);
        cfg.data.seed = get_or<uint64_t>(d, "data", "seed", cfg.data.seed);
        cfg.data.test_n_per_class =
            get_or<int>(d, "data", "test_n_per_class", cfg.data.test_n_per_class);
        cfg.data.test_seed = get_or<uint64_t>(d, "data", "test_seed", cfg.data.test_seed);
        cfg.data.train_paths =
            get_or<std::vector<std::string>>(d, "data", "train_paths", cfg.data.train_paths);
        cfg.data.test_path = get_or<std::string>(d, "data", "test_path", cfg.data.test_path);
        cfg.data.subset = get_or<int>(d, "data", "subset", cfg.data.subset);
        cfg.data.test_subset = get_or<int>(d, "data", "test_subset", cfg.data.test_subset);
    }

    if (root.contains("noise")) {
        const json& nj = root.at("noise");
        check_keys(nj, "noise", {"kind", "ratio", "seed", "asym_map"});
        cfg.noise.kind = parse_noise_kind(get_or<std::string>(nj, "noise", "kind", "none"),
                                          "noise.kind");
        cfg.noise.ratio = get_or<double>(nj, "noise", "ratio", cfg.noise.ratio);
        cfg.noise.seed = get_or<uint64_t>(nj, "noise", "seed", cfg.noise.seed);
        if (nj.contains("asym_map")) {
            if (!nj.at("asym_map").is_object()) fail("noise.asym_map", "must be an object");
            for (const auto& [k, v] : nj.at("asym_map").items()) {
                try {
                    cfg.noise.asym_map[std::stoi(k)] = v.get<int>();
                } catch (const std::exception&) {
                    fail("noise.asym_map", "entries must map class index to class index");
                }
            }
        }
    }

    if (root.contains("arch")) {
        const json& aj = root.at("arch");
        check_keys(aj, "arch", {"kind", "hidden", "conv_channels", "fc_hidden"});
        std::string kind = get_or<std::string>(aj, "arch", "kind", "mlp");
        if (kind == "mlp")
            cfg.arch.kind = ArchKind::Mlp;
        else if (kind == "cnn")
            cfg.arch.kind = ArchKind::Cnn;
        else
            fail("arch.kind", "expected mlp|cnn, got '" + kind + "'");
        cfg.arch.hidden = get_or<std::vector<int>>(aj, "arch", "hidden", cfg.arch.hidden);
        cfg.arch.conv_channels =
            get_or<std::vector<int>>(aj, "arch", "conv_channels", cfg.arch.conv_channels);
        cfg.arch.fc_hidden = get_or<int>(aj, "arch", "fc_hidden", cfg.arch.fc_hidden);
    }

    if (root.contains("optim")) {
        const json& oj = root.at("optim");
        check_keys(oj, "optim",
                   {"lr", "momentum", "weight_decay", "lr_decay_epoch", "lr_decay_factor"});
        cfg.optim.lr = get_or<double>(oj, "optim", "lr", cfg.optim.lr);
        cfg.optim.momentum = get_or<double>(oj, "optim", "momentum", cfg.optim.momentum);
        cfg.optim.weight_decay = get_or<double>(oj, "optim", "weight_decay", cfg.optim.weight_decay);
        cfg.optim.lr_decay_epoch = get_or<int>(oj, "optim", "lr_decay_epoch", cfg.optim.lr_decay_epoch);
        cfg.optim.lr_decay_factor =
            get_or<double>(oj, "optim", "lr_decay_factor", cfg.optim.lr_decay_factor);
    }

    if (root.contains("hyper")) {
        const json& hj = root.at("hyper");
        check_keys(hj, "hyper",
                   {"M", "T", "alpha", "lambda_u", "lambda_r", "batch", "tau", "warmup_epochs",
                    "confidence_penalty", "rampup_epochs"});
        cfg.hp.aug_rounds = get_or<int>(hj, "hyper", "M", cfg.hp.aug_rounds);
        cfg.hp.temperature = get_or<double>(hj, "hyper", "T", cfg.hp.temperature);
        cfg.hp.alpha = get_or<double>(hj, "hyper", "alpha", cfg.hp.alpha);
        cfg.hp.lambda_u = get_or<double>(hj, "hyper", "lambda_u", cfg.hp.lambda_u);
        cfg.hp.lambda_r = get_or<double>(hj, "hyper", "lambda_r", cfg.hp.lambda_r);
        cfg.hp.batch = get_or<int>(hj, "hyper", "batch", cfg.hp.batch);
        cfg.hp.tau = get_or<double>(hj, "hyper", "tau", cfg.hp.tau);
        cfg.hp.warmup_epochs = get_or<int>(hj, "hyper", "warmup_epochs", cfg.hp.warmup_epochs);
        cfg.hp.confidence_penalty =
            get_or<bool>(hj, "hyper", "confidence_penalty", cfg.hp.confidence_penalty);
        cfg.hp.rampup_epochs = get_or<int>(hj, "hyper", "rampup_epochs", cfg.hp.rampup_epochs);
    }

    if (root.contains("train")) {
        const json& tj = root.at("train");
        check_keys(tj, "train", {"epochs", "seeds", "dump_divisions", "save_checkpoints"});
        cfg.epochs = get_or<int>(tj, "train", "epochs", cfg.epochs);
        if (tj.contains("seeds")) {
            auto seeds = get_or<std::vector<uint64_t>>(tj, "train", "seeds", {});
            if (seeds.size() != 2) fail("train.seeds", "expected exactly two seeds");
            cfg.seeds = {seeds[0], seeds[1]};
        }
        cfg.dump_divisions = get_or<bool>(tj, "train", "dump_divisions", cfg.dump_divisions);
        cfg.save_checkpoints =
            get_or<bool>(tj, "train", "save_checkpoints", cfg.save_checkpoints);
    }

    if (root.contains("ablation")) {
        const json& abj = root.at("ablation");
        check_keys(abj, "ablation",
                   {"no_co_training", "no_label_refinement", "no_augmentation", "plain_mixmatch",
                    "single_model_test"});
        cfg.ablation.no_co_training =
            get_or<bool>(abj, "ablation", "no_co_training", cfg.ablation.no_co_training);
        cfg.ablation.no_label_refinement =
            get_or<bool>(abj, "ablation", "no_label_refinement", cfg.ablation.no_label_refinement);
        cfg.ablation.no_augmentation =
            get_or<bool>(abj, "ablation", "no_augmentation", cfg.ablation.no_augmentation);
        cfg.ablation.plain_mixmatch =
            get_or<bool>(abj, "ablation", "plain_mixmatch", cfg.ablation.plain_mixmatch);
        cfg.ablation.single_model_test =
            get_or<bool>(abj, "ablation", "single_model_test", cfg.ablation.single_model_test);
    }

    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidConfig("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

void apply_overrides(TrainConfig& cfg, const CliOverrides& o) {
    if (o.seeds) cfg.seeds = *o.seeds;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.noise_ratio) cfg.noise.ratio = *o.noise_ratio;
    if (o.noise_kind) cfg.noise.kind = parse_noise_kind(*o.noise_kind, "--noise-kind");
    for (const auto& name : o.ablation) {
        if (name == "no_co_training")
            cfg.ablation.no_co_training = true;
        else if (name == "no_label_refinement")
            cfg.ablation.no_label_refinement = true;
        else if (name == "no_augmentation")
            cfg.ablation.no_augmentation = true;
        else if (name == "plain_mixmatch")
            cfg.ablation.plain_mixmatch = true;
        else if (name == "single_model_test")
            cfg.ablation.single_model_test = true;
        else
            fail("--ablation", "unknown flag '" + name + "'");
    }
}

std::string resolved_config_string(const TrainConfig& cfg) {
    ordered_json j;
    j["run_name"] = cfg.run_name;
    j["out_dir"] = cfg.out_dir;
    j["method"] = cfg.method == Method::DivideMix ? "dividemix" : "ce";

    ordered_json d;
    d["kind"] = cfg.data.kind == DataSpec::Kind::Blobs ? "blobs" : "cifar10";
    d["n_per_class"] = cfg.data.n_per_class;
    d["classes"] = cfg.data.classes;
    d["dim"] = cfg.data.dim;
    d["separation"] = cfg.data.separation;
    d["seed"] = cfg.data.seed;
    d["test_n_per_class"] = cfg.data.test_n_per_class;
    d["test_seed"] = cfg.data.test_seed;
    d["train_paths"] = cfg.data.train_paths;
    d["test_path"] = cfg.data.test_path;
    d["subset"] = cfg.data.subset;
    d["test_subset"] = cfg.data.test_subset;
    j["data"] = d;

    ordered_json n;
    n["kind"] = noise_kind_name(cfg.noise.kind);
    n["ratio"] = cfg.noise.ratio;
    n["seed"] = cfg.noise.seed;
    ordered_json am = ordered_json::object();
    for (const auto& [from, to] : cfg.noise.asym_map) am[std::to_string(from)] = to;
    n["asym_map"] = am;
    j["noise"] = n;

    ordered_json a;
    a["kind"] = cfg.arch.kind == ArchKind::Mlp ? "mlp" : "cnn";
    a["hidden"] = cfg.arch.hidden;
    a["conv_channels"] = cfg.arch.conv_channels;
    a["fc_hidden"] = cfg.arch.fc_hidden;
    j["arch"] = a;

    ordered_json o;
    o["lr"] = cfg.optim.lr;
    o["momentum"] = cfg.optim.momentum;
    o["weight_decay"] = cfg.optim.weight_decay;
    o["lr_decay_epoch"] = cfg.optim.lr_decay_epoch;
    o["lr_decay_factor"] = cfg.optim.lr_decay_factor;
    j["optim"] = o;

    ordered_json h;
    h["M"] = cfg.hp.aug_rounds;
    h["T"] = cfg.hp.temperature;
    h["alpha"] = cfg.hp.alpha;
    h["lambda_u"] = cfg.hp.lambda_u;
    h["lambda_r"] = cfg.hp.lambda_r;
    h["batch"] = cfg.hp.batch;
    h["tau"] = cfg.hp.tau;
    h["warmup_epochs"] = cfg.hp.warmup_epochs;
    h["confidence_penalty"] = cfg.hp.confidence_penalty;
    h["rampup_epochs"] = cfg.hp.rampup_epochs;
    j["hyper"] = h;

    ordered_json t;
    t["epochs"] = cfg.epochs;
    t["seeds"] = std::vector<uint64_t>{cfg.seeds[0], cfg.seeds[1]};
    t["dump_divisions"] = cfg.dump_divisions;
    t["save_checkpoints"] = cfg.save_checkpoints;
    j["train"] = t;

    ordered_json ab;
    ab["no_co_training"] = cfg.ablation.no_co_training;
    ab["no_label_refinement"] = cfg.ablation.no_label_refinement;
    ab["no_augmentation"] = cfg.ablation.no_augmentation;
    ab["plain_mixmatch"] = cfg.ablation.plain_mixmatch;
    ab["single_model_test"] = cfg.ablation.single_model_test;
    j["ablation"] = ab;

    return j.dump(2) + "\n";
}

void write_resolved_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot write resolved config to " + path);
    f << resolved_config_string(cfg);
}

} // namespace dmx
