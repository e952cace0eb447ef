#include "dividemix/exports.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "dividemix/errors.hpp"
#include "dividemix/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dmx {

namespace {

std::string num_or_empty(const json& v) {
    if (v.is_null()) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    return buf;
}

// division dump columns: index,loss,normalized_loss,w,assigned_set,is_noise
void histogram_from_division(const fs::path& division_csv, const fs::path& out_csv) {
    std::ifstream f(division_csv);
    if (!f) throw FormatError("export_plots: cannot open " + division_csv.string());
    std::string line;
    std::getline(f, line); // header
    std::vector<double> clean_losses, noisy_losses;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw FormatError("export_plots: malformed row in " + division_csv.string());
        double nl = std::stod(fields[2]);
        bool is_noise = fields[5] == "1";
        (is_noise ? noisy_losses : clean_losses).push_back(nl);
    }
    auto clean_counts = histogram(clean_losses, 50, 0.0, 1.0);
    auto noisy_counts = histogram(noisy_losses, 50, 0.0, 1.0);

    std::ofstream out(out_csv, std::ios::trunc);
    out << "bin_low,bin_high,clean_count,noisy_count\n";
    char buf[96];
    for (int b = 0; b < 50; ++b) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%d,%d\n", b / 50.0, (b + 1) / 50.0,
                      clean_counts[b], noisy_counts[b]);
        out << buf;
    }
}

} // namespace

std::vector<std::string> export_plots(const std::string& run_dir) {
    fs::path dir(run_dir);
    fs::path metrics = dir / "metrics.jsonl";
    std::ifstream f(metrics);
    if (!f) throw FormatError("export_plots: no metrics.jsonl in " + run_dir);

    std::vector<std::string> written;
    std::ofstream acc(dir / "accuracy.csv", std::ios::trunc);
    std::ofstream auc(dir / "auc.csv", std::ios::trunc);
    acc << "epoch,phase,acc_ensemble,acc_net1,acc_net2,reported_acc\n";
    auc << "epoch,auc_net1,auc_net2\n";

    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError("export_plots: bad metrics line: " + std::string(e.what()));
        }
        acc << j.at("epoch").get<int>() << "," << j.at("phase").get<std::string>() << ","
            << num_or_empty(j.at("acc_ensemble")) << "," << num_or_empty(j.at("acc_net1")) << ","
            << num_or_empty(j.at("acc_net2")) << "," << num_or_empty(j.at("reported_acc")) << "\n";
        auc << j.at("epoch").get<int>() << "," << num_or_empty(j.at("auc_net1")) << ","
            << num_or_empty(j.at("auc_net2")) << "\n";
    }
    written.push_back((dir / "accuracy.csv").string());
    written.push_back((dir / "auc.csv").string());

    fs::path divisions = dir / "divisions";
    if (fs::exists(divisions)) {
        std::regex pat(R"(division_epoch_(\d+)_net1\.csv)");
        std::vector<std::pair<int, fs::path>> files;
        for (const auto& entry : fs::directory_iterator(divisions)) {
            std::smatch m;
            std::string name = entry.path().filename().string();
            if (std::regex_match(name, m, pat)) files.emplace_back(std::stoi(m[1]), entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& [epoch, path] : files) {
            fs::path out_csv = dir / ("loss_hist_epoch_" + std::to_string(epoch) + ".csv");
            histogram_from_division(path, out_csv);
            written.push_back(out_csv.string());
        }
    }
    return written;
}

} // namespace dmx
