#pragma once

#include <optional>
#include <string>

#include "dividemix/trainer.hpp"

namespace dmx {

// Command-line overrides applied on top of a parsed config file.
struct CliOverrides {
    std::optional<std::array<uint64_t, 2>> seeds;
    std::optional<std::string> out_dir;
    std::optional<double> noise_ratio;
    std::optional<std::string> noise_kind; // sym-all | sym-excl | asym | none
    std::vector<std::string> ablation;     // flag names, e.g. "no_co_training"
};

// Parses the JSON experiment config. Unknown keys are rejected with the
// offending path; parse errors carry a line number. Does not run
// TrainConfig::validate().
TrainConfig parse_config_text(const std::string& text, const std::string& source_name);
TrainConfig load_config(const std::string& path);

void apply_overrides(TrainConfig& cfg, const CliOverrides& o);

// Full config with every default materialized; reparsing it reproduces the
// same TrainConfig.
std::string resolved_config_string(const TrainConfig& cfg);
void write_resolved_config(const TrainConfig& cfg, const std::string& path);

} // namespace dmx
