#pragma once

#include <filesystem>
#include <string>

#include "aarr/dataset.hpp"
#include "aarr/trainer.hpp"
#include "json.hpp"

namespace aarr {

/// Everything a CLI run depends on, serialized as one JSON document:
/// {"synthetic": {...}, "train": {...}, "paths": {"data_dir", "out_dir", "checkpoint"}}.
struct RunConfig {
    SyntheticSpec synthetic;
    TrainConfig train;
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;

    bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Unknown keys at any level raise std::invalid_argument.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
void write_resolved_config(const RunConfig& c, const std::filesystem::path& out_dir);

}  // namespace aarr
