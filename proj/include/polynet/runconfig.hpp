#pragma once

#include "polynet/instancegen.hpp"
#include "polynet/io.hpp"
#include "polynet/model.hpp"
#include "polynet/search.hpp"
#include "polynet/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace polynet {

inline constexpr const char* kVersion = "0.1.0";

json gen_config_to_json(const GenConfig& c);
json train_config_to_json(const TrainConfig& c);
json search_config_to_json(const SearchConfig& c);

/// Fully resolved settings of one CLI invocation.
struct RunConfig {
    std::string command;
    std::vector<std::string> argv;
    json settings = json::object();  // echo of every resolved option
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::vector<std::filesystem::path> inputs;
};

/// Manifest written next to every run's outputs: config echo, seeds,
/// tool version and FNV-1a hashes of all inputs.
json make_manifest(const RunConfig& run, const std::vector<std::string>& outputs, const json& extra = json::object());
void write_manifest(const RunConfig& run, const std::vector<std::string>& outputs, const json& extra = json::object());

}  // namespace polynet
