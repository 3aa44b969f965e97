#pragma once

#include "polynet/environment.hpp"
#include "polynet/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace polynet {

using json = nlohmann::json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Instances: one JSON object per line with keys problem, coords, demands,
// capacity, tw, service, horizon, id, seed. Demands and windows list the
// customers only; coords list the depot first.
json instance_to_json(const Instance& inst);
Instance instance_from_json(const json& j);
void write_instances(const std::filesystem::path& path, const std::vector<Instance>& instances);
std::vector<Instance> read_instances(const std::filesystem::path& path);

struct SolutionRecord {
    std::vector<int> actions;
    double cost = 0;
    int strategy = 0;
    int augmentation = 0;
};

struct InstanceSolutions {
    std::string id;
    std::vector<SolutionRecord> solutions;
    int best = -1;  // index into solutions
};

/// A solution file groups solution sets per instance for one method.
struct SolutionFile {
    Problem problem = Problem::TSP;
    std::string method;
    std::vector<InstanceSolutions> instances;
};

SolutionRecord to_record(const Trajectory& t);
json solutions_to_json(const SolutionFile& f);
SolutionFile solutions_from_json(const json& j);
void write_solutions(const std::filesystem::path& path, const SolutionFile& f);
SolutionFile read_solutions(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

}  // namespace polynet
