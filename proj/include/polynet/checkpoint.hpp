#pragma once

#include "polynet/io.hpp"
#include "polynet/model.hpp"
#include "polynet/params.hpp"

#include <filesystem>
#include <optional>

namespace polynet {

inline constexpr int kCheckpointVersion = 1;

struct OptimizerState {
    AdamConfig config;
    GroupMask groups;
    std::int64_t steps = 0;
    std::vector<std::vector<double>> m, v;
};

/// Versioned JSON container:
///   {"format": "polynet-checkpoint", "version": 1, "model": {...config...},
///    "params": [{"name", "group", "shape": [rows, cols], "data": [...]}, ...],
///    "optimizer": {...} (optional), "meta": {...}}
struct Checkpoint {
    ModelConfig model;
    ParamStore<double> params;
    std::optional<OptimizerState> optimizer;
    json meta = json::object();
};

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore<T>& params, const Adam<T>* adam = nullptr,
                           json meta = json::object());

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters converted to T, validated against the model's layout.
template <typename T>
ParamStore<T> checkpoint_params(const Checkpoint& ckpt, const PolicyModel<T>& model);

/// Rebuilds `adam` for `params` with the saved configuration, groups and moments.
template <typename T>
void restore_optimizer(const OptimizerState& state, const ParamStore<T>& params, Adam<T>& adam);

}  // namespace polynet
