#pragma once

#include "polynet/checkpoint.hpp"
#include "polynet/model.hpp"
#include "polynet/params.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace polynet {

enum class Trainer : std::uint8_t { PolyNet, Pomo };
std::string_view to_string(Trainer t);
Trainer parse_trainer(std::string_view name);

struct TrainConfig {
    Trainer trainer = Trainer::PolyNet;
    int k = 16;  // strategies per instance (POMO: forced starts per instance)
    int batch_size = 64;
    double learning_rate = 1e-4;
    int epochs = 10;
    std::int64_t rollouts_per_epoch = 100000;
    double grad_clip = 0;  // max global gradient norm; 0 disables
    std::string warm_start_path;
    std::uint64_t seed = 1;
    int n = 20;  // training instance size
    int val_instances = 100;
    int val_samples = 200;
    std::uint64_t val_seed = 1000003;
    std::string out_dir;  // empty: keep everything in memory
    bool checkpoint_every_epoch = true;
    bool resume = false;
    int workers = 0;  // 0: POLYNET_WORKERS or 1

    void validate() const;
    /// Optimizer steps per epoch implied by rollouts_per_epoch.
    [[nodiscard]] int steps_per_epoch() const;
};

struct EpochStats {
    int epoch = 0;
    double train_cost = 0;  // mean best-of-K training cost (raw units); NaN before training
    double val_best_cost = 0;
    double val_uniqueness_pct = 0;
    double wall_s = 0;
};

struct StepStats {
    double best_cost = 0;  // batch mean of the per-instance best, raw units
    double mean_cost = 0;  // batch mean of all rollouts, raw units
    double grad_norm = 0;
    std::int64_t rollouts = 0;
};

struct ValidationStats {
    double best_cost = 0;
    double uniqueness_pct = 0;
    std::vector<double> instance_best;
};

/// Index of the minimum cost, lowest index on ties.
std::size_t best_index(std::span<const Trajectory> rollouts);

/// Best-of-K surrogate (R* - mean R)·log π(τ*) in model cost units, times `weight`.
template <typename T>
Var best_of_k_loss(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
                   const StrategySet<T>& set, std::span<const Trajectory> rollouts, T weight = T(1));

/// Shared-baseline REINFORCE over every rollout, forced first step excluded,
/// averaged over the rollouts and times `weight`.
template <typename T>
Var pomo_loss(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
              std::span<const Trajectory> rollouts, T weight = T(1));

/// Samples K rollouts per instance (strategy i for rollout i) and accumulates
/// the batch-mean best-of-K gradient into `grads` (which is zeroed first).
/// Rollout j of instance b draws from derive_seed(seed, "rollout", {b, j}).
template <typename T>
StepStats best_of_k_gradient(const PolicyModel<T>& model, const ParamStore<T>& params,
                             std::span<const Instance> batch, int k, std::uint64_t seed, Gradients<T>& grads,
                             int workers = 1);

/// POMO gradient with `starts` distinct forced first actions per instance.
template <typename T>
StepStats pomo_gradient(const PolicyModel<T>& model, const ParamStore<T>& params, std::span<const Instance> batch,
                        int starts, std::uint64_t seed, Gradients<T>& grads, int workers = 1);

/// Optional norm clipping then one optimizer step. Throws NumericError on a
/// non-finite gradient without touching the parameters.
template <typename T>
double apply_gradient(ParamStore<T>& params, Adam<T>& adam, Gradients<T>& grads, double grad_clip);

template <typename T>
StepStats best_of_k_update(const PolicyModel<T>& model, ParamStore<T>& params, Adam<T>& adam,
                           std::span<const Instance> batch, int k, std::uint64_t seed, double grad_clip = 0,
                           int workers = 1);

template <typename T>
StepStats pomo_update(const PolicyModel<T>& model, ParamStore<T>& params, Adam<T>& adam,
                      std::span<const Instance> batch, int starts, std::uint64_t seed, double grad_clip = 0,
                      int workers = 1);

/// M samples per instance with strategy j mod K for sample j; best cost and
/// percentage of distinct canonical solutions, averaged over the set.
template <typename T>
ValidationStats validate(const PolicyModel<T>& model, const ParamStore<T>& params,
                         std::span<const Instance> instances, int k, int m, std::uint64_t seed, int workers = 1);

struct TrainResult {
    ParamStore<float> params;
    std::vector<EpochStats> stats;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Full training run in single precision. With out_dir set, writes
/// stats.csv, last.json (resumable) and, if enabled, checkpoints/epoch_NNNN.json.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Appends or rewrites the stats CSV.
void write_stats_csv(const std::string& path, std::span<const EpochStats> stats);

}  // namespace polynet
