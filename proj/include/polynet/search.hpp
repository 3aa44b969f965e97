#pragma once

#include "polynet/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace polynet {

struct SearchConfig {
    int m = 64;          // rollouts per instance (EAS: total over all iterations)
    int k = 1;           // strategies the model was trained with
    bool augment = false;
    bool forced_first_move = false;
    int eas_iterations = 0;
    double eas_learning_rate = 3e-3;
    double eas_lambda = 0.1;
    std::uint64_t seed = 0;
    int batch_rows = 64;  // rows per batched rollout
    bool keep_solutions = false;

    void validate() const;
};

struct Incumbent {
    Trajectory best;
    int iteration = 0;
    [[nodiscard]] double cost() const { return best.cost; }
};

struct IterationLog {
    int iteration = 0;
    double incumbent = 0;
    double wave_best = 0;
    double wave_mean = 0;
};

struct SearchResult {
    Incumbent incumbent;
    std::vector<double> costs;           // every rollout, raw units
    std::vector<Trajectory> solutions;   // filled when keep_solutions
    std::vector<IterationLog> iterations;  // EAS only
    double seconds = 0;
    bool stopped_early = false;          // EAS hit a non-finite loss
};

/// Strategy indices for m rollouts: concatenated seeded permutations of
/// 0..k-1, so every strategy appears floor(m/k) times and the remainder is
/// drawn without replacement. Draws for m are a prefix of draws for m' > m.
std::vector<int> strategy_draws(int m, int k, std::uint64_t seed, int stream = 0);

/// Rollouts assigned to augmentation `a` when m is split over `count` variants.
int augmentation_share(int m, int count, int a);

/// Samples one trajectory per strategy entry; row j draws from Rng(seeds[j])
/// and, when `forced` is non-empty, starts with forced[j].
template <typename T>
std::vector<Trajectory> sample_rows(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
                                    const StrategySet<T>& set, std::span<const int> strategies,
                                    std::span<const std::uint64_t> seeds, std::span<const int> forced, int batch_rows);

template <typename T>
SearchResult sample_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                           const SearchConfig& cfg);

template <typename T>
SearchResult greedy_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                           const SearchConfig& cfg);

/// Fine-tunes a per-instance copy of the PolyNet layers only; the encoder
/// output is computed once per augmentation and kept frozen.
template <typename T>
SearchResult eas_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                        const SearchConfig& cfg);

/// Sampling with the first action forced, cycling over the feasible first
/// actions while strategies follow their own draw sequence.
template <typename T>
SearchResult forced_first_move_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                                      const SearchConfig& cfg);

enum class SearchMode : std::uint8_t { Sample, Greedy, ForcedFirst, Eas };
std::string_view to_string(SearchMode m);
SearchMode parse_search_mode(std::string_view name);

/// Searches every instance independently; instance i uses seed
/// derive_seed(cfg.seed, "instance", {i}).
template <typename T>
std::vector<SearchResult> search_instances(const PolicyModel<T>& model, const ParamStore<T>& params,
                                           std::span<const Instance> instances, const SearchConfig& cfg,
                                           SearchMode mode, int workers = 0);

}  // namespace polynet
