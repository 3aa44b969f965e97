#pragma once

#include "polynet/environment.hpp"
#include "polynet/params.hpp"
#include "polynet/rng.hpp"
#include "polynet/tape.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace polynet {

/// How the strategy vector enters the decoder.
enum class DecoderKind : std::uint8_t {
    Base,          // unconditioned decoder (POMO-style baseline)
    PolyNet,       // residual block W2·ReLU(W1·[h, v] + b1) + b2 added to h
    AdditiveBits,  // v zero-padded to the embedding width and added to h
};

std::string_view to_string(DecoderKind k);
DecoderKind parse_decoder(std::string_view name);

struct ModelConfig {
    Problem problem = Problem::TSP;
    int embed_dim = 64;
    int num_heads = 4;
    int num_encoder_layers = 3;
    int ff_dim = 256;
    int polynet_hidden = 64;
    int bit_len = 4;
    double logit_clip = 10.0;
    DecoderKind decoder = DecoderKind::PolyNet;
    /// Zero W1/b1 as well as W2/b2 at initialization.
    bool zero_init_first_layer = false;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Smallest bit length that can encode K distinct vectors (at least 1).
int min_bit_len(int k);

using BitVector = std::vector<std::uint8_t>;

/// The first K binary encodings of 0..K-1, most significant bit first.
std::vector<BitVector> strategy_vectors(int k, int bit_len);

/// Strategy vectors laid out as a K x bit_len matrix.
template <typename T>
struct StrategySet {
    int k = 1;
    int bit_len = 1;
    std::vector<T> bits;

    StrategySet() = default;
    StrategySet(int k_, int bit_len_);
    [[nodiscard]] std::span<const T> row(int i) const
    {
        return {bits.data() + static_cast<std::size_t>(i * bit_len), static_cast<std::size_t>(bit_len)};
    }
};

struct Trajectory {
    std::vector<int> actions;
    std::vector<double> log_probs;
    double cost = 0;  // raw units
    int strategy = 0;
    int augmentation = 0;
    std::string instance_id;

    [[nodiscard]] double log_prob() const;
};

enum class DecodeMode : std::uint8_t { Sample, Greedy };

/// Per-row rollout request. `forced_first` < 0 lets the policy choose.
struct RowSpec {
    int strategy = 0;
    int forced_first = -1;
    Rng* rng = nullptr;
};

/// Parameter leaves bound onto one tape.
struct BoundParams {
    std::vector<Var> vars;
};

/// An instance after the single encoder pass, with the decoder's
/// per-instance projections cached on the tape.
struct Encoded {
    Environment env;
    NormalizedInstance norm;
    int augmentation = 0;
    Var nodes;  // n_nodes x d
    Var graph;  // 1 x d
    Var q_graph;
    Var ptr_keys;
    std::vector<Var> head_keys;
    std::vector<Var> head_values;
};

/// Number of encoder passes performed in this process.
std::uint64_t encode_calls();

template <typename T>
class PolicyModel {
public:
    explicit PolicyModel(ModelConfig cfg);

    [[nodiscard]] const ModelConfig& config() const { return cfg_; }
    [[nodiscard]] const std::vector<ParamSpec>& layout() const { return layout_; }
    [[nodiscard]] int node_features() const;
    [[nodiscard]] int state_features() const;

    /// Cold start: uniform in [-1/sqrt(d), 1/sqrt(d)], norm scales 1 and
    /// shifts 0, PolyNet second layer zero.
    [[nodiscard]] ParamStore<T> init_params(std::uint64_t seed) const;
    /// Warm start: encoder and base decoder from `base`, PolyNet layers fresh.
    [[nodiscard]] ParamStore<T> init_params(std::uint64_t seed, const ParamStore<T>& base) const;
    /// Throws if `params` does not match this model's layout.
    void check_layout(const ParamStore<T>& params) const;

    /// Binds every parameter; those whose group has a buffer in `grads`
    /// (and only while the tape records) receive gradients.
    BoundParams bind(Tape<T>& tape, const ParamStore<T>& params, Gradients<T>* grads) const;

    /// Node embeddings from normalized features.
    Var encode(Tape<T>& tape, const BoundParams& p, const NormalizedInstance& inst) const;
    /// Encoder pass plus cached decoder projections for one instance.
    Encoded prepare(Tape<T>& tape, const BoundParams& p, const Instance& inst, int augmentation = 0) const;

    struct StepInput {
        int rows = 0;
        bool initial = false;            // TSP before the first move
        std::vector<int> last;           // per row
        std::vector<int> first;          // per row (TSP)
        std::vector<T> state;            // rows x state_features
        std::vector<std::uint8_t> mask;  // rows x n_nodes
        Var strategies;                  // rows x bit_len (or x d for AdditiveBits); unused for Base
    };
    /// Action distribution for a batch of rows, rows x n_nodes.
    Var decode_step(Tape<T>& tape, const BoundParams& p, const Encoded& e, const StepInput& in) const;

    /// Sets rows, last/first nodes and state features of `in` from environment
    /// states. The mask and strategies are left to the caller.
    void fill_state(const Encoded& e, std::span<const State> states, StepInput& in) const;

    /// Strategy input for a batch of rows in the form the decoder expects.
    Var strategy_input(Tape<T>& tape, const StrategySet<T>& set, std::span<const int> strategies) const;

    /// Runs complete episodes for every row without recording gradients.
    std::vector<Trajectory> rollout(Tape<T>& tape, const BoundParams& p, const Encoded& e,
                                    const StrategySet<T>& set, std::span<const RowSpec> rows,
                                    DecodeMode mode) const;

    /// Teacher-forces complete trajectories; returns rows x 1 summed log-probabilities.
    /// With `skip_first`, the first action's term is excluded.
    Var log_likelihood(Tape<T>& tape, const BoundParams& p, const Encoded& e, const StrategySet<T>& set,
                       std::span<const Trajectory* const> trajectories, bool skip_first = false) const;

private:
    Var P(const BoundParams& p, int idx) const { return p.vars[static_cast<std::size_t>(idx)]; }

    ModelConfig cfg_;
    std::vector<ParamSpec> layout_;

    struct LayerIdx {
        int wq, wk, wv, wo, bo, n1g, n1b, f1w, f1b, f2w, f2b, n2g, n2b;
    };
    int embed_w_ = -1, embed_b_ = -1;
    std::vector<LayerIdx> layers_;
    int wq_graph_ = -1, wq_ctx_ = -1, dwk_ = -1, dwv_ = -1, dwo_ = -1, dbo_ = -1, wptr_ = -1;
    int first_ph_ = -1, last_ph_ = -1;
    int pw1_ = -1, pb1_ = -1, pw2_ = -1, pb2_ = -1;
};

extern template class PolicyModel<float>;
extern template class PolicyModel<double>;
extern template struct StrategySet<float>;
extern template struct StrategySet<double>;

}  // namespace polynet
