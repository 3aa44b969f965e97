#include "polynet/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace polynet {

namespace {

std::atomic<std::uint64_t> g_encode_calls{0};

}  // namespace

std::uint64_t encode_calls() { return g_encode_calls.load(); }

std::string_view to_string(DecoderKind k)
{
    switch (k) {
    case DecoderKind::Base: return "base";
    case DecoderKind::PolyNet: return "residual";
    case DecoderKind::AdditiveBits: return "ablation-add";
    }
    return "?";
}

DecoderKind parse_decoder(std::string_view name)
{
    if (name == "base" || name == "pomo") return DecoderKind::Base;
    if (name == "residual" || name == "polynet") return DecoderKind::PolyNet;
    if (name == "ablation-add" || name == "additive") return DecoderKind::AdditiveBits;
    throw std::invalid_argument("unknown decoder '" + std::string(name) + "' (expected base, residual, ablation-add)");
}

void ModelConfig::validate() const
{
    if (embed_dim <= 0 || num_heads <= 0 || num_encoder_layers <= 0 || ff_dim <= 0 || polynet_hidden <= 0 ||
        bit_len <= 0)
        throw std::invalid_argument("ModelConfig: dimensions must be positive");
    if (embed_dim % num_heads != 0) throw std::invalid_argument("ModelConfig: embed_dim must be divisible by num_heads");
    if (!(logit_clip > 0)) throw std::invalid_argument("ModelConfig: logit_clip must be positive");
    if (decoder == DecoderKind::AdditiveBits && bit_len > embed_dim)
        throw std::invalid_argument("ModelConfig: bit_len exceeds embed_dim for additive strategy input");
}

int min_bit_len(int k)
{
    if (k < 1) throw std::invalid_argument("K must be positive");
    int bits = 0;
    while ((1LL << bits) < k) ++bits;
    return std::max(bits, 1);
}

std::vector<BitVector> strategy_vectors(int k, int bit_len)
{
    if (k < 1 || bit_len < 1) throw std::invalid_argument("strategy_vectors: K and bit_len must be positive");
    if (bit_len < 63 && (1LL << bit_len) < k)
        throw std::invalid_argument("strategy_vectors: 2^" + std::to_string(bit_len) + " < K=" + std::to_string(k));
    std::vector<BitVector> out(static_cast<std::size_t>(k), BitVector(static_cast<std::size_t>(bit_len), 0));
    for (int i = 0; i < k; ++i)
        for (int b = 0; b < bit_len; ++b) {
            const int shift = bit_len - 1 - b;
            out[i][b] = shift < 63 ? static_cast<std::uint8_t>((static_cast<long long>(i) >> shift) & 1) : 0;
        }
    return out;
}

template <typename T>
StrategySet<T>::StrategySet(int k_, int bit_len_) : k(k_), bit_len(bit_len_)
{
    for (const BitVector& v : strategy_vectors(k_, bit_len_))
        for (std::uint8_t b : v) bits.push_back(static_cast<T>(b));
}

double Trajectory::log_prob() const { return std::accumulate(log_probs.begin(), log_probs.end(), 0.0); }

// ---------------------------------------------------------------------------

template <typename T>
PolicyModel<T>::PolicyModel(ModelConfig cfg) : cfg_(cfg)
{
    cfg_.validate();
    const int d = cfg_.embed_dim;
    auto add = [&](std::string name, ParamGroup g, Shape s) {
        layout_.push_back({std::move(name), g, s});
        return static_cast<int>(layout_.size() - 1);
    };
    using G = ParamGroup;
    embed_w_ = add("enc.embed.W", G::Encoder, {node_features(), d});
    embed_b_ = add("enc.embed.b", G::Encoder, {1, d});
    for (int l = 0; l < cfg_.num_encoder_layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        LayerIdx li{};
        li.wq = add(p + "Wq", G::Encoder, {d, d});
        li.wk = add(p + "Wk", G::Encoder, {d, d});
        li.wv = add(p + "Wv", G::Encoder, {d, d});
        li.wo = add(p + "Wo", G::Encoder, {d, d});
        li.bo = add(p + "bo", G::Encoder, {1, d});
        li.n1g = add(p + "norm1.g", G::Encoder, {1, d});
        li.n1b = add(p + "norm1.b", G::Encoder, {1, d});
        li.f1w = add(p + "ff.W1", G::Encoder, {d, cfg_.ff_dim});
        li.f1b = add(p + "ff.b1", G::Encoder, {1, cfg_.ff_dim});
        li.f2w = add(p + "ff.W2", G::Encoder, {cfg_.ff_dim, d});
        li.f2b = add(p + "ff.b2", G::Encoder, {1, d});
        li.n2g = add(p + "norm2.g", G::Encoder, {1, d});
        li.n2b = add(p + "norm2.b", G::Encoder, {1, d});
        layers_.push_back(li);
    }
    const bool tsp = cfg_.problem == Problem::TSP;
    const int ctx = d + (tsp ? d : 0) + state_features();
    wq_graph_ = add("dec.Wq_graph", G::Decoder, {d, d});
    wq_ctx_ = add("dec.Wq_ctx", G::Decoder, {ctx, d});
    dwk_ = add("dec.Wk", G::Decoder, {d, d});
    dwv_ = add("dec.Wv", G::Decoder, {d, d});
    dwo_ = add("dec.Wo", G::Decoder, {d, d});
    dbo_ = add("dec.bo", G::Decoder, {1, d});
    wptr_ = add("dec.Wptr", G::Decoder, {d, d});
    if (tsp) {
        first_ph_ = add("dec.first_placeholder", G::Decoder, {1, d});
        last_ph_ = add("dec.last_placeholder", G::Decoder, {1, d});
    }
    if (cfg_.decoder == DecoderKind::PolyNet) {
        pw1_ = add("poly.W1", G::PolyNet, {d + cfg_.bit_len, cfg_.polynet_hidden});
        pb1_ = add("poly.b1", G::PolyNet, {1, cfg_.polynet_hidden});
        pw2_ = add("poly.W2", G::PolyNet, {cfg_.polynet_hidden, d});
        pb2_ = add("poly.b2", G::PolyNet, {1, d});
    }
}

template <typename T>
int PolicyModel<T>::node_features() const
{
    switch (cfg_.problem) {
    case Problem::TSP: return 2;
    case Problem::CVRP: return 4;  // x, y, demand, depot flag
    case Problem::CVRPTW: return 6;  // x, y, demand, earliest, latest, depot flag
    }
    return 0;
}

template <typename T>
int PolicyModel<T>::state_features() const
{
    switch (cfg_.problem) {
    case Problem::TSP: return 0;
    case Problem::CVRP: return 1;  // remaining load
    case Problem::CVRPTW: return 2;  // remaining load, current time
    }
    return 0;
}

template <typename T>
ParamStore<T> PolicyModel<T>::init_params(std::uint64_t seed) const
{
    ParamStore<T> params(layout_);
    Rng rng = make_rng(seed, "init");
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& e = params.entry(i);
        const bool is_norm = e.name.find("norm") != std::string::npos;
        const bool zero = static_cast<int>(i) == pw2_ || static_cast<int>(i) == pb2_ ||
                          (cfg_.zero_init_first_layer && (static_cast<int>(i) == pw1_ || static_cast<int>(i) == pb1_));
        for (T& w : e.value.values) {
            const double u = uniform01(rng);
            if (is_norm)
                w = e.name.back() == 'g' ? T(1) : T(0);
            else
                w = zero ? T(0) : static_cast<T>((2.0 * u - 1.0) * bound);
        }
    }
    return params;
}

template <typename T>
ParamStore<T> PolicyModel<T>::init_params(std::uint64_t seed, const ParamStore<T>& base) const
{
    ParamStore<T> params = init_params(seed);
    GroupMask groups = GroupMask::none();
    groups.on[static_cast<int>(ParamGroup::Encoder)] = true;
    groups.on[static_cast<int>(ParamGroup::Decoder)] = true;
    params.copy_groups_from(base, groups);
    return params;
}

template <typename T>
void PolicyModel<T>::check_layout(const ParamStore<T>& params) const
{
    if (params.size() != layout_.size())
        throw ShapeError("parameter count " + std::to_string(params.size()) + " does not match model layout (" +
                         std::to_string(layout_.size()) + ")");
    for (std::size_t i = 0; i < layout_.size(); ++i) {
        const auto& e = params.entry(i);
        if (e.name != layout_[i].name || e.group != layout_[i].group || !(e.value.shape == layout_[i].shape))
            throw ShapeError("parameter '" + e.name + "' " + to_string(e.value.shape) + " does not match layout entry '" +
                             layout_[i].name + "' " + to_string(layout_[i].shape));
    }
}

template <typename T>
BoundParams PolicyModel<T>::bind(Tape<T>& tape, const ParamStore<T>& params, Gradients<T>* grads) const
{
    check_layout(params);
    BoundParams b;
    b.vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        b.vars.push_back(tape.parameter(params.entry(i).value, grads ? grads->buffer(i) : nullptr));
    return b;
}

template <typename T>
Var PolicyModel<T>::encode(Tape<T>& tape, const BoundParams& p, const NormalizedInstance& inst) const
{
    if (inst.problem != cfg_.problem)
        throw ShapeError("encode: instance problem " + std::string(to_string(inst.problem)) +
                         " does not match model problem " + std::string(to_string(cfg_.problem)));
    const int n = static_cast<int>(inst.coords.size());
    const int f = node_features();
    const int d = cfg_.embed_dim;
    const int heads = cfg_.num_heads;
    const int dk = d / heads;
    Tensor<T> feats({n, f});
    for (int i = 0; i < n; ++i) {
        feats(i, 0) = static_cast<T>(inst.coords[i].x);
        feats(i, 1) = static_cast<T>(inst.coords[i].y);
        if (cfg_.problem == Problem::TSP) continue;
        feats(i, 2) = static_cast<T>(inst.demands[i]);
        if (cfg_.problem == Problem::CVRPTW) {
            feats(i, 3) = static_cast<T>(inst.windows[i].earliest);
            feats(i, 4) = static_cast<T>(inst.windows[i].latest);
        }
        feats(i, f - 1) = i == 0 ? T(1) : T(0);
    }
    ++g_encode_calls;

    Var h = tape.affine(tape.constant(feats), P(p, embed_w_), P(p, embed_b_));
    const std::vector<std::uint8_t> full(static_cast<std::size_t>(n * n), 1);
    const T att_scale = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<Var> outs(static_cast<std::size_t>(heads));
    for (const LayerIdx& l : layers_) {
        Var q = tape.matmul(h, P(p, l.wq));
        Var k = tape.matmul(h, P(p, l.wk));
        Var v = tape.matmul(h, P(p, l.wv));
        for (int hd = 0; hd < heads; ++hd) {
            Var qh = heads == 1 ? q : tape.gather_cols(q, hd * dk, dk);
            Var kh = heads == 1 ? k : tape.gather_cols(k, hd * dk, dk);
            Var vh = heads == 1 ? v : tape.gather_cols(v, hd * dk, dk);
            Var att = tape.masked_softmax(tape.scale(tape.matmul_nt(qh, kh), att_scale), full);
            outs[static_cast<std::size_t>(hd)] = tape.matmul(att, vh);
        }
        Var mha = tape.affine(heads == 1 ? outs[0] : tape.concat(outs), P(p, l.wo), P(p, l.bo));
        h = tape.instance_norm(tape.add(h, mha), P(p, l.n1g), P(p, l.n1b));
        Var ff = tape.affine(tape.relu(tape.affine(h, P(p, l.f1w), P(p, l.f1b))), P(p, l.f2w), P(p, l.f2b));
        h = tape.instance_norm(tape.add(h, ff), P(p, l.n2g), P(p, l.n2b));
    }
    return h;
}

template <typename T>
Encoded PolicyModel<T>::prepare(Tape<T>& tape, const BoundParams& p, const Instance& inst, int augmentation) const
{
    Encoded e{Environment(inst), normalize(inst), augmentation, {}, {}, {}, {}, {}, {}};
    const int d = cfg_.embed_dim;
    const int heads = cfg_.num_heads;
    const int dk = d / heads;
    e.nodes = encode(tape, p, e.norm);
    e.graph = tape.mean_rows(e.nodes);
    e.q_graph = tape.matmul(e.graph, P(p, wq_graph_));
    e.ptr_keys = tape.matmul(e.nodes, P(p, wptr_));
    Var k = tape.matmul(e.nodes, P(p, dwk_));
    Var v = tape.matmul(e.nodes, P(p, dwv_));
    for (int hd = 0; hd < heads; ++hd) {
        e.head_keys.push_back(heads == 1 ? k : tape.gather_cols(k, hd * dk, dk));
        e.head_values.push_back(heads == 1 ? v : tape.gather_cols(v, hd * dk, dk));
    }
    return e;
}

template <typename T>
Var PolicyModel<T>::strategy_input(Tape<T>& tape, const StrategySet<T>& set, std::span<const int> strategies) const
{
    const int rows = static_cast<int>(strategies.size());
    if (cfg_.decoder == DecoderKind::Base) return {};
    if (set.bit_len != cfg_.bit_len)
        throw ShapeError("strategy set bit length " + std::to_string(set.bit_len) + " does not match model bit_len " +
                         std::to_string(cfg_.bit_len));
    const int width = cfg_.decoder == DecoderKind::AdditiveBits ? cfg_.embed_dim : cfg_.bit_len;
    Tensor<T> v({rows, width});
    for (int r = 0; r < rows; ++r) {
        const int s = strategies[r];
        if (s < 0 || s >= set.k) throw std::out_of_range("strategy index " + std::to_string(s) + " outside set");
        auto bits = set.row(s);
        std::copy(bits.begin(), bits.end(), v.values.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return tape.constant(v);
}

template <typename T>
Var PolicyModel<T>::decode_step(Tape<T>& tape, const BoundParams& p, const Encoded& e, const StepInput& in) const
{
    const int d = cfg_.embed_dim;
    const int heads = cfg_.num_heads;
    const int dk = d / heads;
    const bool tsp = cfg_.problem == Problem::TSP;
    const int rows = in.rows;

    std::vector<Var> ctx;
    ctx.reserve(3);
    if (tsp && in.initial) {
        const std::vector<int> zeros(static_cast<std::size_t>(rows), 0);
        ctx.push_back(tape.gather_rows(P(p, last_ph_), zeros));
        ctx.push_back(tape.gather_rows(P(p, first_ph_), zeros));
    } else {
        ctx.push_back(tape.gather_rows(e.nodes, in.last));
        if (tsp) ctx.push_back(tape.gather_rows(e.nodes, in.first));
    }
    if (state_features() > 0) ctx.push_back(tape.constant({rows, state_features()}, in.state));
    Var q = tape.add(tape.matmul(tape.concat(ctx), P(p, wq_ctx_)), e.q_graph);

    const T att_scale = T(1) / std::sqrt(static_cast<T>(dk));
    std::vector<Var> outs(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
        Var qh = heads == 1 ? q : tape.gather_cols(q, hd * dk, dk);
        Var scores = tape.scale(tape.matmul_nt(qh, e.head_keys[static_cast<std::size_t>(hd)]), att_scale);
        Var att = tape.masked_softmax(scores, in.mask);
        outs[static_cast<std::size_t>(hd)] = tape.matmul(att, e.head_values[static_cast<std::size_t>(hd)]);
    }
    Var h = tape.affine(heads == 1 ? outs[0] : tape.concat(outs), P(p, dwo_), P(p, dbo_));

    switch (cfg_.decoder) {
    case DecoderKind::Base:
        break;
    case DecoderKind::PolyNet: {
        const Var parts[] = {h, in.strategies};
        Var hidden = tape.relu(tape.affine(tape.concat(parts), P(p, pw1_), P(p, pb1_)));
        h = tape.add(h, tape.affine(hidden, P(p, pw2_), P(p, pb2_)));
        break;
    }
    case DecoderKind::AdditiveBits:
        h = tape.add(h, in.strategies);
        break;
    }

    const T ptr_scale = T(1) / std::sqrt(static_cast<T>(d));
    Var compat = tape.scale(tape.matmul_nt(h, e.ptr_keys), ptr_scale);
    Var logits = tape.scale(tape.tanh(compat), static_cast<T>(cfg_.logit_clip));
    return tape.masked_softmax(logits, in.mask);
}

template <typename T>
void PolicyModel<T>::fill_state(const Encoded& e, std::span<const State> states, StepInput& in) const
{
    const int sf = state_features();
    const Instance& inst = e.env.instance();
    in.rows = static_cast<int>(states.size());
    in.last.resize(states.size());
    in.first.resize(states.size());
    in.state.resize(states.size() * static_cast<std::size_t>(sf));
    in.initial = cfg_.problem == Problem::TSP && states[0].current < 0;
    for (std::size_t r = 0; r < states.size(); ++r) {
        const State& s = states[r];
        in.last[r] = std::max(s.current, 0);
        in.first[r] = std::max(s.first, 0);
        if (sf >= 1) in.state[r * sf] = static_cast<T>(s.load / inst.capacity);
        if (sf >= 2) in.state[r * sf + 1] = static_cast<T>(s.time / inst.horizon);
    }
}

template <typename T>
std::vector<Trajectory> PolicyModel<T>::rollout(Tape<T>& tape, const BoundParams& p, const Encoded& e,
                                                const StrategySet<T>& set, std::span<const RowSpec> rows,
                                                DecodeMode mode) const
{
    const bool was_recording = tape.recording();
    tape.set_recording(false);
    const int B = static_cast<int>(rows.size());
    const int N = e.env.num_actions();
    const Instance& inst = e.env.instance();

    std::vector<State> states(static_cast<std::size_t>(B), e.env.reset());
    std::vector<Trajectory> out(static_cast<std::size_t>(B));
    std::vector<int> strategies(static_cast<std::size_t>(B));
    for (int r = 0; r < B; ++r) {
        strategies[r] = rows[r].strategy;
        out[r].strategy = rows[r].strategy;
        out[r].augmentation = e.augmentation;
        out[r].instance_id = inst.id;
        if (mode == DecodeMode::Sample && rows[r].rng == nullptr)
            throw std::invalid_argument("rollout: sampling row without an RNG");
        if (rows[r].forced_first >= 0 && !e.env.is_feasible(states[r], rows[r].forced_first))
            throw EnvError("forced first action " + std::to_string(rows[r].forced_first) + " is infeasible");
    }

    StepInput in;
    in.strategies = strategy_input(tape, set, strategies);
    in.mask.resize(static_cast<std::size_t>(B * N));
    const std::size_t mark = tape.mark();
    int active = B;
    while (active > 0) {
        fill_state(e, states, in);
        for (int r = 0; r < B; ++r) {
            std::span<std::uint8_t> m(in.mask.data() + static_cast<std::size_t>(r * N), static_cast<std::size_t>(N));
            if (states[r].done()) {
                std::fill(m.begin(), m.end(), 0);
                m[0] = 1;
            } else {
                e.env.feasible_actions(states[r], m);
            }
        }
        Var probs = decode_step(tape, p, e, in);
        auto pv = tape.value(probs);
        for (int r = 0; r < B; ++r) {
            State& s = states[r];
            if (s.done()) continue;
            const T* pr = pv.data() + static_cast<std::size_t>(r * N);
            int a = -1;
            if (s.step == 0 && rows[r].forced_first >= 0) {
                a = rows[r].forced_first;
            } else if (mode == DecodeMode::Greedy) {
                T best = T(-1);
                for (int c = 0; c < N; ++c)
                    if (pr[c] > best) {
                        best = pr[c];
                        a = c;
                    }
            } else {
                const double u = uniform01(*rows[r].rng);
                double cum = 0;
                int last_pos = -1;
                for (int c = 0; c < N; ++c) {
                    if (pr[c] <= T(0)) continue;
                    last_pos = c;
                    cum += static_cast<double>(pr[c]);
                    if (u < cum) {
                        a = c;
                        break;
                    }
                }
                if (a < 0) a = last_pos;
            }
            out[r].actions.push_back(a);
            out[r].log_probs.push_back(std::log(static_cast<double>(pr[a])));
            e.env.step(s, a);
            if (s.done()) --active;
        }
        tape.rewind(mark);
    }
    tape.rewind(mark);
    for (auto& t : out) t.cost = e.env.cost(t.actions);
    tape.set_recording(was_recording);
    return out;
}

template <typename T>
Var PolicyModel<T>::log_likelihood(Tape<T>& tape, const BoundParams& p, const Encoded& e, const StrategySet<T>& set,
                                   std::span<const Trajectory* const> trajectories, bool skip_first) const
{
    const int B = static_cast<int>(trajectories.size());
    const int N = e.env.num_actions();
    if (B == 0) throw std::invalid_argument("log_likelihood: no trajectories");
    std::size_t steps = 0;
    std::vector<int> strategies(static_cast<std::size_t>(B));
    for (int r = 0; r < B; ++r) {
        steps = std::max(steps, trajectories[r]->actions.size());
        strategies[r] = trajectories[r]->strategy;
    }
    std::vector<State> states(static_cast<std::size_t>(B), e.env.reset());
    StepInput in;
    in.strategies = strategy_input(tape, set, strategies);
    in.mask.resize(static_cast<std::size_t>(B * N));
    std::vector<int> actions(static_cast<std::size_t>(B));
    Var total;
    for (std::size_t t = 0; t < steps; ++t) {
        fill_state(e, states, in);
        for (int r = 0; r < B; ++r) {
            std::span<std::uint8_t> m(in.mask.data() + static_cast<std::size_t>(r * N), static_cast<std::size_t>(N));
            const auto& acts = trajectories[r]->actions;
            if (t >= acts.size()) {
                if (!states[r].done()) throw EnvError("log_likelihood: trajectory ends before the episode");
                std::fill(m.begin(), m.end(), 0);
                m[0] = 1;
                actions[r] = 0;
            } else {
                e.env.feasible_actions(states[r], m);
                actions[r] = acts[t];
                if (!m[static_cast<std::size_t>(actions[r])])
                    throw EnvError("log_likelihood: action " + std::to_string(actions[r]) + " infeasible at step " +
                                   std::to_string(t));
            }
        }
        Var probs = decode_step(tape, p, e, in);
        if (!(skip_first && t == 0)) {
            Var lp = tape.log(tape.pick(probs, actions));
            total = total.valid() ? tape.add(total, lp) : lp;
        }
        for (int r = 0; r < B; ++r)
            if (t < trajectories[r]->actions.size()) e.env.step(states[r], actions[r]);
    }
    for (int r = 0; r < B; ++r)
        if (!states[r].done()) throw EnvError("log_likelihood: incomplete trajectory");
    if (!total.valid()) {
        const std::vector<T> zeros(static_cast<std::size_t>(B), T(0));
        total = tape.constant({B, 1}, zeros);
    }
    return total;
}

template class PolicyModel<float>;
template class PolicyModel<double>;
template struct StrategySet<float>;
template struct StrategySet<double>;

}  // namespace polynet
