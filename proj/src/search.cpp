#include "polynet/search.hpp"

#include "polynet/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace polynet {

void SearchConfig::validate() const
{
    if (m < 1) throw std::invalid_argument("search: m must be >= 1");
    if (k < 1) throw std::invalid_argument("search: k must be >= 1");
    if (batch_rows < 1) throw std::invalid_argument("search: batch_rows must be >= 1");
    if (eas_iterations < 0) throw std::invalid_argument("search: eas_iterations must be >= 0");
    if (eas_iterations > 0) {
        if (m % eas_iterations != 0)
            throw std::invalid_argument("search: m must be a multiple of eas_iterations");
        if (eas_learning_rate < 0) throw std::invalid_argument("search: eas_learning_rate must be >= 0");
        if (eas_lambda < 0) throw std::invalid_argument("search: eas_lambda must be >= 0");
    }
}

std::vector<int> strategy_draws(int m, int k, std::uint64_t seed, int stream)
{
    if (k < 1) throw std::invalid_argument("strategy_draws: k must be >= 1");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(std::max(m, 0)));
    std::vector<int> perm(static_cast<std::size_t>(k));
    for (std::uint64_t pass = 0; static_cast<int>(out.size()) < m; ++pass) {
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng = make_rng(seed, "strategies", {static_cast<std::uint64_t>(stream), pass});
        for (int i = k - 1; i > 0; --i) {
            const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        for (int s : perm) {
            if (static_cast<int>(out.size()) == m) break;
            out.push_back(s);
        }
    }
    return out;
}

int augmentation_share(int m, int count, int a) { return m / count + (a < m % count ? 1 : 0); }

std::string_view to_string(SearchMode m)
{
    switch (m) {
    case SearchMode::Sample: return "sample";
    case SearchMode::Greedy: return "greedy";
    case SearchMode::ForcedFirst: return "forced-first";
    case SearchMode::Eas: return "eas";
    }
    return "?";
}

SearchMode parse_search_mode(std::string_view name)
{
    if (name == "sample") return SearchMode::Sample;
    if (name == "greedy") return SearchMode::Greedy;
    if (name == "forced-first" || name == "forced") return SearchMode::ForcedFirst;
    if (name == "eas") return SearchMode::Eas;
    throw std::invalid_argument("unknown search mode '" + std::string(name) + "'");
}

template <typename T>
std::vector<Trajectory> sample_rows(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
                                    const StrategySet<T>& set, std::span<const int> strategies,
                                    std::span<const std::uint64_t> seeds, std::span<const int> forced, int batch_rows)
{
    if (seeds.size() != strategies.size() || (!forced.empty() && forced.size() != strategies.size()))
        throw std::invalid_argument("sample_rows: strategies, seeds and forced actions differ in length");
    std::vector<Trajectory> out;
    out.reserve(strategies.size());
    std::vector<Rng> rngs;
    std::vector<RowSpec> rows;
    for (std::size_t begin = 0; begin < strategies.size(); begin += static_cast<std::size_t>(batch_rows)) {
        const std::size_t end = std::min(strategies.size(), begin + static_cast<std::size_t>(batch_rows));
        rngs.clear();
        rows.clear();
        for (std::size_t j = begin; j < end; ++j) rngs.emplace_back(seeds[j]);
        for (std::size_t j = begin; j < end; ++j)
            rows.push_back({strategies[j], forced.empty() ? -1 : forced[j], &rngs[j - begin]});
        auto batch = model.rollout(tape, p, e, set, rows, DecodeMode::Sample);
        for (auto& t : batch) out.push_back(std::move(t));
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
StrategySet<T> strategy_set(const PolicyModel<T>& model, int k)
{
    return StrategySet<T>(k, model.config().bit_len);
}

/// Keeps the first strictly better trajectory so ties resolve to the earliest rollout.
void offer(Incumbent& inc, bool& have, const Trajectory& t, int iteration)
{
    if (!have || t.cost < inc.best.cost) {
        inc.best = t;
        inc.iteration = iteration;
        have = true;
    }
}

void finish(SearchResult& r, const Instance& inst)
{
    r.incumbent.best.instance_id = inst.id;
    r.incumbent.best.cost = solution_cost(inst, r.incumbent.best.actions);
}

std::vector<int> first_actions(const Instance& inst)
{
    Environment env(inst);
    std::vector<int> out;
    const auto mask = env.feasible_actions(env.reset());
    for (std::size_t a = 0; a < mask.size(); ++a)
        if (mask[a]) out.push_back(static_cast<int>(a));
    return out;
}

template <typename T>
SearchResult sampled(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                     const SearchConfig& cfg, bool forced_first)
{
    cfg.validate();
    const auto t0 = Clock::now();
    const StrategySet<T> set = strategy_set(model, cfg.k);
    const int variants = cfg.augment ? kNumAugmentations : 1;
    const std::vector<int> firsts = forced_first ? first_actions(inst) : std::vector<int>{};
    Tape<T> tape;
    tape.set_recording(false);
    const BoundParams p = model.bind(tape, params, nullptr);

    SearchResult r;
    bool have = false;
    int forced_counter = 0;
    for (int a = 0; a < variants; ++a) {
        const int share = augmentation_share(cfg.m, variants, a);
        if (share == 0) continue;
        const std::size_t mark = tape.mark();
        const Encoded e = model.prepare(tape, p, augment(inst, a), a);
        const std::vector<int> strategies = strategy_draws(share, cfg.k, cfg.seed, a);
        std::vector<std::uint64_t> seeds(static_cast<std::size_t>(share));
        for (int j = 0; j < share; ++j)
            seeds[static_cast<std::size_t>(j)] =
                derive_seed(cfg.seed, "sample", {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(j)});
        std::vector<int> forced;
        if (forced_first) {
            for (int j = 0; j < share; ++j)
                forced.push_back(firsts[static_cast<std::size_t>(forced_counter++) % firsts.size()]);
        }
        auto trajs = sample_rows(model, tape, p, e, set, strategies, seeds, forced, cfg.batch_rows);
        for (auto& t : trajs) {
            r.costs.push_back(t.cost);
            offer(r.incumbent, have, t, 0);
            if (cfg.keep_solutions) r.solutions.push_back(std::move(t));
        }
        tape.rewind(mark);
    }
    finish(r, inst);
    r.seconds = seconds_since(t0);
    return r;
}

}  // namespace

template <typename T>
SearchResult sample_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                           const SearchConfig& cfg)
{
    return sampled(model, params, inst, cfg, false);
}

template <typename T>
SearchResult forced_first_move_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                                      const SearchConfig& cfg)
{
    return sampled(model, params, inst, cfg, true);
}

template <typename T>
SearchResult greedy_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                           const SearchConfig& cfg)
{
    const auto t0 = Clock::now();
    if (cfg.k < 1) throw std::invalid_argument("search: k must be >= 1");
    const StrategySet<T> set = strategy_set(model, cfg.k);
    const int variants = cfg.augment ? kNumAugmentations : 1;
    Tape<T> tape;
    tape.set_recording(false);
    const BoundParams p = model.bind(tape, params, nullptr);
    SearchResult r;
    bool have = false;
    std::vector<RowSpec> rows(static_cast<std::size_t>(cfg.k));
    for (int s = 0; s < cfg.k; ++s) rows[static_cast<std::size_t>(s)].strategy = s;
    for (int a = 0; a < variants; ++a) {
        const std::size_t mark = tape.mark();
        const Encoded e = model.prepare(tape, p, augment(inst, a), a);
        auto trajs = model.rollout(tape, p, e, set, rows, DecodeMode::Greedy);
        for (auto& t : trajs) {
            r.costs.push_back(t.cost);
            offer(r.incumbent, have, t, 0);
            if (cfg.keep_solutions) r.solutions.push_back(std::move(t));
        }
        tape.rewind(mark);
    }
    finish(r, inst);
    r.seconds = seconds_since(t0);
    return r;
}

template <typename T>
SearchResult eas_search(const PolicyModel<T>& model, const ParamStore<T>& params, const Instance& inst,
                        const SearchConfig& cfg)
{
    cfg.validate();
    if (cfg.eas_iterations < 1) throw std::invalid_argument("eas_search: eas_iterations must be >= 1");
    if (model.config().decoder != DecoderKind::PolyNet)
        throw std::invalid_argument("eas_search: the model has no PolyNet layers to tune");
    const auto t0 = Clock::now();
    const StrategySet<T> set = strategy_set(model, cfg.k);
    const int variants = cfg.augment ? kNumAugmentations : 1;
    const int wave = cfg.m / cfg.eas_iterations;
    const GroupMask poly = GroupMask::only(ParamGroup::PolyNet);
    const T scale = static_cast<T>(inst.coord_scale());

    ParamStore<T> local = params;
    Gradients<T> grads(local, poly);
    AdamConfig acfg;
    acfg.learning_rate = cfg.eas_learning_rate;
    Adam<T> adam(local, acfg, poly);

    Tape<T> tape;
    tape.set_recording(true);
    const BoundParams p = model.bind(tape, local, &grads);
    std::vector<Encoded> encoded;
    std::vector<std::vector<int>> draws;
    for (int a = 0; a < variants; ++a) {
        encoded.push_back(model.prepare(tape, p, augment(inst, a), a));
        draws.push_back(strategy_draws(cfg.eas_iterations * augmentation_share(wave, variants, a), cfg.k, cfg.seed, a));
    }
    const std::size_t mark = tape.mark();

    SearchResult r;
    bool have = false;
    std::vector<int> used(static_cast<std::size_t>(variants), 0);  // rollouts consumed per augmentation
    for (int it = 0; it < cfg.eas_iterations; ++it) {
        std::vector<Trajectory> trajs;
        for (int a = 0; a < variants; ++a) {
            const int count = augmentation_share(wave, variants, a);
            if (count == 0) continue;
            const int begin = used[static_cast<std::size_t>(a)];
            std::span<const int> strategies(draws[static_cast<std::size_t>(a)].data() + begin,
                                            static_cast<std::size_t>(count));
            std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
            for (int j = 0; j < count; ++j)
                seeds[static_cast<std::size_t>(j)] = derive_seed(
                    cfg.seed, "sample", {static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(begin + j)});
            auto batch = sample_rows(model, tape, p, encoded[static_cast<std::size_t>(a)], set, strategies, seeds, {},
                                     cfg.batch_rows);
            used[static_cast<std::size_t>(a)] += count;
            for (auto& t : batch) trajs.push_back(std::move(t));
        }
        std::size_t best = 0;
        double mean = 0;
        for (std::size_t j = 0; j < trajs.size(); ++j) {
            mean += trajs[j].cost;
            if (trajs[j].cost < trajs[best].cost) best = j;
            r.costs.push_back(trajs[j].cost);
        }
        mean /= static_cast<double>(trajs.size());
        offer(r.incumbent, have, trajs[best], it);
        r.iterations.push_back({it, r.incumbent.best.cost, trajs[best].cost, mean});

        try {
            grads.zero();
            const T adv = static_cast<T>((trajs[best].cost - mean) / static_cast<double>(scale));
            Var loss;
            if (adv != T(0)) {
                const Trajectory* tp = &trajs[best];
                Var ll = model.log_likelihood(tape, p, encoded[static_cast<std::size_t>(tp->augmentation)], set,
                                              std::span<const Trajectory* const>(&tp, 1));
                loss = tape.scale(tape.sum(ll), adv);
            }
            if (cfg.eas_lambda > 0) {
                const Trajectory* ip = &r.incumbent.best;
                Var ll = model.log_likelihood(tape, p, encoded[static_cast<std::size_t>(ip->augmentation)], set,
                                              std::span<const Trajectory* const>(&ip, 1));
                Var imitation = tape.scale(tape.sum(ll), static_cast<T>(-cfg.eas_lambda));
                loss = loss.valid() ? tape.add(loss, imitation) : imitation;
            }
            if (loss.valid()) {
                tape.backward(loss);
                if (!grads.all_finite()) throw NumericError("eas_search: non-finite gradient");
                adam.step(local, grads);
            }
        } catch (const NumericError&) {
            r.stopped_early = true;
            tape.rewind(mark);
            break;
        }
        tape.rewind(mark);
        if (cfg.keep_solutions)
            for (auto& t : trajs) r.solutions.push_back(std::move(t));
    }
    finish(r, inst);
    r.seconds = seconds_since(t0);
    return r;
}

template <typename T>
std::vector<SearchResult> search_instances(const PolicyModel<T>& model, const ParamStore<T>& params,
                                           std::span<const Instance> instances, const SearchConfig& cfg,
                                           SearchMode mode, int workers)
{
    std::vector<SearchResult> out(instances.size());
    parallel_for(static_cast<int>(instances.size()), resolve_workers(workers), [&](int, int begin, int end) {
        for (int i = begin; i < end; ++i) {
            SearchConfig c = cfg;
            c.seed = derive_seed(cfg.seed, "instance", {static_cast<std::uint64_t>(i)});
            const Instance& inst = instances[static_cast<std::size_t>(i)];
            switch (mode) {
            case SearchMode::Sample: out[static_cast<std::size_t>(i)] = sample_search(model, params, inst, c); break;
            case SearchMode::Greedy: out[static_cast<std::size_t>(i)] = greedy_search(model, params, inst, c); break;
            case SearchMode::ForcedFirst:
                out[static_cast<std::size_t>(i)] = forced_first_move_search(model, params, inst, c);
                break;
            case SearchMode::Eas: out[static_cast<std::size_t>(i)] = eas_search(model, params, inst, c); break;
            }
        }
    });
    return out;
}

#define POLYNET_INSTANTIATE(T)                                                                                        \
    template std::vector<Trajectory> sample_rows<T>(const PolicyModel<T>&, Tape<T>&, const BoundParams&,             \
                                                    const Encoded&, const StrategySet<T>&, std::span<const int>,     \
                                                    std::span<const std::uint64_t>, std::span<const int>, int);      \
    template SearchResult sample_search<T>(const PolicyModel<T>&, const ParamStore<T>&, const Instance&,             \
                                           const SearchConfig&);                                                     \
    template SearchResult greedy_search<T>(const PolicyModel<T>&, const ParamStore<T>&, const Instance&,             \
                                           const SearchConfig&);                                                     \
    template SearchResult eas_search<T>(const PolicyModel<T>&, const ParamStore<T>&, const Instance&,                \
                                        const SearchConfig&);                                                        \
    template SearchResult forced_first_move_search<T>(const PolicyModel<T>&, const ParamStore<T>&, const Instance&,  \
                                                      const SearchConfig&);                                          \
    template std::vector<SearchResult> search_instances<T>(const PolicyModel<T>&, const ParamStore<T>&,              \
                                                           std::span<const Instance>, const SearchConfig&,           \
                                                           SearchMode, int);

POLYNET_INSTANTIATE(float)
POLYNET_INSTANTIATE(double)

}  // namespace polynet
