#include "polynet/training.hpp"

#include "polynet/analysis.hpp"
#include "polynet/instancegen.hpp"
#include "polynet/io.hpp"
#include "polynet/parallel.hpp"
#include "polynet/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace polynet {

namespace fs = std::filesystem;

std::string_view to_string(Trainer t)
{
    switch (t) {
    case Trainer::PolyNet: return "polynet";
    case Trainer::Pomo: return "pomo";
    }
    return "?";
}

Trainer parse_trainer(std::string_view name)
{
    if (name == "polynet") return Trainer::PolyNet;
    if (name == "pomo") return Trainer::Pomo;
    throw std::invalid_argument("unknown trainer '" + std::string(name) + "' (expected polynet or pomo)");
}

void TrainConfig::validate() const
{
    if (k < 1) throw std::invalid_argument("train: k must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (rollouts_per_epoch < 1) throw std::invalid_argument("train: rollouts_per_epoch must be >= 1");
    if (grad_clip < 0) throw std::invalid_argument("train: grad_clip must be >= 0");
    if (n < 2) throw std::invalid_argument("train: n must be >= 2");
    if (val_instances < 1) throw std::invalid_argument("train: val_instances must be >= 1");
    if (val_samples < 1) throw std::invalid_argument("train: val_samples must be >= 1");
}

int TrainConfig::steps_per_epoch() const
{
    const std::int64_t per_step = static_cast<std::int64_t>(batch_size) * k;
    return static_cast<int>(std::max<std::int64_t>(1, (rollouts_per_epoch + per_step - 1) / per_step));
}

std::size_t best_index(std::span<const Trajectory> rollouts)
{
    if (rollouts.empty()) throw std::invalid_argument("best_index: no rollouts");
    std::size_t best = 0;
    for (std::size_t i = 1; i < rollouts.size(); ++i)
        if (rollouts[i].cost < rollouts[best].cost) best = i;
    return best;
}

namespace {

double mean_cost(std::span<const Trajectory> rollouts)
{
    double s = 0;
    for (const auto& t : rollouts) s += t.cost;
    return s / static_cast<double>(rollouts.size());
}

constexpr int kValidationBatch = 64;

}  // namespace

template <typename T>
Var best_of_k_loss(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
                   const StrategySet<T>& set, std::span<const Trajectory> rollouts, T weight)
{
    const std::size_t best = best_index(rollouts);
    const double scale = e.env.instance().coord_scale();
    const T adv = static_cast<T>((rollouts[best].cost - mean_cost(rollouts)) / scale) * weight;
    if (adv == T(0)) return {};
    const Trajectory* tp = &rollouts[best];
    Var ll = model.log_likelihood(tape, p, e, set, std::span<const Trajectory* const>(&tp, 1));
    return tape.scale(tape.sum(ll), adv);
}

template <typename T>
Var pomo_loss(const PolicyModel<T>& model, Tape<T>& tape, const BoundParams& p, const Encoded& e,
              std::span<const Trajectory> rollouts, T weight)
{
    const double scale = e.env.instance().coord_scale();
    const double baseline = mean_cost(rollouts);
    const int n = static_cast<int>(rollouts.size());
    std::vector<T> adv(rollouts.size());
    bool any = false;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        adv[i] = static_cast<T>((rollouts[i].cost - baseline) / scale) * weight / static_cast<T>(n);
        any = any || adv[i] != T(0);
    }
    if (!any) return {};
    std::vector<const Trajectory*> ptrs;
    for (const auto& t : rollouts) ptrs.push_back(&t);
    const StrategySet<T> set(1, model.config().bit_len);
    Var ll = model.log_likelihood(tape, p, e, set, ptrs, true);
    return tape.sum(tape.mul(ll, tape.constant({n, 1}, adv)));
}

namespace {

struct InstanceOutcome {
    double best = 0;
    double mean = 0;
};

/// Fans instances out over workers, each with its own tape and gradient
/// buffer, then reduces the buffers in worker order.
template <typename T, typename Fn>
StepStats run_batch(const ParamStore<T>& params, std::span<const Instance> batch, Gradients<T>& grads, int workers,
                    std::int64_t rollouts_per_instance, Fn&& per_instance)
{
    grads.zero();
    const int B = static_cast<int>(batch.size());
    if (B == 0) throw std::invalid_argument("training step on an empty batch");
    workers = std::max(1, std::min(workers, B));
    std::vector<Gradients<T>> local;
    for (int w = 1; w < workers; ++w) local.emplace_back(params, grads.mask());
    std::vector<InstanceOutcome> outcomes(static_cast<std::size_t>(B));
    parallel_for(B, workers, [&](int w, int begin, int end) {
        Gradients<T>& g = w == 0 ? grads : local[static_cast<std::size_t>(w - 1)];
        Tape<T> tape;
        for (int b = begin; b < end; ++b) {
            tape.clear();
            tape.set_recording(true);
            outcomes[static_cast<std::size_t>(b)] = per_instance(tape, g, b);
        }
    });
    for (auto& g : local) grads.add(g);
    StepStats s;
    for (const auto& o : outcomes) {
        s.best_cost += o.best;
        s.mean_cost += o.mean;
    }
    s.best_cost /= B;
    s.mean_cost /= B;
    s.grad_norm = grads.norm();
    s.rollouts = rollouts_per_instance * B;
    return s;
}

}  // namespace

template <typename T>
StepStats best_of_k_gradient(const PolicyModel<T>& model, const ParamStore<T>& params,
                             std::span<const Instance> batch, int k, std::uint64_t seed, Gradients<T>& grads,
                             int workers)
{
    if (k < 1) throw std::invalid_argument("best_of_k: k must be >= 1");
    const StrategySet<T> set(k, model.config().bit_len);
    const T weight = T(1) / static_cast<T>(batch.size());
    return run_batch(params, batch, grads, workers, k, [&](Tape<T>& tape, Gradients<T>& g, int b) {
        const BoundParams p = model.bind(tape, params, &g);
        const Encoded e = model.prepare(tape, p, batch[static_cast<std::size_t>(b)]);
        std::vector<Rng> rngs;
        rngs.reserve(static_cast<std::size_t>(k));
        std::vector<RowSpec> rows;
        for (int j = 0; j < k; ++j) {
            rngs.emplace_back(derive_seed(seed, "rollout", {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(j)}));
            rows.push_back({j, -1, &rngs.back()});
        }
        const auto trajs = model.rollout(tape, p, e, set, rows, DecodeMode::Sample);
        Var loss = best_of_k_loss(model, tape, p, e, set, std::span<const Trajectory>(trajs), weight);
        if (loss.valid()) tape.backward(loss);
        return InstanceOutcome{trajs[best_index(trajs)].cost, mean_cost(trajs)};
    });
}

template <typename T>
StepStats pomo_gradient(const PolicyModel<T>& model, const ParamStore<T>& params, std::span<const Instance> batch,
                        int starts, std::uint64_t seed, Gradients<T>& grads, int workers)
{
    if (starts < 1) throw std::invalid_argument("pomo: starts must be >= 1");
    const StrategySet<T> set(1, model.config().bit_len);
    const T weight = T(1) / static_cast<T>(batch.size());
    return run_batch(params, batch, grads, workers, starts, [&](Tape<T>& tape, Gradients<T>& g, int b) {
        const Instance& inst = batch[static_cast<std::size_t>(b)];
        const BoundParams p = model.bind(tape, params, &g);
        const Encoded e = model.prepare(tape, p, inst);
        const auto mask = e.env.feasible_actions(e.env.reset());
        std::vector<int> firsts;
        for (std::size_t a = 0; a < mask.size(); ++a)
            if (mask[a]) firsts.push_back(static_cast<int>(a));
        if (starts > static_cast<int>(firsts.size()))
            throw std::invalid_argument("pomo: " + std::to_string(starts) + " starts exceed the " +
                                        std::to_string(firsts.size()) + " feasible first actions");
        if (starts < static_cast<int>(firsts.size())) {
            Rng pick = make_rng(seed, "starts", {static_cast<std::uint64_t>(b)});
            std::shuffle(firsts.begin(), firsts.end(), pick);
            firsts.resize(static_cast<std::size_t>(starts));
        }
        std::vector<Rng> rngs;
        rngs.reserve(static_cast<std::size_t>(starts));
        std::vector<RowSpec> rows;
        for (int j = 0; j < starts; ++j) {
            rngs.emplace_back(derive_seed(seed, "rollout", {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(j)}));
            rows.push_back({0, firsts[static_cast<std::size_t>(j)], &rngs.back()});
        }
        const auto trajs = model.rollout(tape, p, e, set, rows, DecodeMode::Sample);
        Var loss = pomo_loss(model, tape, p, e, std::span<const Trajectory>(trajs), weight);
        if (loss.valid()) tape.backward(loss);
        return InstanceOutcome{trajs[best_index(trajs)].cost, mean_cost(trajs)};
    });
}

template <typename T>
double apply_gradient(ParamStore<T>& params, Adam<T>& adam, Gradients<T>& grads, double grad_clip)
{
    const double norm = grads.norm();
    if (!std::isfinite(norm) || !grads.all_finite()) throw NumericError("non-finite gradient (norm " + std::to_string(norm) + ")");
    if (grad_clip > 0 && norm > grad_clip) grads.scale(static_cast<T>(grad_clip / norm));
    adam.step(params, grads);
    return norm;
}

template <typename T>
StepStats best_of_k_update(const PolicyModel<T>& model, ParamStore<T>& params, Adam<T>& adam,
                           std::span<const Instance> batch, int k, std::uint64_t seed, double grad_clip, int workers)
{
    Gradients<T> grads(params, adam.groups());
    StepStats s = best_of_k_gradient(model, params, batch, k, seed, grads, workers);
    apply_gradient(params, adam, grads, grad_clip);
    return s;
}

template <typename T>
StepStats pomo_update(const PolicyModel<T>& model, ParamStore<T>& params, Adam<T>& adam,
                      std::span<const Instance> batch, int starts, std::uint64_t seed, double grad_clip, int workers)
{
    Gradients<T> grads(params, adam.groups());
    StepStats s = pomo_gradient(model, params, batch, starts, seed, grads, workers);
    apply_gradient(params, adam, grads, grad_clip);
    return s;
}

template <typename T>
ValidationStats validate(const PolicyModel<T>& model, const ParamStore<T>& params,
                         std::span<const Instance> instances, int k, int m, std::uint64_t seed, int workers)
{
    if (k < 1 || m < 1) throw std::invalid_argument("validate: k and m must be >= 1");
    const StrategySet<T> set(k, model.config().bit_len);
    const int count = static_cast<int>(instances.size());
    std::vector<double> best(instances.size()), unique(instances.size());
    parallel_for(count, resolve_workers(workers), [&](int, int begin, int end) {
        Tape<T> tape;
        tape.set_recording(false);
        const BoundParams p = model.bind(tape, params, nullptr);
        const std::size_t mark = tape.mark();
        std::vector<int> strategies(static_cast<std::size_t>(m));
        std::vector<std::uint64_t> seeds(static_cast<std::size_t>(m));
        for (int i = begin; i < end; ++i) {
            const Encoded e = model.prepare(tape, p, instances[static_cast<std::size_t>(i)]);
            for (int j = 0; j < m; ++j) {
                strategies[static_cast<std::size_t>(j)] = j % k;
                seeds[static_cast<std::size_t>(j)] =
                    derive_seed(seed, "validate", {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
            }
            const auto trajs = sample_rows(model, tape, p, e, set, strategies, seeds, {}, kValidationBatch);
            std::vector<std::vector<int>> sols;
            sols.reserve(trajs.size());
            for (const auto& t : trajs) sols.push_back(t.actions);
            best[static_cast<std::size_t>(i)] = trajs[best_index(trajs)].cost;
            unique[static_cast<std::size_t>(i)] = uniqueness_percentage(model.config().problem, sols);
            tape.rewind(mark);
        }
    });
    ValidationStats v;
    v.best_cost = std::accumulate(best.begin(), best.end(), 0.0) / count;
    v.uniqueness_pct = std::accumulate(unique.begin(), unique.end(), 0.0) / count;
    v.instance_best = std::move(best);
    return v;
}

void write_stats_csv(const std::string& path, std::span<const EpochStats> stats)
{
    std::ostringstream os;
    os << "epoch,train_cost,val_best_cost,val_uniqueness_pct,wall_s\n";
    os << std::setprecision(10);
    for (const auto& s : stats)
        os << s.epoch << ',' << s.train_cost << ',' << s.val_best_cost << ',' << s.val_uniqueness_pct << ','
           << s.wall_s << '\n';
    write_text(path, os.str());
}

namespace {

json stats_to_json(std::span<const EpochStats> stats)
{
    json a = json::array();
    for (const auto& s : stats) {
        // JSON has no NaN; the epoch-0 row stores null for train_cost.
        json tc = std::isfinite(s.train_cost) ? json(s.train_cost) : json(nullptr);
        a.push_back({{"epoch", s.epoch},
                     {"train_cost", tc},
                     {"val_best_cost", s.val_best_cost},
                     {"val_uniqueness_pct", s.val_uniqueness_pct},
                     {"wall_s", s.wall_s}});
    }
    return a;
}

std::vector<EpochStats> stats_from_json(const json& a)
{
    std::vector<EpochStats> out;
    for (const auto& j : a) {
        EpochStats s;
        s.epoch = j.at("epoch").get<int>();
        s.train_cost = j.at("train_cost").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : j.at("train_cost").get<double>();
        s.val_best_cost = j.at("val_best_cost").get<double>();
        s.val_uniqueness_pct = j.at("val_uniqueness_pct").get<double>();
        s.wall_s = j.at("wall_s").get<double>();
        out.push_back(s);
    }
    return out;
}

json train_meta(const TrainConfig& cfg, int epoch, std::span<const EpochStats> stats)
{
    return json{{"trainer", std::string(to_string(cfg.trainer))},
                {"k", cfg.k},
                {"seed", cfg.seed},
                {"n", cfg.n},
                {"batch_size", cfg.batch_size},
                {"learning_rate", cfg.learning_rate},
                {"rollouts_per_epoch", cfg.rollouts_per_epoch},
                {"epoch", epoch},
                {"stats", stats_to_json(stats)}};
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    cfg.validate();
    model_cfg.validate();
    if (cfg.trainer == Trainer::Pomo && model_cfg.decoder != DecoderKind::Base)
        throw std::invalid_argument("the pomo trainer uses the unconditioned decoder (decoder = base)");
    if (cfg.trainer == Trainer::PolyNet && model_cfg.decoder != DecoderKind::Base &&
        (1LL << std::min(model_cfg.bit_len, 62)) < cfg.k)
        throw std::invalid_argument("bit_len " + std::to_string(model_cfg.bit_len) + " cannot encode k = " +
                                    std::to_string(cfg.k) + " strategies");

    const PolicyModel<float> model(model_cfg);
    const int workers = resolve_workers(cfg.workers);
    GenConfig val_gen;
    val_gen.problem = model_cfg.problem;
    val_gen.n = cfg.n;
    val_gen.seed = cfg.val_seed;
    const std::vector<Instance> val_set = generate_set(val_gen, cfg.val_instances);
    const int val_k = cfg.trainer == Trainer::Pomo ? 1 : cfg.k;
    const std::uint64_t val_stream = derive_seed(cfg.val_seed, "validation-samples");

    const fs::path out = cfg.out_dir;
    const fs::path last = out / "last.json";

    TrainResult result;
    Adam<float> adam;
    int start_epoch = 1;
    double wall_offset = 0;
    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] { return wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    if (cfg.resume && !cfg.out_dir.empty() && fs::exists(last)) {
        Checkpoint ck = load_checkpoint(last);
        if (!(ck.model == model_cfg)) throw std::invalid_argument("resume: checkpoint model config differs from the run");
        if (ck.meta.value("trainer", std::string()) != to_string(cfg.trainer) || ck.meta.value("k", -1) != cfg.k ||
            ck.meta.value("seed", std::uint64_t{0}) != cfg.seed)
            throw std::invalid_argument("resume: checkpoint was written by a run with different trainer, k or seed");
        result.params = checkpoint_params(ck, model);
        AdamConfig acfg;
        acfg.learning_rate = cfg.learning_rate;
        adam = Adam<float>(result.params, acfg, GroupMask::all());
        if (ck.optimizer) {
            restore_optimizer(*ck.optimizer, result.params, adam);
            adam.set_learning_rate(cfg.learning_rate);
        }
        result.stats = stats_from_json(ck.meta.at("stats"));
        start_epoch = ck.meta.at("epoch").get<int>() + 1;
        if (!result.stats.empty()) wall_offset = result.stats.back().wall_s;
    } else {
        const std::uint64_t init_seed = derive_seed(cfg.seed, "init");
        if (!cfg.warm_start_path.empty()) {
            const Checkpoint base = load_checkpoint(cfg.warm_start_path);
            if (base.model.problem != model_cfg.problem || base.model.embed_dim != model_cfg.embed_dim ||
                base.model.num_heads != model_cfg.num_heads ||
                base.model.num_encoder_layers != model_cfg.num_encoder_layers || base.model.ff_dim != model_cfg.ff_dim)
                throw std::invalid_argument("warm start: checkpoint architecture does not match the model config");
            result.params = model.init_params(init_seed, base.params.cast<float>());
        } else {
            result.params = model.init_params(init_seed);
        }
        AdamConfig acfg;
        acfg.learning_rate = cfg.learning_rate;
        adam = Adam<float>(result.params, acfg, GroupMask::all());
        const ValidationStats v = validate(model, result.params, val_set, val_k, cfg.val_samples, val_stream, workers);
        result.stats.push_back(
            {0, std::numeric_limits<double>::quiet_NaN(), v.best_cost, v.uniqueness_pct, wall()});
        if (on_epoch) on_epoch(result.stats.back());
    }

    const int steps = cfg.steps_per_epoch();
    GenConfig gen;
    gen.problem = model_cfg.problem;
    gen.n = cfg.n;
    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        double train_cost = 0;
        for (int s = 0; s < steps; ++s) {
            const std::uint64_t step_id[] = {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(s)};
            gen.seed = derive_seed(cfg.seed, "batch", {step_id[0], step_id[1]});
            const std::vector<Instance> batch = generate_set(gen, cfg.batch_size);
            const std::uint64_t rseed = derive_seed(cfg.seed, "train-rollout", {step_id[0], step_id[1]});
            StepStats st;
            try {
                st = cfg.trainer == Trainer::Pomo
                         ? pomo_update(model, result.params, adam, batch, cfg.k, rseed, cfg.grad_clip, workers)
                         : best_of_k_update(model, result.params, adam, batch, cfg.k, rseed, cfg.grad_clip, workers);
            } catch (const NumericError& e) {
                std::string msg = "training aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(s) +
                                  ": " + e.what();
                if (!cfg.out_dir.empty() && fs::exists(last)) msg += "; last good checkpoint: " + last.string();
                throw NumericError(msg);
            }
            train_cost += st.best_cost;
        }
        const ValidationStats v = validate(model, result.params, val_set, val_k, cfg.val_samples, val_stream, workers);
        result.stats.push_back({epoch, train_cost / steps, v.best_cost, v.uniqueness_pct, wall()});
        if (on_epoch) on_epoch(result.stats.back());
        if (!cfg.out_dir.empty()) {
            write_stats_csv((out / "stats.csv").string(), result.stats);
            const json meta = train_meta(cfg, epoch, result.stats);
            save_checkpoint(last, make_checkpoint(model_cfg, result.params, &adam, meta));
            if (cfg.checkpoint_every_epoch) {
                std::ostringstream name;
                name << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".json";
                save_checkpoint(out / "checkpoints" / name.str(), make_checkpoint<float>(model_cfg, result.params, nullptr, meta));
            }
        }
    }
    if (!cfg.out_dir.empty()) {
        write_stats_csv((out / "stats.csv").string(), result.stats);
        if (cfg.epochs == 0 || start_epoch > cfg.epochs)
            save_checkpoint(last, make_checkpoint(model_cfg, result.params, &adam,
                                                  train_meta(cfg, std::max(0, start_epoch - 1), result.stats)));
    }
    return result;
}

#define POLYNET_INSTANTIATE(T)                                                                                       \
    template Var best_of_k_loss<T>(const PolicyModel<T>&, Tape<T>&, const BoundParams&, const Encoded&,             \
                                   const StrategySet<T>&, std::span<const Trajectory>, T);                          \
    template Var pomo_loss<T>(const PolicyModel<T>&, Tape<T>&, const BoundParams&, const Encoded&,                  \
                              std::span<const Trajectory>, T);                                                      \
    template StepStats best_of_k_gradient<T>(const PolicyModel<T>&, const ParamStore<T>&, std::span<const Instance>, \
                                             int, std::uint64_t, Gradients<T>&, int);                               \
    template StepStats pomo_gradient<T>(const PolicyModel<T>&, const ParamStore<T>&, std::span<const Instance>, int, \
                                        std::uint64_t, Gradients<T>&, int);                                         \
    template double apply_gradient<T>(ParamStore<T>&, Adam<T>&, Gradients<T>&, double);                             \
    template StepStats best_of_k_update<T>(const PolicyModel<T>&, ParamStore<T>&, Adam<T>&,                         \
                                           std::span<const Instance>, int, std::uint64_t, double, int);             \
    template StepStats pomo_update<T>(const PolicyModel<T>&, ParamStore<T>&, Adam<T>&, std::span<const Instance>,   \
                                      int, std::uint64_t, double, int);                                             \
    template ValidationStats validate<T>(const PolicyModel<T>&, const ParamStore<T>&, std::span<const Instance>,    \
                                         int, int, std::uint64_t, int);

POLYNET_INSTANTIATE(float)
POLYNET_INSTANTIATE(double)

}  // namespace polynet
