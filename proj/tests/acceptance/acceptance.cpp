// Acceptance checks. `--prepare` trains the shared models into the cache
// directory; `--criterion N` (or `all`) prints one PASS/FAIL line per check.

#include "oracles.hpp"
#include "polynet/analysis.hpp"
#include "polynet/checkpoint.hpp"
#include "polynet/instancegen.hpp"
#include "polynet/io.hpp"
#include "polynet/search.hpp"
#include "polynet/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

using namespace polynet;
namespace fs = std::filesystem;

namespace {

fs::path g_cache = "acceptance_cache";
int g_workers = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string sci(double v)
{
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

double mean(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ModelConfig desk_model(Problem p, DecoderKind kind, int k)
{
    ModelConfig c;
    c.problem = p;
    c.embed_dim = 64;
    c.num_heads = 4;
    c.num_encoder_layers = 3;
    c.ff_dim = 256;
    c.polynet_hidden = 64;
    c.bit_len = min_bit_len(k);
    c.decoder = kind;
    return c;
}

// ---------------------------------------------------------------------------
// Trained models

struct Run {
    std::string name;
    ModelConfig model;
    TrainConfig train;
    std::string warm_from;
};

Run pomo_run(std::string name, Problem p, int n, int epochs, std::int64_t rollouts)
{
    Run r{std::move(name), desk_model(p, DecoderKind::Base, n), {}, {}};
    r.train.trainer = Trainer::Pomo;
    r.train.k = n;
    r.train.n = n;
    r.train.batch_size = 64;
    r.train.learning_rate = 5e-4;
    r.train.epochs = epochs;
    r.train.rollouts_per_epoch = rollouts;
    r.train.val_instances = 200;
    r.train.val_samples = n;
    return r;
}

// PolyNet run with a fixed number of rollouts per optimizer step, so runs
// with different K take the same number of steps.
Run poly_run(std::string name, Problem p, int n, int k, int rollouts_per_step, int epochs, std::int64_t rollouts,
             std::uint64_t seed, std::string warm)
{
    Run r{std::move(name), desk_model(p, DecoderKind::PolyNet, k), {}, std::move(warm)};
    r.train.trainer = Trainer::PolyNet;
    r.train.k = k;
    r.train.n = n;
    r.train.batch_size = std::max(1, rollouts_per_step / k);
    r.train.learning_rate = 1e-4;
    r.train.epochs = epochs;
    r.train.rollouts_per_epoch = rollouts;
    r.train.seed = seed;
    r.train.val_instances = 200;
    r.train.val_samples = 200;
    return r;
}

std::vector<Run> runs()
{
    std::vector<Run> out;
    // Exactness check on TSP10.
    out.push_back(pomo_run("tsp10_pomo", Problem::TSP, 10, 4, 200000));
    out.push_back(poly_run("tsp10_k8", Problem::TSP, 10, 8, 512, 4, 200000, 1, "tsp10_pomo"));
    out.back().train.val_samples = 64;

    // K sweep on TSP20 from a shared, well-converged POMO start.
    out.push_back(pomo_run("tsp20_pomo", Problem::TSP, 20, 24, 250000));
    for (int k : {1, 4, 16})
        for (std::uint64_t s : {1, 2, 3}) {
            out.push_back(poly_run("tsp20_k" + std::to_string(k) + "_s" + std::to_string(s), Problem::TSP, 20, k, 512,
                                   6, 100000, s, "tsp20_pomo"));
            out.back().train.val_instances = 100;
        }
    out.push_back(poly_run("tsp20_k8", Problem::TSP, 20, 8, 512, 6, 100000, 1, "tsp20_pomo"));
    out.back().train.val_instances = 100;

    // CVRP20: base, matched-budget continuation pair, warm and cold starts.
    out.push_back(pomo_run("cvrp20_pomo", Problem::CVRP, 20, 8, 250000));
    {
        Run cont = pomo_run("cvrp20_pomo_cont", Problem::CVRP, 20, 4, 150000);
        cont.train.batch_size = 16;
        cont.train.learning_rate = 1e-4;
        cont.warm_from = "cvrp20_pomo";
        out.push_back(cont);
    }
    out.push_back(poly_run("cvrp20_k16", Problem::CVRP, 20, 16, 320, 4, 150000, 1, "cvrp20_pomo"));
    for (std::uint64_t s : {1, 2}) {
        Run cold = poly_run("cvrp20_cold_s" + std::to_string(s), Problem::CVRP, 20, 16, 256, 20, 40000, s, "");
        cold.train.learning_rate = 5e-4;
        cold.train.val_instances = 100;
        cold.train.val_samples = 64;
        Run warm = cold;
        warm.name = "cvrp20_warm_s" + std::to_string(s);
        warm.warm_from = "cvrp20_pomo";
        warm.train.epochs = 10;
        out.push_back(cold);
        out.push_back(warm);
    }

    // Short CVRPTW run, used only as "trained parameters" for feasibility.
    Run tw = poly_run("cvrptw20_k8", Problem::CVRPTW, 20, 8, 256, 3, 40000, 1, "");
    tw.train.learning_rate = 1e-4;
    tw.train.val_instances = 50;
    tw.train.val_samples = 16;
    out.push_back(tw);
    return out;
}

fs::path run_dir(const std::string& name);

json run_stamp(const Run& r)
{
    const TrainConfig& t = r.train;
    std::string warm_hash;
    if (!r.warm_from.empty() && fs::exists(run_dir(r.warm_from) / "last.json"))
        warm_hash = file_hash(run_dir(r.warm_from) / "last.json");
    return {{"model", model_config_to_json(r.model)},
            {"trainer", std::string(to_string(t.trainer))},
            {"k", t.k},
            {"n", t.n},
            {"batch_size", t.batch_size},
            {"lr", t.learning_rate},
            {"epochs", t.epochs},
            {"rollouts_per_epoch", t.rollouts_per_epoch},
            {"seed", t.seed},
            {"val", {t.val_instances, t.val_samples, t.val_seed}},
            {"warm_from", r.warm_from},
            {"warm_hash", warm_hash}};
}

fs::path run_dir(const std::string& name) { return g_cache / name; }

bool run_complete(const Run& r)
{
    const fs::path done = run_dir(r.name) / "done.json";
    if (!fs::exists(done)) return false;
    return json::parse(read_text(done)) == run_stamp(r);
}

void prepare_run(const Run& r)
{
    if (run_complete(r)) {
        std::cerr << "[prepare] " << r.name << ": cached\n";
        return;
    }
    const fs::path dir = run_dir(r.name);
    const fs::path stamp = dir / "stamp.json";
    // A partial run with the same settings is resumed; anything else starts over.
    if (fs::exists(dir) && (!fs::exists(stamp) || json::parse(read_text(stamp)) != run_stamp(r))) fs::remove_all(dir);
    fs::create_directories(dir);
    write_text(stamp, run_stamp(r).dump(2));

    TrainConfig cfg = r.train;
    cfg.out_dir = dir.string();
    cfg.resume = true;
    cfg.checkpoint_every_epoch = false;
    cfg.workers = g_workers;
    if (!r.warm_from.empty()) cfg.warm_start_path = (run_dir(r.warm_from) / "last.json").string();
    std::cerr << "[prepare] " << r.name << ": training " << cfg.epochs << " epochs\n";
    train(r.model, cfg, [&](const EpochStats& s) {
        std::cerr << "  " << r.name << " epoch " << s.epoch << " val " << fmt(s.val_best_cost) << " unique "
                  << fmt(s.val_uniqueness_pct, 1) << "% wall " << fmt(s.wall_s, 0) << "s\n";
    });
    write_text(dir / "done.json", run_stamp(r).dump(2));
}

const Run& find_run(const std::string& name)
{
    static const std::vector<Run> all = runs();
    for (const Run& r : all)
        if (r.name == name) return r;
    throw std::invalid_argument("unknown run " + name);
}

struct Trained {
    Checkpoint ckpt;
    PolicyModel<float> model;
    ParamStore<float> params;
    int k = 1;
};

Trained load_run(const std::string& name)
{
    const Run& r = find_run(name);
    if (!run_complete(r)) throw std::runtime_error("trained model '" + name + "' missing; run with --prepare first");
    Checkpoint ck = load_checkpoint(run_dir(name) / "last.json");
    PolicyModel<float> model(ck.model);
    auto params = checkpoint_params(ck, model);
    return {std::move(ck), std::move(model), std::move(params), r.train.trainer == Trainer::Pomo ? 1 : r.train.k};
}

std::vector<EpochStats> load_stats(const std::string& name)
{
    std::ifstream in(run_dir(name) / "stats.csv");
    std::string line;
    std::getline(in, line);
    std::vector<EpochStats> out;
    while (std::getline(in, line)) {
        std::stringstream row(line);
        std::string f[5];
        for (auto& x : f) std::getline(row, x, ',');
        out.push_back({std::stoi(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
    }
    return out;
}

std::vector<Instance> test_set(Problem p, int n, int count, std::uint64_t seed)
{
    GenConfig g;
    g.problem = p;
    g.n = n;
    g.seed = seed;
    return generate_set(g, count);
}

template <typename T>
void randomize_group(ParamStore<T>& params, ParamGroup group, std::uint64_t seed, double scale)
{
    Rng rng(seed);
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params.entry(i).group == group)
            for (T& w : params.entry(i).value.values) w = static_cast<T>(scale * (2 * uniform01(rng) - 1));
}

// ---------------------------------------------------------------------------
// Criteria

Outcome gradient_check()
{
    ModelConfig cfg;
    cfg.problem = Problem::TSP;
    cfg.embed_dim = 16;
    cfg.num_heads = 2;
    cfg.num_encoder_layers = 2;
    cfg.ff_dim = 32;
    cfg.polynet_hidden = 16;
    cfg.bit_len = 2;
    const PolicyModel<double> model(cfg);
    auto params = model.init_params(11);
    randomize_group(params, ParamGroup::PolyNet, 12, 0.5);
    const Instance inst = gen_tsp(5, 13);
    const StrategySet<double> set(4, cfg.bit_len);

    std::vector<Trajectory> rollouts;
    {
        Tape<double> tape;
        auto p = model.bind(tape, params, nullptr);
        auto e = model.prepare(tape, p, inst);
        std::vector<Rng> rngs;
        for (int i = 0; i < 4; ++i) rngs.emplace_back(100 + i);
        std::vector<RowSpec> rows;
        for (int i = 0; i < 4; ++i) rows.push_back({i, -1, &rngs[static_cast<std::size_t>(i)]});
        rollouts = model.rollout(tape, p, e, set, rows, DecodeMode::Sample);
    }
    // Force distinct costs so the surrogate has a nonzero advantage.
    for (std::size_t i = 0; i < rollouts.size(); ++i) rollouts[i].cost = 3.0 + 0.25 * static_cast<double>(i * i % 5);

    using LossFn = std::function<Var(Tape<double>&, const BoundParams&, const Encoded&)>;
    const std::vector<std::pair<std::string, LossFn>> losses{
        {"-log pi",
         [&](Tape<double>& tape, const BoundParams& p, const Encoded& e) {
             const Trajectory* t = &rollouts[1];
             return tape.scale(tape.sum(model.log_likelihood(tape, p, e, set, std::span<const Trajectory* const>(&t, 1))), -1.0);
         }},
        {"surrogate", [&](Tape<double>& tape, const BoundParams& p, const Encoded& e) {
             return best_of_k_loss(model, tape, p, e, set, std::span<const Trajectory>(rollouts));
         }}};

    double worst = 0;
    std::string detail;
    for (const auto& [label, fn] : losses) {
        auto value = [&](Gradients<double>* g) {
            Tape<double> tape;
            auto p = model.bind(tape, params, g);
            auto e = model.prepare(tape, p, inst);
            Var l = fn(tape, p, e);
            if (g) tape.backward(l);
            return tape.item(l);
        };
        Gradients<double> g(params, GroupMask::all());
        value(&g);
        std::map<ParamGroup, std::pair<std::vector<double>, std::vector<double>>> by_group;
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto num = oracle::numeric_gradient([&] { return value(nullptr); }, params.entry(i).value.values);
            auto& [a, n] = by_group[params.entry(i).group];
            a.insert(a.end(), g[i].begin(), g[i].end());
            n.insert(n.end(), num.begin(), num.end());
        }
        for (const auto& [group, an] : by_group) {
            const double err = oracle::relative_error(an.first, an.second);
            worst = std::max(worst, err);
            detail += label + "/" + std::string(to_string(group)) + " " + sci(err) + " ";
        }
    }
    return {worst < 1e-5, detail + "(max " + sci(worst) + ", tol 1e-5)"};
}

Outcome identity_init()
{
    double worst = 0;
    int pairs = 0;
    for (Problem prob : {Problem::TSP, Problem::CVRP, Problem::CVRPTW}) {
        const ModelConfig pc = desk_model(prob, DecoderKind::PolyNet, 16);
        ModelConfig bc = pc;
        bc.decoder = DecoderKind::Base;
        const PolicyModel<double> poly(pc), base(bc);
        // Cold start: random first PolyNet layer, zero second layer.
        const auto pp = poly.init_params(21);
        auto bp = base.init_params(23);
        GroupMask shared = GroupMask::all();
        shared.on[static_cast<int>(ParamGroup::PolyNet)] = false;
        bp.copy_groups_from(pp, shared);

        Rng rng(derive_seed(24, to_string(prob)));
        for (int trial = 0; trial < 100; ++trial, ++pairs) {
            const Instance inst = generate(GenConfig{prob, 20, derive_seed(25, "inst", {static_cast<std::uint64_t>(trial)})});
            Tape<double> tape;
            auto p1 = poly.bind(tape, pp, nullptr);
            auto p2 = base.bind(tape, bp, nullptr);
            auto e1 = poly.prepare(tape, p1, inst);
            auto e2 = base.prepare(tape, p2, inst);
            // Random partial episode.
            State s = e1.env.reset();
            const int steps = static_cast<int>(uniform01(rng) * 20);
            for (int t = 0; t < steps && !s.done(); ++t) {
                auto mask = e1.env.feasible_actions(s);
                std::vector<int> ok;
                for (int a = 0; a < static_cast<int>(mask.size()); ++a)
                    if (mask[static_cast<std::size_t>(a)]) ok.push_back(a);
                e1.env.step(s, ok[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(ok.size()))]);
            }
            if (s.done()) s = e1.env.reset();
            StrategySet<double> set(1, pc.bit_len);
            for (double& b : set.bits) b = uniform01(rng) < 0.5 ? 0.0 : 1.0;
            const std::vector<State> states{s};
            const std::vector<int> strategy{0};
            typename PolicyModel<double>::StepInput in1, in2;
            poly.fill_state(e1, states, in1);
            base.fill_state(e2, states, in2);
            in1.mask = in2.mask = e1.env.feasible_actions(s);
            in1.strategies = poly.strategy_input(tape, set, strategy);
            const Var v1 = poly.decode_step(tape, p1, e1, in1);
            const Var v2 = base.decode_step(tape, p2, e2, in2);
            const auto va = tape.value(v1);
            const std::vector<double> a(va.begin(), va.end());
            const auto vb = tape.value(v2);
            const std::vector<double> b(vb.begin(), vb.end());
            for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        }
    }
    return {worst < 1e-12, std::to_string(pairs) + " (state, v) pairs, max |delta p| " + sci(worst) + " (tol 1e-12)"};
}

Outcome feasibility()
{
    struct Source {
        std::string label;
        PolicyModel<float> model;
        ParamStore<float> params;
        int k;
    };
    std::vector<Source> sources;
    for (Problem prob : {Problem::TSP, Problem::CVRP, Problem::CVRPTW}) {
        PolicyModel<float> m(desk_model(prob, DecoderKind::PolyNet, 8));
        auto p = m.init_params(31);
        randomize_group(p, ParamGroup::PolyNet, 32, 0.5);
        sources.push_back({std::string(to_string(prob)) + "/random", std::move(m), std::move(p), 8});
    }
    for (const std::string name : {"tsp20_k8", "cvrp20_k16", "cvrptw20_k8"}) {
        Trained t = load_run(name);
        sources.push_back({name, std::move(t.model), std::move(t.params), t.k});
    }
    int checked = 0, violations = 0;
    double worst_cost_gap = 0;
    std::string first_violation;
    for (const Source& src : sources) {
        const auto insts = test_set(src.model.config().problem, 20, 84, 33);
        SearchConfig cfg;
        cfg.m = 20;
        cfg.k = src.k;
        cfg.seed = 34;
        cfg.keep_solutions = true;
        const auto results = search_instances(src.model, src.params, insts, cfg, SearchMode::Sample, g_workers);
        for (std::size_t i = 0; i < insts.size(); ++i)
            for (const Trajectory& t : results[i].solutions) {
                ++checked;
                double cost = 0;
                const std::string err = oracle::check_solution(insts[i], t.actions, &cost);
                if (!err.empty()) {
                    if (violations++ == 0) first_violation = src.label + ": " + err;
                    continue;
                }
                worst_cost_gap = std::max(worst_cost_gap, std::abs(cost - t.cost) / cost);
            }
    }
    const bool pass = violations == 0 && checked >= 10000 && worst_cost_gap < 1e-6;
    std::string d = std::to_string(checked) + " solutions, " + std::to_string(violations) + " violations, max cost mismatch " +
                    sci(worst_cost_gap);
    if (!first_violation.empty()) d += "; first: " + first_violation;
    return {pass, d};
}

Outcome exactness()
{
    Trained t = load_run("tsp10_k8");
    double minutes = 0;
    for (const std::string name : {"tsp10_pomo", "tsp10_k8"}) minutes += load_stats(name).back().wall_s / 60.0;
    const auto insts = test_set(Problem::TSP, 10, 200, 41);
    SearchConfig cfg;
    cfg.m = 64;
    cfg.k = t.k;
    cfg.seed = 42;
    const auto sampled = search_instances(t.model, t.params, insts, cfg, SearchMode::Sample, g_workers);
    const auto greedy = search_instances(t.model, t.params, insts, cfg, SearchMode::Greedy, g_workers);
    std::vector<double> gaps;
    int not_worse = 0;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        const double opt = oracle::held_karp(insts[i]).cost;
        gaps.push_back(100.0 * (sampled[i].incumbent.cost() / opt - 1.0));
        if (sampled[i].incumbent.cost() <= greedy[i].incumbent.cost() + 1e-9) ++not_worse;
    }
    const double gap = mean(gaps);
    const double share = 100.0 * not_worse / static_cast<double>(insts.size());
    return {gap <= 2.0 && share >= 95.0 && minutes <= 60.0,
            "mean gap " + fmt(gap, 3) + "% (<= 2%), sample <= greedy on " + fmt(share, 1) + "% (>= 95%), training " +
                fmt(minutes, 1) + " min (<= 60)"};
}

Outcome k_ordering()
{
    // Final validation on a larger held-out set than the per-epoch one, to
    // keep sampling noise well below the differences being measured.
    const auto val = test_set(Problem::TSP, 20, 1000, 51);
    std::map<int, std::vector<double>> cost, uniq;
    double minutes = load_stats("tsp20_pomo").back().wall_s / 60.0;
    for (int k : {1, 4, 16})
        for (int s : {1, 2, 3}) {
            const std::string name = "tsp20_k" + std::to_string(k) + "_s" + std::to_string(s);
            Trained t = load_run(name);
            const auto v = validate(t.model, t.params, val, t.k, 200, 52, g_workers);
            cost[k].push_back(v.best_cost);
            uniq[k].push_back(v.uniqueness_pct);
            minutes += load_stats(name).back().wall_s / 60.0;
        }
    auto lo = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
    auto hi = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };
    // Separated: every seed of the better setting beats every seed of the worse one.
    const bool cost_ok = hi(cost[16]) < lo(cost[4]) && hi(cost[4]) < lo(cost[1]);
    const bool uniq_ok = lo(uniq[16]) > hi(uniq[4]) && lo(uniq[4]) > hi(uniq[1]);
    std::string d;
    for (int k : {1, 4, 16})
        d += "K=" + std::to_string(k) + " cost [" + fmt(lo(cost[k])) + ", " + fmt(hi(cost[k])) + "] unique [" +
             fmt(lo(uniq[k]), 1) + ", " + fmt(hi(uniq[k]), 1) + "]%; ";
    d += "training " + fmt(minutes, 1) + " min (<= 180)";
    return {cost_ok && uniq_ok && minutes <= 180.0, d};
}

Outcome diversity_ordering()
{
    Trained poly = load_run("cvrp20_k16");
    Trained pomo = load_run("cvrp20_pomo_cont");
    const auto insts = test_set(Problem::CVRP, 20, 100, 61);
    SearchConfig cfg;
    cfg.m = 100;
    cfg.seed = 62;
    cfg.keep_solutions = true;
    cfg.k = poly.k;
    const auto a = search_instances(poly.model, poly.params, insts, cfg, SearchMode::Sample, g_workers);
    cfg.k = 1;
    const auto b = search_instances(pomo.model, pomo.params, insts, cfg, SearchMode::ForcedFirst, g_workers);
    auto diversity = [](const SearchResult& r) {
        std::vector<EdgeSet> e;
        for (const auto& t : r.solutions) e.push_back(edge_set(Problem::CVRP, t.actions));
        return avg_pairwise_diversity(e);
    };
    int wins = 0;
    std::vector<double> da, db;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        da.push_back(diversity(a[i]));
        db.push_back(diversity(b[i]));
        if (da.back() > db.back()) ++wins;
    }
    return {wins >= 80, "PolyNet more diverse on " + std::to_string(wins) + "/100 instances (>= 80); mean broken pairs " +
                            fmt(mean(da), 2) + " vs forced-first " + fmt(mean(db), 2)};
}

Outcome contribution()
{
    Trained t = load_run("tsp20_k8");
    const auto insts = test_set(Problem::TSP, 20, 1000, 71);
    SearchConfig cfg;
    cfg.m = 64;
    cfg.k = t.k;
    cfg.seed = 72;
    cfg.keep_solutions = true;
    const auto res = search_instances(t.model, t.params, insts, cfg, SearchMode::Sample, g_workers);
    std::vector<std::vector<double>> best(insts.size(), std::vector<double>(static_cast<std::size_t>(t.k), 1e300));
    for (std::size_t i = 0; i < insts.size(); ++i)
        for (const auto& s : res[i].solutions)
            best[i][static_cast<std::size_t>(s.strategy)] = std::min(best[i][static_cast<std::size_t>(s.strategy)], s.cost);
    const auto counts = strategy_contribution(best);
    std::string d = "wins per strategy:";
    for (int c : counts) d += " " + std::to_string(c);
    return {std::all_of(counts.begin(), counts.end(), [](int c) { return c > 0; }), d};
}

Outcome broken_pairs_oracle()
{
    Rng rng(81);
    int mismatches = 0, pairs = 0;
    auto rand_int = [&](int lo, int hi) { return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1)); };
    auto perm = [&](int n, int offset) {
        std::vector<int> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), offset);
        for (int i = n - 1; i > 0; --i) std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(rand_int(0, i))]);
        return p;
    };
    // CVRP-style: a customer permutation with depot returns at random cut points.
    auto routes = [&](int n) {
        auto p = perm(n, 1);
        std::vector<int> out;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (i > 0 && uniform01(rng) < 0.3) out.push_back(0);
            out.push_back(p[i]);
        }
        return out;
    };
    for (int i = 0; i < 1000; ++i, pairs += 2) {
        const int n = rand_int(2, 8);
        const auto a = perm(n, 0), b = perm(n, 0);
        if (broken_pairs_distance(edge_set(Problem::TSP, a), edge_set(Problem::TSP, b)) !=
            oracle::naive_broken_pairs(Problem::TSP, a, b))
            ++mismatches;
        const auto c = routes(n), d = routes(n);
        if (broken_pairs_distance(edge_set(Problem::CVRP, c), edge_set(Problem::CVRP, d)) !=
            oracle::naive_broken_pairs(Problem::CVRP, c, d))
            ++mismatches;
    }
    return {mismatches == 0, std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

Outcome eas_contract()
{
    Trained t = load_run("cvrp20_k16");
    const auto before = t.params;
    const auto insts = test_set(Problem::CVRP, 20, 50, 91);
    SearchConfig cfg;
    cfg.k = t.k;
    cfg.eas_iterations = 200;
    cfg.m = 200 * t.k;
    cfg.seed = 92;
    const auto eas = search_instances(t.model, t.params, insts, cfg, SearchMode::Eas, g_workers);
    const auto plain = search_instances(t.model, t.params, insts, cfg, SearchMode::Sample, g_workers);
    int increases = 0, short_logs = 0;
    std::vector<double> ce, cs;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        const auto& its = eas[i].iterations;
        if (its.size() != 200) ++short_logs;
        for (std::size_t j = 1; j < its.size(); ++j)
            if (its[j].incumbent > its[j - 1].incumbent) ++increases;
        ce.push_back(eas[i].incumbent.cost());
        cs.push_back(plain[i].incumbent.cost());
    }
    bool frozen = true;
    for (std::size_t i = 0; i < before.size(); ++i)
        if (before.entry(i).group != ParamGroup::PolyNet && before.entry(i).value.values != t.params.entry(i).value.values)
            frozen = false;
    const bool pass = increases == 0 && short_logs == 0 && mean(ce) <= mean(cs) && frozen;
    return {pass, "incumbent increases " + std::to_string(increases) + ", EAS mean " + fmt(mean(ce)) + " vs sampling " +
                      fmt(mean(cs)) + " at " + std::to_string(cfg.m) + " rollouts, shared weights " +
                      (frozen ? "unchanged" : "CHANGED")};
}

Outcome augmentation()
{
    Rng rng(101);
    double worst = 0;
    for (Problem prob : {Problem::TSP, Problem::CVRP}) {
        const auto insts = test_set(prob, 20, 50, 102);
        for (const Instance& inst : insts) {
            std::vector<int> tour(20);
            std::iota(tour.begin(), tour.end(), prob == Problem::TSP ? 0 : 1);
            for (int i = 19; i > 0; --i)
                std::swap(tour[static_cast<std::size_t>(i)], tour[static_cast<std::size_t>(uniform01(rng) * (i + 1))]);
            if (prob == Problem::CVRP) tour.insert(tour.begin() + 10, 0);
            const double ref = solution_cost(inst, tour);
            for (int a = 0; a < 8; ++a)
                worst = std::max(worst, std::abs(solution_cost(augment(inst, a), tour) - ref) / ref);
        }
    }
    int worse = 0, total = 0;
    for (Problem prob : {Problem::TSP, Problem::CVRP}) {
        PolicyModel<float> model(desk_model(prob, DecoderKind::PolyNet, 8));
        auto params = model.init_params(103);
        randomize_group(params, ParamGroup::PolyNet, 104, 0.5);
        const auto insts = test_set(prob, 20, 50, 105);
        SearchConfig small;
        small.m = 16;
        small.k = 8;
        small.seed = 106;
        SearchConfig big = small;
        big.m = 8 * small.m;
        big.augment = true;
        const auto a = search_instances(model, params, insts, small, SearchMode::Sample, g_workers);
        const auto b = search_instances(model, params, insts, big, SearchMode::Sample, g_workers);
        for (std::size_t i = 0; i < insts.size(); ++i, ++total)
            if (b[i].incumbent.cost() > a[i].incumbent.cost()) ++worse;
    }
    return {worst < 1e-9 && worse == 0, "100 tours x 8 augmentations, max relative cost change " + sci(worst) +
                                            "; augmented search worse than its subset on " + std::to_string(worse) +
                                            "/" + std::to_string(total) + " instances"};
}

Outcome warm_start()
{
    bool pass = true;
    std::string d;
    for (int s : {1, 2}) {
        const auto cold = load_stats("cvrp20_cold_s" + std::to_string(s));
        const auto warm = load_stats("cvrp20_warm_s" + std::to_string(s));
        if (!run_complete(find_run("cvrp20_cold_s" + std::to_string(s))) ||
            !run_complete(find_run("cvrp20_warm_s" + std::to_string(s))))
            throw std::runtime_error("warm/cold runs missing; run with --prepare first");
        const double target = cold.at(20).val_best_cost;
        int reached = -1;
        for (const auto& e : warm)
            if (e.val_best_cost <= target) {
                reached = e.epoch;
                break;
            }
        const bool ok = reached >= 0 && reached <= 10;
        pass = pass && ok;
        d += "seed " + std::to_string(s) + ": cold epoch-20 " + fmt(target) + ", warm reaches it at epoch " +
             (reached < 0 ? std::string("never") : std::to_string(reached)) + "; ";
    }
    return {pass, d + "(<= 10)"};
}

Outcome cvrptw_generator()
{
    GenConfig g;
    g.problem = Problem::CVRPTW;
    g.n = 20;
    g.seed = 111;
    const auto insts = generate_set(g, 1000);
    int bad = 0;
    std::string first;
    auto flag = [&](const std::string& why) {
        if (bad++ == 0) first = why;
    };
    for (const Instance& inst : insts) {
        if (inst.horizon != 2400.0) flag("horizon");
        if (inst.service != 50.0) flag("service time");
        for (const auto& p : inst.coords)
            if (p.x < 0 || p.x > 999 || p.y < 0 || p.y > 999 || p.x != std::round(p.x) || p.y != std::round(p.y))
                flag("coordinate outside the integer grid [0, 999]");
        for (int c = 1; c < inst.num_nodes(); ++c) {
            const auto& w = inst.windows[static_cast<std::size_t>(c)];
            const double d0 = std::hypot(inst.coords[c].x - inst.coords[0].x, inst.coords[c].y - inst.coords[0].y);
            if (w.latest - w.earliest > 500.0 + 1e-9) flag("window wider than 500");
            if (w.earliest < 0 || w.latest > inst.horizon) flag("window outside the horizon");
            // A dedicated vehicle must reach c in time and get back before the horizon.
            if (d0 > w.latest || std::max(d0, w.earliest) + inst.service + d0 > inst.horizon)
                flag("customer " + std::to_string(c) + " not serviceable");
        }
    }
    return {bad == 0, "1000 instances, " + std::to_string(bad) + " violations" + (first.empty() ? "" : "; first: " + first)};
}

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria()
{
    static const std::vector<Criterion> all{
        {1, "gradient correctness", gradient_check},
        {2, "identity initialization", identity_init},
        {3, "feasibility", feasibility},
        {4, "exactness vs Held-Karp", exactness},
        {5, "K ordering on TSP20", k_ordering},
        {6, "diversity vs forced first move", diversity_ordering},
        {7, "every strategy contributes", contribution},
        {8, "broken-pairs oracle", broken_pairs_oracle},
        {9, "EAS contract", eas_contract},
        {10, "augmentation invariance", augmentation},
        {11, "warm-start ordering", warm_start},
        {12, "CVRPTW generator", cvrptw_generator},
    };
    return all;
}

bool run_criterion(const Criterion& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt(secs, 1) << " s]" << std::endl;
    return o.pass;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PolyNet acceptance checks"};
    bool prepare = false;
    std::string which;
    std::string cache = g_cache.string();
    app.add_flag("--prepare", prepare, "Train (or reuse) the models the criteria need");
    app.add_option("--criterion", which, "Criterion number, or 'all'");
    app.add_option("--cache", cache, "Directory for trained models");
    app.add_option("--workers", g_workers, "Worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);
    g_cache = cache;
    if (!prepare && which.empty()) {
        prepare = true;
        which = "all";
    }

    try {
        if (prepare)
            for (const Run& r : runs()) prepare_run(r);
    } catch (const std::exception& e) {
        std::cerr << "prepare failed: " << e.what() << "\n";
        return 2;
    }
    if (which.empty()) return 0;

    bool ok = true;
    int matched = 0;
    for (const Criterion& c : criteria())
        if (which == "all" || which == std::to_string(c.id)) {
            ++matched;
            ok = run_criterion(c) && ok;
        }
    if (matched == 0) {
        std::cerr << "no criterion '" << which << "'\n";
        return 2;
    }
    return ok ? 0 : 1;
}
