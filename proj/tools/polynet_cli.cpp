// polynet: instance generation, training, search and diversity reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 produced solutions failed
// validation, other nonzero values are usage errors from the parser.

#include "polynet/analysis.hpp"
#include "polynet/checkpoint.hpp"
#include "polynet/instancegen.hpp"
#include "polynet/io.hpp"
#include "polynet/parallel.hpp"
#include "polynet/runconfig.hpp"
#include "polynet/search.hpp"
#include "polynet/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace polynet;

namespace {

constexpr int kExitInvalid = 2;

CLI::Validator problem_names()
{
    return CLI::IsMember({"tsp", "cvrp", "cvrptw"}, CLI::ignore_case);
}

std::string fmt(double v, int prec = 6)
{
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

struct GenerateArgs {
    std::string problem = "tsp";
    int n = 20;
    int count = 100;
    std::uint64_t seed = 1;
    std::string out = "instances";
    GenConfig gen;
};

struct TrainArgs {
    std::string problem = "tsp";
    std::string trainer = "polynet";
    std::string decoder = "residual";
    ModelConfig model;
    TrainConfig train;
    std::string out = "run";
};

struct EvalArgs {
    std::string checkpoint;
    std::string instances;
    std::string mode = "sample";
    std::string label;
    SearchConfig search;
    int k = 0;
    bool save_all = false;
    int workers = 0;
    std::string out = "eval";
};

struct DiversityArgs {
    std::vector<std::string> inputs;
    std::string out = "diversity";
};

struct Loaded {
    ModelConfig cfg;
    ParamStore<float> params;
    int k = 1;
    std::string trainer;
};

Loaded load_model(const std::string& path, int k_override)
{
    const Checkpoint ck = load_checkpoint(path);
    Loaded l;
    l.cfg = ck.model;
    const PolicyModel<float> model(ck.model);
    l.params = checkpoint_params(ck, model);
    l.trainer = ck.meta.value("trainer", std::string());
    l.k = k_override > 0 ? k_override : ck.meta.value("k", 1);
    if (ck.model.decoder == DecoderKind::Base || l.trainer == "pomo") l.k = k_override > 0 ? k_override : 1;
    return l;
}

std::vector<Instance> load_instances(const std::string& path, Problem expected)
{
    auto insts = read_instances(path);
    if (insts.empty()) throw IoError(path + " contains no instances");
    for (const auto& i : insts)
        if (i.problem != expected)
            throw std::invalid_argument("instance " + i.id + " is " + std::string(to_string(i.problem)) +
                                        " but the checkpoint was trained for " + std::string(to_string(expected)));
    return insts;
}

RunConfig make_run(const std::string& command, int argc, char** argv, const std::string& out, std::uint64_t seed)
{
    RunConfig r;
    r.command = command;
    r.argv.assign(argv, argv + argc);
    r.out_dir = out;
    r.seed = seed;
    return r;
}

// ---------------------------------------------------------------- generate

int run_generate(const GenerateArgs& a, RunConfig run)
{
    GenConfig g = a.gen;
    g.problem = parse_problem(a.problem);
    g.n = a.n;
    g.seed = a.seed;
    g.validate();
    const auto insts = generate_set(g, a.count);
    write_instances(run.out_dir / "instances.jsonl", insts);
    json seeds = json::array();
    for (const auto& i : insts) seeds.push_back(i.seed);
    run.settings = gen_config_to_json(g);
    run.settings["count"] = a.count;
    write_manifest(run, {"instances.jsonl"}, {{"instance_seeds", seeds}});
    std::cout << "wrote " << insts.size() << " " << to_string(g.problem) << " instances to "
              << (run.out_dir / "instances.jsonl").string() << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

int run_train(TrainArgs a, RunConfig run)
{
    a.model.problem = parse_problem(a.problem);
    a.train.trainer = parse_trainer(a.trainer);
    a.model.decoder = parse_decoder(a.decoder);
    a.train.out_dir = run.out_dir.string();
    a.model.validate();
    a.train.validate();
    if (!a.train.warm_start_path.empty()) run.inputs.push_back(a.train.warm_start_path);
    run.settings = {{"model", model_config_to_json(a.model)}, {"train", train_config_to_json(a.train)}};
    write_manifest(run, {"stats.csv", "last.json"}, {{"status", "running"}});

    std::cout << "epoch  train_cost  val_best_cost  val_unique_pct  wall_s\n";
    const TrainResult r = train(a.model, a.train, [](const EpochStats& s) {
        std::printf("%5d  %10s  %13.6f  %14.2f  %6.1f\n", s.epoch,
                    std::isfinite(s.train_cost) ? fmt(s.train_cost).c_str() : "-", s.val_best_cost,
                    s.val_uniqueness_pct, s.wall_s);
        std::fflush(stdout);
    });
    std::vector<std::string> outputs{"stats.csv", "last.json"};
    if (a.train.checkpoint_every_epoch) outputs.push_back("checkpoints/");
    write_manifest(run, outputs, {{"status", "complete"}, {"epochs_completed", r.stats.back().epoch}});
    return 0;
}

// -------------------------------------------------------------- eval / eas

struct ValidationTally {
    int checked = 0;
    int invalid = 0;
};

InstanceSolutions collect(const Instance& inst, const SearchResult& r, bool save_all, ValidationTally& tally)
{
    InstanceSolutions s;
    s.id = inst.id;
    auto check = [&](const Trajectory& t) {
        ++tally.checked;
        const Validation v = validate_solution(inst, t.actions);
        if (!v.ok) {
            ++tally.invalid;
            std::cerr << "invalid solution for " << inst.id << ": " << v.reason << "\n";
        }
    };
    if (save_all && !r.solutions.empty()) {
        for (const auto& t : r.solutions) {
            check(t);
            s.solutions.push_back(to_record(t));
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < s.solutions.size(); ++i)
            if (s.solutions[i].cost < s.solutions[best].cost) best = i;
        s.best = static_cast<int>(best);
    } else {
        check(r.incumbent.best);
        s.solutions.push_back(to_record(r.incumbent.best));
        s.best = 0;
    }
    return s;
}

std::string results_csv(const std::vector<Instance>& insts, const std::vector<SearchResult>& res,
                        const std::string& method, int m)
{
    std::ostringstream os;
    os << "instance_id,method,m,best_cost,time_s\n";
    for (std::size_t i = 0; i < insts.size(); ++i)
        os << insts[i].id << ',' << method << ',' << m << ',' << fmt(res[i].incumbent.cost(), 9) << ','
           << fmt(res[i].seconds, 4) << '\n';
    return os.str();
}

double mean_best(const std::vector<SearchResult>& res)
{
    double s = 0;
    for (const auto& r : res) s += r.incumbent.cost();
    return s / static_cast<double>(res.size());
}

int run_eval(EvalArgs a, RunConfig run)
{
    const Loaded model_data = load_model(a.checkpoint, a.k);
    const PolicyModel<float> model(model_data.cfg);
    const auto insts = load_instances(a.instances, model_data.cfg.problem);
    run.inputs = {a.checkpoint, a.instances};
    a.search.k = model_data.k;
    a.search.keep_solutions = a.save_all;
    a.search.validate();
    run.settings = {{"mode", a.mode}, {"search", search_config_to_json(a.search)}, {"model", model_config_to_json(model_data.cfg)}};

    std::vector<SearchMode> modes;
    if (a.mode == "ablation")
        modes = {SearchMode::Sample, SearchMode::ForcedFirst};
    else
        modes = {parse_search_mode(a.mode)};

    ValidationTally tally;
    std::vector<std::string> outputs;
    std::ostringstream ablation;
    ablation << "mode,instances,m,mean_best_cost,mean_time_s\n";
    for (SearchMode mode : modes) {
        const auto res = search_instances(model, model_data.params, insts, a.search, mode, a.workers);
        const std::string tag(to_string(mode));
        const std::string method = a.label.empty() ? tag : a.label + "-" + tag;
        SolutionFile f;
        f.problem = model_data.cfg.problem;
        f.method = method;
        for (std::size_t i = 0; i < insts.size(); ++i) f.instances.push_back(collect(insts[i], res[i], a.save_all, tally));
        const std::string suffix = modes.size() > 1 ? "_" + tag : "";
        write_solutions(run.out_dir / ("solutions" + suffix + ".json"), f);
        write_text(run.out_dir / ("results" + suffix + ".csv"), results_csv(insts, res, method, a.search.m));
        outputs.push_back("solutions" + suffix + ".json");
        outputs.push_back("results" + suffix + ".csv");
        double t = 0;
        for (const auto& r : res) t += r.seconds;
        ablation << tag << ',' << insts.size() << ',' << a.search.m << ',' << fmt(mean_best(res), 9) << ','
                 << fmt(t / static_cast<double>(res.size()), 4) << '\n';
        std::cout << method << ": mean best cost " << fmt(mean_best(res)) << " over " << insts.size()
                  << " instances (m = " << a.search.m << ")\n";
    }
    if (modes.size() > 1) {
        write_text(run.out_dir / "ablation.csv", ablation.str());
        outputs.push_back("ablation.csv");
    }
    write_manifest(run, outputs, {{"solutions_checked", tally.checked}, {"solutions_invalid", tally.invalid}});
    return tally.invalid == 0 ? 0 : kExitInvalid;
}

int run_eas(EvalArgs a, RunConfig run)
{
    const Loaded model_data = load_model(a.checkpoint, a.k);
    const PolicyModel<float> model(model_data.cfg);
    const auto insts = load_instances(a.instances, model_data.cfg.problem);
    run.inputs = {a.checkpoint, a.instances};
    a.search.k = model_data.k;
    a.search.keep_solutions = a.save_all;
    if (a.search.m <= 0) a.search.m = a.search.eas_iterations * a.search.k;
    a.search.validate();
    run.settings = {{"search", search_config_to_json(a.search)}, {"model", model_config_to_json(model_data.cfg)}};

    const auto res = search_instances(model, model_data.params, insts, a.search, SearchMode::Eas, a.workers);
    ValidationTally tally;
    SolutionFile f;
    f.problem = model_data.cfg.problem;
    f.method = a.label.empty() ? "eas" : a.label + "-eas";
    std::ostringstream iters;
    iters << "instance_id,iteration,incumbent_cost,wave_best,wave_mean\n";
    for (std::size_t i = 0; i < insts.size(); ++i) {
        f.instances.push_back(collect(insts[i], res[i], a.save_all, tally));
        for (const auto& it : res[i].iterations)
            iters << insts[i].id << ',' << it.iteration << ',' << fmt(it.incumbent, 9) << ',' << fmt(it.wave_best, 9)
                  << ',' << fmt(it.wave_mean, 9) << '\n';
        if (res[i].stopped_early) std::cerr << insts[i].id << ": EAS stopped early on a non-finite loss\n";
    }
    write_solutions(run.out_dir / "solutions.json", f);
    write_text(run.out_dir / "results.csv", results_csv(insts, res, f.method, a.search.m));
    write_text(run.out_dir / "iterations.csv", iters.str());
    write_manifest(run, {"solutions.json", "results.csv", "iterations.csv"},
                   {{"solutions_checked", tally.checked}, {"solutions_invalid", tally.invalid}});
    std::cout << f.method << ": mean best cost " << fmt(mean_best(res)) << " over " << insts.size()
              << " instances (" << a.search.eas_iterations << " iterations, " << a.search.m << " rollouts each)\n";
    return tally.invalid == 0 ? 0 : kExitInvalid;
}

// --------------------------------------------------------------- diversity

int run_diversity(const DiversityArgs& a, RunConfig run)
{
    std::ostringstream table, contrib, firsts, scatter, per_instance;
    table << "method,instances,avg_broken_pairs,uniqueness_pct,distinct_first_nodes\n";
    contrib << "method,rank,strategy,count\n";
    firsts << "method,instance_id,distinct_first_nodes,solutions\n";
    scatter << "method,instance_id,solution,strategy,uniqueness,cost\n";
    per_instance << "method,instance_id,avg_broken_pairs\n";
    for (const auto& path : a.inputs) {
        run.inputs.push_back(path);
        const SolutionFile f = read_solutions(path);
        const std::string method = f.method.empty() ? fs::path(path).stem().string() : f.method;
        double pairwise = 0, unique = 0, distinct = 0;
        int counted = 0;
        int k = 1;
        for (const auto& inst : f.instances)
            for (const auto& s : inst.solutions) k = std::max(k, s.strategy + 1);
        std::vector<std::vector<double>> best_costs;
        for (const auto& inst : f.instances) {
            std::vector<std::vector<int>> sols;
            std::vector<double> per_strategy(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
            for (const auto& s : inst.solutions) {
                sols.push_back(s.actions);
                auto& b = per_strategy[static_cast<std::size_t>(s.strategy)];
                b = std::min(b, s.cost);
            }
            best_costs.push_back(per_strategy);
            const DiversityReport r = diversity_report(f.problem, sols);
            firsts << method << ',' << inst.id << ',' << r.distinct_first << ',' << sols.size() << '\n';
            if (sols.size() >= 2) {
                pairwise += r.avg_pairwise;
                per_instance << method << ',' << inst.id << ',' << fmt(r.avg_pairwise) << '\n';
                for (std::size_t i = 0; i < sols.size(); ++i)
                    scatter << method << ',' << inst.id << ',' << i << ',' << inst.solutions[i].strategy << ','
                            << fmt(r.uniqueness[i]) << ',' << fmt(inst.solutions[i].cost, 9) << '\n';
            }
            unique += r.uniqueness_pct;
            distinct += r.distinct_first;
            ++counted;
        }
        if (counted == 0) throw IoError(path + " contains no instances");
        table << method << ',' << counted << ',' << fmt(pairwise / counted) << ',' << fmt(unique / counted) << ','
              << fmt(distinct / counted) << '\n';
        auto counts = strategy_contribution(best_costs);
        std::vector<int> order(counts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return counts[x] > counts[y]; });
        for (std::size_t r = 0; r < order.size(); ++r)
            contrib << method << ',' << r + 1 << ',' << order[r] << ',' << counts[static_cast<std::size_t>(order[r])] << '\n';
    }
    write_text(run.out_dir / "diversity.csv", table.str());
    write_text(run.out_dir / "pairwise_per_instance.csv", per_instance.str());
    write_text(run.out_dir / "contribution.csv", contrib.str());
    write_text(run.out_dir / "first_nodes.csv", firsts.str());
    write_text(run.out_dir / "uniqueness_scatter.csv", scatter.str());
    write_manifest(run, {"diversity.csv", "pairwise_per_instance.csv", "contribution.csv", "first_nodes.csv",
                         "uniqueness_scatter.csv"});
    std::cout << table.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PolyNet: learning diverse solution strategies for routing problems"};
    app.set_config("--config", "", "Read options from an INI/TOML file (command-line flags take precedence)");
    app.require_subcommand(1);
    int workers = 0;
    app.add_option("--workers", workers, "Worker threads (default: POLYNET_WORKERS or 1)")
        ->envname("POLYNET_WORKERS")
        ->check(CLI::NonNegativeNumber);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write random instances as JSON lines");
    g->add_option("--problem", gen.problem, "tsp, cvrp or cvrptw")->required()->transform(problem_names());
    g->add_option("--n", gen.n, "Customers (cities) per instance")->check(CLI::Range(2, 100000));
    g->add_option("--count", gen.count, "Number of instances")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "Root seed");
    g->add_option("--out", gen.out, "Output directory");
    g->add_option("--clusters-min", gen.gen.min_clusters, "CVRPTW: fewest clusters");
    g->add_option("--clusters-max", gen.gen.max_clusters, "CVRPTW: most clusters");
    g->add_option("--cluster-spread", gen.gen.cluster_spread, "CVRPTW: cluster standard deviation");
    g->add_option("--tw-max-width", gen.gen.tw_max_width, "CVRPTW: widest time window");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model (PolyNet best-of-K or POMO baseline)");
    t->add_option("--problem", tr.problem, "tsp, cvrp or cvrptw")->required()->transform(problem_names());
    t->add_option("--n", tr.train.n, "Training instance size");
    t->add_option("--trainer", tr.trainer, "polynet or pomo")->check(CLI::IsMember({"polynet", "pomo"}));
    auto* decoder_opt = t->add_option("--decoder", tr.decoder, "residual, ablation-add or base")
                            ->check(CLI::IsMember({"residual", "ablation-add", "base"}));
    t->add_option("--k", tr.train.k, "Strategies per instance (POMO: forced starts)")->check(CLI::PositiveNumber);
    t->add_option("--batch-size", tr.train.batch_size, "Instances per step")->check(CLI::PositiveNumber);
    auto* lr_opt = t->add_option("--lr", tr.train.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    t->add_option("--epochs", tr.train.epochs, "Epochs")->check(CLI::NonNegativeNumber);
    t->add_option("--rollouts-per-epoch", tr.train.rollouts_per_epoch, "Rollouts per epoch")->check(CLI::PositiveNumber);
    t->add_option("--grad-clip", tr.train.grad_clip, "Clip the global gradient norm (0: off)");
    t->add_option("--warm-start", tr.train.warm_start_path, "Checkpoint providing encoder and decoder weights")
        ->check(CLI::ExistingFile);
    t->add_option("--seed", tr.train.seed, "Root seed");
    t->add_option("--val-instances", tr.train.val_instances, "Validation instances");
    t->add_option("--val-samples", tr.train.val_samples, "Samples per validation instance");
    t->add_option("--val-seed", tr.train.val_seed, "Validation set seed");
    t->add_flag("--resume", tr.train.resume, "Continue from <out>/last.json if present");
    bool no_epoch_ckpt = false;
    t->add_flag("--no-epoch-checkpoints", no_epoch_ckpt, "Only keep last.json");
    t->add_option("--out", tr.out, "Output directory");
    auto* d_opt = t->add_option("--embed-dim", tr.model.embed_dim, "Embedding width");
    auto* h_opt = t->add_option("--heads", tr.model.num_heads, "Attention heads");
    auto* l_opt = t->add_option("--layers", tr.model.num_encoder_layers, "Encoder layers");
    auto* ff_opt = t->add_option("--ff-dim", tr.model.ff_dim, "Encoder feed-forward width");
    auto* hidden_opt = t->add_option("--hidden", tr.model.polynet_hidden, "PolyNet layer width");
    auto* bits_opt = t->add_option("--bit-len", tr.model.bit_len, "Strategy vector length (default: ceil(log2 k))");
    t->add_option("--logit-clip", tr.model.logit_clip, "Pointer logit clipping constant");
    t->add_flag("--zero-init-first-layer", tr.model.zero_init_first_layer, "Also zero the first PolyNet layer");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Search with a trained checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    e->add_option("--instances", ev.instances, "Instance JSONL file")->required()->check(CLI::ExistingFile);
    e->add_option("--mode", ev.mode, "sample, greedy, forced-first or ablation (sample and forced-first)")
        ->check(CLI::IsMember({"sample", "greedy", "forced-first", "ablation"}));
    e->add_option("--m", ev.search.m, "Rollouts per instance")->check(CLI::PositiveNumber);
    e->add_option("--k", ev.k, "Strategies to use (default: the trained k)");
    e->add_flag("--augment", ev.search.augment, "Split the budget over the 8 symmetric variants");
    e->add_option("--seed", ev.search.seed, "Root seed");
    e->add_option("--label", ev.label, "Method label stored in the solution file");
    e->add_flag("--save-all", ev.save_all, "Store every sampled solution, not only the best");
    e->add_option("--out", ev.out, "Output directory");

    EvalArgs ea;
    ea.search.m = 0;
    ea.search.eas_iterations = 200;
    ea.out = "eas";
    auto* s = app.add_subcommand("eas", "Active search over the PolyNet layers");
    s->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    s->add_option("--instances", ea.instances, "Instance JSONL file")->required()->check(CLI::ExistingFile);
    s->add_option("--iterations", ea.search.eas_iterations, "Update iterations")->check(CLI::PositiveNumber);
    s->add_option("--m", ea.search.m, "Total rollouts per instance (default: iterations x k)");
    s->add_option("--lr", ea.search.eas_learning_rate, "Learning rate for the PolyNet layers");
    s->add_option("--lambda", ea.search.eas_lambda, "Weight of the incumbent imitation term");
    s->add_option("--k", ea.k, "Strategies to use (default: the trained k)");
    s->add_flag("--augment", ea.search.augment, "Spread each wave over the 8 symmetric variants");
    s->add_option("--seed", ea.search.seed, "Root seed");
    s->add_option("--label", ea.label, "Method label stored in the solution file");
    s->add_flag("--save-all", ea.save_all, "Store every sampled solution");
    s->add_option("--out", ea.out, "Output directory");

    DiversityArgs dv;
    auto* dcmd = app.add_subcommand("diversity", "Diversity, contribution and first-node reports");
    dcmd->add_option("--in", dv.inputs, "Solution files (from eval --save-all)")->required()->check(CLI::ExistingFile);
    dcmd->add_option("--out", dv.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        tr.train.workers = workers;
        ev.workers = workers;
        ea.workers = workers;
        if (*g) return run_generate(gen, make_run("generate", argc, argv, gen.out, gen.seed));
        if (*t) {
            if (tr.trainer == "pomo") {
                if (decoder_opt->count() > 0 && tr.decoder != "base")
                    throw CLI::ValidationError("--decoder", "the pomo trainer uses the base decoder");
                tr.decoder = "base";
            }
            if (tr.decoder == "ablation-add" && hidden_opt->count() > 0)
                throw CLI::ValidationError("--hidden", "the ablation-add decoder has no PolyNet layers to size");
            if (bits_opt->count() == 0) tr.model.bit_len = min_bit_len(tr.train.k);
            if (lr_opt->count() == 0 && parse_problem(tr.problem) == Problem::CVRPTW) tr.train.learning_rate = 1e-5;
            if (!tr.train.warm_start_path.empty()) {
                // Architecture defaults to the warm-start checkpoint's.
                const Checkpoint base = load_checkpoint(tr.train.warm_start_path);
                if (d_opt->count() == 0) tr.model.embed_dim = base.model.embed_dim;
                if (h_opt->count() == 0) tr.model.num_heads = base.model.num_heads;
                if (l_opt->count() == 0) tr.model.num_encoder_layers = base.model.num_encoder_layers;
                if (ff_opt->count() == 0) tr.model.ff_dim = base.model.ff_dim;
            }
            tr.train.checkpoint_every_epoch = !no_epoch_ckpt;
            return run_train(tr, make_run("train", argc, argv, tr.out, tr.train.seed));
        }
        if (*e) return run_eval(ev, make_run("eval", argc, argv, ev.out, ev.search.seed));
        if (*s) return run_eas(ea, make_run("eas", argc, argv, ea.out, ea.search.seed));
        if (*dcmd) return run_diversity(dv, make_run("diversity", argc, argv, dv.out, 0));
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
