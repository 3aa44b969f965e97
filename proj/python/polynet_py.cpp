#include "polynet/analysis.hpp"
#include "polynet/checkpoint.hpp"
#include "polynet/instancegen.hpp"
#include "polynet/io.hpp"
#include "polynet/search.hpp"
#include "polynet/training.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

namespace py = pybind11;
using namespace polynet;

namespace {

// A loaded checkpoint ready for search.
struct Policy {
    Checkpoint ckpt;
    std::unique_ptr<PolicyModel<float>> model;
    ParamStore<float> params;
    int k = 1;

    explicit Policy(const std::string& path) : ckpt(load_checkpoint(path))
    {
        model = std::make_unique<PolicyModel<float>>(ckpt.model);
        params = checkpoint_params(ckpt, *model);
        k = ckpt.model.decoder == DecoderKind::Base ? 1 : ckpt.meta.value("k", 1);
    }

    py::list search(const std::vector<Instance>& instances, const std::string& mode, int m, int k_override,
                    bool augment, std::uint64_t seed, int eas_iterations, double eas_lr, double eas_lambda,
                    bool keep_solutions, int workers) const
    {
        SearchConfig cfg;
        cfg.m = m;
        cfg.k = k_override > 0 ? k_override : k;
        cfg.augment = augment;
        cfg.seed = seed;
        cfg.eas_iterations = eas_iterations;
        cfg.eas_learning_rate = eas_lr;
        cfg.eas_lambda = eas_lambda;
        cfg.keep_solutions = keep_solutions;
        const SearchMode sm = parse_search_mode(mode);
        if (sm == SearchMode::Eas && cfg.eas_iterations == 0) cfg.eas_iterations = 1;
        std::vector<SearchResult> results;
        {
            py::gil_scoped_release release;
            results = search_instances(*model, params, instances, cfg, sm, workers);
        }
        py::list out;
        for (std::size_t i = 0; i < results.size(); ++i) {
            const SearchResult& r = results[i];
            py::dict d;
            d["id"] = instances[i].id;
            d["cost"] = r.incumbent.cost();
            d["actions"] = r.incumbent.best.actions;
            d["strategy"] = r.incumbent.best.strategy;
            d["costs"] = r.costs;
            d["seconds"] = r.seconds;
            if (keep_solutions) {
                std::vector<std::vector<int>> sols;
                for (const auto& t : r.solutions) sols.push_back(t.actions);
                d["solutions"] = sols;
            }
            out.append(d);
        }
        return out;
    }
};

py::dict report_to_dict(const DiversityReport& r)
{
    py::dict d;
    d["avg_pairwise"] = r.avg_pairwise;
    d["uniqueness"] = r.uniqueness;
    d["uniqueness_pct"] = r.uniqueness_pct;
    d["distinct_first"] = r.distinct_first;
    return d;
}

}  // namespace

PYBIND11_MODULE(_polynet, m)
{
    m.doc() = "Diversity-by-design neural routing heuristics";

    py::register_exception<EnvError>(m, "EnvError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Point>(m, "Point")
        .def(py::init<double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0)
        .def_readwrite("x", &Point::x)
        .def_readwrite("y", &Point::y)
        .def("__repr__", [](const Point& p) { return "Point(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")"; });

    py::class_<TimeWindow>(m, "TimeWindow")
        .def(py::init<double, double>(), py::arg("earliest") = 0.0, py::arg("latest") = 0.0)
        .def_readwrite("earliest", &TimeWindow::earliest)
        .def_readwrite("latest", &TimeWindow::latest);

    py::class_<Instance>(m, "Instance")
        .def(py::init<>())
        .def_property(
            "problem", [](const Instance& i) { return std::string(to_string(i.problem)); },
            [](Instance& i, const std::string& p) { i.problem = parse_problem(p); })
        .def_readwrite("id", &Instance::id)
        .def_readwrite("seed", &Instance::seed)
        .def_readwrite("coords", &Instance::coords)
        .def_readwrite("demands", &Instance::demands)
        .def_readwrite("capacity", &Instance::capacity)
        .def_readwrite("windows", &Instance::windows)
        .def_readwrite("service", &Instance::service)
        .def_readwrite("horizon", &Instance::horizon)
        .def_property_readonly("size", &Instance::size)
        .def("to_json", [](const Instance& i) { return instance_to_json(i).dump(); })
        .def_static("from_json", [](const std::string& s) { return instance_from_json(json::parse(s)); })
        .def("__eq__", [](const Instance& a, const Instance& b) { return a == b; });

    m.def(
        "generate",
        [](const std::string& problem, int n, int count, std::uint64_t seed) {
            GenConfig g;
            g.problem = parse_problem(problem);
            g.n = n;
            g.seed = seed;
            return generate_set(g, count);
        },
        py::arg("problem"), py::arg("n"), py::arg("count") = 1, py::arg("seed") = 0,
        "Random instances; instance i is seeded from (seed, i).");

    m.def("read_instances", &read_instances, py::arg("path"));
    m.def("write_instances", &write_instances, py::arg("path"), py::arg("instances"));

    m.def(
        "validate_solution",
        [](const Instance& inst, const std::vector<int>& actions) {
            const Validation v = validate_solution(inst, actions);
            return py::make_tuple(v.ok, v.reason, v.cost);
        },
        py::arg("instance"), py::arg("actions"), "Returns (ok, reason, cost).");
    m.def(
        "solution_cost", [](const Instance& inst, const std::vector<int>& a) { return solution_cost(inst, a); },
        py::arg("instance"), py::arg("actions"));

    m.def(
        "train",
        [](const std::string& problem, int n, const std::string& trainer, int k, int epochs,
           std::int64_t rollouts_per_epoch, int batch_size, double lr, std::uint64_t seed, const std::string& out_dir,
           const std::string& warm_start, int embed_dim, int layers, int val_instances, int val_samples, int workers) {
            ModelConfig mc;
            mc.problem = parse_problem(problem);
            mc.embed_dim = embed_dim;
            mc.num_encoder_layers = layers;
            mc.ff_dim = 4 * embed_dim;
            mc.polynet_hidden = embed_dim;
            TrainConfig tc;
            tc.trainer = parse_trainer(trainer);
            mc.decoder = tc.trainer == Trainer::Pomo ? DecoderKind::Base : DecoderKind::PolyNet;
            mc.bit_len = min_bit_len(k);
            tc.k = k;
            tc.n = n;
            tc.epochs = epochs;
            tc.rollouts_per_epoch = rollouts_per_epoch;
            tc.batch_size = batch_size;
            tc.learning_rate = lr;
            tc.seed = seed;
            tc.out_dir = out_dir;
            tc.warm_start_path = warm_start;
            tc.val_instances = val_instances;
            tc.val_samples = val_samples;
            tc.workers = workers;
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = polynet::train(mc, tc);
            }
            py::list stats;
            for (const auto& s : r.stats) {
                py::dict d;
                d["epoch"] = s.epoch;
                d["train_cost"] = s.train_cost;
                d["val_best_cost"] = s.val_best_cost;
                d["val_uniqueness_pct"] = s.val_uniqueness_pct;
                d["wall_s"] = s.wall_s;
                stats.append(d);
            }
            return stats;
        },
        py::arg("problem"), py::arg("n"), py::arg("trainer") = "polynet", py::arg("k") = 16, py::arg("epochs") = 1,
        py::arg("rollouts_per_epoch") = 100000, py::arg("batch_size") = 64, py::arg("lr") = 1e-4,
        py::arg("seed") = 1, py::arg("out_dir") = "", py::arg("warm_start") = "", py::arg("embed_dim") = 64,
        py::arg("layers") = 3, py::arg("val_instances") = 100, py::arg("val_samples") = 200, py::arg("workers") = 0,
        "Trains a model and returns per-epoch statistics. With out_dir set, writes last.json there.");

    py::class_<Policy>(m, "Policy")
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def_readonly("k", &Policy::k)
        .def_property_readonly("problem", [](const Policy& p) { return std::string(to_string(p.ckpt.model.problem)); })
        .def_property_readonly("decoder", [](const Policy& p) { return std::string(to_string(p.ckpt.model.decoder)); })
        .def("search", &Policy::search, py::arg("instances"), py::arg("mode") = "sample", py::arg("m") = 64,
             py::arg("k") = 0, py::arg("augment") = false, py::arg("seed") = 0, py::arg("eas_iterations") = 0,
             py::arg("eas_lr") = 3e-3, py::arg("eas_lambda") = 0.1, py::arg("keep_solutions") = false,
             py::arg("workers") = 0,
             "Modes: sample, greedy, forced-first, eas. Returns one dict per instance.");

    m.def(
        "broken_pairs",
        [](const std::string& problem, const std::vector<int>& a, const std::vector<int>& b) {
            const Problem p = parse_problem(problem);
            return broken_pairs_distance(edge_set(p, a), edge_set(p, b));
        },
        py::arg("problem"), py::arg("a"), py::arg("b"));
    m.def(
        "diversity",
        [](const std::string& problem, const std::vector<std::vector<int>>& solutions) {
            return report_to_dict(diversity_report(parse_problem(problem), solutions));
        },
        py::arg("problem"), py::arg("solutions"));

    m.attr("__version__") = "0.1.0";
}
