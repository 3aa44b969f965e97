#include "polynet/instancegen.hpp"

#include "polynet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace polynet {

void GenConfig::validate() const
{
    if (n < 2) throw std::invalid_argument("GenConfig: n must be at least 2");
    if (tw_max_width <= 0) throw std::invalid_argument("GenConfig: tw_max_width must be positive");
    if (min_clusters < 1 || max_clusters < min_clusters) throw std::invalid_argument("GenConfig: bad cluster range");
    if (demand_max < 1 || heavy_min < 1 || heavy_min > demand_max)
        throw std::invalid_argument("GenConfig: bad demand law");
}

double cvrp_capacity(int n)
{
    if (n == 20) return 30;
    if (n == 50) return 40;
    if (n < 200) return 50;
    return 70;
}

double cvrptw_capacity(int n) { return n < 200 ? 50 : 70; }

namespace {

std::string make_id(Problem p, int n, std::uint64_t seed)
{
    return std::string(to_string(p)) + "-n" + std::to_string(n) + "-s" + std::to_string(seed);
}

}  // namespace

Instance gen_tsp(int n, std::uint64_t seed)
{
    if (n < 2) throw std::invalid_argument("gen_tsp: n must be at least 2");
    Rng rng = make_rng(seed, "tsp");
    Instance inst;
    inst.problem = Problem::TSP;
    inst.seed = seed;
    inst.id = make_id(inst.problem, n, seed);
    inst.coords.resize(static_cast<std::size_t>(n));
    for (Point& p : inst.coords) {
        p.x = uniform01(rng);
        p.y = uniform01(rng);
    }
    return inst;
}

Instance gen_cvrp(int n, std::uint64_t seed)
{
    if (n < 2) throw std::invalid_argument("gen_cvrp: n must be at least 2");
    Rng rng = make_rng(seed, "cvrp");
    Instance inst;
    inst.problem = Problem::CVRP;
    inst.seed = seed;
    inst.id = make_id(inst.problem, n, seed);
    inst.capacity = cvrp_capacity(n);
    inst.coords.resize(static_cast<std::size_t>(n + 1));
    for (Point& p : inst.coords) {
        p.x = uniform01(rng);
        p.y = uniform01(rng);
    }
    std::uniform_int_distribution<int> demand(1, 9);
    inst.demands.assign(static_cast<std::size_t>(n + 1), 0.0);
    for (int i = 1; i <= n; ++i) inst.demands[i] = demand(rng);
    return inst;
}

Instance gen_cvrptw(int n, std::uint64_t seed, const GenConfig& cfg)
{
    GenConfig c = cfg;
    c.n = n;
    c.validate();
    Rng rng = make_rng(seed, "cvrptw");
    Instance inst;
    inst.problem = Problem::CVRPTW;
    inst.seed = seed;
    inst.id = make_id(inst.problem, n, seed);
    inst.capacity = cvrptw_capacity(n);
    inst.service = c.service;
    inst.horizon = c.horizon;

    const double hi_coord = c.coord_max;
    const Point depot{std::round(hi_coord / 2.0), std::round(hi_coord / 2.0)};
    inst.coords.push_back(depot);

    std::uniform_int_distribution<int> cluster_count(c.min_clusters, c.max_clusters);
    const int k = cluster_count(rng);
    std::vector<Point> centers(static_cast<std::size_t>(k));
    for (Point& p : centers) {
        p.x = std::floor(uniform01(rng) * (hi_coord + 1));
        p.y = std::floor(uniform01(rng) * (hi_coord + 1));
    }
    std::uniform_int_distribution<int> pick_cluster(0, k - 1);
    std::normal_distribution<double> offset(0.0, c.cluster_spread);
    auto clip = [&](double v) { return std::clamp(std::round(v), 0.0, hi_coord); };

    auto travel = [&](const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); };

    inst.windows.push_back({0.0, c.horizon});
    for (int i = 1; i <= n; ++i) {
        Point p;
        double lo = 0, hi = -1;
        while (hi < lo) {
            const Point& ctr = centers[static_cast<std::size_t>(pick_cluster(rng))];
            p = {clip(ctr.x + offset(rng)), clip(ctr.y + offset(rng))};
            lo = travel(depot, p);
            hi = c.horizon - travel(p, depot) - c.service;
        }
        inst.coords.push_back(p);
        const double center = lo + uniform01(rng) * (hi - lo);
        const double width = c.tw_max_width * (1.0 - uniform01(rng));  // (0, max]
        inst.windows.push_back({std::max(lo, center - width / 2), std::min(hi, center + width / 2)});
    }

    std::uniform_int_distribution<int> demand(1, c.demand_max);
    std::uniform_int_distribution<int> heavy(c.heavy_min, c.demand_max);
    inst.demands.assign(static_cast<std::size_t>(n + 1), 0.0);
    for (int i = 1; i <= n; ++i) {
        inst.demands[i] = demand(rng);
        if (uniform01(rng) < c.heavy_fraction) inst.demands[i] = heavy(rng);
        inst.demands[i] = std::min(inst.demands[i], inst.capacity);
    }
    return inst;
}

Instance generate(const GenConfig& cfg)
{
    switch (cfg.problem) {
    case Problem::TSP: return gen_tsp(cfg.n, cfg.seed);
    case Problem::CVRP: return gen_cvrp(cfg.n, cfg.seed);
    case Problem::CVRPTW: return gen_cvrptw(cfg.n, cfg.seed, cfg);
    }
    throw std::invalid_argument("generate: unknown problem");
}

std::vector<Instance> generate_set(const GenConfig& cfg, int count)
{
    std::vector<Instance> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        GenConfig c = cfg;
        c.seed = derive_seed(cfg.seed, "instance", {static_cast<std::uint64_t>(i)});
        out.push_back(generate(c));
    }
    return out;
}

}  // namespace polynet
