#pragma once

#include "polynet/environment.hpp"

#include <cstdint>
#include <vector>

namespace polynet {

struct GenConfig {
    Problem problem = Problem::TSP;
    int n = 20;
    std::uint64_t seed = 0;
    // Clustered CVRPTW knobs, raw units.
    int min_clusters = 3;
    int max_clusters = 8;
    double cluster_spread = 60.0;
    double tw_max_width = 500.0;
    double service = 50.0;
    double horizon = 2400.0;
    double coord_max = 999.0;
    // Demand law: uniform {1..demand_max}, with `heavy_fraction` of customers
    // redrawn from {heavy_min..demand_max}.
    int demand_max = 10;
    int heavy_min = 5;
    double heavy_fraction = 0.1;

    void validate() const;
};

/// Capacity table: 30/40/50 for n = 20/50/100, 50 otherwise below
/// 200 customers, 70 from 200 on.
double cvrp_capacity(int n);
double cvrptw_capacity(int n);

Instance gen_tsp(int n, std::uint64_t seed);
Instance gen_cvrp(int n, std::uint64_t seed);
Instance gen_cvrptw(int n, std::uint64_t seed, const GenConfig& cfg = {});
Instance generate(const GenConfig& cfg);

/// `count` instances with seeds derived from (cfg.seed, index).
std::vector<Instance> generate_set(const GenConfig& cfg, int count);

}  // namespace polynet
