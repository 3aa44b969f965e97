#pragma once

#include "polynet/environment.hpp"

#include <span>
#include <utility>
#include <vector>

namespace polynet {

/// Undirected edges of a solution as sorted, unique (low, high) pairs.
/// TSP includes the closing edge; routing problems include every depot link.
struct EdgeSet {
    std::vector<std::pair<int, int>> edges;

    [[nodiscard]] std::size_t size() const { return edges.size(); }
    [[nodiscard]] bool contains(int a, int b) const;
};

EdgeSet edge_set(Problem problem, std::span<const int> actions);

/// |A \ B| over undirected edges.
int broken_pairs_distance(const EdgeSet& a, const EdgeSet& b);

/// Mean broken-pairs distance over all ordered pairs of distinct solutions.
double avg_pairwise_diversity(std::span<const EdgeSet> solutions);

/// Mean distance from solutions[index] to every other solution.
double uniqueness_score(std::span<const EdgeSet> solutions, std::size_t index);
/// uniqueness_score for every solution.
std::vector<double> uniqueness_scores(std::span<const EdgeSet> solutions);

/// Per-strategy count of instances on which that strategy attains the
/// instance minimum. `best_costs[i][s]` is strategy s's best on instance i;
/// ties go to the lowest strategy index.
std::vector<int> strategy_contribution(const std::vector<std::vector<double>>& best_costs);
/// Same, from precomputed winning strategy indices.
std::vector<int> strategy_contribution(std::span<const int> winners, int k);

int distinct_first_nodes(std::span<const std::vector<int>> solutions);

/// Symmetry-free form of a solution: TSP tours start at node 0 and run in
/// the direction with the smaller second node; routes are direction-normalized
/// (smaller endpoint first) and sorted.
std::vector<int> canonical_solution(Problem problem, std::span<const int> actions);

/// Distinct canonical solutions as a percentage of the set size.
double uniqueness_percentage(Problem problem, std::span<const std::vector<int>> solutions);

struct DiversityReport {
    double avg_pairwise = 0;
    std::vector<double> uniqueness;  // per solution
    double uniqueness_pct = 0;
    int distinct_first = 0;
};

DiversityReport diversity_report(Problem problem, std::span<const std::vector<int>> solutions);

}  // namespace polynet
