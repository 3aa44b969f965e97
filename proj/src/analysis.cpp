#include "polynet/analysis.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace polynet {

bool EdgeSet::contains(int a, int b) const
{
    return std::binary_search(edges.begin(), edges.end(), std::pair<int, int>(std::minmax(a, b)));
}

EdgeSet edge_set(Problem problem, std::span<const int> actions)
{
    EdgeSet s;
    if (actions.empty()) return s;
    auto add = [&](int a, int b) {
        if (a != b) s.edges.push_back(std::minmax(a, b));
    };
    if (problem == Problem::TSP) {
        for (std::size_t i = 0; i + 1 < actions.size(); ++i) add(actions[i], actions[i + 1]);
        add(actions.back(), actions.front());
    } else {
        int prev = 0;
        for (int a : actions) {
            add(prev, a);
            prev = a;
        }
        add(prev, 0);
    }
    std::sort(s.edges.begin(), s.edges.end());
    s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
    return s;
}

int broken_pairs_distance(const EdgeSet& a, const EdgeSet& b)
{
    // Both edge lists are sorted, so a merge walk counts A \ B.
    int missing = 0;
    auto it = b.edges.begin();
    for (const auto& e : a.edges) {
        while (it != b.edges.end() && *it < e) ++it;
        if (it == b.edges.end() || *it != e) ++missing;
    }
    return missing;
}

double avg_pairwise_diversity(std::span<const EdgeSet> solutions)
{
    const std::size_t n = solutions.size();
    if (n < 2) throw std::invalid_argument("avg_pairwise_diversity needs at least 2 solutions");
    double total = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) total += broken_pairs_distance(solutions[i], solutions[j]);
    return total / static_cast<double>(n * (n - 1));
}

double uniqueness_score(std::span<const EdgeSet> solutions, std::size_t index)
{
    if (solutions.size() < 2) throw std::invalid_argument("uniqueness_score needs at least one other solution");
    double total = 0;
    for (std::size_t j = 0; j < solutions.size(); ++j)
        if (j != index) total += broken_pairs_distance(solutions[index], solutions[j]);
    return total / static_cast<double>(solutions.size() - 1);
}

std::vector<double> uniqueness_scores(std::span<const EdgeSet> solutions)
{
    std::vector<double> out(solutions.size());
    for (std::size_t i = 0; i < solutions.size(); ++i) out[i] = uniqueness_score(solutions, i);
    return out;
}

std::vector<int> strategy_contribution(const std::vector<std::vector<double>>& best_costs)
{
    std::size_t k = 0;
    for (const auto& row : best_costs) k = std::max(k, row.size());
    std::vector<int> winners;
    winners.reserve(best_costs.size());
    for (const auto& row : best_costs) {
        if (row.empty()) throw std::invalid_argument("strategy_contribution: empty cost row");
        winners.push_back(static_cast<int>(std::min_element(row.begin(), row.end()) - row.begin()));
    }
    return strategy_contribution(winners, static_cast<int>(k));
}

std::vector<int> strategy_contribution(std::span<const int> winners, int k)
{
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int w : winners) {
        if (w < 0 || w >= k) throw std::out_of_range("strategy index outside 0..k-1");
        ++counts[static_cast<std::size_t>(w)];
    }
    return counts;
}

int distinct_first_nodes(std::span<const std::vector<int>> solutions)
{
    std::set<int> firsts;
    for (const auto& s : solutions)
        if (!s.empty()) firsts.insert(s.front());
    return static_cast<int>(firsts.size());
}

std::vector<int> canonical_solution(Problem problem, std::span<const int> actions)
{
    if (actions.empty()) return {};
    if (problem == Problem::TSP) {
        const std::size_t n = actions.size();
        const std::size_t start = static_cast<std::size_t>(std::min_element(actions.begin(), actions.end()) - actions.begin());
        const int next = actions[(start + 1) % n];
        const int prev = actions[(start + n - 1) % n];
        std::vector<int> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(next <= prev ? actions[(start + i) % n] : actions[(start + n - i) % n]);
        return out;
    }
    std::vector<std::vector<int>> routes(1);
    for (int a : actions) {
        if (a == 0) {
            if (!routes.back().empty()) routes.emplace_back();
        } else {
            routes.back().push_back(a);
        }
    }
    if (routes.back().empty()) routes.pop_back();
    for (auto& r : routes)
        if (r.front() > r.back()) std::reverse(r.begin(), r.end());
    std::sort(routes.begin(), routes.end());
    std::vector<int> out;
    for (const auto& r : routes) {
        if (!out.empty()) out.push_back(0);
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

double uniqueness_percentage(Problem problem, std::span<const std::vector<int>> solutions)
{
    if (solutions.empty()) return 0;
    std::set<std::vector<int>> seen;
    for (const auto& s : solutions) seen.insert(canonical_solution(problem, s));
    return 100.0 * static_cast<double>(seen.size()) / static_cast<double>(solutions.size());
}

DiversityReport diversity_report(Problem problem, std::span<const std::vector<int>> solutions)
{
    std::vector<EdgeSet> edges;
    edges.reserve(solutions.size());
    for (const auto& s : solutions) edges.push_back(edge_set(problem, s));
    DiversityReport r;
    if (edges.size() >= 2) {
        r.avg_pairwise = avg_pairwise_diversity(edges);
        r.uniqueness = uniqueness_scores(edges);
    }
    r.uniqueness_pct = uniqueness_percentage(problem, solutions);
    r.distinct_first = distinct_first_nodes(solutions);
    return r;
}

}  // namespace polynet
