#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polynet {

enum class Problem : std::uint8_t { TSP, CVRP, CVRPTW };

std::string_view to_string(Problem p);
/// Accepts "tsp", "cvrp", "cvrptw" in any letter case.
Problem parse_problem(std::string_view name);

class EnvError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct Point {
    double x = 0;
    double y = 0;
    bool operator==(const Point&) const = default;
};

struct TimeWindow {
    double earliest = 0;
    double latest = 0;
    bool operator==(const TimeWindow&) const = default;
};

/// One routing instance in raw units.
///
/// TSP: `coords` holds the n cities, no depot. CVRP/CVRPTW: index 0 is the
/// depot and `demands`/`windows` are indexed like `coords` (depot entries are
/// zero / the full horizon).
struct Instance {
    Problem problem = Problem::TSP;
    std::string id;
    std::uint64_t seed = 0;
    std::vector<Point> coords;
    std::vector<double> demands;
    double capacity = 0;
    std::vector<TimeWindow> windows;
    double service = 0;
    double horizon = 0;

    /// Number of customers (TSP: cities).
    [[nodiscard]] int size() const;
    /// Number of selectable actions (node count).
    [[nodiscard]] int num_nodes() const { return static_cast<int>(coords.size()); }
    [[nodiscard]] bool has_depot() const { return problem != Problem::TSP; }
    /// Side length of the square the coordinates live in.
    [[nodiscard]] double coord_scale() const { return problem == Problem::CVRPTW ? 1000.0 : 1.0; }
    [[nodiscard]] double distance(int a, int b) const;

    bool operator==(const Instance&) const = default;
};

/// Model-scale view of an instance. Coordinates divided by the coordinate
/// span, demands by capacity, times by horizon.
struct NormalizedInstance {
    Problem problem = Problem::TSP;
    std::vector<Point> coords;
    std::vector<double> demands;
    std::vector<TimeWindow> windows;
    double service = 0;
    double coord_scale = 1;
    double capacity = 0;
    double horizon = 0;
};

NormalizedInstance normalize(const Instance& inst);

/// Applies dihedral map `index` (0..7) of the coordinate square; 0 is identity.
Instance augment(const Instance& inst, int index);
inline constexpr int kNumAugmentations = 8;

struct State {
    std::vector<std::uint8_t> visited;
    int current = -1;  // -1 before the first TSP move
    int first = -1;
    double load = 0;  // remaining capacity
    double time = 0;
    int step = 0;
    int remaining = 0;  // unvisited customers

    [[nodiscard]] bool done() const { return remaining == 0; }
};

/// MDP for one instance. Owns a copy of the instance plus its distance matrix.
class Environment {
public:
    explicit Environment(Instance inst);

    [[nodiscard]] const Instance& instance() const { return inst_; }
    [[nodiscard]] int num_actions() const { return n_; }
    [[nodiscard]] double travel(int a, int b) const { return dist_[static_cast<std::size_t>(a * n_ + b)]; }

    [[nodiscard]] State reset() const;
    /// Writes one byte per action; 1 = feasible. Throws on a terminal state.
    void feasible_actions(const State& s, std::span<std::uint8_t> mask) const;
    [[nodiscard]] std::vector<std::uint8_t> feasible_actions(const State& s) const;
    [[nodiscard]] bool is_feasible(const State& s, int action) const;
    /// Advances the state in place. Throws EnvError on an infeasible action.
    void step(State& s, int action) const;

    /// Total Euclidean length including the closing edge / final depot return.
    [[nodiscard]] double cost(std::span<const int> actions) const;

private:
    Instance inst_;
    int n_;
    std::vector<double> dist_;
};

/// Euclidean cost of a complete solution, independent of Environment.
double solution_cost(const Instance& inst, std::span<const int> actions);

struct Validation {
    bool ok = true;
    std::string reason;
    double cost = 0;
};

/// Re-checks a complete action sequence against every problem constraint on
/// its own code path (no Environment involved).
Validation validate_solution(const Instance& inst, std::span<const int> actions);

/// Per-visit schedule for CVRPTW reporting: arrival and service start per action.
struct Visit {
    int node = 0;
    double arrival = 0;
    double start = 0;
};
std::vector<Visit> schedule(const Instance& inst, std::span<const int> actions);

}  // namespace polynet
