#include "polynet/environment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace polynet {

std::string_view to_string(Problem p)
{
    switch (p) {
    case Problem::TSP: return "tsp";
    case Problem::CVRP: return "cvrp";
    case Problem::CVRPTW: return "cvrptw";
    }
    return "?";
}

Problem parse_problem(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "tsp") return Problem::TSP;
    if (lower == "cvrp") return Problem::CVRP;
    if (lower == "cvrptw") return Problem::CVRPTW;
    throw std::invalid_argument("unknown problem '" + std::string(name) + "' (expected tsp, cvrp or cvrptw)");
}

int Instance::size() const
{
    return has_depot() ? num_nodes() - 1 : num_nodes();
}

double Instance::distance(int a, int b) const
{
    return std::hypot(coords[a].x - coords[b].x, coords[a].y - coords[b].y);
}

NormalizedInstance normalize(const Instance& inst)
{
    NormalizedInstance out;
    out.problem = inst.problem;
    out.coord_scale = inst.coord_scale();
    out.capacity = inst.capacity;
    out.horizon = inst.horizon;
    if (out.coord_scale <= 0) throw EnvError("normalize: zero coordinate span");
    out.coords.reserve(inst.coords.size());
    for (const Point& p : inst.coords) out.coords.push_back({p.x / out.coord_scale, p.y / out.coord_scale});
    if (inst.has_depot()) {
        if (inst.capacity <= 0) throw EnvError("normalize: capacity must be positive");
        for (double d : inst.demands) out.demands.push_back(d / inst.capacity);
    }
    if (inst.problem == Problem::CVRPTW) {
        if (inst.horizon <= 0) throw EnvError("normalize: horizon must be positive");
        for (const TimeWindow& w : inst.windows)
            out.windows.push_back({w.earliest / inst.horizon, w.latest / inst.horizon});
        out.service = inst.service / inst.horizon;
    }
    return out;
}

Instance augment(const Instance& inst, int index)
{
    if (index < 0 || index >= kNumAugmentations)
        throw std::out_of_range("augment: index " + std::to_string(index) + " outside 0..7");
    Instance out = inst;
    const double s = inst.coord_scale();
    for (Point& p : out.coords) {
        const double x = p.x / s, y = p.y / s;
        Point q;
        switch (index) {
        case 0: q = {x, y}; break;
        case 1: q = {y, x}; break;
        case 2: q = {x, 1 - y}; break;
        case 3: q = {y, 1 - x}; break;
        case 4: q = {1 - x, y}; break;
        case 5: q = {1 - y, x}; break;
        case 6: q = {1 - x, 1 - y}; break;
        default: q = {1 - y, 1 - x}; break;
        }
        p = {q.x * s, q.y * s};
    }
    return out;
}

// ---------------------------------------------------------------------------

Environment::Environment(Instance inst) : inst_(std::move(inst)), n_(inst_.num_nodes())
{
    if (n_ < 1) throw EnvError("instance has no nodes");
    dist_.resize(static_cast<std::size_t>(n_ * n_));
    for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b) dist_[static_cast<std::size_t>(a * n_ + b)] = inst_.distance(a, b);
}

State Environment::reset() const
{
    State s;
    s.visited.assign(static_cast<std::size_t>(n_), 0);
    s.remaining = inst_.size();
    if (inst_.has_depot()) {
        s.current = 0;
        s.visited[0] = 1;
        s.load = inst_.capacity;
        s.time = 0;
    }
    return s;
}

bool Environment::is_feasible(const State& s, int a) const
{
    if (a < 0 || a >= n_) return false;
    if (s.done()) return false;
    const Instance& in = inst_;
    if (!in.has_depot()) return s.visited[a] == 0;
    if (a == 0) return s.current != 0;
    if (s.visited[a]) return false;
    if (in.demands[a] > s.load) return false;
    if (in.problem == Problem::CVRPTW) {
        const double arrival = s.time + travel(s.current, a);
        if (arrival > in.windows[a].latest) return false;
        if (std::max(arrival, in.windows[a].earliest) + in.service + travel(a, 0) > in.horizon) return false;
    }
    return true;
}

void Environment::feasible_actions(const State& s, std::span<std::uint8_t> mask) const
{
    if (s.done()) throw EnvError("feasible_actions queried on a terminal state");
    if (static_cast<int>(mask.size()) != n_) throw EnvError("feasible_actions: mask has wrong size");
    for (int a = 0; a < n_; ++a) mask[a] = is_feasible(s, a) ? 1 : 0;
}

std::vector<std::uint8_t> Environment::feasible_actions(const State& s) const
{
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_));
    feasible_actions(s, mask);
    return mask;
}

void Environment::step(State& s, int a) const
{
    if (!is_feasible(s, a))
        throw EnvError("infeasible action " + std::to_string(a) + " at step " + std::to_string(s.step));
    const Instance& in = inst_;
    if (!in.has_depot()) {
        if (s.first < 0) s.first = a;
    } else if (a == 0) {
        // A depot visit closes the route; the next vehicle leaves full at time 0.
        s.load = in.capacity;
        s.time = 0;
    } else {
        if (s.first < 0) s.first = a;
        if (in.problem == Problem::CVRPTW) {
            const double arrival = s.time + travel(s.current, a);
            s.time = std::max(arrival, in.windows[a].earliest) + in.service;
        }
        s.load -= in.demands[a];
    }
    if (a != 0 || !in.has_depot()) {
        s.visited[a] = 1;
        --s.remaining;
    }
    s.current = a;
    ++s.step;
}

double Environment::cost(std::span<const int> actions) const
{
    if (actions.empty()) throw EnvError("cost of an empty trajectory");
    double total = 0;
    if (!inst_.has_depot()) {
        if (static_cast<int>(actions.size()) != n_) throw EnvError("cost: incomplete TSP tour");
        for (std::size_t i = 0; i + 1 < actions.size(); ++i) total += travel(actions[i], actions[i + 1]);
        return total + travel(actions.back(), actions.front());
    }
    int prev = 0;
    for (int a : actions) {
        total += travel(prev, a);
        prev = a;
    }
    return total + travel(prev, 0);
}

// ---------------------------------------------------------------------------
// Independent checks. Nothing below uses Environment.

double solution_cost(const Instance& inst, std::span<const int> actions)
{
    auto d = [&](int a, int b) {
        const double dx = inst.coords[a].x - inst.coords[b].x;
        const double dy = inst.coords[a].y - inst.coords[b].y;
        return std::sqrt(dx * dx + dy * dy);
    };
    double total = 0;
    if (actions.empty()) return 0;
    if (inst.problem == Problem::TSP) {
        for (std::size_t i = 0; i < actions.size(); ++i) total += d(actions[i], actions[(i + 1) % actions.size()]);
        return total;
    }
    std::vector<int> path;
    path.push_back(0);
    path.insert(path.end(), actions.begin(), actions.end());
    path.push_back(0);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) total += d(path[i], path[i + 1]);
    return total;
}

Validation validate_solution(const Instance& inst, std::span<const int> actions)
{
    Validation v;
    auto fail = [&](std::string why) {
        v.ok = false;
        v.reason = std::move(why);
        return v;
    };
    const int nodes = inst.num_nodes();
    for (int a : actions)
        if (a < 0 || a >= nodes) return fail("action " + std::to_string(a) + " out of range");

    if (inst.problem == Problem::TSP) {
        if (static_cast<int>(actions.size()) != nodes) return fail("tour length differs from city count");
        std::vector<int> sorted(actions.begin(), actions.end());
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < nodes; ++i)
            if (sorted[i] != i) return fail("tour is not a permutation");
        v.cost = solution_cost(inst, actions);
        return v;
    }

    constexpr double tol = 1e-9;
    std::vector<int> seen(static_cast<std::size_t>(nodes), 0);
    // Split into routes at depot visits.
    std::vector<std::vector<int>> routes(1);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (actions[i] == 0) {
            if (i == 0) return fail("solution starts with a depot visit");
            if (actions[i - 1] == 0) return fail("consecutive depot visits");
            routes.emplace_back();
        } else {
            ++seen[actions[i]];
            routes.back().push_back(actions[i]);
        }
    }
    if (!actions.empty() && actions.back() == 0) return fail("solution ends with an explicit depot visit");
    for (int c = 1; c < nodes; ++c)
        if (seen[c] != 1) return fail("customer " + std::to_string(c) + " visited " + std::to_string(seen[c]) + " times");

    for (const auto& route : routes) {
        double load = 0;
        for (int c : route) load += inst.demands[c];
        if (load > inst.capacity + tol) return fail("route exceeds capacity");
        if (inst.problem != Problem::CVRPTW) continue;
        double t = 0;
        int at = 0;
        for (int c : route) {
            const double arrive = t + inst.distance(at, c);
            if (arrive > inst.windows[c].latest + tol)
                return fail("late arrival at customer " + std::to_string(c));
            const double start = std::max(arrive, inst.windows[c].earliest);
            if (start < inst.windows[c].earliest - tol || start > inst.windows[c].latest + tol)
                return fail("service outside window at customer " + std::to_string(c));
            t = start + inst.service;
            at = c;
        }
        if (t + inst.distance(at, 0) > inst.horizon + tol) return fail("route returns after the horizon");
    }
    v.cost = solution_cost(inst, actions);
    return v;
}

std::vector<Visit> schedule(const Instance& inst, std::span<const int> actions)
{
    std::vector<Visit> out;
    double t = 0;
    int at = inst.has_depot() ? 0 : (actions.empty() ? 0 : actions.front());
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const int a = actions[i];
        if (!inst.has_depot() && i == 0) {
            out.push_back({a, 0, 0});
            continue;
        }
        const double arrive = t + inst.distance(at, a);
        if (a == 0) {
            out.push_back({a, arrive, arrive});
            t = 0;
        } else {
            const double start = inst.problem == Problem::CVRPTW ? std::max(arrive, inst.windows[a].earliest) : arrive;
            out.push_back({a, arrive, start});
            t = start + inst.service;
        }
        at = a;
    }
    return out;
}

}  // namespace polynet
