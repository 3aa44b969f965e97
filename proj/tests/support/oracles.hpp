#pragma once
// Independent reference implementations used only by the tests.

#include "polynet/environment.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace polynet::oracle {

struct Tour {
    double cost = 0;
    std::vector<int> order;
};

/// Exact TSP by the Held-Karp subset recursion. Practical up to n ~ 15.
Tour held_karp(const Instance& inst);

/// Feasibility check written against the raw instance data. Returns an empty
/// string for a feasible solution, otherwise the first violation found.
/// `cost` receives the solution length when feasible.
std::string check_solution(const Instance& inst, std::span<const int> actions, double* cost = nullptr);

/// |A \ B| by listing every undirected edge of each solution and scanning.
int naive_broken_pairs(Problem problem, std::span<const int> a, std::span<const int> b);

/// Fourth-order central finite differences of f around x (x is restored afterwards).
std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x, double h = 1e-5);

/// ||a - b|| / max(||b||, floor) in the Euclidean norm (b is the reference).
double relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-8);

/// Worst per-block relative error of a blocked gradient. Blocks whose
/// reference norm is tiny are measured against `rel_floor` times the norm of
/// the whole gradient, so rounding noise on structurally near-zero blocks
/// does not dominate.
double blockwise_error(const std::vector<std::vector<double>>& analytic,
                       const std::vector<std::vector<double>>& numeric, double rel_floor = 1e-3);

}  // namespace polynet::oracle
