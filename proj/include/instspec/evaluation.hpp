#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instspec/dsl.hpp"
#include "instspec/problems.hpp"

namespace instspec {

struct ObppSolution {
    std::vector<int> assignments;  // per item, in arrival order
    int bin_count = 0;
    std::vector<int> loads;  // per bin
};

struct CvrpSolution {
    std::vector<std::vector<int>> routes;  // customer indices; depot implicit
    double total_distance = 0.0;
};

// Online packing: items are placed in arrival order; a new bin opens only
// when no open bin fits the item, otherwise the feasible bin with the
// highest score wins (ties to the lowest bin index).
ObppSolution pack_obpp(const ObppInstance& instance, const HeuristicProgram& program);

// Constructive routing: starting at the depot with a full vehicle, move to
// the feasible unvisited customer with the highest score (ties to the lowest
// customer index); when none fits, return to the depot and start a new route.
CvrpSolution route_cvrp(const CvrpInstance& instance, const HeuristicProgram& program);

// ceil(total item weight / capacity), as a real.
double obpp_lower_bound(const ObppInstance& instance);

// 100 * (obj - ref) / |ref|. Throws std::invalid_argument when ref == 0.
double optimality_gap(double obj, double ref);

// Objective for a solved instance: bin count (OBPP) or total distance (CVRP).
double objective(const AnyInstance& instance, const HeuristicProgram& program);

// Negated mean objective over the instance set; higher is better. Throws on
// an empty set or a program/instance kind mismatch.
double fitness(const HeuristicProgram& program, std::span<const AnyInstance> instances);

// Exact optima for tiny instances (test oracles). Throw when the instance
// exceeds the supported size.
int brute_force_obpp(const ObppInstance& instance);     // num_items <= 12
double brute_force_cvrp(const CvrpInstance& instance);  // num_customers <= 8

// Invariant checkers; empty optional means the solution is well-formed.
std::optional<std::string> check_solution(const ObppInstance& instance,
                                          const ObppSolution& solution);
std::optional<std::string> check_solution(const CvrpInstance& instance,
                                          const CvrpSolution& solution);

struct ReportRow {
    std::string instance_id;
    ProblemKind kind = ProblemKind::Obpp;
    FeatureVector features{};
    double objective = 0.0;
    std::optional<double> reference;
    std::optional<double> gap_percent;
};

struct FeatureGroupRow {
    double feature_value = 0.0;
    int count = 0;
    double mean_obj = 0.0;
    std::optional<double> mean_gap;  // absent when no row in the group has a gap
    std::optional<double> one_minus_gap;
};

// Groups rows by the named feature dimension and reports per-group means,
// sorted by feature value. one_minus_gap = 1 - mean_gap/100. Throws on an
// unknown dimension name.
std::vector<FeatureGroupRow> aggregate_by_feature(std::span<const ReportRow> rows,
                                                  ProblemKind kind,
                                                  const std::string& dimension);

// Pinned aggregate report format: CSV header
// "group,feature_value,mean_obj,mean_gap,one_minus_gap".
std::string report_csv(const std::string& group_name,
                       std::span<const FeatureGroupRow> rows);

}  // namespace instspec
